"""Command-line front end.

Thin client over the HTTP service: every subcommand builds a request,
posts it to the in-process app, and writes the JSON response to the output
directory.  Exit codes: 0 success, 1 input error, 2 infeasible or vacuous
outcome (report still written).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
from fastapi.testclient import TestClient

from .service import app


def _post(path: str, payload: dict) -> dict:
    """In-process call to the service app; no network socket involved."""
    with TestClient(app, base_url="http://densbound") as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        click.echo(f"error: {detail}", err=True)
        sys.exit(1)
    return resp.json()


def _load_structured(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        click.echo(f"error: file not found: {path}", err=True)
        sys.exit(1)
    try:
        if p.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib

            return tomllib.loads(p.read_text())
        return json.loads(p.read_text())
    except (json.JSONDecodeError, Exception) as exc:  # noqa: BLE001
        click.echo(f"error: cannot parse {path}: {exc}", err=True)
        sys.exit(1)


def _model_spec(model: str) -> dict | str:
    """A catalog name, or a path to a JSON/TOML model file."""
    if model.endswith((".json", ".toml")):
        return _load_structured(model)
    return model


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            click.echo(f"error: --override needs KEY=VAL, got {pair!r}", err=True)
            sys.exit(1)
        key, val = pair.split("=", 1)
        try:
            out[key] = float(val)
        except ValueError:
            click.echo(f"error: override value for {key} is not numeric", err=True)
            sys.exit(1)
    return out


def _write_report(out_dir: str, report: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "report.json"
    target.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return target


@click.group()
def main():
    """Certified transition-density lower bounds for elliptic diffusions."""


@main.command()
@click.option("--q", type=int, required=True)
@click.option("--override", "overrides", multiple=True, help="KEY=VAL, repeatable")
@click.option("--out", default="out", show_default=True)
def constants(q, overrides, out):
    """Evaluate the dimensional constants in log space."""
    report = _post("/constants", {"q": q, "overrides": _parse_overrides(overrides)})
    target = _write_report(out, report)
    click.echo(f"wrote {target}")


@main.command()
@click.option("--params", required=True, help="JSON/TOML with pi, gamma, h, m_Q, m_pi, T")
@click.option("--out", default="out", show_default=True)
def grid(params, out):
    """Build the adaptive time grid and its size bound."""
    payload = _load_structured(params)
    report = _post("/grid", payload)
    target = _write_report(out, report)
    click.echo(f"wrote {target} (N={report['N']}, bound={report['count_bound']:.4g})")


@main.command()
@click.option("--model", required=True)
@click.option("--params", required=True, help="JSON/TOML with x0, y, theta")
@click.option("--pieces", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
def distance(model, params, pieces, seed, out):
    """Estimate the skeleton distance (certified upper value)."""
    p = _load_structured(params)
    payload = {
        "model": _model_spec(model),
        "x0": p["x0"], "y": p["y"], "theta": p["theta"],
        "pieces": pieces, "seed": seed,
    }
    report = _post("/distance", payload)
    target = _write_report(out, report)
    d = report["distance"]["d_theta_upper"]
    click.echo(f"wrote {target} (d_theta <= {d})")
    if not isinstance(d, (int, float)):
        sys.exit(2)


@main.command()
@click.option("--model", required=True)
@click.option("--params", required=True)
@click.option("--pieces", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--override", "overrides", multiple=True)
@click.option("--out", default="out", show_default=True)
def bound(model, params, pieces, seed, overrides, out):
    """Evaluate the skeleton-distance density bound in log space."""
    p = _load_structured(params)
    payload = {
        "model": _model_spec(model),
        "x0": p["x0"], "y": p["y"], "theta": p["theta"],
        "d_theta": p.get("d_theta"),
        "pieces": pieces, "seed": seed,
        "overrides": _parse_overrides(overrides),
    }
    report = _post("/bound", payload)
    target = _write_report(out, report)
    click.echo(
        f"wrote {target} (log bound = {report['bound']['log_lower_bound']})"
    )


@main.command("simulate-evolution")
@click.option("--params", required=True, help="JSON/TOML evolution config")
@click.option("--n-paths", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
def simulate_evolution_cmd(params, n_paths, seed, out):
    """Monte Carlo of a discrete evolution chain with bound checks."""
    payload = _load_structured(params)
    payload.update({"n_paths": n_paths, "seed": seed})
    report = _post("/simulate-evolution", payload)
    target = _write_report(out, report)
    ev = report["evolution"]
    click.echo(
        f"wrote {target} (P(A_N)={ev['p_tube'][-1]:.4g}, "
        f"tube_pass={ev['tube_pass']}, chain_pass={ev['chain_pass']})"
    )


@main.command()
@click.option("--model", required=True)
@click.option("--params", required=True, help="JSON/TOML with x0, y, T, log_lower_bound")
@click.option("--n-paths", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", default="out", show_default=True)
def verify(model, params, n_paths, seed, out):
    """Monte Carlo check of a log-space bound against the density at y."""
    p = _load_structured(params)
    payload = {
        "model": _model_spec(model),
        "x0": p["x0"], "y": p["y"], "T": p["T"],
        "log_lower_bound": p["log_lower_bound"],
        "n_paths": n_paths, "seed": seed,
    }
    report = _post("/verify", payload)
    target = _write_report(out, report)
    verdict = report["verify"]["verdict"]
    click.echo(f"wrote {target} (verdict={verdict})")
    if verdict == "VACUOUS":
        sys.exit(2)
    if verdict == "FAIL":
        sys.exit(2)


@main.command()
@click.option("--model", required=True)
@click.option("--params", required=True, help="JSON/TOML with x0, y, theta")
@click.option("--pieces", type=int, default=4, show_default=True)
@click.option("--n-paths", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--override", "overrides", multiple=True)
@click.option("--out", default="out", show_default=True)
def pipeline(model, params, pieces, n_paths, seed, overrides, out):
    """Full chain: distance -> envelopes -> grid -> bound -> verification."""
    p = _load_structured(params)
    payload = {
        "model": _model_spec(model),
        "x0": p["x0"], "y": p["y"], "theta": p["theta"],
        "pieces": pieces, "n_paths": n_paths, "seed": seed,
        "overrides": _parse_overrides(overrides),
    }
    report = _post("/pipeline", payload)
    target = _write_report(out, report)
    click.echo(f"wrote {target} (outcome={report['outcome']})")
    if report["outcome"] in ("infeasible", "vacuous"):
        sys.exit(2)


if __name__ == "__main__":
    main()
