"""Built-in diffusion models and the extension registry.

Models are code-defined; a model file selects one by name and may override
scalar parameters (C0, dimensions where the family is dimension-generic).
Register additional factories with :func:`register_model`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np

from .model import DiffusionModel

_REGISTRY: dict[str, Callable[..., DiffusionModel]] = {}


def register_model(name: str, factory: Callable[..., DiffusionModel]) -> None:
    """Hook for user-supplied models: factory(**params) -> DiffusionModel."""
    _REGISTRY[name] = factory


def catalog_names() -> list[str]:
    return sorted(_REGISTRY)


def identity_model(q: int = 2, C0: float | None = None) -> DiffusionModel:
    """sigma = I_q, b = 0, constant-coefficient reference model."""
    q = int(q)
    eye = np.eye(q)
    return DiffusionModel(
        q=q,
        d=q,
        sigma=lambda x: eye,
        b=lambda x: np.zeros(q),
        eps=(1,) + (0,) * q,
        C0=float(C0) if C0 is not None else float(np.sqrt(q)),
        name=f"identity-{q}d",
        sigma_batch=lambda X: np.broadcast_to(eye, (len(X), q, q)),
        b_batch=lambda X: np.zeros((len(X), q)),
    )


def diag_affine_model(
    q: int = 2,
    slope: float = 0.5,
    offset: float = 1.0,
    C0: float | None = None,
) -> DiffusionModel:
    """sigma(x) = diag(offset + slope * x_i): linear-growth diagonal model."""
    q = int(q)
    slope = float(slope)
    offset = float(offset)

    def sig(x):
        return np.diag(offset + slope * x)

    if C0 is None:
        # |offset + slope x| <= max(offset, slope) * sqrt(2) * N(x) with
        # eps = (1,...,1); keep a safety factor for the Lipschitz part too
        C0 = np.sqrt(2.0) * max(offset, slope, 1.0)
    return DiffusionModel(
        q=q,
        d=q,
        sigma=sig,
        b=lambda x: np.zeros(q),
        eps=(1,) * (q + 1),
        C0=float(C0),
        name=f"diag-affine-{q}d",
    )


def sine_model(C0: float = 2.25) -> DiffusionModel:
    """1D sigma(x) = 2 + sin x, b = 0, eps = (1, 1).

    The minimal valid growth constant is sup_x (2 + sin x)/N(x) ~ 2.2205;
    the default 2.25 keeps a small margin while staying tight enough that
    halving it produces detectable tube-ellipticity violations.
    """
    return DiffusionModel(
        q=1,
        d=1,
        sigma=lambda x: np.array([[2.0 + np.sin(x[0])]]),
        b=lambda x: np.zeros(1),
        eps=(1, 1),
        C0=float(C0),
        name="sine-1d",
        sigma_batch=lambda X: (2.0 + np.sin(X[:, 0]))[:, None, None],
        b_batch=lambda X: np.zeros((len(X), 1)),
    )


def rotation_model(C0: float = 2.0) -> DiffusionModel:
    """2D model with sigma(x) an x-dependent rotation matrix (sigma*sigma^T = I)."""

    def sig(x):
        c, s = np.cos(x[1]), np.sin(x[1])
        return np.array([[c, -s], [s, c]])

    return DiffusionModel(
        q=2,
        d=2,
        sigma=sig,
        b=lambda x: np.zeros(2),
        eps=(1, 0, 0),
        C0=float(C0),
        name="rotation-2d",
    )


def ou_model(rate: float = 1.0, C0: float = 2.0) -> DiffusionModel:
    """1D Ornstein-Uhlenbeck: sigma = 1, b(x) = -rate * x."""
    rate = float(rate)
    return DiffusionModel(
        q=1,
        d=1,
        sigma=lambda x: np.eye(1),
        b=lambda x: -rate * x,
        eps=(1, 1),
        C0=float(C0),
        name="ou-1d",
        sigma_batch=lambda X: np.broadcast_to(np.eye(1), (len(X), 1, 1)),
        b_batch=lambda X: -rate * X,
    )


register_model("identity", identity_model)
register_model("diag-affine", diag_affine_model)
register_model("sine-1d", sine_model)
register_model("rotation-2d", rotation_model)
register_model("ou-1d", ou_model)
# convenience aliases with the dimension baked in
register_model("identity-1d", lambda **kw: identity_model(q=1, **kw))
register_model("identity-2d", lambda **kw: identity_model(q=2, **kw))
register_model("identity-3d", lambda **kw: identity_model(q=3, **kw))


def build_model(spec: dict | str) -> DiffusionModel:
    """Resolve a model from a catalog name or a {"catalog": ..., params} dict."""
    if isinstance(spec, str):
        spec = {"catalog": spec}
    spec = dict(spec)
    name = spec.pop("catalog", None) or spec.pop("name", None)
    if name is None:
        raise ValueError("model spec needs a 'catalog' (or 'name') entry")
    if name not in _REGISTRY:
        raise KeyError(f"unknown catalog model {name!r}; known: {catalog_names()}")
    return _REGISTRY[name](**spec)


def load_model_file(path: str | Path) -> DiffusionModel:
    """Read a JSON or TOML model file and build the model it names."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib

        spec = tomllib.loads(text)
    else:
        spec = json.loads(text)
    return build_model(spec)
