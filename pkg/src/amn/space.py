"""Metric vector spaces, the zoo of analytically solved distances, and axiom sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable
from urllib.parse import parse_qsl

import numpy as np

from amn.field import Field

__all__ = [
    "Analytic",
    "AxiomReport",
    "DistanceSpace",
    "SpecError",
    "ZOO",
    "as_vector",
    "metric_axiom_check",
    "parse_spec",
    "sample_box",
    "zoo_bounded_dir",
    "zoo_c_l1",
    "zoo_jitter",
    "zoo_lp",
    "zoo_quasi_lp",
    "zoo_warp",
]

# Sample coordinates live on this dyadic grid so sums and differences of
# samples are exact in double precision.
_GRID = 2.0**-24

Kernel = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SpecError(ValueError):
    """Malformed ``zoo:`` space specification."""


@dataclass(frozen=True)
class Analytic:
    """Ground truth attached to a zoo member.

    ``limit_norm`` maps vectors ``(..., dim, width)`` to the exact value of
    the averaged asymptotic seminorm at that vector. ``null_basis`` holds an
    orthonormal basis of the bounded subspace in flattened real coordinates.
    """

    summary: str
    limit_norm: Callable[[np.ndarray], np.ndarray]
    null_basis: np.ndarray
    constants: tuple[float, float, float, float] | None = None
    additive_defect: float = 0.0


@dataclass(frozen=True, eq=False)
class DistanceSpace:
    field: Field
    dim: int
    label: str
    kernel: Kernel = dc_field(repr=False)
    analytic: Analytic | None = None
    jitter: float = 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.field.width)

    @property
    def real_dim(self) -> int:
        return self.dim * self.field.width

    def evaluate(self, x, y):
        """Distance between ``x`` and ``y``; leading axes broadcast and batch."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-2:] != self.shape or y.shape[-2:] != self.shape:
            raise ValueError(
                f"{self.label}: expected vectors of shape {self.shape}, "
                f"got {x.shape} and {y.shape}"
            )
        out = self.kernel(x, y)
        return float(out) if np.ndim(out) == 0 else out

    def zero(self) -> np.ndarray:
        return np.zeros(self.shape)


def as_vector(space: DistanceSpace, coords) -> np.ndarray:
    """Reshape flattened real coordinates into a vector of ``space``."""
    flat = np.asarray(coords, dtype=float)
    if flat.shape[-1] != space.real_dim:
        raise ValueError(
            f"{space.label}: expected {space.real_dim} real coordinates, got {flat.shape[-1]}"
        )
    return flat.reshape(flat.shape[:-1] + space.shape)


def sample_box(space: DistanceSpace, rng: np.random.Generator, count: int, radius: float = 10.0):
    """``count`` vectors with coordinates uniform on the dyadic grid in ``[-radius, radius]``."""
    raw = rng.uniform(-radius, radius, size=(count,) + space.shape)
    return np.round(raw / _GRID) * _GRID


def _abs(v: np.ndarray) -> np.ndarray:
    if v.shape[-1] == 1:
        return np.abs(v[..., 0])
    return np.sqrt(np.sum(v * v, axis=-1))


def _lp_of(z: np.ndarray, p: float) -> np.ndarray:
    a = _abs(z)
    if math.isinf(p):
        return np.max(a, axis=-1)
    if p == 1:
        return np.sum(a, axis=-1)
    if p == 2:
        return np.sqrt(np.sum(a * a, axis=-1))
    return np.sum(a**p, axis=-1) ** (1.0 / p)


def _fmt(v: float) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf"
    return str(int(v)) if v.is_integer() else repr(v)


def zoo_lp(field: Field, dim: int, p: float) -> DistanceSpace:
    p = float(p)
    if not p >= 1:
        raise ValueError(f"lp distance needs p >= 1, got {p}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    width = field.width
    analytic = Analytic(
        summary=f"norm = |x|_{_fmt(p)}; E0 = {{0}}; constants (C0;C1,C2,C3) = (0;1,0,0)",
        limit_norm=lambda x: _lp_of(x, p),
        null_basis=np.zeros((0, dim * width)),
        constants=(0.0, 1.0, 0.0, 0.0),
    )
    return DistanceSpace(
        field=field,
        dim=dim,
        label=f"zoo:lp?field={field.value}&dim={dim}&p={_fmt(p)}",
        kernel=lambda x, y: _lp_of(x - y, p),
        analytic=analytic,
    )


def zoo_warp(base: DistanceSpace, c: float) -> DistanceSpace:
    """Concave warp ``t + c(1 - exp(-t))`` of ``base``: same asymptotics, additive defect below ``c``."""
    c = float(c)
    if not c > 0:
        raise ValueError(f"warp constant must be positive, got {c}")
    inner = base.kernel

    def kernel(x, y):
        t = inner(x, y)
        return t - c * np.expm1(-t)

    analytic = None
    if base.analytic is not None:
        constants = None
        if base.analytic.constants == (0.0, 1.0, 0.0, 0.0):
            constants = (0.0, 1.0, c, c)
        analytic = Analytic(
            summary=f"norm = limit norm of base; additive defect < {_fmt(c)}",
            limit_norm=base.analytic.limit_norm,
            null_basis=base.analytic.null_basis,
            constants=constants,
            additive_defect=base.analytic.additive_defect + c,
        )
    base_query = base.label.split("?", 1)[1] if "?" in base.label else ""
    base_name = base.label.split("?", 1)[0].removeprefix("zoo:")
    return DistanceSpace(
        field=base.field,
        dim=base.dim,
        label=f"zoo:warp?base={base_name}&{base_query}&c={_fmt(c)}",
        kernel=kernel,
        analytic=analytic,
        jitter=base.jitter,
    )


def zoo_bounded_dir(dim: int, cap: float) -> DistanceSpace:
    cap = float(cap)
    if dim < 2:
        raise ValueError(f"bounded-dir needs dim >= 2, got {dim}")
    if not cap > 0:
        raise ValueError(f"cap must be positive, got {cap}")

    def kernel(x, y):
        a = np.abs(x[..., 0] - y[..., 0])
        return a[..., 0] + np.sum(np.minimum(a[..., 1:], cap), axis=-1)

    analytic = Analytic(
        summary=(
            f"norm = |x_1|; E0 = span(e_2..e_{dim}); "
            f"constants (C0;C1,C2,C3) = (0;1,{_fmt((dim - 1) * cap)},{_fmt((dim - 1) * cap)})"
        ),
        limit_norm=lambda x: np.abs(x[..., 0, 0]),
        null_basis=np.eye(dim)[1:],
        constants=(0.0, 1.0, (dim - 1) * cap, (dim - 1) * cap),
        additive_defect=(dim - 1) * cap,
    )
    return DistanceSpace(
        field=Field.REAL,
        dim=dim,
        label=f"zoo:bounded-dir?dim={dim}&cap={_fmt(cap)}",
        kernel=kernel,
        analytic=analytic,
    )


def zoo_c_l1(dim: int) -> DistanceSpace:
    """Sum of |Re| + |Im| over complex coordinates: a real norm that is not C-homogeneous."""
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    analytic = Analytic(
        summary="delta0 = (4/pi)*sum|x_i|; E0 = {0}; constants (C0;C1,C2,C3) = (0;sqrt2,0,0)",
        limit_norm=lambda x: (4.0 / math.pi) * np.sum(_abs(x), axis=-1),
        null_basis=np.zeros((0, 2 * dim)),
        constants=(0.0, math.sqrt(2.0), 0.0, 0.0),
    )
    return DistanceSpace(
        field=Field.COMPLEX,
        dim=dim,
        label=f"zoo:c-l1?dim={dim}",
        kernel=lambda x, y: np.sum(np.abs(x - y), axis=(-2, -1)),
        analytic=analytic,
    )


def zoo_quasi_lp(dim: int, p: float) -> DistanceSpace:
    p = float(p)
    if not 0 < p < 1:
        raise ValueError(f"quasi-lp needs 0 < p < 1, got {p}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    analytic = Analytic(
        summary="delta = 0 in every direction; E0 = whole space; hypotheses fail",
        limit_norm=lambda x: np.zeros(np.shape(x)[:-2]),
        null_basis=np.eye(dim),
    )
    return DistanceSpace(
        field=Field.REAL,
        dim=dim,
        label=f"zoo:quasi-lp?dim={dim}&p={_fmt(p)}",
        kernel=lambda x, y: np.sum(np.abs(x - y)[..., 0] ** p, axis=-1),
        analytic=analytic,
    )


def zoo_jitter(base: DistanceSpace, eps: float) -> DistanceSpace:
    """Add a bounded position-dependent term ``eps * h(x, y)`` with ``h`` in [0, 1].

    The term depends on the points themselves, not only on ``x - y``, so the
    result is only ``eps``-translation invariant; the triangle inequality can
    fail by at most ``eps``.
    """
    eps = float(eps)
    if not 0 < eps <= 0.5:
        raise ValueError(f"jitter must lie in (0, 1/2], got {eps}")
    inner = base.kernel

    def kernel(x, y):
        sx = np.sin(np.sum(x, axis=(-2, -1)))
        sy = np.sin(np.sum(y, axis=(-2, -1)))
        same = np.all(x == y, axis=(-2, -1))
        return inner(x, y) + np.where(same, 0.0, eps * (2.0 + sx + sy) / 4.0)

    analytic = None
    if base.analytic is not None:
        constants = base.analytic.constants
        if constants is not None:
            constants = (constants[0] + eps,) + constants[1:]
        analytic = Analytic(
            summary=base.analytic.summary + f"; jitter {_fmt(eps)}",
            limit_norm=base.analytic.limit_norm,
            null_basis=base.analytic.null_basis,
            constants=constants,
            additive_defect=base.analytic.additive_defect + eps,
        )
    return DistanceSpace(
        field=base.field,
        dim=base.dim,
        label=f"{base.label}&jitter={_fmt(eps)}",
        kernel=kernel,
        analytic=analytic,
        jitter=base.jitter + eps,
    )


# name -> (allowed keys, defaults, one-line description)
ZOO: dict[str, tuple[frozenset[str], dict[str, str], str]] = {
    "lp": (frozenset({"field", "dim", "p"}), {"field": "R", "dim": "2", "p": "2"},
           "(sum |x_i - y_i|^p)^(1/p), p = inf for max"),
    "warp": (frozenset({"base", "field", "dim", "p", "cap", "c"}), {"base": "lp", "c": "10"},
             "t + c(1 - exp(-t)) applied to a base zoo distance"),
    "bounded-dir": (frozenset({"dim", "cap"}), {"dim": "2", "cap": "1"},
                    "|x_1 - y_1| + sum_{i>=2} min(|x_i - y_i|, cap)"),
    "c-l1": (frozenset({"dim"}), {"dim": "1"},
             "sum |Re(x_i - y_i)| + |Im(x_i - y_i)| over C"),
    "quasi-lp": (frozenset({"dim", "p"}), {"dim": "2", "p": "0.5"},
                 "sum |x_i - y_i|^p with 0 < p < 1"),
}


def _num(params: dict[str, str], key: str, kind=float):
    text = params[key]
    try:
        value = float(text) if kind is float else int(text)
    except ValueError:
        raise SpecError(f"parameter {key}={text!r} is not a valid {kind.__name__}") from None
    if kind is float and math.isnan(value):
        raise SpecError(f"parameter {key} is NaN")
    return value


def _build(name: str, params: dict[str, str]) -> DistanceSpace:
    if name == "lp":
        return zoo_lp(Field.parse(params.get("field", "R")), _num(params, "dim", int), _num(params, "p"))
    if name == "bounded-dir":
        return zoo_bounded_dir(_num(params, "dim", int), _num(params, "cap"))
    if name == "c-l1":
        return zoo_c_l1(_num(params, "dim", int))
    if name == "quasi-lp":
        return zoo_quasi_lp(_num(params, "dim", int), _num(params, "p"))
    if name == "warp":
        base = params["base"]
        if base not in ZOO or base == "warp":
            raise SpecError(f"unsupported warp base {base!r}")
        allowed, defaults, _ = ZOO[base]
        sub = {k: v for k, v in params.items() if k in allowed}
        extra = set(params) - allowed - {"base", "c"}
        if extra:
            raise SpecError(f"keys {sorted(extra)} not valid for warp base {base!r}")
        return zoo_warp(_build(base, {**defaults, **sub}), _num(params, "c"))
    raise SpecError(f"unknown zoo space {name!r}")


def parse_spec(spec: str) -> DistanceSpace:
    """Parse ``zoo:<name>?key=value&...`` into a space; raises SpecError on bad input."""
    if not spec.startswith("zoo:"):
        raise SpecError(f"space spec must start with 'zoo:', got {spec!r}")
    body = spec[len("zoo:"):]
    name, _, query = body.partition("?")
    if name not in ZOO:
        raise SpecError(f"unknown zoo space {name!r}; known: {', '.join(sorted(ZOO))}")
    try:
        pairs = parse_qsl(query, keep_blank_values=True, strict_parsing=bool(query))
    except ValueError as exc:
        raise SpecError(f"malformed query {query!r}: {exc}") from None
    allowed, defaults, _ = ZOO[name]
    params: dict[str, str] = {}
    jitter = None
    for key, value in pairs:
        if key in params or (key == "jitter" and jitter is not None):
            raise SpecError(f"duplicate key {key!r}")
        if key == "jitter":
            jitter = value
        elif key in allowed:
            params[key] = value
        else:
            raise SpecError(f"unknown key {key!r} for zoo:{name}")
    try:
        space = _build(name, {**defaults, **params})
        if jitter is not None:
            space = zoo_jitter(space, _num({"jitter": jitter}, "jitter"))
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    return space


@dataclass(frozen=True)
class AxiomReport:
    trials: int
    symmetry: float
    identity: float
    triangle: float

    @property
    def worst(self) -> float:
        return max(self.symmetry, self.identity, self.triangle)


def metric_axiom_check(space: DistanceSpace, seed: int = 0, trials: int = 10_000,
                       radius: float = 10.0) -> AxiomReport:
    """Largest observed violation of each metric axiom over seeded triples."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    x, y, z = (sample_box(space, rng, trials, radius) for _ in range(3))
    dxy = space.evaluate(x, y)
    dyx = space.evaluate(y, x)
    dyz = space.evaluate(y, z)
    dxz = space.evaluate(x, z)
    dxx = space.evaluate(x, x)
    return AxiomReport(
        trials=trials,
        symmetry=float(np.max(np.abs(dxy - dyx))),
        identity=float(np.max(np.abs(dxx))),
        triangle=float(max(0.0, np.max(dxz - dxy - dyz))),
    )
