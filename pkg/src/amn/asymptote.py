"""Asymptotic seminorm extraction.

Given a distance ``d`` the extracted seminorm is

    ||x|| = lim_n (1/n) ∫_U d(n u x, 0) dμ(u)

estimated along a geometric schedule of ``n``. The sequence
``a_n + 2 C0`` is subadditive, so ``(a_n + 2 C0) / n`` at any ``n`` bounds the
limit from above; the reported value is an affine extrapolation clamped to
that envelope.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

from amn.field import Field, UnitQuadrature, scalar_abs, scale_vector, unit_quadrature
from amn.hypotheses import HypothesisConstants
from amn.space import DistanceSpace, sample_box

__all__ = [
    "BoundReport",
    "ExtractionConfig",
    "HomogeneityReport",
    "LimitEstimate",
    "Mode",
    "NormModel",
    "Verdict",
    "averaged_distance",
    "delta",
    "delta0",
    "delta0_batch",
    "delta_batch",
    "extract_norm_model",
    "geometric_schedule",
    "homogeneity_check",
    "prop3_discrepancy",
    "quotient_hausdorff",
    "quotient_norm",
    "subadditive_limit",
    "verify_theorem2_bounds",
]

EXTRAPOLATION_POINTS = 5
# budget of float64 cells per vectorized distance call
_CHUNK_CELLS = 4_000_000


class Mode(enum.Enum):
    AVG_THEN_LIMIT = "avg_then_limit"
    LIMIT_THEN_AVG = "limit_then_avg"


class Verdict(enum.Enum):
    NORMABLE = "NORMABLE"
    DEGENERATE_E0_FULL = "DEGENERATE_E0_FULL"
    HYPOTHESES_VIOLATED = "HYPOTHESES_VIOLATED"


def geometric_schedule(n_max: int = 2**20) -> tuple[int, ...]:
    """Powers of two up to ``n_max``, with ``n_max`` itself appended if it is not one."""
    if n_max < 1:
        raise ValueError("n_max must be positive")
    sched = [1 << k for k in range(n_max.bit_length()) if (1 << k) <= n_max]
    if sched[-1] != n_max:
        sched.append(n_max)
    return tuple(sched)


def _check_schedule(schedule) -> np.ndarray:
    sched = np.asarray(schedule, dtype=np.int64)
    if sched.ndim != 1 or len(sched) == 0:
        raise ValueError("schedule must be a nonempty list of integers")
    if sched[0] < 1 or np.any(np.diff(sched) <= 0):
        raise ValueError("schedule must be strictly increasing positive integers")
    return sched


@dataclass(frozen=True)
class LimitEstimate:
    value: float
    upper_envelope: float
    extrapolated: float
    last_gap: float
    schedule: tuple[int, ...]
    n_max: int
    sequence: tuple[float, ...] = dc_field(repr=False)
    c0: float = 0.0

    def envelope_curve(self) -> list[float]:
        """Running minimum of ``(a_n + 2 c0) / n`` along the schedule."""
        ratios = [(a + 2 * self.c0) / n for a, n in zip(self.sequence, self.schedule)]
        return list(np.minimum.accumulate(ratios))

    def near_zero(self, ratio: float = 1e-2) -> bool:
        """Envelope has decayed below ``ratio`` times its starting value."""
        start = (self.sequence[0] + 2 * self.c0) / self.schedule[0]
        return self.upper_envelope <= ratio * start


def _limits(a: np.ndarray, sched: np.ndarray, c0: float):
    """Vectorized limit estimation over the last axis of ``a``."""
    n = sched.astype(float)
    env_curve = np.minimum.accumulate((a + 2.0 * c0) / n, axis=-1)
    envelope = env_curve[..., -1]
    k = min(EXTRAPOLATION_POINTS, len(n))
    if k == 1:
        slope = a[..., -1] / n[-1]
    else:
        nn = n[-k:] - n[-k:].mean()
        aa = a[..., -k:] - a[..., -k:].mean(axis=-1, keepdims=True)
        slope = (aa @ nn) / (nn @ nn)
    value = np.clip(slope, 0.0, envelope)
    gap = env_curve[..., -2] - env_curve[..., -1] if len(n) > 1 else np.zeros_like(envelope)
    start = (a[..., 0] + 2.0 * c0) / n[0]
    return value, envelope, slope, gap, start


def subadditive_limit(a: Callable[[int], float] | Sequence[float], c0: float = 0.0,
                      schedule=None) -> LimitEstimate:
    """Estimate ``lim a_n / n`` for a (weakly) subadditive sequence.

    ``a`` is either a callable evaluated on the schedule or the already
    evaluated values.
    """
    sched = _check_schedule(geometric_schedule() if schedule is None else schedule)
    if callable(a):
        values = np.array([float(a(int(n))) for n in sched])
    else:
        values = np.asarray(a, dtype=float)
        if values.shape != sched.shape:
            raise ValueError("sequence length does not match the schedule")
    value, env, slope, gap, _ = _limits(values, sched, c0)
    curve = np.minimum.accumulate((values + 2 * c0) / sched)
    assert np.all(np.diff(curve) <= 0), "upper envelope must be non-increasing"
    return LimitEstimate(
        value=float(value), upper_envelope=float(env), extrapolated=float(slope),
        last_gap=float(gap), schedule=tuple(int(n) for n in sched), n_max=int(sched[-1]),
        sequence=tuple(float(v) for v in values), c0=float(c0),
    )


def averaged_distance(space: DistanceSpace, quad: UnitQuadrature, x, y):
    """``Σ w_i d(u_i x, u_i y)`` over the quadrature nodes."""
    if quad.field is not space.field:
        raise ValueError(f"quadrature over {quad.field.name} does not match {space.label}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    units = quad.nodes.reshape((-1,) + (1,) * (x.ndim - 2) + (quad.nodes.shape[-1],))
    d = space.evaluate(scale_vector(units, x[None]), scale_vector(units, y[None]))
    out = np.tensordot(quad.weights, d, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def _chunks(count: int, cells_per_item: int):
    step = max(1, _CHUNK_CELLS // max(1, cells_per_item))
    for start in range(0, count, step):
        yield slice(start, min(count, start + step))


def _raw_sequences(space, X, Y, sched):
    """``d(n x, n y)`` for batches ``X, Y`` of shape ``(P, dim, w)`` -> ``(P, S)``."""
    n = sched.astype(float)[:, None, None, None]
    out = np.empty((len(X), len(sched)))
    for sl in _chunks(len(X), len(sched) * space.real_dim):
        out[sl] = space.evaluate(n * X[sl][None], n * Y[sl][None]).T
    return out


def _node_sequences(space, quad, X, Y, sched):
    """``d(n u x, n u y)`` per node -> ``(P, N, S)``."""
    if quad.field is not space.field:
        raise ValueError(f"quadrature over {quad.field.name} does not match {space.label}")
    n = sched.astype(float)[:, None, None, None, None]
    units = quad.nodes[:, None, :]
    out = np.empty((len(X), len(quad), len(sched)))
    for sl in _chunks(len(X), len(sched) * len(quad) * space.real_dim):
        ux = scale_vector(units, X[sl][None])
        uy = scale_vector(units, Y[sl][None])
        out[sl] = np.transpose(space.evaluate(n * ux[None], n * uy[None]), (2, 1, 0))
    return out


@dataclass(frozen=True)
class _Batch:
    value: np.ndarray
    upper_envelope: np.ndarray
    extrapolated: np.ndarray
    last_gap: np.ndarray
    start: np.ndarray


def delta0_batch(space: DistanceSpace, quad: UnitQuadrature, c0: float, X, Y=None,
                 schedule=None, mode: Mode = Mode.AVG_THEN_LIMIT) -> _Batch:
    """Vectorized ``delta0`` over a batch of points of shape ``(P, dim, w)``."""
    sched = _check_schedule(geometric_schedule() if schedule is None else schedule)
    X = np.asarray(X, dtype=float)
    Y = np.zeros_like(X) if Y is None else np.broadcast_to(np.asarray(Y, dtype=float), X.shape)
    seqs = _node_sequences(space, quad, X, Y, sched)
    if mode is Mode.AVG_THEN_LIMIT:
        a = np.einsum("n,pns->ps", quad.weights, seqs)
        return _Batch(*_limits(a, sched, c0))
    parts = _limits(seqs, sched, c0)
    return _Batch(*(np.einsum("n,pn->p", quad.weights, p) for p in parts))


def delta_batch(space: DistanceSpace, c0: float, X, Y=None, schedule=None) -> _Batch:
    """Vectorized ``delta`` (no unit averaging) over a batch of points."""
    sched = _check_schedule(geometric_schedule() if schedule is None else schedule)
    X = np.asarray(X, dtype=float)
    Y = np.zeros_like(X) if Y is None else np.broadcast_to(np.asarray(Y, dtype=float), X.shape)
    return _Batch(*_limits(_raw_sequences(space, X, Y, sched), sched, c0))


def delta(space: DistanceSpace, c0: float, x, y, schedule=None) -> LimitEstimate:
    """Estimate ``lim d(n x, n y) / n``."""
    sched = _check_schedule(geometric_schedule() if schedule is None else schedule)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    seq = _raw_sequences(space, x[None], y[None], sched)[0]
    est = subadditive_limit(seq, c0, sched)
    bound = space.evaluate(x, y) + 2 * c0
    assert est.value <= bound + 1e-9 * (1 + bound), "limit exceeds d(x, y) + 2 c0"
    return est


def delta0(space: DistanceSpace, quad: UnitQuadrature, c0: float, x, y, schedule=None,
           mode: Mode = Mode.AVG_THEN_LIMIT) -> LimitEstimate:
    """Estimate the averaged limit ``lim d0(n x, n y) / n`` in either order."""
    sched = _check_schedule(geometric_schedule() if schedule is None else schedule)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if mode is Mode.AVG_THEN_LIMIT:
        seq = _node_sequences(space, quad, x[None], y[None], sched)[0]
        return subadditive_limit(quad.weights @ seq, c0, sched)
    parts = [delta(space, c0, scale_vector(u, x), scale_vector(u, y), sched) for u in quad.nodes]
    w = quad.weights
    seq = np.sum([wi * np.asarray(p.sequence) for wi, p in zip(w, parts)], axis=0)
    return LimitEstimate(
        value=float(sum(wi * p.value for wi, p in zip(w, parts))),
        upper_envelope=float(sum(wi * p.upper_envelope for wi, p in zip(w, parts))),
        extrapolated=float(sum(wi * p.extrapolated for wi, p in zip(w, parts))),
        last_gap=float(sum(wi * p.last_gap for wi, p in zip(w, parts))),
        schedule=tuple(int(n) for n in sched), n_max=int(sched[-1]),
        sequence=tuple(float(v) for v in seq), c0=float(c0),
    )


def prop3_discrepancy(space: DistanceSpace, quad: UnitQuadrature, c0: float, X,
                      schedule=None) -> tuple[np.ndarray, np.ndarray]:
    """Both orders of limit and average for a batch; returns ``(avg_first, limit_first)``."""
    a = delta0_batch(space, quad, c0, X, schedule=schedule, mode=Mode.AVG_THEN_LIMIT)
    b = delta0_batch(space, quad, c0, X, schedule=schedule, mode=Mode.LIMIT_THEN_AVG)
    return a.value, b.value


@dataclass(frozen=True)
class ExtractionConfig:
    schedule: tuple[int, ...] = geometric_schedule()
    tol_null_rel: float = 1e-3
    tol_null: float | None = None
    probes: int = 16
    restarts: int = 50
    steps: int = 200
    min_step: float = 1e-3
    degenerate_ratio: float = 1e-2
    seed: int = 0


@dataclass(frozen=True, eq=False)
class NormModel:
    space: DistanceSpace
    quad: UnitQuadrature
    c0: float
    null_basis: np.ndarray
    projector: np.ndarray
    verdict: Verdict
    tol_null: float
    scale: float
    schedule: tuple[int, ...]
    probe_directions: np.ndarray
    probe_values: np.ndarray
    k_linear: bool

    def seminorm(self, X) -> _Batch:
        return delta0_batch(self.space, self.quad, self.c0, X, schedule=self.schedule)

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        flat = X.reshape(X.shape[:-2] + (-1,)) @ self.projector.T
        return flat.reshape(X.shape)


def _workers() -> int:
    text = os.environ.get("AMN_THREADS")
    if not text:
        return 1
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"AMN_THREADS must be a positive integer, got {text!r}") from None
    if value < 1:
        raise ValueError(f"AMN_THREADS must be a positive integer, got {text!r}")
    return value


def _orthonormal_complement(basis: np.ndarray, dim: int) -> np.ndarray:
    if len(basis) == 0:
        return np.eye(dim)
    q, _ = np.linalg.qr(np.vstack([basis, np.eye(dim)]).T)
    return q[:, len(basis):dim]


def _descend(evaluate, certify, starts: np.ndarray, tol: float, cfg: ExtractionConfig):
    """Lockstep coordinate descent over the unit sphere from each row of ``starts``.

    A restart whose surrogate envelope drops below ``tol`` is passed to
    ``certify``; the lowest-index certified restart is returned, and restarts
    that fail certification are retired. Returns None if nothing certifies.
    """
    c = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    value, env = evaluate(c)
    step = np.full(len(c), 0.5)
    r, m = c.shape
    eye = np.eye(m)
    moves = np.concatenate([eye, -eye])
    for _ in range(cfg.steps + 1):
        for i in np.flatnonzero((env <= tol) & (step > 0)):
            if certify(c[i]):
                return c[i]
            step[i] = 0.0
        active = np.flatnonzero(step >= cfg.min_step)
        if len(active) == 0:
            break
        cand = c[active, None, :] + step[active, None, None] * moves[None]
        cand /= np.linalg.norm(cand, axis=2, keepdims=True)
        vals, envs = evaluate(cand.reshape(-1, m))
        vals = vals.reshape(len(active), 2 * m)
        envs = envs.reshape(len(active), 2 * m)
        best = np.argmin(vals, axis=1)
        rows = np.arange(len(active))
        improved = vals[rows, best] < value[active]
        moved, kept = active[improved], active[~improved]
        c[moved] = cand[rows[improved], best[improved]]
        value[moved] = vals[rows[improved], best[improved]]
        env[moved] = envs[rows[improved], best[improved]]
        step[kept] /= 2
    return None


def _surrogate_quadrature(quad: UnitQuadrature) -> UnitQuadrature:
    # Any rule with positive weights vanishes on E0, so a small one can steer
    # the search; acceptance is always re-checked with the full rule.
    limit = {Field.REAL: 2, Field.COMPLEX: 8, Field.QUATERNION: 24}[quad.field]
    if len(quad) <= limit:
        return quad
    return unit_quadrature(quad.field, limit)


def _find_null_direction(space, quad, c0, basis, start, tol, cfg, round_index):
    D = space.real_dim
    comp = _orthonormal_complement(basis, D)
    # the first point plus the extrapolation window still gives a valid envelope
    sched = tuple(cfg.schedule)
    search_schedule = sched[:1] + sched[max(1, len(sched) - EXTRAPOLATION_POINTS):]
    workers = _workers()
    coarse = _surrogate_quadrature(quad)

    def run(C):
        V = (C @ comp.T).reshape((len(C),) + space.shape)
        b = delta0_batch(space, coarse, c0, V, schedule=search_schedule)
        return b.value, b.upper_envelope

    def certify(c):
        v = (comp @ c).reshape((1,) + space.shape)
        b = delta0_batch(space, quad, c0, v, schedule=cfg.schedule)
        return bool(b.upper_envelope[0] <= tol)

    def evaluate(C):
        if workers == 1 or len(C) < 2 * workers:
            return run(C)
        parts = np.array_split(C, workers)
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, parts))
        return (np.concatenate([v for v, _ in results]),
                np.concatenate([e for _, e in results]))

    rng = np.random.default_rng([cfg.seed, round_index])
    starts = rng.standard_normal((cfg.restarts, comp.shape[1]))
    if start is not None and np.linalg.norm(comp.T @ start) > 1e-8:
        starts[0] = comp.T @ start
    c = _descend(evaluate, certify, starts, tol, cfg)
    if c is None:
        return None
    v = comp @ c
    return v / np.linalg.norm(v)


def extract_norm_model(space: DistanceSpace, quad: UnitQuadrature,
                       constants: HypothesisConstants,
                       config: ExtractionConfig | None = None) -> NormModel:
    """Detect the bounded subspace and build the quotient seminorm model.

    Probes the standard basis and seeded random unit directions, decides the
    fully degenerate case from the probes, then repeatedly searches the unit
    sphere of the remaining complement for a direction whose certified upper
    envelope is below ``tol_null`` and deflates it out.
    """
    cfg = config or ExtractionConfig()
    c0 = constants.c0
    D = space.real_dim
    rng = np.random.default_rng(cfg.seed)
    random_dirs = rng.standard_normal((cfg.probes, D))
    random_dirs /= np.linalg.norm(random_dirs, axis=1, keepdims=True)
    probes = np.vstack([np.eye(D), random_dirs])
    batch = delta0_batch(space, quad, c0, probes.reshape((-1,) + space.shape),
                         schedule=cfg.schedule)
    scale = float(np.median(batch.value))
    if scale <= 0:
        scale = float(np.median(batch.start))
    tol = cfg.tol_null if cfg.tol_null is not None else cfg.tol_null_rel * scale

    degenerate = bool(np.all(batch.upper_envelope <= cfg.degenerate_ratio * batch.start))
    if degenerate:
        basis = np.eye(D)
    else:
        basis = np.zeros((0, D))
        start = probes[int(np.argmin(batch.value))]
        while len(basis) < D:
            v = _find_null_direction(space, quad, c0, basis, start, tol, cfg, len(basis))
            if v is None:
                break
            v = v - basis.T @ (basis @ v)
            basis = np.vstack([basis, v / np.linalg.norm(v)])
            start = None

    projector = np.eye(D) - basis.T @ basis
    k_linear = True
    if len(basis) and not degenerate:
        rotated = scale_vector(quad.nodes[:, None, :],
                               basis.reshape((-1,) + space.shape)[None])
        rb = delta0_batch(space, quad, c0, rotated.reshape((-1,) + space.shape),
                          schedule=cfg.schedule)
        k_linear = bool(np.all(rb.upper_envelope <= tol))

    if constants.divergent:
        verdict = Verdict.HYPOTHESES_VIOLATED
    elif len(basis) == D:
        verdict = Verdict.DEGENERATE_E0_FULL
    else:
        verdict = Verdict.NORMABLE
    return NormModel(
        space=space, quad=quad, c0=c0, null_basis=basis, projector=projector,
        verdict=verdict, tol_null=float(tol), scale=scale, schedule=tuple(cfg.schedule),
        probe_directions=probes, probe_values=batch.value, k_linear=k_linear,
    )


def _require_normable(model: NormModel) -> None:
    if model.verdict is not Verdict.NORMABLE:
        raise ValueError(f"model verdict is {model.verdict.value}; no quotient norm available")


def quotient_norm(model: NormModel, x):
    """Norm of the class ``x + E0``, evaluated at the projected representative."""
    _require_normable(model)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    X = model.project(x[None] if single else x)
    values = model.seminorm(X).value
    return float(values[0]) if single else values


@dataclass(frozen=True)
class BoundReport:
    trials: int
    violations: int
    lower_violations: int
    upper_violations: int
    max_violation: float


def verify_theorem2_bounds(model: NormModel, constants: HypothesisConstants, seed: int = 0,
                           trials: int = 10_000, radius: float = 10.0) -> BoundReport:
    """Count sampled failures of ``C1^-2 d - C2' <= ||x - y|| <= C1^2 d + C2'``."""
    _require_normable(model)
    space = model.space
    rng = np.random.default_rng(seed)
    x = sample_box(space, rng, trials, radius)
    y = sample_box(space, rng, trials, radius)
    norm = quotient_norm(model, x - y)
    d = space.evaluate(x, y)
    c1sq, c2p = constants.c1**2, constants.c2prime
    lower = d / c1sq - c2p - norm
    upper = norm - c1sq * d - c2p
    tol = 1e-9 * (1.0 + d)
    lo, hi = lower > tol, upper > tol
    return BoundReport(
        trials=trials,
        violations=int(np.sum(lo | hi)),
        lower_violations=int(np.sum(lo)),
        upper_violations=int(np.sum(hi)),
        max_violation=float(max(np.max(lower), np.max(upper))),
    )


@dataclass(frozen=True)
class HomogeneityReport:
    trials: int
    max_rel_error: float


def homogeneity_check(space: DistanceSpace, quad: UnitQuadrature, c0: float, seed: int = 0,
                      rationals_max_den: int = 7, trials: int = 200, schedule=None,
                      radius: float = 10.0, floor: float = 1e-9) -> HomogeneityReport:
    """Compare ``delta0(λx)`` with ``|λ| delta0(x)`` for ``λ = (p/q) u``."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    x = sample_box(space, rng, trials, radius)
    p = rng.integers(1, rationals_max_den + 1, size=trials)
    q = rng.integers(1, rationals_max_den + 1, size=trials)
    u = quad.nodes[rng.integers(0, len(quad), size=trials)]
    lam = (p / q)[:, None] * u
    lam_abs = scalar_abs(lam)
    scaled = delta0_batch(space, quad, c0, scale_vector(lam, x), schedule=schedule).value
    base = delta0_batch(space, quad, c0, x, schedule=schedule).value
    target = lam_abs * base
    rel = np.abs(scaled - target) / np.maximum(target, floor)
    return HomogeneityReport(trials=trials, max_rel_error=float(np.max(rel)))


def quotient_hausdorff(model: NormModel, x, y, search_radius: float = 10.0,
                       grid: int = 201) -> float:
    """Grid approximation of the two-sided Hausdorff distance between ``x + E0`` and ``y + E0``.

    Uses the sup-inf form ``max(sup_s inf_t d, sup_t inf_s d)`` with both
    classes centred at their projected representatives, so the finite search
    window is symmetric about the closest points.
    """
    _require_normable(model)
    basis = model.null_basis
    k = len(basis)
    if k == 0:
        raise ValueError("quotient_hausdorff needs a nontrivial null basis")
    if grid < 2:
        raise ValueError("grid needs at least two points per axis")
    if grid ** (2 * k) > 10**8:
        raise ValueError(f"grid {grid} is too fine for a {k}-dimensional null space")
    space = model.space
    xs = model.project(np.asarray(x, dtype=float)).reshape(-1)
    ys = model.project(np.asarray(y, dtype=float)).reshape(-1)
    axis = np.linspace(-search_radius, search_radius, grid)
    offsets = np.stack(np.meshgrid(*([axis] * k), indexing="ij"), axis=-1).reshape(-1, k) @ basis
    X = (xs + offsets).reshape((-1,) + space.shape)
    Y = (ys + offsets).reshape((-1,) + space.shape)
    dist = space.evaluate(X[:, None], Y[None, :])
    return float(max(np.max(np.min(dist, axis=1)), np.max(np.min(dist, axis=0))))
