"""Sample-based fitting of translation, multiplicativity and n-fold sum constants.

Every fitted constant is the smallest value consistent with the drawn samples,
so it lower-bounds the true constant. Samples are drawn on a ladder of box
radii ``radius * 2**j``; a constant that keeps growing along the ladder cannot
be uniform in ``x, y`` and the fit is reported as divergent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from amn.field import UnitQuadrature, scalar_abs, scale_vector, unit_quadrature
from amn.space import DistanceSpace, sample_box

__all__ = [
    "AsymptoticFit",
    "HypothesisConstants",
    "MultiplicativityFit",
    "SumConditionFit",
    "check_sum_condition",
    "default_lambda_sweep",
    "estimate_translation_defect",
    "fit_asymptotic",
    "fit_constants",
    "fit_multiplicativity",
]

CEILING = 1e6
# log2-growth of a constant per doubling of the sample radius above which it
# is declared divergent
GROWTH_LIMIT = 0.1
_FLOOR = 1e-9
MAX_LAMBDAS_PER_PAIR = 64
DEFAULT_C1_GRID = (1.5, 1.25, 1.1, 1.01)
DEFAULT_C1_CANDIDATES = (1.0, 1.01, 1.1, 1.25, 1.5, 2.0, 4.0)


@dataclass(frozen=True)
class HypothesisConstants:
    c0: float
    c1: float
    c2: float
    c3: float
    samples_used: int
    max_residual: float
    divergent: bool = False

    @property
    def c2prime(self) -> float:
        return self.c1 * self.c2 + self.c1 * self.c3 + self.c2

    def as_dict(self) -> dict:
        return {
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "c2prime": self.c2prime,
            "samples_used": self.samples_used,
            "max_residual": self.max_residual,
            "divergent": self.divergent,
        }


@dataclass(frozen=True)
class MultiplicativityFit:
    c1: float
    c2: float
    c3: float
    divergent: bool
    growth: float
    max_residual: float
    samples: int


@dataclass(frozen=True)
class AsymptoticFit:
    grid: list[tuple[float, float, float]]
    divergent: bool


@dataclass(frozen=True)
class SumConditionFit:
    c1: float
    c0: float
    divergent: bool
    growth: float
    samples: int


def default_lambda_sweep(quad: UnitQuadrature, max_exp: int = 10) -> np.ndarray:
    """Scalars ``±2**k u`` for ``0 <= k <= max_exp`` and ``u`` a quadrature node."""
    units = np.concatenate([quad.nodes, -quad.nodes])
    units = np.unique(np.round(units, 15), axis=0)
    mags = 2.0 ** np.arange(max_exp + 1)
    return (mags[:, None, None] * units[None]).reshape(-1, units.shape[-1])


def estimate_translation_defect(space: DistanceSpace, seed: int = 0, trials: int = 1000,
                                radius: float = 10.0) -> float:
    """Largest sampled ``d(x+z, y+z) - d(x, y)``, clamped at 0."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    x, y, z = (sample_box(space, rng, trials, radius) for _ in range(3))
    excess = space.evaluate(x + z, y + z) - space.evaluate(x, y)
    return float(max(0.0, np.max(excess)))


def _growth(per_scale: np.ndarray) -> float:
    """log2-growth per radius doubling over the upper half of the ladder."""
    top = len(per_scale) - 1
    if top == 0:
        return 0.0
    mid = top // 2
    hi = max(float(per_scale[top]), _FLOOR)
    lo = max(float(per_scale[mid]), _FLOOR)
    return math.log2(hi / lo) / (top - mid)


class _MultiplicativitySamples:
    """Cached ``(|λ|, d(x,y), d(λx,λy))`` triples over the radius ladder."""

    def __init__(self, space, seed, trials, sweep, radius, scale_exp):
        if trials < 1:
            raise ValueError("trials must be positive")
        sweep = np.asarray(sweep, dtype=float)
        if sweep.ndim != 2 or len(sweep) == 0:
            raise ValueError("lambda sweep must be a nonempty list of scalars")
        if sweep.shape[1] != space.field.width:
            raise ValueError("lambda sweep does not match the space's field")
        rng = np.random.default_rng(seed)
        per_scale = max(1, -(-trials // (scale_exp + 1)))
        abs_sweep = scalar_abs(sweep)
        lam_abs, dist, dlam, scale = [], [], [], []
        for j in range(scale_exp + 1):
            x = sample_box(space, rng, per_scale, radius * 2.0**j)
            y = sample_box(space, rng, per_scale, radius * 2.0**j)
            if len(sweep) <= MAX_LAMBDAS_PER_PAIR:
                idx = np.broadcast_to(np.arange(len(sweep)), (per_scale, len(sweep)))
            else:
                idx = rng.integers(0, len(sweep), size=(per_scale, MAX_LAMBDAS_PER_PAIR))
            lam = sweep[idx]
            lx = scale_vector(lam, x[:, None])
            ly = scale_vector(lam, y[:, None])
            d = space.evaluate(x, y)
            lam_abs.append(abs_sweep[idx].ravel())
            dist.append(np.broadcast_to(d[:, None], idx.shape).ravel())
            dlam.append(space.evaluate(lx, ly).ravel())
            scale.append(np.full(idx.size, j))
        self.lam_abs = np.concatenate(lam_abs)
        self.dist = np.concatenate(dist)
        self.dlam = np.concatenate(dlam)
        self.scale = np.concatenate(scale)
        self.scale_exp = scale_exp

    def fit(self, c1: float, ceiling: float) -> MultiplicativityFit:
        if c1 < 1:
            raise ValueError(f"c1 must be >= 1, got {c1}")
        a, d, dl = self.lam_abs, self.dist, self.dlam
        res = np.maximum(dl - c1 * a * d, a * d / c1 - dl)
        small = a <= 1.0
        c3 = float(max(0.0, np.max(res[small]))) if np.any(small) else 0.0
        need = np.where(small, 0.0, (res - c3) / np.where(small, 1.0, a))
        c2 = float(max(0.0, np.max(need)))
        slack = float(np.max(res - (c2 * a + c3)))
        while slack > 0:
            c3 += slack
            slack = float(np.max(res - (c2 * a + c3)))
        ladder = np.arange(self.scale_exp + 1)
        c2_by = np.array([max(0.0, np.max(np.where(self.scale <= j, need, 0.0))) for j in ladder])
        c3_by = np.array([
            max(0.0, np.max(np.where(small & (self.scale <= j), res, 0.0))) for j in ladder
        ])
        growth = max(_growth(c2_by), _growth(c3_by))
        divergent = c2 > ceiling or c3 > ceiling or growth > GROWTH_LIMIT
        return MultiplicativityFit(
            c1=float(c1), c2=c2, c3=c3, divergent=bool(divergent), growth=growth,
            max_residual=slack, samples=int(len(res)),
        )


def _sweep_or_default(space, lambda_sweep, quad, lambda_max_exp):
    if lambda_sweep is not None:
        return lambda_sweep
    quad = quad or unit_quadrature(space.field, 64)
    return default_lambda_sweep(quad, lambda_max_exp)


def fit_multiplicativity(space: DistanceSpace, c1: float, seed: int = 0, trials: int = 1000,
                         lambda_sweep=None, *, quad: UnitQuadrature | None = None,
                         lambda_max_exp: int = 10, radius: float = 10.0, scale_exp: int = 10,
                         ceiling: float = CEILING) -> MultiplicativityFit:
    """Minimal ``(c2, c3)`` with ``c2|λ| + c3`` above both multiplicativity residuals.

    ``c3`` absorbs the samples with ``|λ| <= 1`` and ``c2`` the rest. The fit is
    divergent when either constant exceeds ``ceiling`` or keeps growing with
    the sample radius.
    """
    sweep = _sweep_or_default(space, lambda_sweep, quad, lambda_max_exp)
    samples = _MultiplicativitySamples(space, seed, trials, sweep, radius, scale_exp)
    return samples.fit(c1, ceiling)


def fit_asymptotic(space: DistanceSpace, c1_grid=DEFAULT_C1_GRID, seed: int = 0,
                   trials: int = 1000, lambda_sweep=None, *,
                   quad: UnitQuadrature | None = None, lambda_max_exp: int = 10,
                   radius: float = 10.0, scale_exp: int = 10,
                   ceiling: float = CEILING) -> AsymptoticFit:
    if any(not c > 1 for c in c1_grid):
        raise ValueError("asymptotic grid values must be strictly greater than 1")
    sweep = _sweep_or_default(space, lambda_sweep, quad, lambda_max_exp)
    samples = _MultiplicativitySamples(space, seed, trials, sweep, radius, scale_exp)
    fits = [samples.fit(c1, ceiling) for c1 in sorted(c1_grid, reverse=True)]
    return AsymptoticFit(
        grid=[(f.c1, f.c2, f.c3) for f in fits],
        divergent=any(f.divergent for f in fits),
    )


def fit_constants(space: DistanceSpace, seed: int = 0, trials: int = 1000, lambda_sweep=None, *,
                  quad: UnitQuadrature | None = None, lambda_max_exp: int = 10,
                  radius: float = 10.0, scale_exp: int = 10, ceiling: float = CEILING,
                  c1_candidates=DEFAULT_C1_CANDIDATES) -> HypothesisConstants:
    """Fit ``(C0; C1, C2, C3)`` using the smallest candidate ``C1`` whose fit converges."""
    c0 = estimate_translation_defect(space, seed, trials, radius)
    sweep = _sweep_or_default(space, lambda_sweep, quad, lambda_max_exp)
    samples = _MultiplicativitySamples(space, seed + 1, trials, sweep, radius, scale_exp)
    fit = None
    for c1 in sorted(c1_candidates):
        fit = samples.fit(c1, ceiling)
        if not fit.divergent:
            break
    return HypothesisConstants(
        c0=c0, c1=fit.c1, c2=fit.c2, c3=fit.c3,
        samples_used=trials + fit.samples,
        max_residual=fit.max_residual,
        divergent=fit.divergent,
    )


def check_sum_condition(space: DistanceSpace, c1: float, seed: int = 0, trials: int = 1000,
                        max_n: int = 8, *, radius: float = 10.0, scale_exp: int = 4,
                        ceiling: float = CEILING) -> SumConditionFit:
    """Minimal ``C0`` with ``d(Σx_i, Σy_i) <= c1 Σ d(x_i, y_i) + n C0`` on samples."""
    if max_n < 2:
        raise ValueError("max_n must be at least 2")
    if not c1 > 1:
        raise ValueError(f"c1 must be > 1, got {c1}")
    rng = np.random.default_rng(seed)
    per_scale = max(1, -(-trials // (scale_exp + 1)))
    by_scale = []
    for j in range(scale_exp + 1):
        n = rng.integers(2, max_n + 1, size=per_scale)
        x = sample_box(space, rng, per_scale * max_n, radius * 2.0**j).reshape(
            (per_scale, max_n) + space.shape)
        y = sample_box(space, rng, per_scale * max_n, radius * 2.0**j).reshape(
            (per_scale, max_n) + space.shape)
        mask = (np.arange(max_n)[None, :] < n[:, None])[..., None, None]
        x = np.where(mask, x, 0.0)
        y = np.where(mask, y, 0.0)
        terms = np.where(mask[..., 0, 0], space.evaluate(x, y), 0.0)
        lhs = space.evaluate(x.sum(axis=1), y.sum(axis=1))
        by_scale.append(float(np.max((lhs - c1 * terms.sum(axis=1)) / n)))
    cumulative = np.maximum.accumulate(np.maximum(by_scale, 0.0))
    c0 = float(cumulative[-1])
    growth = _growth(cumulative)
    return SumConditionFit(
        c1=float(c1), c0=c0, divergent=bool(c0 > ceiling or growth > GROWTH_LIMIT),
        growth=growth, samples=per_scale * (scale_exp + 1),
    )
