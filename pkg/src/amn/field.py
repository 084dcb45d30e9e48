"""Scalar arithmetic over R, C, H and quadrature rules for the unit group.

Scalars are real arrays whose last axis holds the 1, 2 or 4 real
coordinates of the element (quaternions as ``(w, i, j, k)``). A vector over a
field is an array of shape ``(dim, width)``; leading axes batch.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

__all__ = [
    "Field",
    "UnitQuadrature",
    "mul",
    "scalar_abs",
    "scalar_mul",
    "scale_vector",
    "unit_quadrature",
]


class Field(enum.Enum):
    REAL = "R"
    COMPLEX = "C"
    QUATERNION = "H"

    @property
    def width(self) -> int:
        return {"R": 1, "C": 2, "H": 4}[self.value]

    @classmethod
    def parse(cls, text: str) -> "Field":
        try:
            return cls(text.upper())
        except ValueError:
            raise ValueError(f"unknown field {text!r}; expected R, C or H") from None

    @classmethod
    def from_width(cls, width: int) -> "Field":
        for f in cls:
            if f.width == width:
                return f
        raise ValueError(f"no scalar field has {width} real coordinates")


def _hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ai, aj, ak = np.moveaxis(a, -1, 0)
    bw, bi, bj, bk = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ai * bi - aj * bj - ak * bk,
            aw * bi + ai * bw + aj * bk - ak * bj,
            aw * bj - ai * bk + aj * bw + ak * bi,
            aw * bk + ai * bj - aj * bi + ak * bw,
        ],
        axis=-1,
    )


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting field product ``a * b`` along the last axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(
            f"field mismatch: operands have {a.shape[-1]} and {b.shape[-1]} coordinates"
        )
    width = a.shape[-1]
    if width == 1:
        return a * b
    if width == 2:
        ar, ai = a[..., 0], a[..., 1]
        br, bi = b[..., 0], b[..., 1]
        return np.stack([ar * br - ai * bi, ar * bi + ai * br], axis=-1)
    if width == 4:
        return _hamilton(a, b)
    raise ValueError(f"no scalar field has {width} real coordinates")


def scalar_mul(a, b) -> np.ndarray:
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("scalar_mul expects single scalars")
    return mul(a, b)


def scalar_abs(a) -> np.ndarray | float:
    """Absolute value: Euclidean length of the real coordinates."""
    a = np.asarray(a, dtype=float)
    out = np.sqrt(np.sum(a * a, axis=-1))
    return float(out) if out.ndim == 0 else out


def scale_vector(a, x) -> np.ndarray:
    """Left scalar multiplication ``a x`` applied coordinatewise.

    ``a`` has shape ``(..., width)`` and ``x`` shape ``(..., dim, width)``.
    """
    a = np.asarray(a, dtype=float)
    return mul(a[..., None, :], x)


@dataclass(frozen=True, eq=False)
class UnitQuadrature:
    """Weighted node set approximating normalized Haar measure on the unit group."""

    field: Field
    nodes: np.ndarray
    weights: np.ndarray
    resolution: int

    def __len__(self) -> int:
        return len(self.weights)

    def average(self, f) -> float:
        """Weighted sum of ``f(u)`` over the nodes; ``f`` maps ``(N, width)`` to ``(N,)``."""
        return float(np.dot(self.weights, f(self.nodes)))


def _binary_tetrahedral() -> np.ndarray:
    units = []
    for axis in range(4):
        for sign in (1.0, -1.0):
            q = np.zeros(4)
            q[axis] = sign
            units.append(q)
    for signs in itertools.product((0.5, -0.5), repeat=4):
        units.append(np.array(signs))
    return np.array(units)


def _sphere3_points(count: int, seed: int) -> np.ndarray:
    # Sobol points pushed to S^3 by the volume-preserving Hopf-style map.
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    u = sampler.random_base2(max(0, (count - 1).bit_length()))[:count]
    r1 = np.sqrt(1.0 - u[:, 0])
    r2 = np.sqrt(u[:, 0])
    t1 = 2.0 * math.pi * u[:, 1]
    t2 = 2.0 * math.pi * u[:, 2]
    q = np.stack([r2 * np.cos(t2), r1 * np.sin(t1), r1 * np.cos(t1), r2 * np.sin(t2)], axis=1)
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def unit_quadrature(field: Field, resolution: int, seed: int = 0) -> UnitQuadrature:
    """Build a quadrature rule on the unit group of ``field``.

    REAL uses the exact two-point rule on {+1, -1}. COMPLEX uses the
    ``resolution`` roots of unity, exact for trigonometric polynomials of
    degree below ``resolution``. QUATERNION uses the 24 units of the binary
    tetrahedral group, topped up with scrambled Sobol points on S^3 when
    ``resolution`` exceeds 24; all nodes carry equal weight.
    """
    if int(resolution) != resolution or resolution < 1:
        raise ValueError(f"resolution must be a positive integer, got {resolution!r}")
    resolution = int(resolution)
    if field is Field.REAL:
        nodes = np.array([[1.0], [-1.0]])
    elif field is Field.COMPLEX:
        theta = 2.0 * math.pi * np.arange(resolution) / resolution
        nodes = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        # exact values at the axis points keep {1, i, -1, -i} free of rounding
        for k in range(resolution):
            if (4 * k) % resolution == 0:
                quarter = (4 * k) // resolution
                nodes[k] = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][quarter]
    else:
        nodes = _binary_tetrahedral()
        if resolution > len(nodes):
            extra = _sphere3_points(resolution - len(nodes), seed)
            nodes = np.vstack([nodes, extra])
    weights = np.full(len(nodes), 1.0 / len(nodes))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return UnitQuadrature(field=field, nodes=nodes, weights=weights, resolution=resolution)
