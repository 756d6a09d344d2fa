"""Grid measures: cell-mass arrays on a cube, optionally with a polar field.

The grid has ``n`` cells of width ``h`` per axis on the cube
``origin + [-n h/2, n h/2]^d``; cell ``i`` along an axis spans
``[lo + i h, lo + (i+1) h)``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exact import Subspace
from .operators import FirstOrderOperator


@dataclass(frozen=True, eq=False)
class GridMeasure:
    d: int
    n: int
    h: float
    mass: np.ndarray
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=np.float64)
        if mass.shape != (self.n,) * self.d:
            raise ValueError(f"mass has shape {mass.shape}, expected {(self.n,) * self.d}")
        if self.h <= 0:
            raise ValueError("cell width must be positive")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise ValueError("masses must be finite and nonnegative")
        origin = tuple(float(x) for x in (self.origin or (0.0,) * self.d))
        if len(origin) != self.d:
            raise ValueError("origin has the wrong length")
        mass.flags.writeable = False
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "origin", origin)

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin) - self.side / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + self.side / 2

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def centers(self, axis: int) -> np.ndarray:
        return self.lower[axis] + (np.arange(self.n) + 0.5) * self.h

    def cell_of(self, x) -> tuple[int, ...]:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower) or np.any(x > self.upper):
            raise ValueError(f"point {x.tolist()} lies outside the grid")
        idx = np.minimum(np.floor((x - self.lower) / self.h).astype(int), self.n - 1)
        return tuple(int(i) for i in idx)

    def restricted(self, keep: np.ndarray) -> "GridMeasure":
        return GridMeasure(self.d, self.n, self.h, np.where(keep, self.mass, 0.0), self.origin)

    def box_mass(self, lo, hi) -> float:
        """Mass of the box [lo, hi]: full cells plus boundary cells by volume fraction."""
        out = self.mass
        for axis in range(self.d - 1, -1, -1):
            w = _overlap_fractions(self.lower[axis], self.h, self.n, float(lo[axis]), float(hi[axis]))
            out = np.tensordot(out, w, axes=([axis], [0]))
        return float(out)


def _overlap_fractions(lower: float, h: float, n: int, a: float, b: float) -> np.ndarray:
    edges = lower + np.arange(n + 1) * h
    return np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None) / h


@dataclass(frozen=True, eq=False)
class VectorGridMeasure:
    """E-valued grid measure μ = polar · |μ| with |polar| = 1 on supported cells."""

    base: GridMeasure
    polar: np.ndarray

    def __post_init__(self):
        polar = np.asarray(self.polar, dtype=np.float64)
        lead = (self.base.n,) * self.base.d
        if polar.shape[:-1] != lead or polar.ndim != self.base.d + 1:
            raise ValueError(f"polar has shape {polar.shape}, expected {lead} + (dimE,)")
        supported = self.base.mass > 0
        if self.constant_polar is not None:
            norms = np.array([np.linalg.norm(self.constant_polar)])
        else:
            norms = np.linalg.norm(polar[supported], axis=-1)
        if norms.size and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("polar vectors must have unit norm on supported cells")
        if polar.flags.writeable:
            polar.flags.writeable = False
        object.__setattr__(self, "polar", polar)

    @property
    def dim_e(self) -> int:
        return self.polar.shape[-1]

    @property
    def constant_polar(self) -> np.ndarray | None:
        """The polar vector if it is a broadcast constant, else None."""
        p = np.asarray(self.polar)
        if all(s == 0 for s in p.strides[:-1]):
            return p[(0,) * (p.ndim - 1)]
        return None

    @classmethod
    def constant(cls, base: GridMeasure, e) -> "VectorGridMeasure":
        e = np.asarray(e, dtype=np.float64)
        e = e / np.linalg.norm(e)
        return cls(base, np.broadcast_to(e, base.mass.shape + e.shape))

    def values(self) -> np.ndarray:
        """μ(cell) = polar(cell) · mass(cell)."""
        return self.polar * self.base.mass[..., None]


# ---------------------------------------------------------------------------
# plane measures


def plane_measure(space: Subspace, n: int, h: float | None = None, origin=None) -> GridMeasure:
    """Discretised H^ℓ restricted to ``space`` (through the grid origin).

    Samples sit on the lattice (h/q)·L with L = space ∩ Z^d and q chosen so
    that consecutive samples are at most h/2 apart; each carries the lattice
    covolume as weight.  Sample coordinates are integers in units of h/q, so
    cell assignment is exact and any translation by a grid vector of ``space``
    maps the sample set onto itself.
    """
    d = space.ambient_dim
    h = 2.0 / n if h is None else float(h)
    ell = space.dim
    if ell == 0:
        raise ValueError("plane_measure needs a subspace of positive dimension")
    if ell == d:
        return GridMeasure(d, n, h, np.full((n,) * d, h**d), origin)
    lat = np.array(space.integer_lattice(), dtype=np.int64)  # ell x d
    q = max(2, math.ceil(2 * float(np.linalg.norm(lat, axis=1).max())))
    covolume = math.sqrt(float(np.linalg.det(lat @ lat.T.astype(float)))) * (h / q) ** ell

    # integer sample coordinates u with u/q*h inside the cube: -nq/2 <= u < nq/2
    half = n * q / 2
    pinv = np.linalg.pinv(lat.T.astype(float))  # coefficients from points
    corners = np.array(np.meshgrid(*[[-half, half]] * d, indexing="ij")).reshape(d, -1)
    bound = np.ceil(np.abs(pinv @ corners).max(axis=1)).astype(int) + 1
    mass = np.zeros((n,) * d)
    flat = mass.reshape(-1)
    strides = n ** np.arange(d - 1, -1, -1)
    ranges = [np.arange(-b, b + 1) for b in bound]
    if ell == 1:
        blocks = [ranges[0][None, :]]
    else:
        rest = np.array(np.meshgrid(*ranges[1:], indexing="ij")).reshape(ell - 1, -1)
        blocks = (np.vstack([np.full(rest.shape[1], c0), rest]) for c0 in ranges[0])
    for coefs in blocks:
        u = lat.T @ coefs  # d x samples, integer
        twice = 2 * u + n * q
        inside = np.all((twice >= 0) & (twice < 2 * n * q), axis=0)
        if not inside.any():
            continue
        cells = twice[:, inside] // (2 * q)
        np.add.at(flat, strides @ cells, covolume)
    return GridMeasure(d, n, h, mass, origin)


def sharp_measure(op: FirstOrderOperator, cert, n: int, h: float | None = None) -> VectorGridMeasure:
    """e · H^ℓ restricted to the invariance space of the certificate's witness."""
    witness = np.array([float(x) for x in cert.witness])
    if not np.any(witness):
        raise ValueError("certificate witness is zero")
    h = 2.0 / n if h is None else float(h)
    space = cert.invariance_space
    if space.ambient_dim != op.d:
        raise ValueError("certificate does not belong to this operator")
    if space.dim == 0:
        warnings.warn("ℓ = 0: returning a single-cell (Dirac-type) measure at the origin", stacklevel=2)
        mass = np.zeros((n,) * op.d)
        mass[(n // 2,) * op.d] = 1.0
        base = GridMeasure(op.d, n, h, mass)
    else:
        base = plane_measure(space, n, h)
    return VectorGridMeasure.constant(base, witness)


# ---------------------------------------------------------------------------
# files


def _header(mu: GridMeasure, **extra) -> dict:
    return {"d": mu.d, "n": mu.n, "h": mu.h, "origin": list(mu.origin), "dtype": "f64le", **extra}


def save_measure(mu: GridMeasure | VectorGridMeasure, directory) -> Path:
    """Write header.json plus raw little-endian binary64 arrays in C order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = mu.base if isinstance(mu, VectorGridMeasure) else mu
    extra = {"dimE": mu.dim_e} if isinstance(mu, VectorGridMeasure) else {}
    (directory / "header.json").write_text(json.dumps(_header(base, **extra), indent=1))
    base.mass.astype("<f8").tofile(directory / "mass.f64")
    if isinstance(mu, VectorGridMeasure):
        np.ascontiguousarray(mu.polar, dtype="<f8").tofile(directory / "polar.f64")
    return directory


def load_measure(directory) -> GridMeasure | VectorGridMeasure:
    directory = Path(directory)
    header = json.loads((directory / "header.json").read_text())
    for key in ("d", "n", "h", "dtype"):
        if key not in header:
            raise ValueError(f"measure header lacks field '{key}'")
    if header["dtype"] != "f64le":
        raise ValueError(f"unsupported dtype {header['dtype']!r}")
    d, n = int(header["d"]), int(header["n"])
    mass = np.fromfile(directory / "mass.f64", dtype="<f8")
    if mass.size != n**d:
        raise ValueError(f"mass.f64 holds {mass.size} values, expected {n**d}")
    base = GridMeasure(d, n, float(header["h"]), mass.reshape((n,) * d), tuple(header.get("origin") or [0.0] * d))
    if "dimE" not in header:
        return base
    dim_e = int(header["dimE"])
    polar = np.fromfile(directory / "polar.f64", dtype="<f8")
    if polar.size != n**d * dim_e:
        raise ValueError(f"polar.f64 holds {polar.size} values, expected {n**d * dim_e}")
    polar = polar.reshape((n,) * d + (dim_e,))
    flat = polar.reshape(-1, dim_e)
    if np.all(flat == flat[0]):
        return VectorGridMeasure(base, np.broadcast_to(flat[0], polar.shape))
    return VectorGridMeasure(base, polar)
