"""Observables on grid measures: weak residuals, blow-ups, invariance, densities, box counts, masks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import linregress

from .exact import Subspace
from .measures import GridMeasure, VectorGridMeasure
from .operators import FirstOrderOperator, invariance_space, wave_cone_member

RESIDUAL_RADII = (0.2, 0.35, 0.5)
RESIDUAL_CENTERS = 5
MASK_DENOMINATOR = 1000


# ---------------------------------------------------------------------------
# weak form of P(D)μ = 0


@dataclass(frozen=True)
class TestFunction:
    center: tuple[float, ...]
    radius: float


def bump_family(mu: GridMeasure, seed: int = 0, radii=RESIDUAL_RADII, per_radius: int = RESIDUAL_CENTERS) -> list[TestFunction]:
    """Radial bumps (1 - |x-c|²/ρ²)³ with seeded centers, supports inside the grid.

    Radii are fractions of the half side (absolute radii on the default [-1,1]^d grid).
    """
    rng = np.random.default_rng(seed)
    half = mu.side / 2
    out = []
    for frac in radii:
        rho = frac * half
        if rho >= half:
            raise ValueError(f"test support of radius {rho} exceeds the grid")
        for _ in range(per_radius):
            c = rng.uniform(mu.lower + rho, mu.upper - rho)
            out.append(TestFunction(tuple(float(x) for x in c), float(rho)))
    return out


def _window(mu: GridMeasure, phi: TestFunction):
    """Index slices and cell-center coordinates covering the support of phi."""
    slices, coords = [], []
    for axis in range(mu.d):
        lo = max(0, int(math.floor((phi.center[axis] - phi.radius - mu.lower[axis]) / mu.h)))
        hi = min(mu.n, int(math.ceil((phi.center[axis] + phi.radius - mu.lower[axis]) / mu.h)) + 1)
        slices.append(slice(lo, hi))
        coords.append(mu.lower[axis] + (np.arange(lo, hi) + 0.5) * mu.h - phi.center[axis])
    return tuple(slices), coords


def pairing_vector(op: FirstOrderOperator, mu: VectorGridMeasure, phi: TestFunction) -> np.ndarray:
    """Σ_cells [Σ_i ∂_iφ(c) P_i − φ(c) P_0] μ(c), an element of F."""
    base = mu.base
    if base.d != op.d or mu.dim_e != op.dim_e:
        raise ValueError("measure and operator dimensions disagree")
    slices, coords = _window(base, phi)
    grids = np.meshgrid(*coords, indexing="ij", sparse=True)
    r2 = sum(g * g for g in grids) / phi.radius**2
    inside = r2 < 1.0
    s = np.where(inside, 1.0 - r2, 0.0)
    value = s**3
    dfac = -6.0 * s**2 / phi.radius**2
    mass = base.mass[slices]
    # moments Σ m φ and Σ m ∂_iφ, then apply the polar field
    weights = [mass * value] + [mass * dfac * g for g in grids]
    const = mu.constant_polar
    if const is not None:
        moments = [const * float(w.sum()) for w in weights]
    else:
        pol = mu.polar[slices]
        moments = [np.tensordot(w, pol, axes=(tuple(range(base.d)), tuple(range(base.d)))) for w in weights]
    p = [np.array([[float(x) for x in row] for row in m]) for m in op.p]
    p0 = np.array([[float(x) for x in row] for row in op.p0])
    out = -p0 @ moments[0]
    for i in range(op.d):
        out = out + p[i] @ moments[i + 1]
    return out


def weak_residual(op: FirstOrderOperator, mu: VectorGridMeasure, seed: int = 0, family: list[TestFunction] | None = None) -> float:
    """max over the bump family of |<P(D)μ, φ>| (integration-by-parts sign convention)."""
    return max(r for _, r in residual_profile(op, mu, seed, family))


def residual_profile(op, mu: VectorGridMeasure, seed: int = 0, family=None) -> list[tuple[TestFunction, float]]:
    family = bump_family(mu.base, seed) if family is None else family
    return [(phi, float(np.linalg.norm(pairing_vector(op, mu, phi)))) for phi in family]


# ---------------------------------------------------------------------------
# blow-ups


@dataclass(frozen=True, eq=False)
class BlowupResult:
    center: tuple[float, ...]
    radius: float
    measure: GridMeasure
    source_mass: float  # |μ|(cube of half-side r around x), fractional cells included
    remapped_mass: float  # total after resampling, before ball restriction


def _remap_matrix(lower: float, h: float, n: int, x: float, r: float, n_out: int) -> tuple[np.ndarray, slice]:
    """W[j, k]: fraction of source cell k landing in target cell j under y ↦ (y - x)/r."""
    lo = max(0, int(math.floor((x - r - lower) / h)))
    hi = min(n, int(math.ceil((x + r - lower) / h)))
    src_lo = (lower + np.arange(lo, hi) * h - x) / r
    src_hi = src_lo + h / r
    tgt = -1.0 + np.arange(n_out + 1) * (2.0 / n_out)
    overlap = np.minimum(src_hi[None, :], tgt[1:, None]) - np.maximum(src_lo[None, :], tgt[:-1, None])
    return np.clip(overlap, 0.0, None) / (h / r), slice(lo, hi)


def blowup(mu: GridMeasure, x, r: float, n_out: int | None = None) -> BlowupResult:
    """Normalised push-forward of μ under y ↦ (y - x)/r, restricted to the closed unit ball.

    Resampling onto the target grid on [-1, 1]^d is conservative: each source
    cell's mass is split by overlap fraction.  Target cells count as inside the
    ball when their center is.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (mu.d,):
        raise ValueError("center has the wrong dimension")
    if r <= 0:
        raise ValueError("radius must be positive")
    if np.any(x - r < mu.lower - 1e-12) or np.any(x + r > mu.upper + 1e-12):
        raise ValueError("ball exceeds the grid domain")
    if n_out is None:
        n_out = int(min(mu.n, max(2, round(2 * r / mu.h))))
    out = mu.mass
    slices = []
    mats = []
    for axis in range(mu.d):
        w, sl = _remap_matrix(mu.lower[axis], mu.h, mu.n, float(x[axis]), r, n_out)
        mats.append(w)
        slices.append(sl)
    out = mu.mass[tuple(slices)]
    for axis in range(mu.d):
        # contract the leading source axis; target axes accumulate at the back
        out = np.tensordot(out, mats[axis], axes=([0], [1]))
    remapped = float(out.sum())
    centers = -1.0 + (np.arange(n_out) + 0.5) * (2.0 / n_out)
    grids = np.meshgrid(*[centers] * mu.d, indexing="ij", sparse=True)
    ball = sum(g * g for g in grids) <= 1.0
    out = np.where(ball, out, 0.0)
    inside = out.sum()
    if inside <= 0:
        raise ValueError("zero mass in the ball")
    measure = GridMeasure(mu.d, n_out, 2.0 / n_out, out / inside)
    source = mu.box_mass(x - r, x + r)
    return BlowupResult(tuple(float(v) for v in x), float(r), measure, source, remapped)


def l1_distance(a: GridMeasure, b: GridMeasure) -> float:
    if a.mass.shape != b.mass.shape:
        raise ValueError("grids differ")
    return float(np.abs(a.mass - b.mass).sum())


# ---------------------------------------------------------------------------
# invariance


def _shift_overlap(mass: np.ndarray, shift) -> tuple[np.ndarray, np.ndarray]:
    """Arrays A[x] and A[x + shift] over the indices where both are defined."""
    a_sl, b_sl = [], []
    for s, n in zip(shift, mass.shape):
        s = int(s)
        if abs(s) >= n:
            return np.zeros(0), np.zeros(0)
        a_sl.append(slice(max(0, -s), n - max(0, s)))
        b_sl.append(slice(max(0, s), n - max(0, -s)))
    return mass[tuple(a_sl)], mass[tuple(b_sl)]


def translation_defect(mu: GridMeasure, shift) -> float:
    """L¹ distance between the unit-normalised overlap restrictions of μ and its shift."""
    a, b = _shift_overlap(mu.mass, shift)
    sa, sb = a.sum(), b.sum()
    if sa == 0 and sb == 0:
        return 0.0
    if sa == 0 or sb == 0:
        return 2.0
    return float(np.abs(a / sa - b / sb).sum())


def lattice_translations(mu: GridMeasure, space: Subspace, seed: int = 0, extra: int = 4) -> list[tuple[int, ...]]:
    """Seeded grid translations (in cells) inside ``space`` with length at most a quarter side."""
    if space.dim == 0:
        return []
    basis = [np.array(b) for b in space.integer_lattice()]
    rng = np.random.default_rng(seed)
    dirs = list(basis)
    for _ in range(extra if space.dim > 1 else 0):
        c = rng.integers(-1, 2, size=len(basis))
        if np.any(c):
            dirs.append(sum(ci * b for ci, b in zip(c, basis)))
    limit = 0.25 * mu.n
    shifts = []
    for v in dirs:
        norm = float(np.linalg.norm(v))
        kmax = int(limit // norm) if norm else 0
        for k in sorted({1, kmax} if kmax >= 1 else set()):
            s = tuple(int(k * x) for x in v)
            if s not in shifts:
                shifts.append(s)
    return shifts


def invariance_defect(mu: GridMeasure, space: Subspace, seed: int = 0) -> float:
    """Largest translation defect over seeded grid translations in ``space`` (0 = invariant)."""
    if space.dim < 1:
        raise ValueError("invariance is tested against a subspace of positive dimension")
    if space.ambient_dim != mu.d:
        raise ValueError("subspace lives in the wrong dimension")
    return max((translation_defect(mu, s) for s in lattice_translations(mu, space, seed)), default=0.0)


def candidate_directions(d: int, height: int = 2) -> list[tuple[int, ...]]:
    """Primitive integer directions with entries in [-height, height], shortest first."""
    out = []
    for v in itertools.product(range(-height, height + 1), repeat=d):
        nz = [x for x in v if x]
        if not nz or nz[0] < 0 or math.gcd(*map(abs, nz)) != 1:
            continue
        out.append(v)
    return sorted(out, key=lambda v: (sum(x * x for x in v), v))


def detect_invariance(mu: GridMeasure, tol: float = 0.05, seed: int = 0) -> Subspace:
    """Greedy largest span of candidate directions under which μ stays invariant to ``tol``.

    A direction can only belong to an invariant span if it is invariant on its
    own, so single directions are screened first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    chosen: list[tuple[int, ...]] = []
    span = Subspace.zero(mu.d)
    for v in candidate_directions(mu.d):
        if span.dim == mu.d:
            break
        if span.contains(v):
            continue
        if invariance_defect(mu, Subspace.span(mu.d, [v]), seed) > tol:
            continue
        trial = Subspace.span(mu.d, chosen + [v])
        if invariance_defect(mu, trial, seed) <= tol:
            chosen.append(v)
            span = trial
    return span


# ---------------------------------------------------------------------------
# densities and box counting


def upper_density(mu: GridMeasure, x, kappa: float, radii) -> list[tuple[float, float]]:
    """Ratios μ(Q_r(x)) / r^κ, Q_r(x) the cube of side 2r centered at x."""
    x = np.asarray(x, dtype=float)
    if np.any(x < mu.lower) or np.any(x > mu.upper):
        raise ValueError("x lies outside the grid")
    if not 0 <= kappa <= mu.d:
        raise ValueError(f"kappa must lie in [0, {mu.d}]")
    out = []
    for r in radii:
        if r <= 0 or np.any(x - r < mu.lower - 1e-12) or np.any(x + r > mu.upper + 1e-12):
            raise ValueError(f"radius {r} leaves the grid")
        out.append((float(r), mu.box_mass(x - r, x + r) / r**kappa))
    return out


@dataclass
class BoxDimension:
    estimate: float | None
    r2: float | None
    counts: list[dict] = field(default_factory=list)
    degenerate: bool = False
    mass_threshold: float = 0.5

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "r2": self.r2,
            "degenerate": self.degenerate,
            "mass_threshold": self.mass_threshold,
            "counts": self.counts,
        }


def dyadic_box_sizes(n: int) -> list[int]:
    """Box sizes 2^s (in cells) that tile the grid, excluding the whole grid."""
    sizes, b = [], 1
    while b < n and n % b == 0:
        sizes.append(b)
        b *= 2
    return sizes


def box_dimension(mu: GridMeasure, scales: int = 8, mass_threshold: float = 0.5) -> BoxDimension:
    """Least-squares slope of log N(ε) against log(1/ε) over the finest dyadic scales.

    N(ε) counts boxes carrying at least ``mass_threshold`` times the uniform
    share of the total mass at that scale.
    """
    if not 0 < mass_threshold < 1:
        raise ValueError("mass_threshold must lie in (0, 1)")
    sizes = dyadic_box_sizes(mu.n)[:scales]
    if scales < 4 or len(sizes) < 4:
        raise ValueError("grid too coarse for requested scales")
    total = mu.total
    if total <= 0:
        raise ValueError("box counting needs positive mass")
    counts = []
    for b in sizes:
        k = mu.n // b
        shape = []
        for _ in range(mu.d):
            shape += [k, b]
        blocks = mu.mass.reshape(shape).sum(axis=tuple(range(1, 2 * mu.d, 2)))
        share = total / k**mu.d
        counts.append({"box_cells": b, "eps": b * mu.h, "count": int((blocks >= mass_threshold * share).sum())})
    ns = np.array([c["count"] for c in counts], dtype=float)
    if np.all(ns == ns[0]):
        return BoxDimension(0.0, None, counts, True, mass_threshold)
    fit = linregress(np.log(1.0 / np.array([c["eps"] for c in counts])), np.log(ns))
    return BoxDimension(float(fit.slope), float(fit.rvalue**2), counts, False, mass_threshold)


# ---------------------------------------------------------------------------
# pointwise algebra on the polar field


def _unique_polars(mu: VectorGridMeasure):
    supported = mu.base.mass > 0
    const = mu.constant_polar
    if const is not None:
        return [const], np.where(supported, 0, -1)
    flat = mu.polar[supported]
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    labels = np.full(mu.base.mass.shape, -1)
    labels[supported] = inverse.reshape(-1)
    return list(uniq), labels


def rationalize(v, max_den: int = MASK_DENOMINATOR) -> tuple[Fraction, ...]:
    return tuple(Fraction(float(x)).limit_denominator(max_den) for x in v)


def wave_cone_mask(op: FirstOrderOperator, mu: VectorGridMeasure) -> np.ndarray:
    """True on supported cells whose (rationalised) polar lies outside the wave cone."""
    polars, labels = _unique_polars(mu)
    outside = np.array([not wave_cone_member(op, rationalize(p)).member for p in polars] + [False])
    return outside[labels]


def pointwise_invariance_dim(op: FirstOrderOperator, mu: VectorGridMeasure) -> np.ndarray:
    """dim of the invariance space at each supported cell's polar; -1 off the support."""
    polars, labels = _unique_polars(mu)
    dims = np.array([invariance_space(op, rationalize(p)).dim for p in polars] + [-1])
    return dims[labels]
