"""Minimal rank of the symbol pencil e ↦ M(e): the dimension invariant ℓ.

``ell`` searches for witnesses (structured candidates, optional exhaustive
lattice, numerical descent) and certifies each by exact rational rank.
``ell_bruteforce_oracle`` is an independent exhaustive check over a lattice,
using fraction-free integer elimination instead of anything ``ell`` uses.
"""

from __future__ import annotations

import logging
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np
from scipy.optimize import minimize

from .exact import Subspace, Vector, as_vector, format_fraction, nullspace, primitive_integer, rank
from .exterior import random_multivector
from .operators import FirstOrderOperator, principal_symbol, symbol_matrix

log = logging.getLogger(__name__)

LATTICE_LIMIT = 10**7
CERTIFIED = "certified-upper-bound"
LATTICE = "lattice-exhausted"
ANALYTIC = "analytic"


@dataclass(frozen=True)
class EllConfig:
    lattice_height: int | None = None
    random_samples: int = 16
    descent_restarts: int = 4
    seed: int = 0
    descent_tol: float = 1e-10
    max_denominator: int = 10_000
    # stop searching once a gallery operator's proven lower bound is attained
    stop_at_analytic: bool = True


@dataclass(frozen=True)
class EllCertificate:
    value: int
    witness: Vector
    invariance_space: Subspace
    mode: str
    search_log: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "witness": [format_fraction(x) for x in self.witness],
            "invariance_space": self.invariance_space.to_json(),
            "mode": self.mode,
            "search_log": self.search_log,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EllCertificate":
        return cls(
            int(data["value"]),
            as_vector(data["witness"]),
            Subspace.from_json(data["invariance_space"]),
            str(data["mode"]),
            dict(data.get("search_log", {})),
        )

    def verify(self, op: FirstOrderOperator) -> None:
        """Raise if the witness does not realise the claimed value exactly."""
        sm = symbol_matrix(op, self.witness)
        if sm.rank != self.value:
            raise ValueError(f"witness has rank {sm.rank}, certificate claims {self.value}")
        if Subspace(op.d, sm.m) != self.invariance_space:
            raise ValueError("invariance space is not the row space of M(witness)")


# ---------------------------------------------------------------------------
# integer tensors


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def integer_symbol_tensor(op: FirstOrderOperator) -> np.ndarray:
    """Integer array T[f, e, i] proportional to (P_i)_{fe}; rank of M is unchanged by the scale."""
    den = 1
    for mat in op.p:
        for row in mat:
            for x in row:
                den = _lcm(den, x.denominator)
    vals = [[[int(op.p[i][f][j] * den) for i in range(op.d)] for j in range(op.dim_e)] for f in range(op.dim_f)]
    t = np.array(vals, dtype=object)
    if max((abs(int(v)) for v in t.flat), default=0) >= 2**40:
        raise OverflowError("operator coefficients too large for the lattice search")
    return t.astype(np.int64)


def lattice_size(op: FirstOrderOperator, height: int) -> int:
    return (2 * height + 1) ** op.dim_e


def projective_lattice(dim: int, height: int, chunk: int = 1 << 16):
    """Yield chunks of the lattice {-H..H}^dim \\ {0} with first nonzero entry positive, in lex order."""
    base = 2 * height + 1
    total = base**dim
    weights = base ** np.arange(dim - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (idx[:, None] // weights[None, :]) % base - height
        nz = digits != 0
        has = nz.any(axis=1)
        first = np.where(has, nz.argmax(axis=1), 0)
        keep = has & (digits[np.arange(len(idx)), first] > 0)
        if keep.any():
            yield digits[keep]


def _batch_symbols(t: np.ndarray, es: np.ndarray) -> np.ndarray:
    """M(e) for a batch of integer e: shape (batch, dimF, d)."""
    return np.einsum("fed,be->bfd", t, es)


# ---------------------------------------------------------------------------
# float rank with a rigorous gap for integer matrices


def _integer_batch_ranks_svd(mats: np.ndarray) -> np.ndarray:
    """Exact ranks of small integer matrices from singular values.

    For an integer matrix of rank r the product of its r nonzero singular
    values is at least 1, so σ_r >= σ_1^{-(r-1)}.  Any singular value above
    half of that bound is a true nonzero; rounding errors are far smaller.
    """
    k = min(mats.shape[1], mats.shape[2])
    sv = np.linalg.svd(mats.astype(np.float64), compute_uv=False)
    s1 = np.maximum(sv[:, :1], 1.0)
    gap = 0.5 * s1 ** (-(k - 1))
    noise = 64 * np.finfo(np.float64).eps * s1 * max(mats.shape[1:])
    if np.any(gap <= 1e3 * noise):
        raise ArithmeticError("singular value gap not resolvable in binary64")
    return (sv > gap).sum(axis=1)


# ---------------------------------------------------------------------------
# fraction-free elimination (oracle route)


@numba.njit(cache=True)
def _bareiss_rank(a: np.ndarray) -> int:
    """Exact rank of an int64 matrix, destroyed in place.

    Every intermediate entry is a minor of the input, so the arithmetic is
    exact provided the squared Hadamard bound fits in int64.
    """
    rows, cols = a.shape
    r = 0
    prev = 1
    for c in range(cols):
        if r == rows:
            break
        piv = -1
        for i in range(r, rows):
            if a[i, c] != 0:
                piv = i
                break
        if piv < 0:
            continue
        if piv != r:
            for j in range(cols):
                tmp = a[r, j]
                a[r, j] = a[piv, j]
                a[piv, j] = tmp
        p = a[r, c]
        for i in range(r + 1, rows):
            f = a[i, c]
            for j in range(c, cols):
                a[i, j] = (p * a[i, j] - f * a[r, j]) // prev
        prev = p
        r += 1
    return r


@numba.njit(cache=True)
def _lattice_min_rank(t: np.ndarray, height: int, floor: int) -> int:
    """Minimum of rank M(e) over the projective lattice; stops early at ``floor``."""
    n_f, n_e, d = t.shape
    base = 2 * height + 1
    total = base**n_e
    transpose = n_f > d
    best = min(n_f, d)
    digits = np.empty(n_e, dtype=np.int64)
    m = np.empty((d, n_f) if transpose else (n_f, d), dtype=np.int64)
    for idx in range(total):
        rem = idx
        for k in range(n_e - 1, -1, -1):
            digits[k] = rem % base - height
            rem //= base
        first = 0
        for k in range(n_e):
            if digits[k] != 0:
                first = digits[k]
                break
        if first <= 0:
            continue
        for f in range(n_f):
            for i in range(d):
                acc = 0
                for k in range(n_e):
                    acc += t[f, k, i] * digits[k]
                if transpose:
                    m[i, f] = acc
                else:
                    m[f, i] = acc
        rk = _bareiss_rank(m)
        if rk < best:
            best = rk
            if best <= floor:
                break
    return best


def _hadamard_ok(t: np.ndarray, height: int) -> bool:
    n_f, _, d = t.shape
    k = min(n_f, d)
    entry = height * np.abs(t).sum(axis=1).max()
    return (float(entry) * math.sqrt(k)) ** (2 * k) < 2.0**62


def ell_bruteforce_oracle(op: FirstOrderOperator, height: int) -> int:
    """min rank M(e) over the full projective lattice of the given height.

    Ranks come from fraction-free integer elimination; nothing here shares
    code with the float-based lattice phase of ``ell``.
    """
    if height < 1:
        raise ValueError("height must be >= 1")
    if lattice_size(op, height) > LATTICE_LIMIT:
        raise ValueError(f"lattice too large: (2H+1)^dimE = {lattice_size(op, height)} > {LATTICE_LIMIT}")
    t = integer_symbol_tensor(op)
    if _hadamard_ok(t, height):
        return int(_lattice_min_rank(np.ascontiguousarray(t), height, 0))
    best = min(op.dim_f, op.d)
    for es in projective_lattice(op.dim_e, height):
        for e in es:
            m = [[Fraction(int(x)) for x in row] for row in np.einsum("fed,e->fd", t, e)]
            best = min(best, rank(m))
    return best


# ---------------------------------------------------------------------------
# search


def _structured_candidates(op: FirstOrderOperator, rng: random.Random, samples: int):
    n = op.dim_e
    for j in range(n):
        yield tuple(Fraction(int(i == j)) for i in range(n)), "coordinate"
    kind = op.structure[0] if op.structure else None
    if kind == "tensor":
        rows, cols = op.structure[1]

        def rvec(k):
            return [Fraction(rng.randint(-3, 3)) for _ in range(k)]

        for s in range(samples):
            a, b = rvec(rows), rvec(cols)
            if s % 3 == 1:
                a = [Fraction(int(i == s % rows)) for i in range(rows)]
            elif s % 3 == 2:
                b = [Fraction(int(i == s % cols)) for i in range(cols)]
            e = tuple(x * y for x in a for y in b)
            if any(e):
                yield e, "rank-one"
    elif kind == "exterior":
        d, m, variance = op.structure[1]
        for _ in range(samples):
            if m == 0:
                break
            v = random_multivector(rng, d, m, variance, simple=True)
            yield v.coords(), "simple"
    else:
        for _ in range(samples):
            e = [Fraction(0)] * n
            for _ in range(rng.randint(1, 2)):
                e[rng.randrange(n)] = Fraction(rng.randint(-2, 2))
            if any(e):
                yield tuple(e), "sparse"


def _float_symbols(op: FirstOrderOperator) -> np.ndarray:
    return np.array([[[float(op.p[i][f][j]) for i in range(op.d)] for j in range(op.dim_e)] for f in range(op.dim_f)])


def _rationalize(x: np.ndarray, max_den: int) -> tuple[Fraction, ...]:
    scale = np.abs(x).max()
    if scale == 0:
        return tuple(Fraction(0) for _ in x)
    return tuple(Fraction(float(v / scale)).limit_denominator(max_den) for v in x)


def _exact_from_kernel(op: FirstOrderOperator, e_num: np.ndarray, t: np.ndarray, target: int, max_den: int):
    """Recover an exact e from the numerical kernel of M(e_num).

    The (d - target) smallest right singular vectors span the numerical kernel;
    once rationalised, {e : ℙ(ξ) e = 0 for those ξ} is an exact linear system.
    """
    m = np.einsum("fed,e->fd", t, e_num)
    _, _, vt = np.linalg.svd(m)
    k = op.d - target
    if k <= 0:
        return None
    kern = vt[-k:]
    # canonical form before rationalising: reduced echelon of the kernel rows
    q, piv = _float_rref(kern)
    xis = [_rationalize(row, max_den) for row in q]
    rows = []
    for xi in xis:
        rows.extend(principal_symbol(op, xi))
    sols = nullspace(rows, op.dim_e)
    if not sols:
        return None
    basis = np.array([[float(x) for x in s] for s in sols])
    coef, *_ = np.linalg.lstsq(basis.T, e_num, rcond=None)
    cf = _rationalize(coef, max_den)
    e = tuple(sum((c * s[j] for c, s in zip(cf, sols)), Fraction(0)) for j in range(op.dim_e))
    if not any(e):
        e = sols[0]
    return e


def _float_rref(a: np.ndarray, tol: float = 1e-8):
    a = a.copy()
    r = 0
    piv = []
    for c in range(a.shape[1]):
        if r == a.shape[0]:
            break
        i = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[i, c]) < tol:
            continue
        a[[r, i]] = a[[i, r]]
        a[r] /= a[r, c]
        for j in range(a.shape[0]):
            if j != r:
                a[j] -= a[j, c] * a[r]
        piv.append(c)
        r += 1
    return a[:r], piv


def _descent_once(op, t_float, target, seed, cfg: EllConfig):
    """One Nelder-Mead run minimising σ_{target+1}(M(e)) on the unit sphere."""
    rs = np.random.default_rng(seed)
    x0 = rs.normal(size=op.dim_e)
    k = target  # zero-based index of the (target+1)-th singular value

    def objective(x):
        nx = np.linalg.norm(x)
        if nx < 1e-12:
            return 1.0
        m = np.einsum("fed,e->fd", t_float, x / nx)
        return float(np.linalg.svd(m, compute_uv=False)[k])

    res = minimize(
        objective, x0, method="Nelder-Mead",
        options={"xatol": 1e-13, "fatol": 1e-14, "maxiter": 400 * op.dim_e, "maxfev": 400 * op.dim_e, "adaptive": True},
    )
    x = res.x / np.linalg.norm(res.x)
    return float(res.fun), x, int(res.nfev)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("WAVECONE_THREADS", "1")))
    except ValueError:
        return 1


def ell(op: FirstOrderOperator, config: EllConfig | None = None) -> EllCertificate:
    """Certified minimal rank of e ↦ M(e) over nonzero e.

    The returned value is always realised by an exact witness; ``mode`` says
    how much of the lower bound has been established.
    """
    cfg = config or EllConfig()
    rng = random.Random(cfg.seed)
    analytic = op.analytic_ell
    counts = {"structured": 0, "lattice": 0, "descent_runs": 0, "descent_evaluations": 0, "descent_accepted": 0}
    search_log: dict = {"seed": cfg.seed, "lattice_height": cfg.lattice_height, "candidates": counts}

    best_rank = None
    best_e: Vector | None = None

    def offer(e: Vector) -> bool:
        nonlocal best_rank, best_e
        r = symbol_matrix(op, e).rank
        if best_rank is None or r < best_rank:
            best_rank, best_e = r, e
            return True
        return False

    def done() -> bool:
        return best_rank == 0 or (cfg.stop_at_analytic and analytic is not None and best_rank <= analytic)

    # (1) structured candidates
    for e, _ in _structured_candidates(op, rng, cfg.random_samples):
        counts["structured"] += 1
        offer(e)
        if best_rank == 0:
            break

    # (2) exhaustive projective lattice
    exhausted = False
    if cfg.lattice_height is not None:
        size = lattice_size(op, cfg.lattice_height)
        if size <= LATTICE_LIMIT:
            t = integer_symbol_tensor(op)
            lat_best, lat_e = None, None
            for es in projective_lattice(op.dim_e, cfg.lattice_height):
                ranks = _integer_batch_ranks_svd(_batch_symbols(t, es))
                counts["lattice"] += len(es)
                i = int(np.argmin(ranks))
                if lat_best is None or ranks[i] < lat_best:
                    lat_best, lat_e = int(ranks[i]), es[i]
            exhausted = True
            lat_e = tuple(Fraction(int(x)) for x in lat_e)
            if symbol_matrix(op, lat_e).rank != lat_best:
                raise ArithmeticError("lattice rank disagrees with exact rank")
            search_log["lattice_min"] = lat_best
            offer(lat_e)
        else:
            search_log["lattice_skipped"] = f"(2H+1)^dimE = {size} exceeds {LATTICE_LIMIT}"

    # (3) numerical descent, each hit re-certified exactly
    if not done() and cfg.descent_restarts > 0:
        t_float = _float_symbols(op)
        seeds = [cfg.seed * 7919 + r for r in range(cfg.descent_restarts)]
        restart = 0
        while restart < len(seeds) and not done():
            target = best_rank - 1
            batch = seeds[restart:restart + _threads()]
            with ThreadPoolExecutor(max_workers=len(batch)) as pool:
                results = list(pool.map(lambda s: _descent_once(op, t_float, target, s, cfg), batch))
            restart += len(batch)
            for fun, x, nfev in results:  # merged in restart order: deterministic
                counts["descent_runs"] += 1
                counts["descent_evaluations"] += nfev
                if fun > cfg.descent_tol or best_rank - 1 != target:
                    continue
                for e in (_rationalize(x, cfg.max_denominator), _exact_from_kernel(op, x, t_float, target, cfg.max_denominator)):
                    if e is not None and any(e) and symbol_matrix(op, e).rank <= target:
                        offer(e)
                        counts["descent_accepted"] += 1
                        break

    assert best_e is not None
    witness = _canonical_witness(best_e)
    if exhausted:
        mode = LATTICE
    elif analytic is not None and best_rank == analytic:
        mode = ANALYTIC
    else:
        mode = CERTIFIED
        if analytic is not None and best_rank < analytic:
            log.warning("%s: found rank %d below the analytic value %d", op.label, best_rank, analytic)
    sm = symbol_matrix(op, witness)
    cert = EllCertificate(best_rank, witness, Subspace(op.d, sm.m), mode, search_log)
    cert.verify(op)
    return cert


def _canonical_witness(e: Vector) -> Vector:
    """Primitive integer representative with first nonzero entry positive."""
    ints = primitive_integer(e)
    first = next(x for x in ints if x != 0)
    sign = 1 if first > 0 else -1
    return tuple(Fraction(sign * x) for x in ints)
