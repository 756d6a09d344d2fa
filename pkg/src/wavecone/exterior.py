"""Exact exterior algebra over Q^d.

Basis m-(co)vectors e_{i1}∧…∧e_{im} (i1 < … < im, 1-based) are keyed by the
bitmask with bits i1-1, …, im-1 set.  Coordinates of Λ^m are ordered
lexicographically by index tuple, which is the order used for the coordinate
space E of the exterior-derivative and boundary operators.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .exact import Subspace, Vector, as_vector, format_fraction, nullspace, to_fraction

VECTOR = "vector"
COVECTOR = "covector"


def mask_of(indices: Iterable[int]) -> int:
    m = 0
    for i in indices:
        m |= 1 << (i - 1)
    return m


def indices_of(mask: int) -> tuple[int, ...]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def basis_masks(d: int, m: int) -> list[int]:
    """Masks of Λ^m(R^d) in lexicographic index-tuple order."""
    return [mask_of(c) for c in itertools.combinations(range(1, d + 1), m)]


def wedge_sign(a: int, b: int) -> int:
    """Sign of e_A ∧ e_B relative to e_{A∪B}; 0 if A and B overlap."""
    if a & b:
        return 0
    swaps = 0
    bb = b
    j = 0
    while bb:
        if bb & 1:
            swaps += bin(a >> (j + 1)).count("1")
        bb >>= 1
        j += 1
    return -1 if swaps & 1 else 1


@dataclass(frozen=True)
class MultiVector:
    """Homogeneous element of Λ_m (vectors) or Λ^m (covectors) with rational coefficients."""

    ambient_dim: int
    grade: int
    variance: str = COVECTOR
    terms: tuple[tuple[int, Fraction], ...] = field(default=())

    def __post_init__(self):
        if self.ambient_dim < 1:
            raise ValueError("ambient dimension must be >= 1")
        if self.variance not in (VECTOR, COVECTOR):
            raise ValueError(f"unknown variance {self.variance!r}")
        acc: dict[int, Fraction] = {}
        for mask, c in self.terms:
            c = to_fraction(c)
            if mask >> self.ambient_dim:
                raise ValueError(f"index out of range 1..{self.ambient_dim}")
            if bin(mask).count("1") != self.grade:
                raise ValueError(f"term {indices_of(mask)} does not have grade {self.grade}")
            acc[mask] = acc.get(mask, Fraction(0)) + c
        cleaned = tuple(sorted((m, c) for m, c in acc.items() if c != 0))
        # grade above d is only allowed for the canonical zero of an overflowing wedge
        if not 0 <= self.grade <= self.ambient_dim and cleaned:
            raise ValueError(f"grade {self.grade} outside 0..{self.ambient_dim}")
        object.__setattr__(self, "terms", cleaned)

    @classmethod
    def from_dict(cls, d: int, coeffs: Mapping[Sequence[int], object], variance: str = COVECTOR, grade: int | None = None):
        items = list(coeffs.items())
        if grade is None:
            if not items:
                raise ValueError("grade required for an empty multivector")
            grade = len(items[0][0])
        terms = []
        for idx, c in items:
            idx = tuple(idx)
            if list(idx) != sorted(set(idx)):
                raise ValueError(f"index tuple {idx} is not strictly increasing")
            if idx and (idx[0] < 1 or idx[-1] > d):
                raise ValueError(f"index tuple {idx} out of range 1..{d}")
            terms.append((mask_of(idx), to_fraction(c)))
        return cls(d, grade, variance, tuple(terms))

    @classmethod
    def basis(cls, d: int, indices: Sequence[int], variance: str = COVECTOR) -> "MultiVector":
        return cls.from_dict(d, {tuple(indices): 1}, variance, grade=len(indices))

    @classmethod
    def from_coords(cls, d: int, m: int, coords: Sequence, variance: str = COVECTOR) -> "MultiVector":
        masks = basis_masks(d, m)
        if len(coords) != len(masks):
            raise ValueError(f"expected {len(masks)} coordinates for grade {m} in dimension {d}")
        return cls(d, m, variance, tuple(zip(masks, as_vector(coords))))

    @classmethod
    def vector1(cls, coords: Sequence, variance: str = COVECTOR) -> "MultiVector":
        return cls.from_coords(len(coords), 1, coords, variance)

    @property
    def coeffs(self) -> dict[tuple[int, ...], Fraction]:
        return {indices_of(m): c for m, c in self.terms}

    def coords(self) -> Vector:
        lookup = dict(self.terms)
        return tuple(lookup.get(m, Fraction(0)) for m in basis_masks(self.ambient_dim, self.grade))

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "MultiVector") -> "MultiVector":
        _check_same(self, other)
        return MultiVector(self.ambient_dim, self.grade, self.variance, self.terms + other.terms)

    def __neg__(self) -> "MultiVector":
        return self.scale(-1)

    def __sub__(self, other: "MultiVector") -> "MultiVector":
        return self + (-other)

    def scale(self, k) -> "MultiVector":
        k = to_fraction(k)
        return MultiVector(self.ambient_dim, self.grade, self.variance, tuple((m, k * c) for m, c in self.terms))

    def __rmul__(self, k) -> "MultiVector":
        return self.scale(k)

    def __xor__(self, other: "MultiVector") -> "MultiVector":
        return wedge(self, other)

    def to_json(self) -> dict:
        return {
            "dim": self.ambient_dim,
            "grade": self.grade,
            "variance": self.variance,
            "terms": [{"idx": list(indices_of(m)), "coef": format_fraction(c)} for m, c in self.terms],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "MultiVector":
        d = int(data["dim"])
        grade = int(data["grade"])
        variance = data.get("variance", COVECTOR)
        coeffs = {tuple(t["idx"]): t["coef"] for t in data.get("terms", [])}
        mv = cls.from_dict(d, coeffs, variance, grade=grade)
        if len(coeffs) != len(data.get("terms", [])):
            raise ValueError("duplicate index tuples in terms")
        return mv

    def __repr__(self) -> str:
        star = "*" if self.variance == COVECTOR else ""
        if not self.terms:
            return f"0[Λ{self.grade}, d={self.ambient_dim}]"
        parts = []
        for m, c in self.terms:
            name = "∧".join(f"e{i}{star}" for i in indices_of(m)) or "1"
            parts.append(f"{c}·{name}")
        return " + ".join(parts)


def _check_same(a: MultiVector, b: MultiVector) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")
    if a.grade != b.grade or a.variance != b.variance:
        raise ValueError("grade or variance mismatch")


def wedge(a: MultiVector, b: MultiVector) -> MultiVector:
    """Exterior product.  Overflowing grades give the zero element of grade p+q."""
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")
    if a.variance != b.variance:
        raise ValueError("cannot wedge a vector with a covector")
    grade = a.grade + b.grade
    out: dict[int, Fraction] = {}
    if grade <= a.ambient_dim:
        for ma, ca in a.terms:
            for mb, cb in b.terms:
                s = wedge_sign(ma, mb)
                if s:
                    out[ma | mb] = out.get(ma | mb, Fraction(0)) + s * ca * cb
    return MultiVector(a.ambient_dim, grade, a.variance, tuple(out.items()))


def pairing(v: MultiVector, w: MultiVector) -> Fraction:
    """Duality pairing <v, w> for an m-vector v and an m-covector w (orthonormal basis)."""
    if v.ambient_dim != w.ambient_dim or v.grade != w.grade:
        raise ValueError("pairing needs equal dimension and grade")
    if v.variance != VECTOR or w.variance != COVECTOR:
        raise ValueError("pairing is between a vector and a covector")
    lookup = dict(w.terms)
    return sum((c * lookup.get(m, 0) for m, c in v.terms), Fraction(0))


def musical_iso(x: MultiVector) -> MultiVector:
    flipped = COVECTOR if x.variance == VECTOR else VECTOR
    return MultiVector(x.ambient_dim, x.grade, flipped, x.terms)


def interior_mult(v: MultiVector, xi: MultiVector) -> MultiVector:
    """v ⌞ ξ*, characterised by <v⌞ξ*, z*> = <v, ξ*∧z*>."""
    if v.ambient_dim != xi.ambient_dim:
        raise ValueError(f"ambient dimension mismatch: {v.ambient_dim} vs {xi.ambient_dim}")
    if v.variance != VECTOR or xi.variance != COVECTOR or xi.grade != 1:
        raise ValueError("interior_mult takes an m-vector and a 1-covector")
    if v.grade < 1:
        raise ValueError("cannot contract a 0-vector")
    out: dict[int, Fraction] = {}
    for mv, cv in v.terms:
        for mj, cj in xi.terms:
            if mv & mj:
                rest = mv & ~mj
                s = wedge_sign(mj, rest)
                out[rest] = out.get(rest, Fraction(0)) + s * cv * cj
    return MultiVector(v.ambient_dim, v.grade - 1, VECTOR, tuple(out.items()))


def unit(d: int, i: int, variance: str = COVECTOR) -> MultiVector:
    return MultiVector.basis(d, (i,), variance)


def wedge_matrix(v: MultiVector) -> list[list[Fraction]]:
    """Matrix of ξ ↦ ξ*∧v* from R^d to Λ^{m+1} in coordinates (columns = e_i)."""
    d = v.ambient_dim
    cov = v if v.variance == COVECTOR else musical_iso(v)
    cols = [wedge(unit(d, i), cov).coords() if v.grade < d else () for i in range(1, d + 1)]
    nrows = len(cols[0])
    return [[cols[j][r] for j in range(d)] for r in range(nrows)]


def interior_matrix(v: MultiVector) -> list[list[Fraction]]:
    """Matrix of ξ ↦ v⌞ξ* from R^d to Λ_{m-1}."""
    d = v.ambient_dim
    vec = v if v.variance == VECTOR else musical_iso(v)
    cols = [interior_mult(vec, unit(d, i)).coords() for i in range(1, d + 1)]
    nrows = len(cols[0])
    return [[cols[j][r] for j in range(d)] for r in range(nrows)]


def ann1_covector(v: MultiVector) -> Subspace:
    """Ann¹(v*) = {ξ : ξ*∧v* = 0}."""
    if v.variance != COVECTOR:
        raise ValueError("ann1_covector expects a covector")
    if v.is_zero():
        raise ValueError("annihilator of the zero covector is not considered")
    d = v.ambient_dim
    if v.grade == d:
        return Subspace.full(d)
    return Subspace(d, tuple(nullspace(wedge_matrix(v), d)))


def ann1_vector(v: MultiVector) -> Subspace:
    """Ann₁(v) = {ξ : v⌞ξ* = 0}."""
    if v.variance != VECTOR:
        raise ValueError("ann1_vector expects a vector")
    if v.is_zero():
        raise ValueError("annihilator of the zero vector is not considered")
    if v.grade < 1:
        raise ValueError("ann1_vector needs grade >= 1")
    return Subspace(v.ambient_dim, tuple(nullspace(interior_matrix(v), v.ambient_dim)))


def is_simple(v: MultiVector) -> tuple[bool, list[MultiVector] | None]:
    """Decide decomposability from the annihilator dimension.

    Returns ``(True, factors)`` with 1-(co)vectors whose wedge equals ``v``
    exactly, or ``(False, None)``.
    """
    if v.is_zero():
        raise ValueError("simplicity of the zero element is not defined")
    d, m = v.ambient_dim, v.grade
    if m == 0:
        return True, []
    if v.variance == COVECTOR:
        ann = ann1_covector(v)
        if ann.dim != m:
            return False, None
        directions = ann.basis
    else:
        ann = ann1_vector(v)
        if ann.dim != d - m:
            return False, None
        directions = ann.complement().basis
    factors = [MultiVector.vector1(row, v.variance) for row in directions]
    prod = factors[0]
    for f in factors[1:]:
        prod = wedge(prod, f)
    # prod is a nonzero multiple of v; fold the scalar into the first factor
    mask, c = v.terms[0]
    ratio = c / dict(prod.terms)[mask]
    factors[0] = factors[0].scale(ratio)
    return True, factors


def plucker_simple(v: MultiVector) -> bool:
    """Independent decomposability test via the quadratic Plücker relations."""
    if v.is_zero():
        raise ValueError("simplicity of the zero element is not defined")
    d, k = v.ambient_dim, v.grade
    if k <= 1 or k >= d - 1:
        return True
    p = dict(v.terms)

    def coord(a_mask: int, b: int) -> Fraction:
        bit = 1 << (b - 1)
        if a_mask & bit:
            return Fraction(0)
        above = bin(a_mask >> b).count("1")
        c = p.get(a_mask | bit, Fraction(0))
        return -c if above & 1 else c

    for a in itertools.combinations(range(1, d + 1), k - 1):
        am = mask_of(a)
        for b in itertools.combinations(range(1, d + 1), k + 1):
            total = Fraction(0)
            for pos, bl in enumerate(b):
                rest = mask_of(b[:pos] + b[pos + 1:])
                term = coord(am, bl) * p.get(rest, Fraction(0))
                total += -term if pos & 1 else term
            if total != 0:
                return False
    return True


def random_rational(rng: random.Random, num: int = 6, den: int = 4) -> Fraction:
    return Fraction(rng.randint(-num, num), rng.randint(1, den))


def random_multivector(rng: random.Random, d: int, m: int, variance: str = COVECTOR, simple: bool = False) -> MultiVector:
    """Random nonzero rational m-(co)vector; ``simple=True`` wedges random 1-vectors."""
    while True:
        if simple:
            out = MultiVector(d, 0, variance, ((0, Fraction(1)),))
            for _ in range(m):
                out = wedge(out, MultiVector.vector1([random_rational(rng) for _ in range(d)], variance))
        else:
            coords = [random_rational(rng) for _ in basis_masks(d, m)]
            out = MultiVector.from_coords(d, m, coords, variance)
        if not out.is_zero():
            return out


@dataclass
class OracleReport:
    d: int
    m: int
    passed: bool
    checked: int
    simple_seen: int
    counterexample: dict | None = None

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "m": self.m,
            "passed": self.passed,
            "checked": self.checked,
            "simple_seen": self.simple_seen,
            "counterexample": self.counterexample,
        }


def lemma_ab_oracle(d: int, m: int, samples: int, seed: int = 0) -> OracleReport:
    """Brute-force check of the annihilator dimension bounds and their extremal cases.

    Inputs: every basis m-(co)vector, then ``samples`` random ones (alternating
    generic and explicitly decomposable).  Simplicity is decided independently
    by the Plücker relations and compared with the annihilator criterion.
    """
    if not 1 <= m <= d <= 6:
        raise ValueError(f"need 1 <= m <= d <= 6, got d={d}, m={m}")
    rng = random.Random(f"{seed}:{d}:{m}")
    candidates = [MultiVector.basis(d, idx) for idx in itertools.combinations(range(1, d + 1), m)]
    for s in range(samples):
        candidates.append(random_multivector(rng, d, m, COVECTOR, simple=bool(s % 2)))

    checked = 0
    simple_seen = 0
    for cov in candidates:
        vec = musical_iso(cov)
        truth = plucker_simple(cov)
        simple_seen += truth
        dim_up = ann1_covector(cov).dim
        dim_low = ann1_vector(vec).dim
        problems = []
        if dim_up > m:
            problems.append(f"dim Ann^1 = {dim_up} > m")
        if (dim_up == m) != truth:
            problems.append(f"dim Ann^1 = {dim_up} but plucker_simple = {truth}")
        if dim_low > d - m:
            problems.append(f"dim Ann_1 = {dim_low} > d - m")
        if (dim_low == d - m) != truth:
            problems.append(f"dim Ann_1 = {dim_low} but plucker_simple = {truth}")
        for x in (cov, vec):
            ok, factors = is_simple(x)
            if ok != truth:
                problems.append(f"is_simple({x.variance}) = {ok}")
            elif ok:
                prod = factors[0]
                for f in factors[1:]:
                    prod = wedge(prod, f)
                if prod != x:
                    problems.append("factorization does not reproduce the input")
        checked += 1
        if problems:
            return OracleReport(d, m, False, checked, simple_seen, {"input": cov.to_json(), "problems": problems})
    return OracleReport(d, m, True, checked, simple_seen)
