"""First-order constant-coefficient operators P(D) = Σ P_i ∂_i + P_0 and their symbols."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from .exact import (
    Matrix,
    Subspace,
    Vector,
    as_matrix,
    as_vector,
    format_fraction,
    mat_vec,
    nullspace,
    rank,
)
from .exterior import COVECTOR, VECTOR, MultiVector, basis_masks, interior_mult, unit, wedge


class OperatorFormatError(ValueError):
    """Malformed operator description; the message names the offending field."""


@dataclass(frozen=True)
class FirstOrderOperator:
    d: int
    dim_e: int
    dim_f: int
    p0: Matrix
    p: tuple[Matrix, ...]
    label: str = ""
    # declared structure of E used by the candidate generator, e.g.
    # ("tensor", (rows, cols)) or ("exterior", (d, m, variance)); None = plain coordinates
    structure: tuple | None = None
    gallery: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.dim_e < 1 or self.dim_f < 1:
            raise OperatorFormatError("d, dimE and dimF must be positive")
        p0 = as_matrix(self.p0)
        p = tuple(as_matrix(m) for m in self.p)
        if len(p) != self.d:
            raise OperatorFormatError(f"field 'P' must hold d={self.d} matrices, got {len(p)}")
        for name, mat in [("P0", p0)] + [(f"P[{i}]", m) for i, m in enumerate(p)]:
            if len(mat) != self.dim_f or any(len(row) != self.dim_e for row in mat):
                raise OperatorFormatError(f"field '{name}' must be a {self.dim_f}x{self.dim_e} matrix")
        if all(x == 0 for m in p for row in m for x in row):
            raise OperatorFormatError("principal part vanishes: every P_i is zero")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p", p)

    @property
    def analytic_ell(self) -> int | None:
        if self.gallery is None:
            return None
        return _ANALYTIC[self.gallery[0]](**dict(self.gallery[1]))

    def to_json(self) -> dict:
        out: dict[str, Any] = {
            "d": self.d,
            "dimE": self.dim_e,
            "dimF": self.dim_f,
            "label": self.label,
            "P0": [[format_fraction(x) for x in row] for row in self.p0],
            "P": [[[format_fraction(x) for x in row] for row in m] for m in self.p],
        }
        if self.gallery is not None:
            out["gallery"] = {"family": self.gallery[0], "params": dict(self.gallery[1])}
        return out

    @classmethod
    def from_json(cls, data: Any) -> "FirstOrderOperator":
        if not isinstance(data, dict):
            raise OperatorFormatError("operator JSON must be an object")
        for key in ("d", "dimE", "dimF", "P0", "P"):
            if key not in data:
                raise OperatorFormatError(f"missing field '{key}'")
        try:
            d, dim_e, dim_f = int(data["d"]), int(data["dimE"]), int(data["dimF"])
        except (TypeError, ValueError) as exc:
            raise OperatorFormatError(f"fields 'd', 'dimE', 'dimF' must be integers ({exc})") from None
        p0 = _parse_matrix(data["P0"], "P0")
        if not isinstance(data["P"], list):
            raise OperatorFormatError("field 'P' must be a list of matrices")
        p = tuple(_parse_matrix(m, f"P[{i}]") for i, m in enumerate(data["P"]))
        op = cls(d, dim_e, dim_f, p0, p, str(data.get("label", "")))
        meta = data.get("gallery")
        if meta:
            # trust gallery metadata only if the matrices really are that gallery operator
            try:
                ref = make_gallery(meta["family"], **meta["params"])
            except (KeyError, TypeError, ValueError):
                return op
            if ref.p == op.p and ref.p0 == op.p0:
                return ref if not op.label else _relabel(ref, op.label)
        return op

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _relabel(op: FirstOrderOperator, label: str) -> FirstOrderOperator:
    return FirstOrderOperator(op.d, op.dim_e, op.dim_f, op.p0, op.p, label, op.structure, op.gallery)


def _parse_matrix(raw, name: str) -> Matrix:
    if not isinstance(raw, list) or not all(isinstance(r, list) for r in raw):
        raise OperatorFormatError(f"field '{name}' must be a list of rows")
    try:
        return as_matrix(raw)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise OperatorFormatError(f"field '{name}' has a non-rational entry ({exc})") from None


@dataclass(frozen=True)
class SymbolMatrix:
    """M(e) with columns P_i e, so that ℙ(ξ)[e] = M(e) ξ."""

    e: Vector
    m: Matrix

    @property
    def rank(self) -> int:
        return rank(self.m)


@dataclass(frozen=True)
class WaveConeReport:
    e: Vector
    member: bool
    kernel_direction: Vector | None

    def to_json(self) -> dict:
        return {
            "e": [format_fraction(x) for x in self.e],
            "member": self.member,
            "kernel_direction": None if self.kernel_direction is None else [format_fraction(x) for x in self.kernel_direction],
        }


def principal_symbol(op: FirstOrderOperator, xi: Sequence) -> Matrix:
    """ℙ(ξ) = Σ ξ_i P_i (the zero-order term plays no role)."""
    xi = as_vector(xi)
    if len(xi) != op.d:
        raise ValueError(f"ξ has length {len(xi)}, operator has d={op.d}")
    return tuple(
        tuple(sum((xi[i] * op.p[i][f][j] for i in range(op.d)), Fraction(0)) for j in range(op.dim_e))
        for f in range(op.dim_f)
    )


def _check_e(op: FirstOrderOperator, e: Sequence) -> Vector:
    e = as_vector(e)
    if len(e) != op.dim_e:
        raise ValueError(f"e has length {len(e)}, operator has dimE={op.dim_e}")
    if all(x == 0 for x in e):
        raise ValueError("e must be nonzero")
    return e


def symbol_matrix(op: FirstOrderOperator, e: Sequence) -> SymbolMatrix:
    e = _check_e(op, e)
    cols = [mat_vec(op.p[i], e) for i in range(op.d)]
    m = tuple(tuple(cols[i][f] for i in range(op.d)) for f in range(op.dim_f))
    return SymbolMatrix(e, m)


def kernel_directions(op: FirstOrderOperator, e: Sequence) -> Subspace:
    """{ξ : ℙ(ξ)[e] = 0} = ker M(e)."""
    sm = symbol_matrix(op, e)
    return Subspace(op.d, tuple(nullspace(sm.m, op.d)))


def invariance_space(op: FirstOrderOperator, e: Sequence) -> Subspace:
    """{ℙ[e] ≡ 0}^⊥, i.e. the row space of M(e)."""
    sm = symbol_matrix(op, e)
    return Subspace(op.d, sm.m)


def wave_cone_member(op: FirstOrderOperator, e: Sequence) -> WaveConeReport:
    sm = symbol_matrix(op, e)
    ker = nullspace(sm.m, op.d)
    return WaveConeReport(sm.e, bool(ker), ker[0] if ker else None)


def lift_inhomogeneous(op: FirstOrderOperator) -> FirstOrderOperator:
    """Operator on E×F encoding P(D)μ = τ as P̃(D)(μ, τ) = P(D)μ − τ = 0."""
    zeros = (Fraction(0),) * op.dim_f
    p = tuple(tuple(row + zeros for row in m) for m in op.p)
    p0 = tuple(
        row + tuple(Fraction(-1 if j == f else 0) for j in range(op.dim_f)) for f, row in enumerate(op.p0)
    )
    label = f"lift({op.label})" if op.label else "lift"
    return FirstOrderOperator(op.d, op.dim_e + op.dim_f, op.dim_f, p0, p, label)


# ---------------------------------------------------------------------------
# gallery


def _zeros(rows: int, cols: int) -> list[list[Fraction]]:
    return [[Fraction(0)] * cols for _ in range(rows)]


def make_curl(d: int, m: int) -> FirstOrderOperator:
    """curl on R^m ⊗ R^d: equations ∂_i μ_kj − ∂_j μ_ki for i < j.

    E is flattened row-major, μ_kj at position k*d + j.
    """
    if d < 2 or m < 1:
        raise ValueError(f"curl needs d >= 2 and m >= 1, got d={d}, m={m}")
    pairs = list(itertools.combinations(range(d), 2))
    dim_e, dim_f = m * d, m * len(pairs)
    p = [_zeros(dim_f, dim_e) for _ in range(d)]
    for k in range(m):
        for r, (i, j) in enumerate(pairs):
            row = k * len(pairs) + r
            p[i][row][k * d + j] += 1
            p[j][row][k * d + i] -= 1
    return FirstOrderOperator(
        d, dim_e, dim_f, _zeros(dim_f, dim_e), tuple(map(as_matrix, p)), f"curl(d={d},m={m})",
        ("tensor", (m, d)), ("curl", (("d", d), ("m", m))),
    )


def make_div(k: int, d: int) -> FirstOrderOperator:
    """Row-wise divergence of k×d matrix fields: (Σ_i ∂_i μ_ji)_j."""
    if k < 1 or d < 1:
        raise ValueError(f"div needs k >= 1 and d >= 1, got k={k}, d={d}")
    p = [_zeros(k, k * d) for _ in range(d)]
    for i in range(d):
        for j in range(k):
            p[i][j][j * d + i] = Fraction(1)
    return FirstOrderOperator(
        d, k * d, k, _zeros(k, k * d), tuple(map(as_matrix, p)), f"div(k={k},d={d})",
        ("tensor", (k, d)), ("div", (("k", k), ("d", d))),
    )


def make_ext_derivative(d: int, m: int) -> FirstOrderOperator:
    """Exterior derivative on m-forms, symbol ξ ↦ ξ*∧v*."""
    if d < 1 or not 0 <= m <= d - 1:
        raise ValueError(f"exterior derivative needs 0 <= m <= d-1, got d={d}, m={m}")
    src, dst = basis_masks(d, m), basis_masks(d, m + 1)
    p = []
    for i in range(1, d + 1):
        mat = _zeros(len(dst), len(src))
        for col, mask in enumerate(src):
            img = wedge(unit(d, i), MultiVector(d, m, COVECTOR, ((mask, Fraction(1)),)))
            for row, c in enumerate(img.coords()):
                mat[row][col] = c
        p.append(as_matrix(mat))
    return FirstOrderOperator(
        d, len(src), len(dst), _zeros(len(dst), len(src)), tuple(p), f"ext_derivative(d={d},m={m})",
        ("exterior", (d, m, COVECTOR)), ("ext_derivative", (("d", d), ("m", m))),
    )


def make_boundary(d: int, m: int) -> FirstOrderOperator:
    """Boundary of m-currents, symbol ξ ↦ v⌞ξ*."""
    if d < 1 or not 1 <= m <= d:
        raise ValueError(f"boundary needs 1 <= m <= d, got d={d}, m={m}")
    src, dst = basis_masks(d, m), basis_masks(d, m - 1)
    p = []
    for i in range(1, d + 1):
        mat = _zeros(len(dst), len(src))
        for col, mask in enumerate(src):
            img = interior_mult(MultiVector(d, m, VECTOR, ((mask, Fraction(1)),)), unit(d, i))
            for row, c in enumerate(img.coords()):
                mat[row][col] = c
        p.append(as_matrix(mat))
    return FirstOrderOperator(
        d, len(src), len(dst), _zeros(len(dst), len(src)), tuple(p), f"boundary(d={d},m={m})",
        ("exterior", (d, m, VECTOR)), ("boundary", (("d", d), ("m", m))),
    )


_MAKERS = {
    "curl": make_curl,
    "div": make_div,
    "ext_derivative": make_ext_derivative,
    "boundary": make_boundary,
}

_ANALYTIC = {
    "curl": lambda d, m: d - 1,
    "div": lambda k, d: 1,
    "ext_derivative": lambda d, m: d - m,
    "boundary": lambda d, m: m,
}


def make_gallery(family: str, **params) -> FirstOrderOperator:
    try:
        maker = _MAKERS[family]
    except KeyError:
        raise ValueError(f"unknown gallery family {family!r}; choose from {sorted(_MAKERS)}") from None
    return maker(**{k: int(v) for k, v in params.items()})


def gallery_operators(dmax: int = 5, mmax_curl: int = 3, kmax: int = 4, dmax_div: int = 4, dmin: int = 1):
    """The regression table: curl, div, exterior derivative and boundary families."""
    ops = []
    for d in range(max(2, dmin), dmax + 1):
        for m in range(1, mmax_curl + 1):
            ops.append(make_curl(d, m))
    for k in range(1, kmax + 1):
        for d in range(dmin, dmax_div + 1):
            ops.append(make_div(k, d))
    for d in range(dmin, dmax + 1):
        for m in range(0, d):
            ops.append(make_ext_derivative(d, m))
    for d in range(dmin, dmax + 1):
        for m in range(1, d + 1):
            ops.append(make_boundary(d, m))
    return ops
