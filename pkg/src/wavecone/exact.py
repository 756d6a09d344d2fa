"""Exact rational linear algebra on small dense matrices.

Matrices are plain sequences of rows whose entries are :class:`fractions.Fraction`.
Everything here is pure Python on purpose: the matrices are tiny and exactness
matters more than speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Vector = tuple[Fraction, ...]
Matrix = tuple[Vector, ...]


def to_fraction(x) -> Fraction:
    """Parse ints, Fractions and canonical strings ("p/q"); floats only if exact."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        return Fraction(x)
    raise TypeError(f"cannot interpret {x!r} as a rational")


def format_fraction(x: Fraction) -> str:
    """Canonical string: gcd-reduced, positive denominator, "p/q" (or "p")."""
    return str(Fraction(x))


def as_matrix(rows: Iterable[Iterable]) -> Matrix:
    return tuple(tuple(to_fraction(v) for v in row) for row in rows)


def as_vector(values: Iterable) -> Vector:
    return tuple(to_fraction(v) for v in values)


def rref(rows: Sequence[Sequence[Fraction]], ncols: int | None = None) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form. Returns (nonzero rows, pivot columns)."""
    m = [list(r) for r in rows]
    if ncols is None:
        ncols = len(m[0]) if m else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        if p != 1:
            m[r] = [v / p for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                row_r = m[r]
                m[i] = [a - f * b for a, b in zip(m[i], row_r)]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    if not rows or not rows[0]:
        return 0
    return len(rref(rows)[1])


def nullspace(rows: Sequence[Sequence[Fraction]], ncols: int) -> list[Vector]:
    """Basis of {x : A x = 0}, one vector per free column (free entry set to 1)."""
    reduced, pivots = rref(rows, ncols) if rows else ([], [])
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * ncols
        x[f] = Fraction(1)
        for row, pc in zip(reduced, pivots):
            x[pc] = -row[f]
        basis.append(tuple(x))
    return basis


def mat_vec(a: Sequence[Sequence[Fraction]], x: Sequence[Fraction]) -> Vector:
    return tuple(sum((aij * xj for aij, xj in zip(row, x)), Fraction(0)) for row in a)


def transpose(a: Sequence[Sequence[Fraction]], ncols: int | None = None) -> Matrix:
    if not a:
        return tuple(() for _ in range(ncols or 0))
    return tuple(tuple(row[j] for row in a) for j in range(len(a[0])))


def dot(x: Sequence[Fraction], y: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(x, y)), Fraction(0))


def primitive_integer(v: Sequence[Fraction]) -> tuple[int, ...]:
    """Scale a rational vector to the primitive integer vector on the same ray."""
    den = 1
    for x in v:
        den = den * x.denominator // math.gcd(den, x.denominator)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    if g == 0:
        return tuple(ints)
    return tuple(x // g for x in ints)


def integer_kernel(rows: Sequence[Sequence[int]], ncols: int) -> list[tuple[int, ...]]:
    """Lattice basis of {x in Z^n : A x = 0} by unimodular column reduction."""
    a = [list(r) for r in rows]
    u = [[int(i == j) for j in range(ncols)] for i in range(ncols)]  # columns of u track the operations
    col = 0
    for row in range(len(a)):
        if col >= ncols:
            break
        while True:
            nz = [j for j in range(col, ncols) if a[row][j] != 0]
            if not nz:
                break
            j0 = min(nz, key=lambda j: abs(a[row][j]))
            _swap_cols(a, u, col, j0)
            done = True
            for j in range(col + 1, ncols):
                if a[row][j] != 0:
                    q = a[row][j] // a[row][col]
                    _add_col(a, u, j, col, -q)
                    if a[row][j] != 0:
                        done = False
            if done:
                break
        if any(a[row][j] != 0 for j in range(col, ncols)):
            col += 1
    return [tuple(u[i][j] for i in range(ncols)) for j in range(col, ncols)]


def _swap_cols(a, u, i, j):
    if i == j:
        return
    for m in (a, u):
        for row in m:
            row[i], row[j] = row[j], row[i]


def _add_col(a, u, dst, src, k):
    for m in (a, u):
        for row in m:
            row[dst] += k * row[src]


def lll_reduce(basis: Sequence[Sequence[int]], delta: Fraction = Fraction(3, 4)) -> list[tuple[int, ...]]:
    """Textbook LLL on a handful of short integer vectors."""
    b = [list(v) for v in basis]
    n = len(b)
    if n <= 1:
        return [tuple(v) for v in b]

    def gso(b):
        bstar: list[list[Fraction]] = []
        mu = [[Fraction(0)] * n for _ in range(n)]
        for i in range(n):
            v = [Fraction(x) for x in b[i]]
            for j in range(i):
                mu[i][j] = dot(b[i], bstar[j]) / dot(bstar[j], bstar[j])
                v = [x - mu[i][j] * y for x, y in zip(v, bstar[j])]
            bstar.append(v)
        return bstar, mu

    bstar, mu = gso(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = round(mu[k][j])
            if q:
                b[k] = [x - q * y for x, y in zip(b[k], b[j])]
                bstar, mu = gso(b)
        if dot(bstar[k], bstar[k]) >= (delta - mu[k][k - 1] ** 2) * dot(bstar[k - 1], bstar[k - 1]):
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bstar, mu = gso(b)
            k = max(k - 1, 1)
    return [tuple(v) for v in b]


@dataclass(frozen=True)
class Subspace:
    """Linear subspace of Q^d stored by its reduced row echelon basis.

    The RREF basis is canonical, so two equal subspaces compare equal.
    """

    ambient_dim: int
    basis: Matrix

    def __post_init__(self):
        basis = as_matrix(self.basis)
        for row in basis:
            if len(row) != self.ambient_dim:
                raise ValueError(f"basis vector of length {len(row)} in ambient dimension {self.ambient_dim}")
        reduced, _ = rref(basis, self.ambient_dim) if basis else ([], [])
        object.__setattr__(self, "basis", tuple(tuple(r) for r in reduced))

    @classmethod
    def span(cls, d: int, vectors: Iterable[Sequence]) -> "Subspace":
        return cls(d, tuple(as_vector(v) for v in vectors))

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(d, ())

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(d, tuple(tuple(Fraction(int(i == j)) for j in range(d)) for i in range(d)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def complement(self) -> "Subspace":
        """Orthogonal complement w.r.t. the standard inner product."""
        return Subspace(self.ambient_dim, tuple(nullspace(self.basis, self.ambient_dim)))

    def contains(self, v: Sequence) -> bool:
        v = as_vector(v)
        if len(v) != self.ambient_dim:
            raise ValueError("dimension mismatch")
        return rank(self.basis + (v,)) == self.dim

    def __contains__(self, v) -> bool:
        return self.contains(v)

    def is_subspace_of(self, other: "Subspace") -> bool:
        return all(other.contains(v) for v in self.basis)

    def integer_lattice(self) -> list[tuple[int, ...]]:
        """LLL-reduced basis of the saturated lattice V ∩ Z^d."""
        if self.dim == 0:
            return []
        normals = [primitive_integer(v) for v in self.complement().basis]
        if not normals:
            gens = [tuple(int(i == j) for j in range(self.ambient_dim)) for i in range(self.ambient_dim)]
        else:
            gens = integer_kernel(normals, self.ambient_dim)
        return lll_reduce(gens)

    def orthonormal_basis(self):
        import numpy as np

        if self.dim == 0:
            return np.zeros((0, self.ambient_dim))
        b = np.array([[float(x) for x in row] for row in self.basis])
        q, _ = np.linalg.qr(b.T)
        return q.T

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "dim": self.dim,
            "basis": [[format_fraction(x) for x in row] for row in self.basis],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Subspace":
        sub = cls(int(data["ambient_dim"]), tuple(as_vector(r) for r in data["basis"]))
        if "dim" in data and int(data["dim"]) != sub.dim:
            raise ValueError(f"subspace field 'dim' says {data['dim']} but the basis spans {sub.dim}")
        return sub
