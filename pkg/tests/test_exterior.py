import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavecone.exact import Subspace
from wavecone.exterior import (
    COVECTOR,
    VECTOR,
    MultiVector,
    ann1_covector,
    ann1_vector,
    basis_masks,
    indices_of,
    interior_mult,
    is_simple,
    lemma_ab_oracle,
    musical_iso,
    pairing,
    plucker_simple,
    random_multivector,
    unit,
    wedge,
)


def cov(d, terms):
    return MultiVector.from_dict(d, terms, COVECTOR)


def vec(d, terms):
    return MultiVector.from_dict(d, terms, VECTOR)


def all_basis(d, variance=COVECTOR):
    for m in range(0, d + 1):
        for mask in basis_masks(d, m):
            yield MultiVector.basis(d, indices_of(mask), variance)


# --- worked examples -------------------------------------------------------


def test_wedge_examples():
    e1, e2 = unit(4, 1), unit(4, 2)
    assert wedge(e1, e2) == cov(4, {(1, 2): 1})
    assert wedge(e1, e1).is_zero()
    assert wedge(e1 + e2, e1 - e2) == cov(4, {(1, 2): -2})


def test_wedge_overflow_gives_zero_of_formal_grade():
    top = cov(3, {(1, 2, 3): 1})
    out = wedge(top, unit(3, 1))
    assert out.is_zero() and out.grade == 4


def test_wedge_dimension_mismatch():
    with pytest.raises(ValueError):
        wedge(unit(3, 1), unit(4, 1))


def test_pairing_examples():
    assert pairing(vec(4, {(1, 2): 1}), cov(4, {(1, 2): 1})) == 1
    assert pairing(vec(4, {(1, 2): 1}), cov(4, {(1, 3): 1})) == 0
    assert pairing(vec(4, {(1, 2): 2, (3, 4): 1}), cov(4, {(3, 4): 1})) == 1
    with pytest.raises(ValueError):
        pairing(vec(4, {(1, 2): 1}), cov(4, {(1,): 1}))


def test_musical_iso():
    assert musical_iso(vec(3, {(1, 2): 1})) == cov(3, {(1, 2): 1})
    x = vec(3, {(1,): 2, (2,): 3})
    assert musical_iso(x) == cov(3, {(1,): 2, (2,): 3})
    assert musical_iso(musical_iso(x)) == x


def test_interior_examples():
    v = vec(4, {(1, 2): 1})
    assert interior_mult(v, unit(4, 1)) == vec(4, {(2,): 1})
    assert interior_mult(v, unit(4, 3)).is_zero()
    w = vec(4, {(1, 2): 1, (3, 4): 1})
    xi = [Fraction(n) for n in (2, 3, 5, 7)]
    got = interior_mult(w, MultiVector.vector1(xi))
    assert got == vec(4, {(2,): xi[0], (1,): -xi[1], (4,): xi[2], (3,): -xi[3]})
    with pytest.raises(ValueError):
        interior_mult(vec(4, {(): 1}), unit(4, 1))


def test_annihilator_examples():
    assert ann1_covector(cov(4, {(1, 2): 1})) == Subspace.span(4, [(1, 0, 0, 0), (0, 1, 0, 0)])
    assert ann1_covector(cov(4, {(1, 2): 1, (3, 4): 1})).dim == 0
    assert ann1_covector(unit(3, 1)) == Subspace.span(3, [(1, 0, 0)])
    assert ann1_vector(vec(4, {(1, 2): 1})) == Subspace.span(4, [(0, 0, 1, 0), (0, 0, 0, 1)])
    assert ann1_vector(vec(4, {(1, 2): 1, (3, 4): 1})).dim == 0
    assert ann1_vector(vec(3, {(1,): 1})) == Subspace.span(3, [(0, 1, 0), (0, 0, 1)])
    with pytest.raises(ValueError):
        ann1_covector(MultiVector(3, 1, COVECTOR, ()))


def test_is_simple_examples():
    ok, factors = is_simple(cov(4, {(1, 2): 1}))
    assert ok and len(factors) == 2
    assert is_simple(cov(4, {(1, 2): 1, (3, 4): 1})) == (False, None)
    v = cov(4, {(1, 2): 1, (1, 3): 1})
    ok, factors = is_simple(v)
    assert ok and wedge(factors[0], factors[1]) == v
    assert ann1_covector(v) == Subspace.span(4, [(1, 0, 0, 0), (0, 1, 1, 0)])


def test_json_roundtrip_and_canonical_rationals():
    v = cov(4, {(1, 2): Fraction(6, 4), (3, 4): -1})
    data = v.to_json()
    assert {"idx": [1, 2], "coef": "3/2"} in data["terms"]
    assert MultiVector.from_json(data) == v


def test_invalid_indices_rejected():
    with pytest.raises(ValueError):
        cov(3, {(2, 1): 1})
    with pytest.raises(ValueError):
        cov(3, {(1, 4): 1})


# --- exhaustive identities on basis elements, d <= 5 -------------------------


@pytest.mark.parametrize("d", range(1, 6))
def test_graded_anticommutativity_exhaustive(d):
    basis = list(all_basis(d))
    for a, b in itertools.product(basis, basis):
        assert wedge(a, b) == wedge(b, a).scale((-1) ** (a.grade * b.grade))


@pytest.mark.parametrize("d", range(1, 6))
def test_associativity_exhaustive(d):
    basis = list(all_basis(d))
    for a, b in itertools.product(basis, basis):
        ab = wedge(a, b)
        if ab.is_zero():
            continue
        for c in basis:
            assert wedge(ab, c) == wedge(a, wedge(b, c))


@pytest.mark.parametrize("d", range(1, 6))
def test_interior_defining_identity_exhaustive(d):
    for m in range(1, d + 1):
        for v in (MultiVector.basis(d, indices_of(k), VECTOR) for k in basis_masks(d, m)):
            for j in range(1, d + 1):
                xi = unit(d, j)
                left = interior_mult(v, xi)
                for z in (MultiVector.basis(d, indices_of(k)) for k in basis_masks(d, m - 1)):
                    assert pairing(left, z) == pairing(v, wedge(xi, z))


@pytest.mark.parametrize("d", range(1, 6))
def test_basis_elements_are_simple_with_extremal_annihilators(d):
    for m in range(1, d + 1):
        for k in basis_masks(d, m):
            c = MultiVector.basis(d, indices_of(k))
            assert ann1_covector(c).dim == m
            assert ann1_vector(musical_iso(c)).dim == d - m
            assert is_simple(c)[0] and is_simple(musical_iso(c))[0]


# --- properties ----------------------------------------------------------------

dims = st.integers(min_value=2, max_value=5)


@st.composite
def multivectors(draw, simple=None):
    d = draw(dims)
    m = draw(st.integers(min_value=1, max_value=d))
    seed = draw(st.integers(min_value=0, max_value=2**31))
    rng = random.Random(seed)
    s = draw(st.booleans()) if simple is None else simple
    return random_multivector(rng, d, m, COVECTOR, simple=s)


@settings(max_examples=60, deadline=None)
@given(multivectors())
def test_annihilator_dimension_bounds(v):
    if v.is_zero():
        return
    d, m = v.ambient_dim, v.grade
    assert ann1_covector(v).dim <= m
    assert ann1_vector(musical_iso(v)).dim <= d - m
    assert is_simple(v)[0] == plucker_simple(v) == (ann1_covector(v).dim == m)


@settings(max_examples=40, deadline=None)
@given(multivectors(simple=True))
def test_simple_factorisation_reproduces_input(v):
    if v.is_zero():
        return
    ok, factors = is_simple(v)
    assert ok
    prod = factors[0]
    for f in factors[1:]:
        prod = wedge(prod, f)
    assert prod == v


def _signed_permutation(v: MultiVector, perm, signs) -> MultiVector:
    out = None
    for mask, c in v.terms:
        term = MultiVector.basis(v.ambient_dim, (), v.variance).scale(c)
        for i in indices_of(mask):
            term = wedge(term, unit(v.ambient_dim, perm[i - 1] + 1, v.variance).scale(signs[i - 1]))
        out = term if out is None else out + term
    return out


@settings(max_examples=40, deadline=None)
@given(multivectors(), st.randoms(use_true_random=False))
def test_annihilator_dim_invariant_under_signed_permutations(v, rnd):
    if v.is_zero():
        return
    d = v.ambient_dim
    perm = list(range(d))
    rnd.shuffle(perm)
    signs = [rnd.choice((-1, 1)) for _ in range(d)]
    w = _signed_permutation(v, perm, signs)
    assert ann1_covector(w).dim == ann1_covector(v).dim


@settings(max_examples=60, deadline=None)
@given(multivectors(), multivectors())
def test_wedge_bilinear(a, b):
    if a.ambient_dim != b.ambient_dim:
        return
    two = Fraction(2)
    assert wedge(a.scale(two), b) == wedge(a, b).scale(two)
    assert wedge(a + a, b) == wedge(a, b) + wedge(a, b)


def test_lemma_oracle_examples():
    assert lemma_ab_oracle(4, 2, 100).passed
    assert lemma_ab_oracle(3, 3, 10).passed
    assert lemma_ab_oracle(5, 2, 200).passed
    with pytest.raises(ValueError):
        lemma_ab_oracle(7, 2, 1)


def test_plucker_rejects_known_nonsimple():
    assert not plucker_simple(cov(4, {(1, 2): 1, (3, 4): 1}))
    assert plucker_simple(cov(4, {(1, 2): 1, (1, 3): 1}))
