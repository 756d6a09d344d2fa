import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavecone.ell import ell
from wavecone.exact import Subspace
from wavecone.measures import (
    GridMeasure,
    VectorGridMeasure,
    load_measure,
    plane_measure,
    save_measure,
    sharp_measure,
)
from wavecone.operators import make_curl, make_div


def lebesgue(d, n):
    h = 2.0 / n
    return GridMeasure(d, n, h, np.full((n,) * d, h**d))


def test_grid_measure_validation():
    with pytest.raises(ValueError):
        GridMeasure(2, 4, 0.5, np.zeros((4, 3)))
    with pytest.raises(ValueError):
        GridMeasure(2, 4, 0.5, -np.ones((4, 4)))
    mu = lebesgue(2, 8)
    with pytest.raises(ValueError):
        mu.mass[0, 0] = 1.0
    assert mu.total == pytest.approx(4.0)
    assert mu.cell_of([-1.0, 0.999]) == (0, 7)
    with pytest.raises(ValueError):
        mu.cell_of([1.5, 0])


def test_box_mass_fractional_cells():
    mu = lebesgue(2, 8)
    assert mu.box_mass([-0.5, -0.5], [0.5, 0.5]) == pytest.approx(1.0)
    assert mu.box_mass([-0.1, -0.1], [0.1, 0.1]) == pytest.approx(0.04)


def test_polar_must_be_unit():
    base = lebesgue(2, 4)
    with pytest.raises(ValueError):
        VectorGridMeasure(base, np.ones((4, 4, 2)))
    mu = VectorGridMeasure.constant(base, [3.0, 4.0])
    assert np.allclose(mu.constant_polar, [0.6, 0.8])
    assert mu.values().shape == (4, 4, 2)


def test_sharp_measure_div_segment():
    op = make_div(2, 2)
    cert = ell(op)
    mu = sharp_measure(op, cert, 128, 1 / 64)
    assert mu.base.total == pytest.approx(2.0, rel=0.02)
    rows = np.nonzero(mu.base.mass.sum(axis=0))[0]
    assert len(rows) == 1  # a single strip, the x-axis
    assert np.allclose(mu.constant_polar, [1, 0, 0, 0])


def test_sharp_measure_curl_lives_on_invariance_space():
    op = make_curl(2, 1)
    cert = ell(op)
    mu = sharp_measure(op, cert, 64)
    support = np.argwhere(mu.base.mass > 0)
    v = np.array([float(x) for x in cert.invariance_space.basis[0]])
    normal = np.array([-v[1], v[0]])
    centers = (support + 0.5) * mu.base.h - 1.0
    assert np.abs(centers @ normal).max() <= mu.base.h


def test_full_space_is_uniform():
    mu = plane_measure(Subspace.full(3), 16)
    assert np.allclose(mu.mass, mu.mass.flat[0])
    assert mu.total == pytest.approx(8.0)


def test_dirac_for_zero_dimensional_space():
    from wavecone.ell import EllCertificate
    from fractions import Fraction

    op = make_div(1, 2)
    cert = EllCertificate(0, (Fraction(1), Fraction(0)), Subspace.zero(2), "certified-upper-bound", {})
    with pytest.warns(UserWarning):
        mu = sharp_measure(op, cert, 16)
    assert mu.base.total == 1.0 and mu.base.mass[8, 8] == 1.0


@pytest.mark.parametrize(
    "basis, total",
    [
        ([(1, 0, 0)], 2.0),
        ([(1, 0, 0), (0, 1, 0)], 4.0),
        ([(1, 1, 0)], 2 * np.sqrt(2)),
        ([(1, 1, 1)], 2 * np.sqrt(3)),
        ([(1, 0, 1), (0, 1, 1)], None),
    ],
)
def test_plane_measure_totals(basis, total):
    mu = plane_measure(Subspace.span(3, basis), 64)
    if total is not None:
        assert mu.total == pytest.approx(total, rel=0.02)
    # mass of a small centered box matches H^l of the plane inside it
    lo, hi = np.full(3, -0.25), np.full(3, 0.25)
    if basis == [(1, 0, 0), (0, 1, 0)]:
        assert mu.box_mass(lo, hi) == pytest.approx(0.25, rel=0.05)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=3, max_size=3), st.integers(1, 6))
def test_plane_measure_exactly_invariant_under_lattice_shifts(v, k):
    if not any(v):
        return
    space = Subspace.span(3, [v])
    mu = plane_measure(space, 32)
    step = np.array(space.integer_lattice()[0]) * k
    shift = tuple(int(s) for s in step)
    a = mu.mass[tuple(slice(max(0, -s), 32 - max(0, s)) for s in shift)]
    b = mu.mass[tuple(slice(max(0, s), 32 - max(0, -s)) for s in shift)]
    assert np.array_equal(a, b)


def test_save_load_roundtrip(tmp_path):
    op = make_div(2, 2)
    mu = sharp_measure(op, ell(op), 32)
    save_measure(mu, tmp_path / "mu")
    back = load_measure(tmp_path / "mu")
    assert isinstance(back, VectorGridMeasure)
    assert np.array_equal(back.base.mass, mu.base.mass)
    assert np.array_equal(back.constant_polar, mu.constant_polar)
    raw = np.fromfile(tmp_path / "mu" / "mass.f64", dtype="<f8")
    assert raw.size == 32 * 32
    plain = lebesgue(2, 8)
    save_measure(plain, tmp_path / "leb")
    assert isinstance(load_measure(tmp_path / "leb"), GridMeasure)


def test_load_rejects_truncated(tmp_path):
    save_measure(lebesgue(2, 8), tmp_path / "m")
    (tmp_path / "m" / "mass.f64").write_bytes(b"\0" * 16)
    with pytest.raises(ValueError, match="expected 64"):
        load_measure(tmp_path / "m")
