import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PHI, interior_samples
from invmetric.automorphism import IDENTITY, Inversion, Rotation, disc_moebius
from invmetric.domain import Annulus, Disc, GridSpec, MoebiusImage, four_holed_disc, sample_interior
from invmetric.errors import NumericalBreakdown, OutsideDomain
from invmetric.group import circle_group, finite_group, trivial_group
from invmetric.metric import (MetricField, average, check_spd, euclidean, eval_metric, grid_interpolated,
                              invariance_residual, poincare, pullback, write_metric_csv)

ROUNDOFF = 1e-13


def diag_field(domain):
    def ev(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape + (2, 2))
        out[..., 0, 0] = 1 + z.real
        out[..., 1, 1] = 1
        return out
    return MetricField(ev, domain, "diag")


def test_euclidean_identity():
    np.testing.assert_array_equal(euclidean(Disc(0, 1))(0.3 + 0.1j), np.eye(2))


def test_poincare_values():
    P = poincare()
    np.testing.assert_allclose(P(0.0), np.eye(2))
    np.testing.assert_allclose(P(0.5), 16 / 9 * np.eye(2), rtol=1e-15)
    with pytest.raises(OutsideDomain):
        P(1.0)


def test_eval_outside_rejected():
    with pytest.raises(OutsideDomain):
        euclidean(Annulus(1, 2))(0.5)


def test_non_spd_breakdown():
    bad = MetricField(lambda z: -np.broadcast_to(np.eye(2), np.shape(z) + (2, 2)), Disc(0, 1), "bad")
    with pytest.raises(NumericalBreakdown):
        bad(0.1)
    with pytest.raises(NumericalBreakdown):
        check_spd(np.array([[1.0, 0.5], [0.4, 1.0]]))


def test_pullback_examples():
    E = euclidean(Annulus(1, 2))
    np.testing.assert_allclose(pullback(E, IDENTITY, 1.5), np.eye(2))
    np.testing.assert_allclose(pullback(E, Rotation(0.7), 1.5), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(pullback(E, Inversion(2), 1.0), 4 * np.eye(2), atol=1e-14)


def test_average_trivial_group():
    D = Annulus(0.25, 1)
    f = diag_field(D)
    z = np.array([0.5, 0.3 + 0.4j])
    np.testing.assert_array_equal(average(trivial_group(D), f).raw(z), f.raw(z))


def test_average_half_turn_example():
    D = Annulus(0.25, 1)
    G = finite_group(D, [IDENTITY, Rotation(np.pi)])
    np.testing.assert_allclose(average(G, diag_field(D))(0.5), np.eye(2), atol=1e-15)


def test_annulus_rotation_average_is_euclidean():
    A = Annulus(1, 2)
    S = interior_samples(A, 100)
    h = average(circle_group(A), euclidean(A), 64)
    assert np.max(np.abs(h.raw(S) - np.eye(2))) < 1e-12


def test_invariance_examples(conj_annulus, conj_group):
    A = Annulus(1, 2)
    assert invariance_residual(euclidean(A), circle_group(A), interior_samples(A, 50), 16) < 1e-14
    S = interior_samples(conj_annulus, 50)
    assert invariance_residual(euclidean(conj_annulus), conj_group, S, 16) > 1e-3


def _four_rotations(D):
    return finite_group(D, [Rotation(np.pi / 2 * k) for k in range(4)])


def test_finite_average_exact_and_idempotent():
    D = four_holed_disc()
    G = _four_rotations(D)
    S = interior_samples(D, 200)
    base = diag_field(D)
    h = average(G, base)
    assert invariance_residual(h, G, S) < 1e-12
    np.testing.assert_allclose(average(G, h).raw(S), h.raw(S), atol=1e-12)


def test_quadrature_convergence(conj_annulus, conj_group):
    S = interior_samples(conj_annulus, 200)
    res = [invariance_residual(average(conj_group, euclidean(conj_annulus), n), conj_group, S, 97)
           for n in (16, 32, 64, 128)]
    assert res[-1] < 1e-8
    for a, b in zip(res, res[1:]):
        # each doubling at least halves the residual until the roundoff floor
        assert b <= max(0.5 * a, ROUNDOFF)


def test_tree_sum_is_order_stable(conj_annulus, conj_group):
    h = average(conj_group, euclidean(conj_annulus), 64)
    S = interior_samples(conj_annulus, 20)
    np.testing.assert_array_equal(h.raw(S), h.raw(S))
    perm = np.random.default_rng(1).permutation(len(S))
    np.testing.assert_array_equal(h.raw(S[perm]), h.raw(S)[perm])


def test_grid_interpolated_spd():
    D = Disc(0, 1)
    spec = GridSpec.for_domain(D, 32)
    rng = np.random.default_rng(3)
    z = spec.nodes()
    vals = np.stack([2 + np.cos(3 * z.real), 0.9 * np.sin(2 * z.imag), 1.5 + z.real ** 2], axis=-1)
    vals += 0.05 * rng.standard_normal(vals.shape)
    field = grid_interpolated(D, spec, vals)
    pts = interior_samples(D, 1000, seed=4)
    g = field(pts)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    assert np.array_equal(g[:, 0, 1], g[:, 1, 0])


def test_metric_csv(tmp_path):
    D = Disc(0, 1)
    spec = GridSpec.for_domain(D, 16)
    n = write_metric_csv(tmp_path / "m.csv", poincare(), spec)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "x,y,g11,g12,g22"
    assert len(lines) == n + 1 == len(sample_interior(D, spec)) + 1
    x, y, g11, g12, g22 = map(float, lines[1].split(","))
    assert g11 == pytest.approx(1 / (1 - x * x - y * y) ** 2, rel=1e-15) and g12 == 0


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.8, 0.8), st.floats(0, 6.3),
       st.floats(0.5, 3), st.floats(-0.9, 0.9), st.floats(0.5, 3))
def test_pullback_spd_by_congruence(x, y, theta, a, c, d):
    z = complex(x, y)
    if abs(z) >= 0.8:
        return
    m = np.array([[a, c * np.sqrt(a * d)], [c * np.sqrt(a * d), d]])
    field = MetricField(lambda w: np.broadcast_to(m, np.shape(w) + (2, 2)).copy(), Disc(0, 1), "const")
    g = pullback(field, disc_moebius(0.3 - 0.2j, theta), z)
    assert np.allclose(g, g.T, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(g) > 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7), st.floats(-0.7, 0.7))
def test_poincare_invariant_under_disc_automorphisms(x, y, u, v):
    z, a = complex(x, y), complex(u, v)
    if abs(z) >= 0.7 or abs(a) >= 0.7:
        return
    P = poincare()
    np.testing.assert_allclose(pullback(P, disc_moebius(a, 0.4), z), P.raw(z), rtol=1e-10, atol=1e-12)
