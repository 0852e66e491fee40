import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmetric.automorphism import (IDENTITY, Composite, Inversion, Moebius, Rotation, compose, conjugate,
                                    disc_moebius, disc_sequence, from_json, real_jacobian)
from invmetric.domain import Annulus, Disc, MoebiusImage, euclidean_boundary_distance, four_holed_disc, \
    rigid_three_holed_disc
from invmetric.errors import InvalidAutomorphism, InvalidGroup
from invmetric.group import (circle_group, conjugate_group, finite_group, haar_nodes, self_map_residual,
                             trivial_group)

PHI = Moebius(1, 0.5, 0.5, 1)
RNG = np.random.default_rng(7)
ZS = 1.2 + 0.5 * RNG.uniform(-1, 1, 32) + 0.5j * RNG.uniform(-1, 1, 32)


def test_disc_sequence_at_origin():
    assert disc_sequence(10).apply(0) == pytest.approx(0.9, abs=1e-15)


def test_rotation_quarter_turn():
    assert abs(Rotation(np.pi / 2).apply(1.0) - 1j) < 1e-15


def test_inversion_swaps_annulus_circles():
    inv = Inversion(2)
    assert inv.apply(1.0) == 2.0
    assert self_map_residual(inv, Annulus(1, 2)) < 1e-14


def test_derivatives():
    assert abs(Rotation(0.3).derivative(0.7 + 0.2j) - np.exp(0.3j)) < 1e-15
    assert Inversion(2).derivative(1.0) == -2
    assert IDENTITY.derivative(0.4) == 1


def test_real_jacobian_layout():
    J = real_jacobian(Rotation(0.3), 0.5)
    d = np.exp(0.3j)
    np.testing.assert_allclose(J, [[d.real, -d.imag], [d.imag, d.real]])


def test_composite_chain_rule_and_order():
    f = Composite((Rotation(0.4), Inversion(2), PHI))
    z = ZS[:5]
    np.testing.assert_allclose(f.apply(z), PHI.apply(Inversion(2).apply(Rotation(0.4).apply(z))))
    s = 1e-6
    fd = (f.apply(z + s) - f.apply(z - s)) / (2 * s)
    np.testing.assert_allclose(f.derivative(z), fd, rtol=1e-8)


def test_inverse_roundtrip():
    for a in (Rotation(1.1), Inversion(2), PHI, compose(PHI, Rotation(0.2), Inversion(0.5))):
        np.testing.assert_allclose(a.inverse().apply(a.apply(ZS)), ZS, atol=1e-12)


def test_json_roundtrip():
    for a in (Rotation(1.1), Inversion(2), PHI, Composite((Rotation(0.1), Inversion(2)))):
        np.testing.assert_allclose(from_json(a.to_json()).apply(ZS), a.apply(ZS), atol=1e-14)


def test_singular_moebius_rejected():
    with pytest.raises(InvalidAutomorphism):
        Moebius(1, 2, 2, 4)


def test_haar_nodes_examples():
    rots = [Rotation(np.pi / 2 * k) for k in range(4)]
    G = finite_group(four_holed_disc(), rots)
    nodes = haar_nodes(G, 99)
    assert len(nodes) == 4 and all(w == 0.25 for _, w in nodes)
    C = circle_group(Annulus(1, 2))
    nodes = haar_nodes(C, 8)
    assert len(nodes) == 8
    for k, (a, w) in enumerate(nodes):
        assert w == 1 / 8
        assert abs(a.apply(1.0) - np.exp(2j * np.pi * k / 8)) < 1e-15
    CI = circle_group(Annulus(1, 2), inversion=2.0)
    nodes = haar_nodes(CI, 16)
    assert len(nodes) == 32 and all(w == 1 / 32 for _, w in nodes)
    assert sum(w for _, w in nodes) == pytest.approx(1.0, abs=1e-15)


def test_rotation_rejected_on_asymmetric_holes():
    D = rigid_three_holed_disc()
    assert self_map_residual(Rotation(0.1), D) > 1e-3
    with pytest.raises(InvalidGroup):
        finite_group(D, [IDENTITY, Rotation(0.1)])


def test_rotation_residual_annulus():
    assert self_map_residual(Rotation(0.77), Annulus(0.25, 1)) < 1e-14


def test_finite_group_not_closed_rejected():
    with pytest.raises(InvalidGroup):
        finite_group(Disc(0, 1), [IDENTITY, Rotation(0.5)])


def test_conjugate_by_identity():
    base = circle_group(Annulus(0.25, 1))
    C = conjugate_group(base, IDENTITY)
    for (a, _), (b, _) in zip(C.nodes(8), base.nodes(8)):
        np.testing.assert_allclose(a.apply(ZS * 0.5), b.apply(ZS * 0.5), atol=1e-14)


def test_conjugated_annulus_group():
    base = circle_group(Annulus(0.25, 1), inversion=0.25)
    C = conjugate_group(base, PHI)
    A = MoebiusImage(Annulus(0.25, 1), PHI)
    p = 0.3 + 0.4j
    for (a, _), (b, _) in zip(C.nodes(16), base.nodes(16)):
        assert self_map_residual(a, A) < 1e-9
        assert abs(a.apply(PHI.apply(p)) - PHI.apply(b.apply(p))) < 1e-12
    auto = circle_group(A, inversion=0.25)
    for (a, _), (b, _) in zip(auto.nodes(16), C.nodes(16)):
        assert abs(a.apply(0.2) - b.apply(0.2)) < 1e-12


def test_conjugate_convention():
    a = Rotation(0.5)
    c = conjugate(a, PHI)
    np.testing.assert_allclose(c.apply(PHI.apply(ZS * 0.3)), PHI.apply(a.apply(ZS * 0.3)), atol=1e-13)


@pytest.mark.parametrize("j", [2, 10, 100])
def test_noncompact_sequence_distance(j):
    assert euclidean_boundary_distance(Disc(0, 1), disc_sequence(j).apply(0.0)) == pytest.approx(1 / j, abs=1e-15)


def test_group_axioms_conjugated_nodes():
    C = circle_group(MoebiusImage(Annulus(0.25, 1), PHI), inversion=0.25)
    nodes = [a for a, _ in C.nodes(8)]
    z = PHI.apply(0.5 * np.exp(1j * np.linspace(0, 6, 32)))
    table = np.stack([a.apply(z) for a in nodes])
    for f in nodes:
        for g in nodes:
            img = g.apply(f.apply(z))
            assert np.min(np.max(np.abs(table - img), axis=1)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(0, 2 * np.pi))
def test_disc_automorphisms_preserve_disc(x, y, theta):
    a = complex(x, y)
    if abs(a) >= 0.95:
        return
    m = disc_moebius(a, theta)
    w = m.apply(np.exp(1j * np.linspace(0, 2 * np.pi, 32)))
    assert np.max(np.abs(np.abs(w) - 1)) < 1e-12
    assert abs(m.apply(a)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_rotation_composition(s, t):
    np.testing.assert_allclose(compose(Rotation(s), Rotation(t)).apply(ZS), Rotation(s + t).apply(ZS), atol=1e-13)


def test_trivial_group():
    nodes = haar_nodes(trivial_group(Disc(0, 1)), 5)
    assert len(nodes) == 1 and nodes[0][1] == 1.0
