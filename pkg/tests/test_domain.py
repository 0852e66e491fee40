import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invmetric.automorphism import Moebius
from invmetric.domain import (Annulus, Disc, DiscMinusDiscs, GridSpec, MoebiusImage, eval_defining,
                              euclidean_boundary_distance, four_holed_disc, from_json, grad_defining,
                              sample_interior)
from invmetric.errors import AmbiguousComponent, EmptySample, InvalidDomain, OutsideDomain

PHI = Moebius(1, 0.5, 0.5, 1)


def test_annulus_interior_point():
    assert eval_defining(Annulus(1, 2), 1.5) < 0


def test_disc_boundary_point_is_zero():
    assert eval_defining(Disc(0, 1), 1.0) == 0


def test_quadratic_form_at_origin():
    assert eval_defining(Disc(0, 1), 0.0, form="quadratic") == -1


def test_exterior_positive():
    assert eval_defining(Annulus(1, 2), 0.5) > 0
    assert eval_defining(Annulus(1, 2), 2.5) > 0
    assert eval_defining(four_holed_disc(), 0.5) > 0


def test_grad_radial():
    np.testing.assert_allclose(grad_defining(Disc(0, 1), 0.5), [1, 0])


def test_grad_inner_component_points_inward():
    g = grad_defining(Annulus(1, 2), 1.2)
    assert g[0] < 0 and g[1] == 0


def test_grad_quadratic():
    np.testing.assert_allclose(grad_defining(Disc(0, 1), 0.5, form="quadratic"), [1, 0])


def test_grad_ambiguous():
    with pytest.raises(AmbiguousComponent):
        grad_defining(Annulus(1, 2), 1.5)


def test_boundary_distance_examples():
    assert euclidean_boundary_distance(Annulus(1, 2), 1.5) == pytest.approx(0.5)
    assert euclidean_boundary_distance(Disc(0, 1), 0) == pytest.approx(1.0)
    with pytest.raises(OutsideDomain):
        euclidean_boundary_distance(Disc(0, 1), 2.0)


def test_moebius_image_inner_circle():
    A = MoebiusImage(Annulus(0.25, 1), PHI)
    inner = A.hole_circles[0]
    assert abs(inner.center - 10 / 21) < 1e-12
    assert abs(inner.radius - 4 / 21) < 1e-12
    outer = A.outer_circle
    assert abs(outer.center) < 1e-12 and abs(outer.radius - 1) < 1e-12


def test_moebius_image_circles_match_pushed_points():
    A = MoebiusImage(Annulus(0.25, 1), PHI)
    for base, img in zip(A.base.circles, A.circles):
        w = PHI.apply(base.points(64))
        assert np.max(np.abs(np.abs(w - img.center) - img.radius)) < 1e-12


def test_invalid_domains():
    with pytest.raises(InvalidDomain):
        Annulus(2, 1)
    with pytest.raises(InvalidDomain):
        DiscMinusDiscs(Disc(0, 1), (Disc(0.5, 0.2), Disc(0.6, 0.2)))
    with pytest.raises(InvalidDomain):
        DiscMinusDiscs(Disc(0, 1), (Disc(0.9, 0.2),))
    with pytest.raises(InvalidDomain):
        from_json({"infinitely_connected": {}})


def test_non_injective_image_rejected():
    # pole of the map inside the base closure
    with pytest.raises(InvalidDomain):
        MoebiusImage(Disc(0, 1), Moebius(1, 0, 1, -0.5))


def test_sample_interior_disc():
    spec = GridSpec.for_domain(Disc(0, 1), 16)
    z = sample_interior(Disc(0, 1), spec)
    assert len(z) > 0 and np.all(np.abs(z) < 1)


def test_sample_interior_margin_disc():
    spec = GridSpec.for_domain(Disc(0, 1), 65)
    z = sample_interior(Disc(0, 1), spec, margin=0.9)
    assert np.all(np.abs(z) <= 0.1 + 1e-12)


def test_sample_interior_margin_annulus():
    A = Annulus(1, 2)
    z = sample_interior(A, GridSpec.for_domain(A, 128), margin=0.45)
    assert np.all(np.abs(z) >= 1.45 - 1e-12) and np.all(np.abs(z) <= 1.55 + 1e-12)
    assert np.all(euclidean_boundary_distance(A, z) >= 0.45)


def test_sample_interior_empty_and_deterministic():
    spec = GridSpec.for_domain(Disc(0, 1), 16)
    with pytest.raises(EmptySample):
        sample_interior(Disc(0, 1), spec, margin=1.5)
    np.testing.assert_array_equal(sample_interior(Disc(0, 1), spec), sample_interior(Disc(0, 1), spec))


def test_gridspec_contains_domain():
    for d in (Disc(0, 1), Annulus(1, 2), four_holed_disc(), MoebiusImage(Annulus(0.25, 1), PHI)):
        assert GridSpec.for_domain(d, 32).contains_domain(d)
    with pytest.raises(Exception):
        GridSpec.for_domain(Disc(0, 1), 4)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_samples_negative_and_positive_distance(x, y):
    A = MoebiusImage(Annulus(0.25, 1), PHI)
    z = complex(x, y)
    if A.rho(z) < 0:
        assert euclidean_boundary_distance(A, z) > 0
    else:
        with pytest.raises(OutsideDomain):
            euclidean_boundary_distance(A, z)


def test_json_roundtrip():
    for d in (Disc(0.5j, 2), Annulus(1, 2), four_holed_disc(), MoebiusImage(Annulus(0.25, 1), PHI)):
        assert from_json(d.to_json()).circles == d.circles
