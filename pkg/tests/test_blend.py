import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import interior_samples
from invmetric.domain import Annulus, Disc, GridSpec
from invmetric.errors import InvalidInput, OutsideTube, ProjectionBreakdown
from invmetric.group import haar_nodes
from invmetric.metric import conformal_field, euclidean
from invmetric.blend import (Cutoff, blend_H, blend_Htilde, classify_layer, cutoff_eval, default_delta,
                             h_distance_field, inheritance_report, product_metric_Hstar, smooth_step,
                             write_layers_csv)

DISC = Disc(0, 1)


@pytest.fixture(scope="module")
def disc_dist():
    return h_distance_field(DISC, euclidean(DISC), GridSpec.for_domain(DISC, 128), tube_width=0.5)


def test_cutoff_examples():
    c = Cutoff(0.1, 0.2)
    assert cutoff_eval(c, 0.1) == 0
    assert cutoff_eval(c, 0.2) == 1
    assert cutoff_eval(c, 0.15) == pytest.approx(0.5, abs=1e-15)
    assert c(-5) == 0 and c(5) == 1
    with pytest.raises(InvalidInput):
        Cutoff(1, 1)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1, 2))
def test_smooth_step_symmetry(t):
    assert smooth_step(t) + smooth_step(1 - t) == pytest.approx(1, abs=1e-14)
    assert 0 <= smooth_step(t) <= 1


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.9), st.floats(0.0005, 0.001))
def test_smooth_step_increasing(t, dt):
    assert smooth_step(t + dt) > smooth_step(t)


def test_classify_layer_examples():
    d = 0.3
    assert classify_layer(d / 6, d) == "P"
    assert classify_layer(d, d) == "A"
    assert classify_layer(2 * d, d) == "B"
    np.testing.assert_array_equal(classify_layer(np.array([d / 3, 4 * d / 3]), d), ["A", "B"])


def test_euclidean_disc_distance(disc_dist):
    h = disc_dist.spec.hx
    assert abs(disc_dist.value(0.0) - 1) <= 2 * h
    z = interior_samples(DISC, 200, seed=2)
    d = disc_dist.value(z)
    assert np.all(d >= 0)
    assert np.max(np.abs(d - (1 - np.abs(z)))) <= 2 * h


def test_euclidean_annulus_distance():
    A = Annulus(1, 2)
    spec = GridSpec.for_domain(A, 128)
    dg = h_distance_field(A, euclidean(A), spec)
    for z in (1.5, 1.5j, -1.5 * np.exp(0.3j)):
        assert abs(dg.value(z) - 0.5) <= 2 * spec.hx


def test_distance_scaling():
    spec = GridSpec.for_domain(DISC, 128)
    z = interior_samples(DISC, 200, seed=3, margin=0.05)
    d1 = h_distance_field(DISC, euclidean(DISC), spec).value(z)
    four = conformal_field(DISC, lambda w: 4 * np.ones(np.shape(w)), "scaled")
    d2 = h_distance_field(DISC, four, spec).value(z)
    assert np.max(np.abs(d2 / d1 - 2)) / 2 < 0.02


def test_refinement_study():
    """Cone-tip error shrinks with h; elsewhere the error is stencil-limited."""
    z = interior_samples(DISC, 300, seed=1)
    tip, bulk = [], []
    for n in (128, 256, 512):
        dg = h_distance_field(DISC, euclidean(DISC), GridSpec.for_domain(DISC, n))
        tip.append(abs(dg.value(0.0) - 1))
        bulk.append(np.max(np.abs(dg.value(z) - (1 - np.abs(z)))))
    assert tip[1] < 0.6 * tip[0] and tip[2] < 0.6 * tip[1]
    assert max(bulk) < 1.5e-3
    wide = h_distance_field(DISC, euclidean(DISC), GridSpec.for_domain(DISC, 128), radius=8)
    assert np.max(np.abs(wide.value(z) - (1 - np.abs(z)))) < bulk[0]


def test_blend_H_plateaus(disc_dist):
    h = euclidean(DISC)
    b = conformal_field(DISC, lambda w: 3 * np.ones(np.shape(w)), "three")
    eps = 0.3
    H = blend_H(h, b, disc_dist, eps)
    z = interior_samples(DISC, 300, seed=4)
    d = disc_dist.value(z)
    g = H.raw(z)
    np.testing.assert_array_equal(g[d >= 2 * eps / 3], b.raw(z[d >= 2 * eps / 3]))
    np.testing.assert_array_equal(g[d <= eps / 3], h.raw(z[d <= eps / 3]))
    mid = (d > eps / 3) & (d < 2 * eps / 3)
    assert mid.any() and np.all((g[mid, 0, 0] >= 1) & (g[mid, 0, 0] <= 3))
    np.testing.assert_array_equal(blend_H(h, h, disc_dist, eps).raw(z), h.raw(z))


def test_hstar_euclidean_disc(disc_dist):
    g = product_metric_Hstar(euclidean(DISC), disc_dist, 0.9)
    w, v = np.linalg.eigh(g)
    # normal (radial) direction has eigenvalue 1, tangential 1/|z|^2
    assert w[0] == pytest.approx(1.0, abs=1e-2)
    assert w[1] == pytest.approx(1 / 0.81, rel=1e-2)
    assert abs(v[0, 0]) == pytest.approx(1, abs=1e-2)


def test_hstar_normal_and_orthogonality(conj_pipeline):
    pipe = conj_pipeline
    z = interior_samples(pipe.h.domain, 400, seed=5)
    z = z[pipe.dist.value(z) < pipe.delta][:60]
    G = product_metric_Hstar(pipe.h, pipe.dist, z)
    g = pipe.dist.gradient(z)
    hz = pipe.h.raw(z)
    nu = np.einsum("nij,nj->ni", np.linalg.inv(hz), g)
    nu = nu / np.sqrt(np.einsum("ni,nij,nj->n", nu, hz, nu))[:, None]
    tau = np.stack([-g[:, 1], g[:, 0]], axis=-1)
    assert np.max(np.abs(np.einsum("ni,nij,nj->n", nu, G, nu) - 1)) < 5e-2
    cross = np.abs(np.einsum("ni,nij,nj->n", tau, G, nu))
    norm = np.sqrt(np.einsum("ni,nij,nj->n", tau, G, tau) * np.einsum("ni,nij,nj->n", nu, G, nu))
    assert np.max(cross / norm) < 1e-2


def test_hstar_errors(disc_dist, monkeypatch):
    narrow = h_distance_field(DISC, euclidean(DISC), GridSpec.for_domain(DISC, 32), tube_width=0.1)
    with pytest.raises(OutsideTube):
        product_metric_Hstar(euclidean(DISC), narrow, 0.0)
    monkeypatch.setattr(type(disc_dist), "projection_jacobian", lambda self, z, step=None: np.zeros(np.shape(z) + (2, 2)))
    with pytest.raises(ProjectionBreakdown):
        product_metric_Hstar(euclidean(DISC), disc_dist, 0.9)


def test_htilde_requires_consistent_parameters(disc_dist):
    h = euclidean(DISC)
    H = blend_H(h, h, disc_dist, 0.2)
    with pytest.raises(InvalidInput):
        blend_Htilde(h, H, disc_dist, 0.3)
    with pytest.raises(InvalidInput):
        blend_Htilde(h, blend_H(h, h, disc_dist, 2.0), disc_dist, 1.0)


def test_htilde_plateaus_exact(conj_pipeline):
    pipe = conj_pipeline
    z = interior_samples(pipe.h.domain, 600, seed=6)
    d = pipe.dist.value(z)
    lay = classify_layer(d, pipe.delta)
    g = pipe.Htilde.raw(z)
    P, A, B = lay == "P", lay == "A", lay == "B"
    assert P.any() and A.any() and B.any()
    np.testing.assert_array_equal(g[P], product_metric_Hstar(pipe.h, pipe.dist, z[P]))
    upper = A & (d >= 2 * pipe.delta / 3)
    lower = A & (d <= 2 * pipe.delta / 3)
    np.testing.assert_array_equal(g[upper], pipe.H.raw(z[upper]))
    np.testing.assert_array_equal(pipe.H.raw(z[lower]), pipe.h.raw(z[lower]))
    np.testing.assert_array_equal(g[B], pipe.bergman.raw(z[B]))
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_eikonal_on_tube(conj_pipeline):
    pipe = conj_pipeline
    z = interior_samples(pipe.h.domain, 500, seed=7)
    z = z[pipe.dist.value(z) < 2 * pipe.delta]
    g = pipe.dist.gradient(z)
    n = np.sqrt(np.einsum("ni,nij,nj->n", g, np.linalg.inv(pipe.h.raw(z)), g))
    assert np.max(np.abs(n - 1)) < 0.1


def test_layer_equivariance(conj_pipeline, conj_group):
    pipe = conj_pipeline
    z = interior_samples(pipe.h.domain, 500, seed=8)
    d0 = pipe.dist.value(z)
    cell = pipe.dist.spec.hx * np.sqrt(pipe.h.raw(z)[:, 0, 0])
    thr = np.array([pipe.delta / 3, 4 * pipe.delta / 3])
    for a, _ in haar_nodes(conj_group, 64):
        d1 = pipe.dist.value(a.apply(z))
        differ = classify_layer(d0, pipe.delta) != classify_layer(d1, pipe.delta)
        near = np.min(np.abs(np.stack([d0, d1])[..., None] - thr), axis=(0, 2)) <= cell
        assert not np.any(differ & ~near)


def test_inheritance_report(conj_pipeline, conj_group):
    pipe = conj_pipeline
    z = interior_samples(pipe.h.domain, 200, seed=9, margin=pipe.dist.spec.hx)
    rep = inheritance_report(pipe, conj_group, z, 97)
    print("inheritance", rep)
    assert rep["residual_h"] < 1e-8
    assert rep["unexplained"] < 5 * rep["residual_h"] + 1e-2
    assert rep["residual_Htilde"] <= rep["grid_term"] + rep["unexplained"] + 1e-12


def test_default_delta():
    assert default_delta(Annulus(1, 2)) == pytest.approx(0.075, rel=1e-6)


def test_layers_csv(tmp_path, disc_dist):
    n = write_layers_csv(tmp_path / "l.csv", disc_dist, 0.3)
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "x,y,dist,gx,gy,layer" and len(lines) == n + 1
    assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} == {"P", "A", "B"}
