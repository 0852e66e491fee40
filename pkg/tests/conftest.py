import numpy as np
import pytest

from invmetric.automorphism import Moebius
from invmetric.bergman import bergman_metric_field, bergman_model
from invmetric.blend import build_pipeline
from invmetric.domain import Annulus, GridSpec, MoebiusImage
from invmetric.group import circle_group
from invmetric.metric import average, euclidean

PHI = Moebius(1, 0.5, 0.5, 1)


def interior_samples(domain, count, seed=0, margin=0.0):
    """Uniform rejection samples inside ``domain`` at distance >= margin."""
    rng = np.random.default_rng(seed)
    oc = domain.outer_circle
    out = []
    while len(out) < count:
        z = oc.center + oc.radius * complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        if domain.rho(z) < 0 and domain.boundary_distance(z) >= margin:
            out.append(z)
    return np.array(out)


@pytest.fixture(scope="session")
def conj_annulus():
    return MoebiusImage(Annulus(0.25, 1.0), PHI)


@pytest.fixture(scope="session")
def conj_group(conj_annulus):
    return circle_group(conj_annulus, inversion=0.25)


@pytest.fixture(scope="session")
def conj_h(conj_annulus, conj_group):
    return average(conj_group, euclidean(conj_annulus), 64)


@pytest.fixture(scope="session")
def conj_pipeline(conj_annulus, conj_h):
    b = bergman_metric_field(bergman_model(conj_annulus))
    return build_pipeline(conj_h, b, GridSpec.for_domain(conj_annulus, 256), radius=5)
