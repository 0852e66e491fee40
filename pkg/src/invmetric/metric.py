"""Riemannian metrics on planar domains as fields of SPD 2x2 matrices.

A field is a vectorized evaluator: ``field(z)`` for an array of complex
points returns an array of shape ``z.shape + (2, 2)``. Conformal fields
(``lambda(z) * I``) also carry their scalar factor so curvature and
pullbacks can use it directly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .automorphism import Automorphism, as_moebius, real_jacobian
from .domain import BOUNDARY_TOL, Disc, GridSpec, PlanarDomain
from .errors import InvalidGroup, NumericalBreakdown, OutsideDomain
from .group import ADMIT_TOL, CompactGroup, haar_nodes, self_map_residual


@dataclass(eq=False)
class MetricField:
    evaluator: Callable
    domain: PlanarDomain
    tag: str
    smooth_to_boundary: bool = True
    factor: Callable | None = None
    factor_grad: Callable | None = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def conformal(self) -> bool:
        return self.factor is not None

    def __call__(self, z):
        return eval_metric(self, z)

    def raw(self, z):
        """Evaluate without the domain and SPD checks."""
        return self.evaluator(np.asarray(z, dtype=complex))

    def jacobian_of_factor(self, z):
        if self.factor_grad is None:
            raise AttributeError("field has no analytic factor gradient")
        return self.factor_grad(np.asarray(z, dtype=complex))


def scalar_to_matrix(lam):
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape + (2, 2))
    out[..., 0, 0] = lam
    out[..., 1, 1] = lam
    return out


def conformal_field(domain, factor, tag, smooth_to_boundary=True, factor_grad=None, meta=None):
    return MetricField(
        lambda z: scalar_to_matrix(factor(z)),
        domain,
        tag,
        smooth_to_boundary=smooth_to_boundary,
        factor=factor,
        factor_grad=factor_grad,
        meta=meta or {},
    )


def euclidean(domain: PlanarDomain) -> MetricField:
    return conformal_field(
        domain,
        lambda z: np.ones(np.shape(z)),
        "Euclidean",
        factor_grad=lambda z: np.zeros(np.shape(z) + (2,)),
    )


def poincare(domain: PlanarDomain | None = None) -> MetricField:
    """Poincare metric |dz| / (1 - |z|^2) of the unit disc, as a quadratic form."""
    domain = domain or Disc(0j, 1.0)

    def lam(z):
        return 1.0 / (1.0 - np.abs(z) ** 2) ** 2

    def grad(z):
        s = 1.0 - np.abs(z) ** 2
        g = 4.0 / s**3
        return np.stack([g * z.real, g * z.imag], axis=-1)

    return conformal_field(domain, lam, "Poincare", smooth_to_boundary=False, factor_grad=grad)


def check_spd(mats, where=None):
    """Raise NumericalBreakdown unless every matrix is symmetric positive definite."""
    mats = np.asarray(mats)
    sym = np.abs(mats[..., 0, 1] - mats[..., 1, 0])
    tr = mats[..., 0, 0] + mats[..., 1, 1]
    det = mats[..., 0, 0] * mats[..., 1, 1] - mats[..., 0, 1] * mats[..., 1, 0]
    bad = ~((sym <= 1e-12 * np.maximum(1.0, np.abs(tr))) & (tr > 0) & (det > 0))
    if np.any(bad):
        k = int(np.flatnonzero(np.ravel(bad))[0])
        diag = {"matrix": mats.reshape(-1, 2, 2)[k].tolist()}
        if where is not None:
            diag["point"] = complex(np.ravel(where)[k])
        raise NumericalBreakdown("metric is not symmetric positive definite", diag)


def eval_metric(field: MetricField, z):
    z = np.asarray(z, dtype=complex)
    rho = field.domain.rho(z)
    ok = rho <= BOUNDARY_TOL if field.smooth_to_boundary else rho < 0
    if not np.all(ok):
        bad = z.ravel()[np.flatnonzero(~np.atleast_1d(ok))[0]]
        raise OutsideDomain(f"{bad} is outside the domain of the {field.tag} field")
    g = field.evaluator(z)
    check_spd(g, z)
    return g


def pullback(field: MetricField, aut: Automorphism, z):
    """J^T G(alpha(z)) J with J the real Jacobian of alpha at z."""
    z = np.asarray(z, dtype=complex)
    w = aut.apply(z)
    g = field.raw(w)
    J = real_jacobian(aut, z)
    return np.einsum("...ki,...kl,...lj->...ij", J, g, J)


def _pullback_factor(field, aut, z):
    return np.abs(aut.derivative(z)) ** 2 * field.factor(aut.apply(z))


def tree_sum(terms):
    """Pairwise sum in a fixed layout, so results do not depend on call order."""
    terms = list(terms)
    while len(terms) > 1:
        nxt = [terms[i] + terms[i + 1] for i in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def average(group: CompactGroup, base: MetricField, n: int = 64, check: bool = True) -> MetricField:
    """Haar average of the pullbacks of ``base`` over ``haar_nodes(group, n)``."""
    nodes = haar_nodes(group, n)
    if check:
        for a, _ in nodes:
            if not self_map_residual(a, group.domain) < ADMIT_TOL:
                raise InvalidGroup(f"node {a} fails the self-map gate")
    fast = [(as_moebius(a), w) for a, w in nodes]
    meta = {"group": group.structure, "n": n, "nodes": len(nodes), "base": base.tag}

    if base.conformal:
        def factor(z):
            z = np.asarray(z, dtype=complex)
            return tree_sum(w * _pullback_factor(base, a, z) for a, w in fast)

        return conformal_field(group.domain, factor, f"Averaged({base.tag})",
                               smooth_to_boundary=base.smooth_to_boundary, meta=meta)

    def evaluator(z):
        return tree_sum(w * pullback(base, a, z) for a, w in fast)

    return MetricField(evaluator, group.domain, f"Averaged({base.tag})",
                       smooth_to_boundary=base.smooth_to_boundary, meta=meta)


def invariance_residual(field: MetricField, group: CompactGroup, samples, n: int = 64) -> float:
    """max over samples and nodes of ||alpha^*G(z) - G(z)||_F / max(1, ||G(z)||_F)."""
    z = np.asarray(samples, dtype=complex)
    g = field.raw(z)
    scale = np.maximum(1.0, np.linalg.norm(g, axis=(-2, -1)))
    worst = 0.0
    for a, _ in haar_nodes(group, n):
        diff = np.linalg.norm(pullback(field, a, z) - g, axis=(-2, -1)) / scale
        worst = max(worst, float(np.max(diff)))
    return worst


def spd_repair(mats, floor: float = 1e-10):
    """Symmetrize and clip eigenvalues from below."""
    mats = np.asarray(mats, dtype=float)
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    w, v = np.linalg.eigh(sym)
    w = np.maximum(w, floor)
    out = np.einsum("...ik,...k,...jk->...ij", v, w, v)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def grid_interpolated(domain: PlanarDomain, spec: GridSpec, values, tag="GridInterpolated") -> MetricField:
    """Bilinear interpolation of per-node (g11, g12, g22) with SPD repair.

    ``values`` has shape (ny, nx, 3); nodes outside the domain may hold any
    finite SPD filler.
    """
    values = np.asarray(values, dtype=float)

    def evaluator(z):
        comps = [bilinear(spec, values[..., k], z) for k in range(3)]
        m = np.empty(np.shape(z) + (2, 2))
        m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1] = comps[0], comps[1], comps[1], comps[2]
        return spd_repair(m)

    return MetricField(evaluator, domain, tag)


def bilinear(spec: GridSpec, values, z):
    """Bilinear interpolation of node values at points z (clamped to the grid)."""
    z = np.asarray(z, dtype=complex)
    fx = (z.real - spec.lo.real) / spec.hx
    fy = (z.imag - spec.lo.imag) / spec.hy
    i = np.clip(np.floor(fx).astype(int), 0, spec.nx - 2)
    j = np.clip(np.floor(fy).astype(int), 0, spec.ny - 2)
    tx = fx - i
    ty = fy - j
    v00 = values[j, i]
    v10 = values[j, i + 1]
    v01 = values[j + 1, i]
    v11 = values[j + 1, i + 1]
    return (v00 * (1 - tx) * (1 - ty) + v10 * tx * (1 - ty) + v01 * (1 - tx) * ty + v11 * tx * ty)


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_metric_csv(path, field: MetricField, spec: GridSpec) -> int:
    """Interior grid nodes, row-major, header x,y,g11,g12,g22. Returns row count."""
    z = spec.nodes().ravel()
    inside = field.domain.rho(z) < 0
    zi = z[inside]
    g = field.raw(zi)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "g11", "g12", "g22"])
        for p, m in zip(zi, g):
            w.writerow([fmt(p.real), fmt(p.imag), fmt(m[0, 0]), fmt(m[0, 1]), fmt(m[1, 1])])
    return int(inside.sum())
