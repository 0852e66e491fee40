"""Boundary-distance fields and the blended metrics built from them.

The pipeline is: averaged metric h -> grid distance to the boundary in h
-> H (h near the boundary, Bergman inside) -> H~ (product metric H* in a
thin boundary collar, H elsewhere). With the collar parameter delta the
H stage uses eps = 2 delta, which yields three layers: P (product), A
(averaged), B (Bergman).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .domain import GridSpec, PlanarDomain
from .errors import InvalidInput, OutsideTube, ProjectionBreakdown
from .gridgraph import DEFAULT_RADIUS, GridGraph
from .metric import MetricField, bilinear, fmt, spd_repair


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    # subnormal x overflows -1/x to -inf, whose exponential is the correct 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, s(t) + s(1-t) = 1."""
    t = np.asarray(t, dtype=float)
    a = _bump(t)
    b = _bump(1.0 - t)
    return a / (a + b)


@dataclass(frozen=True)
class Cutoff:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput("cutoff needs lo < hi")

    def __call__(self, x):
        return cutoff_eval(self, x)


def cutoff_eval(c: Cutoff, x):
    out = smooth_step((np.asarray(x, dtype=float) - c.lo) / (c.hi - c.lo))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(eq=False)
class DistanceGrid:
    """Metric distance to the boundary sampled on a grid.

    ``dist`` holds interior values and a signed (negative) extension at
    exterior nodes next to the boundary so bilinear interpolation is defined
    up to the boundary. ``nearest`` is the boundary point reached by
    backtracking the shortest-path tree.
    """

    spec: GridSpec
    domain: PlanarDomain
    h: MetricField
    dist: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    nearest: np.ndarray
    tube_width: float
    flow_steps: int = 12

    def value(self, z):
        return bilinear(self.spec, self.dist, z)

    def gradient(self, z):
        return np.stack([bilinear(self.spec, self.gx, z), bilinear(self.spec, self.gy, z)], axis=-1)

    def _direction(self, z):
        """dz/ds along which the distance drops at unit rate."""
        g = self.gradient(z)
        if self.h.conformal:
            v = g
        else:
            hinv = np.linalg.inv(self.h.raw(z))
            v = np.einsum("...ij,...j->...i", hinv, g)
        rate = np.maximum(np.einsum("...i,...i->...", g, v), 1e-12)
        v = -v / rate[..., None]
        return v[..., 0] + 1j * v[..., 1]

    def project(self, z):
        """Boundary point reached by following the distance gradient flow.

        Fixed-step RK4 in distance time from d(z) down to 0, then a snap
        onto the nearest boundary circle.
        """
        z = np.asarray(z, dtype=complex)
        d0 = np.maximum(self.value(z), 0.0)
        ds = d0 / self.flow_steps
        for _ in range(self.flow_steps):
            k1 = self._direction(z)
            k2 = self._direction(z + 0.5 * ds * k1)
            k3 = self._direction(z + 0.5 * ds * k2)
            k4 = self._direction(z + ds * k3)
            z = z + ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        return self.domain.nearest_boundary_point(z)

    def projection_jacobian(self, z, step=None):
        """Real 2x2 Jacobian of ``project`` by central differences."""
        z = np.asarray(z, dtype=complex)
        s = step if step is not None else 0.25 * min(self.spec.hx, self.spec.hy)
        px = (self.project(z + s) - self.project(z - s)) / (2 * s)
        py = (self.project(z + 1j * s) - self.project(z - 1j * s)) / (2 * s)
        J = np.empty(z.shape + (2, 2))
        J[..., 0, 0], J[..., 1, 0] = px.real, px.imag
        J[..., 0, 1], J[..., 1, 1] = py.real, py.imag
        return J

    def layer(self, z, delta):
        return classify_layer(self.value(z), delta)


def _extend_outside(domain, h, spec, dist, interior, cells=3.0):
    """Signed extension -|rho| * |n|_h at exterior nodes near the boundary."""
    nodes = spec.nodes()
    near = (~interior) & (domain.boundary_distance(nodes) <= cells * max(spec.hx, spec.hy))
    z = nodes[near]
    if len(z) == 0:
        return dist
    pb = domain.nearest_boundary_point(z)
    n = (z - pb) / np.maximum(np.abs(z - pb), 1e-300)
    g = h.raw(pb)
    v = np.stack([n.real, n.imag], axis=-1)
    scale = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))
    out = dist.copy()
    out[near] = -np.abs(z - pb) * scale
    return out


def _grid_gradient(values, spec):
    """Central differences where both neighbors are finite, one-sided otherwise."""
    gx = np.full(values.shape, np.nan)
    gy = np.full(values.shape, np.nan)
    for axis, out, step in ((1, gx, spec.hx), (0, gy, spec.hy)):
        f = values
        fwd = np.full(f.shape, np.nan)
        bwd = np.full(f.shape, np.nan)
        if axis == 1:
            fwd[:, :-1] = f[:, 1:]
            bwd[:, 1:] = f[:, :-1]
        else:
            fwd[:-1, :] = f[1:, :]
            bwd[1:, :] = f[:-1, :]
        c = (fwd - bwd) / (2 * step)
        r = (fwd - f) / step
        l = (f - bwd) / step
        out[...] = np.where(np.isfinite(c), c, np.where(np.isfinite(r), r, l))
    return gx, gy


def h_distance_field(domain: PlanarDomain, h: MetricField, spec: GridSpec,
                     tube_width: float = np.inf, radius: int = DEFAULT_RADIUS) -> DistanceGrid:
    gg = GridGraph(domain, h, spec, radius)
    dist_nodes, root = gg.boundary_distances()
    interior = gg.interior
    dist = gg.grid_values(dist_nodes)
    nearest = np.full(interior.shape, np.nan + 0j)
    nearest[interior] = gg.src_point[root]
    ext = _extend_outside(domain, h, spec, dist, interior)
    gx, gy = _grid_gradient(ext, spec)
    return DistanceGrid(spec, domain, h, ext, gx, gy, nearest, tube_width)


def classify_layer(dist_value, delta: float):
    """'P' below delta/3, 'A' below 4 delta/3, 'B' beyond (eps = 2 delta)."""
    d = np.asarray(dist_value, dtype=float)
    out = np.where(d < delta / 3, "P", np.where(d < 4 * delta / 3, "A", "B"))
    return str(out) if out.ndim == 0 else out


def _mix(z, weight, first, second):
    """(1 - weight) * first(z) + weight * second(z), exact on the plateaus."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape + (2, 2))
    lo = weight <= 0.0
    hi = weight >= 1.0
    mid = ~(lo | hi)
    if lo.any():
        out[lo] = first(z[lo])
    if hi.any():
        out[hi] = second(z[hi])
    if mid.any():
        w = weight[mid][..., None, None]
        out[mid] = (1 - w) * first(z[mid]) + w * second(z[mid])
    return out


def blend_H(h: MetricField, b: MetricField, dist: DistanceGrid, eps: float) -> MetricField:
    """H = (1 - eta(d)) h + eta(d) b with eta rising on [eps/3, 2 eps/3]."""
    eta = Cutoff(eps / 3, 2 * eps / 3)

    def evaluator(z):
        z = np.asarray(z, dtype=complex)
        return _mix(z, np.asarray(cutoff_eval(eta, dist.value(z))), h.raw, b.raw)

    return MetricField(evaluator, h.domain, "Blended(H)", meta={"eps": eps})


def product_metric_Hstar(h: MetricField, dist: DistanceGrid, z, check_tube: bool = True):
    """h(pi_* v, pi_* w) + d(dist)(v) d(dist)(w) as a 2x2 matrix field."""
    z = np.asarray(z, dtype=complex)
    if check_tube and np.any(dist.value(z) >= dist.tube_width):
        raise OutsideTube(f"points beyond the tube of width {dist.tube_width}")
    P = dist.projection_jacobian(z)
    gb = h.raw(dist.project(z))
    hz = h.raw(z)
    g = dist.gradient(z)
    # unit normal covector: the exact distance has |d dist|_h = 1
    g = g / np.sqrt(np.einsum("...i,...ij,...j->...", g, np.linalg.inv(hz), g))[..., None]
    tang = np.einsum("...ki,...kl,...lj->...ij", P, gb, P)
    # tangential stretch of pi relative to h at z; blows up at focal points
    tau = np.stack([-g[..., 1], g[..., 0]], axis=-1)
    tau = tau / np.maximum(np.linalg.norm(tau, axis=-1, keepdims=True), 1e-300)
    num = np.einsum("...i,...ij,...j->...", tau, tang, tau)
    den = np.einsum("...i,...ij,...j->...", tau, hz, tau)
    stretch = np.sqrt(np.maximum(num, 0) / den)
    with np.errstate(divide="ignore"):
        cond = np.maximum(stretch, 1.0 / stretch)
    if np.any(~(cond <= 1e8)):
        raise ProjectionBreakdown("projection Jacobian is degenerate (condition > 1e8)")
    return spd_repair(tang + np.einsum("...i,...j->...ij", g, g), floor=1e-10)


def blend_Htilde(h: MetricField, H: MetricField, dist: DistanceGrid, delta: float) -> MetricField:
    """H~ = mu(d) H + (1 - mu(d)) H* with mu rising on [delta/3, 2 delta/3]."""
    if dist.tube_width < delta:
        raise InvalidInput("tube width must be at least delta")
    eps = H.meta.get("eps")
    if eps is not None and not np.isclose(eps, 2 * delta):
        raise InvalidInput("the H stage must use eps = 2 delta")
    mu = Cutoff(delta / 3, 2 * delta / 3)

    def hstar(z):
        return product_metric_Hstar(h, dist, z, check_tube=False)

    def evaluator(z):
        z = np.asarray(z, dtype=complex)
        return _mix(z, 1.0 - np.asarray(cutoff_eval(mu, dist.value(z))), H.raw, hstar)

    return MetricField(evaluator, h.domain, "Blended(Htilde)", meta={"delta": delta, "eps": 2 * delta})


@dataclass(eq=False)
class BlendPipeline:
    h: MetricField
    bergman: MetricField
    dist: DistanceGrid
    H: MetricField
    Htilde: MetricField
    delta: float

    @property
    def eps(self):
        return 2 * self.delta


def build_pipeline(h: MetricField, bergman: MetricField, spec: GridSpec, delta: float | None = None,
                   tube_width: float | None = None, radius: int = DEFAULT_RADIUS) -> BlendPipeline:
    domain = h.domain
    if delta is None:
        delta = default_delta(domain)
    tube = 2 * delta if tube_width is None else tube_width
    dist = h_distance_field(domain, h, spec, tube_width=tube, radius=radius)
    H = blend_H(h, bergman, dist, 2 * delta)
    Ht = blend_Htilde(h, H, dist, delta)
    return BlendPipeline(h, bergman, dist, H, Ht, delta)


def default_delta(domain: PlanarDomain) -> float:
    return 0.15 * domain.inradius


def write_layers_csv(path, dist: DistanceGrid, delta: float) -> int:
    spec = dist.spec
    z = spec.nodes().ravel()
    inside = dist.domain.rho(z) < 0
    d = dist.dist.ravel()[inside]
    gx = dist.gx.ravel()[inside]
    gy = dist.gy.ravel()[inside]
    layers = classify_layer(d, delta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "dist", "gx", "gy", "layer"])
        for p, a, b, c, lay in zip(z[inside], d, gx, gy, layers):
            w.writerow([fmt(p.real), fmt(p.imag), fmt(a), fmt(b), fmt(c), lay])
    return int(inside.sum())


def inheritance_report(pipe: BlendPipeline, group, samples, n: int = 64) -> dict:
    """Invariance of H~ split into the part explained by grid-distance error.

    For each sample z and Haar node alpha the cutoff weights at z and at
    alpha(z) differ only through the grid distance. The first-order effect
    |d eta| |b - h| + |d mu| |H - H*|, plus the non-invariance of H* itself
    (built from h and the grid distance only), is the grid term; the
    remainder is what the averaged metric and the Bergman field contribute.
    """
    from .metric import invariance_residual, pullback
    from .group import haar_nodes

    z = np.asarray(samples, dtype=complex)
    delta = pipe.delta
    eta = Cutoff(2 * delta / 3, 4 * delta / 3)
    mu = Cutoff(delta / 3, 2 * delta / 3)
    g = pipe.Htilde.raw(z)
    scale = np.maximum(1.0, np.linalg.norm(g, axis=(-2, -1)))
    d0 = pipe.dist.value(z)
    bh = np.linalg.norm(pipe.bergman.raw(z) - pipe.h.raw(z), axis=(-2, -1)) / scale
    Hs = np.zeros(z.shape)
    need = d0 < pipe.dist.tube_width
    star = MetricField(lambda w: product_metric_Hstar(pipe.h, pipe.dist, w, check_tube=False),
                       pipe.h.domain, "Hstar")
    zs = z[need]
    star_z = star.raw(zs) if need.any() else None
    if need.any():
        Hs[need] = np.linalg.norm(pipe.H.raw(zs) - star_z, axis=(-2, -1)) / scale[need]
    w_star = np.where(need, 1.0 - np.asarray(mu(d0)), 0.0)
    worst = grid = unexplained = dist_err = 0.0
    for a, _ in haar_nodes(group, n):
        d1 = pipe.dist.value(a.apply(z))
        r = np.linalg.norm(pullback(pipe.Htilde, a, z) - g, axis=(-2, -1)) / scale
        dmu = np.abs(mu(d0) - mu(d1))
        # outside the tube mu(d0) = 1, so a nonzero dmu there is unexplained
        pred = np.abs(eta(d0) - eta(d1)) * bh + np.where(need, dmu * Hs, 0.0)
        star_pred = np.zeros(z.shape)
        act = need & (w_star > 0)
        if act.any():
            sel = act[need]
            diff = np.linalg.norm(pullback(star, a, zs[sel]) - star_z[sel], axis=(-2, -1))
            star_pred[act] = w_star[act] * diff / scale[act]
        pred = pred + star_pred
        worst = max(worst, float(np.max(r)))
        grid = max(grid, float(np.max(pred)))
        unexplained = max(unexplained, float(np.max(r - pred)))
        dist_err = max(dist_err, float(np.max(np.abs(d1 - d0))))
    return {
        "residual_Htilde": worst,
        "residual_h": invariance_residual(pipe.h, group, z, n),
        "grid_term": grid,
        "unexplained": max(unexplained, 0.0),
        "max_distance_error": dist_err,
    }
