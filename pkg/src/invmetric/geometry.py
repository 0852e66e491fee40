"""Geodesics, curvature, distances, metric balls, fixed points and rigidity scans."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .automorphism import Automorphism, Rotation
from .domain import BOUNDARY_TOL, GridSpec, PlanarDomain, sample_interior
from .errors import (InsufficientPoints, InvalidInput, OutsideDomain, PathExited, StencilClipped,
                     Unreachable)
from .group import CompactGroup, haar_nodes
from .gridgraph import DEFAULT_RADIUS, GridGraph
from .metric import MetricField, fmt

CHRISTOFFEL_STEP = 1e-4
CURVATURE_STEP = 5e-4


def _inside(field: MetricField, z):
    rho = field.domain.rho(z)
    return rho <= BOUNDARY_TOL if field.smooth_to_boundary else rho < 0


# ---------------------------------------------------------------- derivatives

def _metric_jet(field: MetricField, z, step):
    """(G, dG/dx, dG/dy) at points z; one-sided differences where the stencil leaves the domain."""
    z = np.asarray(z, dtype=complex)
    if field.conformal and field.factor_grad is not None:
        lam = field.factor(z)
        grad = field.factor_grad(z)
        eye = np.eye(2)
        return (lam[..., None, None] * eye, grad[..., 0, None, None] * eye, grad[..., 1, None, None] * eye)
    pts = np.stack([z, z + step, z - step, z + 1j * step, z - 1j * step])
    ok = _inside(field, pts)
    vals = field.raw(np.where(ok, pts, z[None]))
    g = vals[0]
    derivs = []
    clipped = False
    for plus, minus, okp, okm in ((vals[1], vals[2], ok[1], ok[2]), (vals[3], vals[4], ok[3], ok[4])):
        both = (okp & okm)[..., None, None]
        fwd = okp[..., None, None]
        d = np.where(both, (plus - minus) / (2 * step),
                     np.where(fwd, (plus - g) / step, (g - minus) / step))
        clipped |= not np.all(both)
        derivs.append(d)
    if clipped:
        warnings.warn("finite-difference stencil clipped at the boundary; one-sided differences used",
                      StencilClipped, stacklevel=3)
    return g, derivs[0], derivs[1]


def _christoffel_from_jet(g, dgx, dgy):
    ginv = np.linalg.inv(g)
    dg = np.stack([dgx, dgy], axis=-3)  # [..., l(deriv), i, j]
    # first kind: [ij, l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    first = 0.5 * (np.einsum("...ijl->...ijl", dg) + np.einsum("...jil->...ijl", dg)
                   - np.einsum("...lij->...ijl", dg))
    return np.einsum("...kl,...ijl->...kij", ginv, first)


def christoffel(field: MetricField, z: complex, fd_step: float | None = None) -> np.ndarray:
    """Levi-Civita symbols as an array gamma[k, i, j] (vectorized over z)."""
    z = np.asarray(z, dtype=complex)
    if not np.all(_inside(field, z)):
        raise OutsideDomain(f"{z} is outside the domain")
    step = fd_step if fd_step is not None else CHRISTOFFEL_STEP * field.domain.diameter
    return _christoffel_from_jet(*_metric_jet(field, z, step))


# ---------------------------------------------------------------- geodesics

@dataclass
class GeodesicPath:
    t: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    metric: str
    step: float
    exited: bool = False

    def speeds(self, field: MetricField) -> np.ndarray:
        g = field.raw(self.points)
        return np.sqrt(np.einsum("...i,...ij,...j->...", self.velocities, g, self.velocities))


def _accel(field, x, v, step):
    gam = christoffel(field, x, step)
    return -np.einsum("kij,i,j->k", gam, v, v)


def geodesic(field: MetricField, start: complex, velocity, length: float, steps: int | None = None,
             fd_step: float | None = None) -> GeodesicPath:
    """RK4 integration of the geodesic equation, parameterized by h-arclength."""
    start = complex(start)
    if not _inside(field, start) or field.domain.rho(start) >= 0:
        raise OutsideDomain(f"{start} is not an interior point")
    v = np.asarray(velocity, dtype=float).reshape(2)
    norm = float(np.sqrt(v @ field.raw(start) @ v))
    if not norm > 0:
        raise InvalidInput("initial velocity must be nonzero")
    v = v / norm
    steps = steps if steps is not None else max(1, int(np.ceil(abs(length) / 1e-3)))
    dt = length / steps
    fstep = fd_step if fd_step is not None else CHRISTOFFEL_STEP * field.domain.diameter
    x = np.array([start.real, start.imag])
    ts, xs, vs = [0.0], [x.copy()], [v.copy()]

    def rhs(state):
        p, q = state[:2], state[2:]
        zc = complex(p[0], p[1])
        if not field.domain.rho(zc) < 0:
            raise _Exit
        return np.concatenate([q, _accel(field, zc, q, fstep)])

    state = np.concatenate([x, v])
    for k in range(steps):
        try:
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * dt * k1)
            k3 = rhs(state + 0.5 * dt * k2)
            k4 = rhs(state + dt * k3)
        except _Exit:
            path = _path(ts, xs, vs, field, dt, True)
            raise PathExited(f"geodesic left the domain after length {ts[-1]:.6g}", path) from None
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not field.domain.rho(complex(state[0], state[1])) < 0:
            path = _path(ts, xs, vs, field, dt, True)
            raise PathExited(f"geodesic left the domain after length {ts[-1]:.6g}", path)
        ts.append((k + 1) * dt)
        xs.append(state[:2].copy())
        vs.append(state[2:].copy())
    return _path(ts, xs, vs, field, dt, False)


class _Exit(Exception):
    pass


def _path(ts, xs, vs, field, dt, exited):
    xs = np.array(xs)
    return GeodesicPath(np.array(ts), xs[:, 0] + 1j * xs[:, 1], np.array(vs), field.tag, dt, exited)


def write_geodesic_csv(path, gp: GeodesicPath) -> int:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "vx", "vy"])
        for t, p, v in zip(gp.t, gp.points, gp.velocities):
            w.writerow([fmt(t), fmt(p.real), fmt(p.imag), fmt(v[0]), fmt(v[1])])
    return len(gp.t)


# ---------------------------------------------------------------- curvature

def gauss_curvature(field: MetricField, z, fd_step: float | None = None):
    """Gauss curvature; -Lap(log lam) / (2 lam) for conformal fields, Brioschi otherwise."""
    z = np.asarray(z, dtype=complex)
    s = fd_step if fd_step is not None else CURVATURE_STEP * field.domain.diameter
    offs = np.array([0, 1, -1, 1j, -1j, 1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) * s
    pts = z[None] + offs.reshape((-1,) + (1,) * z.ndim)
    ok = _inside(field, pts)
    if not np.all(ok):
        warnings.warn("curvature stencil clipped at the boundary; value flagged as unreliable",
                      StencilClipped, stacklevel=2)
        pts = np.where(ok, pts, z[None])
    if field.conformal:
        L = np.log(field.factor(pts))
        lap = (L[1] + L[2] + L[3] + L[4] - 4 * L[0]) / s**2
        out = -lap / (2 * np.exp(L[0]))
    else:
        out = _brioschi(field.raw(pts), s)
    return float(out) if out.ndim == 0 else out


def _brioschi(g, s):
    E, F, G = g[..., 0, 0], g[..., 0, 1], g[..., 1, 1]

    def du(a):
        return (a[1] - a[2]) / (2 * s)

    def dv(a):
        return (a[3] - a[4]) / (2 * s)

    def duu(a):
        return (a[1] + a[2] - 2 * a[0]) / s**2

    def dvv(a):
        return (a[3] + a[4] - 2 * a[0]) / s**2

    def duv(a):
        return (a[5] - a[6] - a[7] + a[8]) / (4 * s * s)

    e, f, gg = E[0], F[0], G[0]
    m1 = np.stack([
        np.stack([-0.5 * dvv(E) + duv(F) - 0.5 * duu(G), 0.5 * du(E), du(F) - 0.5 * dv(E)], -1),
        np.stack([dv(F) - 0.5 * du(G), e, f], -1),
        np.stack([0.5 * dv(G), f, gg], -1),
    ], -2)
    zero = np.zeros_like(e)
    m2 = np.stack([
        np.stack([zero, 0.5 * dv(E), 0.5 * du(G)], -1),
        np.stack([0.5 * dv(E), e, f], -1),
        np.stack([0.5 * du(G), f, gg], -1),
    ], -2)
    return (np.linalg.det(m1) - np.linalg.det(m2)) / (e * gg - f * f) ** 2


# ---------------------------------------------------------------- distances

_GRAPHS: dict = {}
_GRAPH_CACHE_SIZE = 8


def grid_graph(field: MetricField, spec: GridSpec, radius: int = DEFAULT_RADIUS) -> GridGraph:
    """Shortest-path graph for ``field`` on ``spec``, cached per field object."""
    key = (id(field), spec, radius)
    hit = _GRAPHS.get(key)
    if hit is not None and hit[0] is field:
        return hit[1]
    gg = GridGraph(field.domain, field, spec, radius)
    if len(_GRAPHS) >= _GRAPH_CACHE_SIZE:
        _GRAPHS.pop(next(iter(_GRAPHS)))
    _GRAPHS[key] = (field, gg)
    return gg


def _check_interior(domain: PlanarDomain, *pts):
    for p in pts:
        if not domain.rho(complex(p)) < 0:
            raise OutsideDomain(f"{p} is not an interior point")


def _resample(path, spacing):
    seg = np.abs(np.diff(path))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    m = max(2, int(np.ceil(s[-1] / spacing)))
    t = np.linspace(0.0, s[-1], m + 1)
    return np.interp(t, s, path.real) + 1j * np.interp(t, s, path.imag)


def shorten_path(field: MetricField, path, spacing: float, fd_step: float | None = None):
    """Locally minimize the metric length of a polyline with fixed endpoints.

    Returns (length, polyline). The length is Simpson's rule on each
    segment, so it is the length of an actual path.
    """
    from scipy.optimize import minimize

    from .gridgraph import first_exit, segment_lengths

    path = _resample(np.asarray(path, dtype=complex), spacing)
    if len(path) <= 2:
        return float(np.sum(segment_lengths(field, path[:-1], path[1:]))), path
    a, b = path[0], path[-1]
    domain = field.domain
    eps = fd_step if fd_step is not None else 1e-6 * domain.diameter
    big = 1e6 * float(np.sum(segment_lengths(field, path[:-1], path[1:])))

    def pts(x):
        return np.concatenate([[a], x[0::2] + 1j * x[1::2], [b]])

    def seglens(z):
        """Simpson segment lengths for one or a stack of polylines (last axis)."""
        mid = 0.5 * (z[..., :-1] + z[..., 1:])
        g = field.raw(np.concatenate([z.ravel(), mid.ravel()]))
        gv = g[: z.size].reshape(z.shape + (2, 2))
        gm = g[z.size:].reshape(mid.shape + (2, 2))
        d = np.diff(z, axis=-1)
        v = np.stack([d.real, d.imag], axis=-1)

        def speed(m):
            return np.sqrt(np.einsum("...i,...ij,...j->...", v, m, v))

        return (speed(gv[..., :-1, :, :]) + 4 * speed(gm) + speed(gv[..., 1:, :, :])) / 6

    def valid(z):
        if not np.all(domain.rho(z[1:-1]) < 0):
            return False
        return bool(np.all(first_exit(domain, z[:-1], np.diff(z)) > 1.0))

    inner = np.arange(1, len(path) - 1)
    moves = []
    for parity in (0, 1):
        k = inner[inner % 2 == parity]
        for unit in (1.0, 1j):
            for sign in (1.0, -1.0):
                dz = np.zeros(len(path), dtype=complex)
                dz[k] = sign * eps * unit
                moves.append((k, unit, sign, dz))
    shifts = np.stack([m[3] for m in moves])

    def fun(x):
        z = pts(x)
        if not valid(z):
            return big, np.zeros_like(x)
        lens = seglens(np.concatenate([z[None], z[None] + shifts]))
        grad = np.zeros(len(z), dtype=complex)
        # each segment moves with exactly one perturbed end
        for i in range(0, len(moves), 2):
            k, unit, _, _ = moves[i]
            dl = lens[1 + i] - lens[2 + i]
            grad[k] += (dl[k - 1] + dl[k]) / (2 * eps) * unit
        g = grad[1:-1]
        return float(np.sum(lens[0])), np.stack([g.real, g.imag], axis=-1).ravel()

    x0 = np.stack([path[1:-1].real, path[1:-1].imag], axis=-1).ravel()
    res = minimize(fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": 500, "gtol": 1e-10})
    x = res.x if res.fun < fun(x0)[0] else x0
    z = pts(x)
    return float(np.sum(seglens(z))), z


def distance(field: MetricField, p: complex, q: complex, spec: GridSpec, radius: int = DEFAULT_RADIUS,
             extrapolate: bool = True, refine: bool = True) -> float:
    """Metric distance between interior points.

    With ``refine`` the shortest grid path is shortened as a free polyline
    (vertex spacing one grid cell). Otherwise the grid distance is
    Richardson-extrapolated over ``spec`` and its coarsening when
    ``extrapolate`` is set.
    """
    _check_interior(field.domain, p, q)
    gg = grid_graph(field, spec, radius)
    fine = gg.point_distance(complex(p), complex(q))
    if not np.isfinite(fine):
        raise Unreachable(f"no path from {p} to {q}")
    if refine:
        length, _ = shorten_path(field, gg.path(p, q), max(spec.hx, spec.hy))
        return min(length, fine)
    if not extrapolate:
        return fine
    coarse_spec = spec.coarsened()
    coarse = grid_graph(field, coarse_spec, radius).point_distance(complex(p), complex(q))
    if not np.isfinite(coarse):
        return fine
    ratio = coarse_spec.hx / spec.hx
    return fine + (fine - coarse) / (ratio - 1.0)


def metric_ball(field: MetricField, center: complex, radius: float, spec: GridSpec,
                stencil: int = DEFAULT_RADIUS) -> np.ndarray:
    """Boolean (ny, nx) indicator of grid nodes within ``radius`` of ``center``."""
    _check_interior(field.domain, center)
    gg = grid_graph(field, spec, stencil)
    d = gg.from_point(complex(center))
    return gg.grid_values(d, fill=np.inf) <= radius


def jaccard(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.sum(a | b)
    return 1.0 if union == 0 else float(np.sum(a & b) / union)


def transported_indicator(indicator, spec: GridSpec, aut: Automorphism, domain: PlanarDomain):
    """Indicator of aut(set): node z is in it when aut^-1(z) lands on a node of the set.

    Lookup uses the nearest grid node to the preimage.
    """
    z = spec.nodes()
    pre = aut.inverse().apply(z)
    i = np.rint((pre.real - spec.lo.real) / spec.hx).astype(int)
    j = np.rint((pre.imag - spec.lo.imag) / spec.hy).astype(int)
    ok = (i >= 0) & (i < spec.nx) & (j >= 0) & (j < spec.ny) & (domain.rho(z) < 0)
    out = np.zeros(indicator.shape, dtype=bool)
    out[ok] = indicator[j[ok], i[ok]]
    return out


def write_ball_pgm(path, indicator) -> None:
    """ASCII PGM (P2), 255 inside the ball, first row is the top of the grid."""
    img = np.where(np.asarray(indicator, dtype=bool)[::-1], 255, 0)
    ny, nx = img.shape
    with open(path, "w") as fh:
        fh.write(f"P2\n{nx} {ny}\n255\n")
        for row in img:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def write_ball_csv(path, indicator, spec: GridSpec) -> int:
    z = spec.nodes().ravel()
    ind = np.asarray(indicator, dtype=bool).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "inside"])
        for p, v in zip(z, ind):
            w.writerow([fmt(p.real), fmt(p.imag), int(v)])
    return len(z)


# ---------------------------------------------------------------- fixed points

FIXED_POINT_NODES = 16


def _fixed_point_objective(group, field, spec, radius, n):
    gg = grid_graph(field, spec, radius)
    nodes = haar_nodes(group, n)

    def F(x):
        x = complex(x)
        if not field.domain.rho(x) < 0 or field.domain.boundary_distance(x) < 0.5 * spec.hx:
            return np.inf
        dist = gg.from_point(x)
        total = 0.0
        for a, w in nodes:
            y = complex(a.apply(x))
            if abs(y - x) < 1e-14:
                continue
            total += w * gg.point_distance(x, y, node_dist=dist) ** 2
        return total

    return F


def _descend(F, x0, h0, hmin):
    """Compass search on the grid, then one quadratic step per axis."""
    x, fx = complex(x0), F(x0)
    if not np.isfinite(fx):
        return x, fx
    h = h0
    while h >= hmin:
        moved = False
        for d in (1, -1, 1j, -1j):
            y = x + h * d
            fy = F(y)
            if fy < fx:
                x, fx, moved = y, fy, True
                break
        if not moved:
            h /= 2
    for d in (1, 1j):
        fp, fm = F(x + hmin * d), F(x - hmin * d)
        curv = fp + fm - 2 * fx
        if np.isfinite(curv) and curv > 0:
            t = 0.5 * (fm - fp) / curv
            y = x + float(np.clip(t, -1, 1)) * hmin * d
            fy = F(y)
            if fy < fx:
                x, fx = y, fy
    return x, fx


def common_fixed_point(group: CompactGroup, field: MetricField, seed: complex, spec: GridSpec | None = None,
                       tol: float | None = None, radius: int = DEFAULT_RADIUS, n: int = FIXED_POINT_NODES):
    """Minimizer of sum_k w_k d(x, alpha_k x)^2 if the minimum is below ``tol``, else None."""
    domain = field.domain
    _check_interior(domain, seed)
    if all(abs(complex(a.apply(seed)) - complex(seed)) == 0 for a, _ in haar_nodes(group, n)):
        return complex(seed)
    spec = spec or GridSpec.for_domain(domain, 128)
    tol = tol if tol is not None else 1e-4 * domain.diameter**2
    F = _fixed_point_objective(group, field, spec, radius, n)
    seeds = [complex(seed)] + _restart_seeds(domain)
    for s in seeds:
        x, fx = _descend(F, s, 0.125 * domain.diameter, spec.hx)
        if np.isfinite(fx) and fx < tol:
            return x
    return None


def _restart_seeds(domain: PlanarDomain):
    oc = domain.outer_circle
    cands = [domain.interior_point] + [oc.center + 0.5 * oc.radius * np.exp(2j * np.pi * k / 4) for k in range(4)]
    out = []
    for c in cands:
        if domain.rho(c) < 0:
            out.append(complex(c))
    while len(out) < 5:
        out.append(complex(domain.interior_point))
    return out[:5]


# ---------------------------------------------------------------- rigidity scans

RIGIDITY_SCAN = 3600
IDENTITY_TOL = 1e-9


@dataclass
class FixerRecord:
    element: object
    identity_deviation: float


@dataclass
class RigidityReport:
    points: list
    tol: float
    scanned: int
    fixers: list = dc_field(default_factory=list)

    @property
    def non_identity(self):
        return [f for f in self.fixers if not f.identity_deviation < IDENTITY_TOL]

    @property
    def consistent(self) -> bool:
        return not self.non_identity

    def to_json(self) -> str:
        d = asdict(self)
        d["points"] = [[p.real, p.imag] for p in self.points]
        d["consistent"] = self.consistent
        return json.dumps(d, indent=2, sort_keys=True)


def _scan_elements(group: CompactGroup, scan: int):
    if group.structure == "finite":
        return [a for a, _ in haar_nodes(group)]
    return group.parameter_scan(scan)


def _on_boundary(domain: PlanarDomain, p: complex):
    if not abs(domain.boundary_distance(p)) <= 1e-9:
        raise InvalidInput(f"{p} is not on the boundary")


def _fix_scan(group, points, tol, scan, samples, derivative):
    zs = sample_interior(group.domain, GridSpec.for_domain(group.domain, 24), margin=0.0)[:samples]
    elements = _scan_elements(group, scan)
    fixers = []
    for a in elements:
        fixes = all(abs(complex(a.apply(p)) - p) < tol
                    and (not derivative or abs(complex(a.derivative(p)) - 1) < tol) for p in points)
        if fixes:
            dev = float(np.max(np.abs(a.apply(zs) - zs)))
            fixers.append(FixerRecord(a.to_json(), dev))
    return RigidityReport([complex(p) for p in points], tol, len(elements), fixers)


def boundary_rigidity_check(group: CompactGroup, boundary_point: complex, tol: float = 1e-6,
                            scan: int = RIGIDITY_SCAN, samples: int = 100) -> RigidityReport:
    """Elements fixing a boundary point with identity derivative there, and their deviation from the identity."""
    p = complex(boundary_point)
    _on_boundary(group.domain, p)
    return _fix_scan(group, [p], tol, scan, samples, derivative=True)


def general_position_fix_check(group: CompactGroup, points, tol: float = 1e-6, min_points: int = 2,
                               scan: int = RIGIDITY_SCAN, samples: int = 100) -> RigidityReport:
    """Elements fixing every listed boundary point (value only, derivative not required).

    ``min_points`` defaults to two points for one complex dimension; pass 1 to
    probe the single-point case on domains where it already forces the identity.
    """
    pts = [complex(p) for p in points]
    if min_points < 1 or len(pts) < min_points:
        raise InsufficientPoints(f"need at least {max(min_points, 1)} boundary points, got {len(pts)}")
    if len(set(pts)) != len(pts):
        raise InvalidInput("boundary points must be distinct")
    for p in pts:
        _on_boundary(group.domain, p)
    return _fix_scan(group, pts, tol, scan, samples, derivative=False)


def rotation_about(center: complex, theta: float) -> Automorphism:
    """z -> center + e^{i theta} (z - center) as an automorphism object."""
    from .automorphism import Moebius

    e = np.exp(1j * theta)
    if center == 0:
        return Rotation(float(theta))
    return Moebius(e, center * (1 - e), 0, 1)
