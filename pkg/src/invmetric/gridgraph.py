"""Shortest paths for a metric field on a rectangular grid graph.

Nodes are the interior grid nodes. Each node links to the nodes at the
coprime offsets (a, b) with max(|a|, |b|) <= radius; radius 1 gives the
8-connected graph. An edge exists when the straight segment stays in the
domain, and its weight is the metric length of the segment using the metric
at the midpoint. Midpoints all lie on the half-step lattice, so the metric
is evaluated once per half-lattice point.
"""

from __future__ import annotations

from math import gcd

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .domain import GridSpec, PlanarDomain
from .errors import GridTooCoarse

DEFAULT_RADIUS = 5


def stencil_offsets(radius: int):
    out = []
    for a in range(-radius, radius + 1):
        for b in range(-radius, radius + 1):
            if (a, b) != (0, 0) and gcd(abs(a), abs(b)) == 1:
                out.append((a, b))
    return out


def first_exit(domain: PlanarDomain, z0, d):
    """Smallest t > 0 where z0 + t d meets the boundary (inf if never).

    ``z0`` must be interior. Outer circle: exit root; holes: entry root.
    """
    z0 = np.asarray(z0, dtype=complex)
    d = np.asarray(d, dtype=complex) + 0 * z0
    a = np.abs(d) ** 2
    t = np.full(np.broadcast(z0, d).shape, np.inf)
    for circ in domain.circles:
        u = z0 - circ.center
        b = np.real(np.conj(d) * u)
        c = np.abs(u) ** 2 - circ.radius**2
        disc = b * b - a * c
        with np.errstate(invalid="ignore", divide="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            if circ.outer:
                root = (-b + sq) / a
            else:
                root = np.where((disc >= 0) & (b < 0), (-b - sq) / a, np.inf)
        root = np.where(root > 0, root, np.inf)
        t = np.minimum(t, root)
    return t


def _speed(g, v):
    return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))


def segment_lengths(field, z0, z1):
    """Metric length of straight segments with Simpson's rule."""
    z0 = np.asarray(z0, dtype=complex)
    z1 = np.asarray(z1, dtype=complex)
    d = z1 - z0
    v = np.stack([d.real, d.imag], axis=-1)
    ends = field.raw(np.stack([z0, 0.5 * (z0 + z1), z1]))
    return (_speed(ends[0], v) + 4 * _speed(ends[1], v) + _speed(ends[2], v)) / 6


class GridGraph:
    def __init__(self, domain: PlanarDomain, field, spec: GridSpec, radius: int = DEFAULT_RADIUS):
        self.domain = domain
        self.field = field
        self.spec = spec
        self.radius = radius
        nodes = spec.nodes()
        self.nodes = nodes
        self.interior = domain.rho(nodes) < 0
        self.index = -np.ones(nodes.shape, dtype=np.int64)
        self.index[self.interior] = np.arange(int(self.interior.sum()))
        self.n = int(self.interior.sum())
        self.points = nodes[self.interior]
        self._build()

    def _half_lattice_metric(self, keys):
        """Metric at half-lattice points given as flattened (2j+b)*(2nx-1)+(2i+a)."""
        spec = self.spec
        w2 = 2 * spec.nx - 1
        uniq, inv = np.unique(keys, return_inverse=True)
        jj, ii = np.divmod(uniq, w2)
        z = (spec.lo.real + 0.5 * spec.hx * ii) + 1j * (spec.lo.imag + 0.5 * spec.hy * jj)
        g = self.field.raw(z)
        return g, inv

    def _build(self):
        spec = self.spec
        ny, nx = self.nodes.shape
        jj, ii = np.nonzero(self.interior)
        z = self.nodes[jj, ii]
        rows, cols, keys, vecs = [], [], [], []
        src_best = np.full(self.n, np.inf)
        src_point = np.full(self.n, np.nan + 0j)
        cross_z0, cross_z1, cross_node = [], [], []
        for a, b in stencil_offsets(self.radius):
            d = a * spec.hx + 1j * b * spec.hy
            t = first_exit(self.domain, z, d)
            i2, j2 = ii + a, jj + b
            inrange = (i2 >= 0) & (i2 < nx) & (j2 >= 0) & (j2 < ny)
            ok = inrange & (t > 1.0)
            ok[ok] &= self.interior[j2[ok], i2[ok]]
            u = self.index[jj[ok], ii[ok]]
            v = self.index[j2[ok], i2[ok]]
            rows.append(u)
            cols.append(v)
            keys.append((2 * jj[ok] + b) * (2 * nx - 1) + (2 * ii[ok] + a))
            vecs.append(np.full(ok.sum(), d))
            cr = t <= 1.0
            if cr.any():
                z0 = z[cr]
                cross_z0.append(z0)
                cross_z1.append(z0 + t[cr] * d)
                cross_node.append(self.index[jj[cr], ii[cr]])
        reach = self.radius * max(spec.hx, spec.hy)
        for circ in self.domain.circles:
            u = z - circ.center
            foot = circ.center + circ.radius * u / np.maximum(np.abs(u), 1e-300)
            near = np.abs(foot - z) <= reach
            if near.any():
                vis = first_exit(self.domain, z[near], foot[near] - z[near]) >= 1.0 - 1e-9
                idx = np.flatnonzero(near)[vis]
                cross_z0.append(z[idx])
                cross_z1.append(foot[idx])
                cross_node.append(self.index[jj[idx], ii[idx]])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = np.concatenate(keys)
        vecs = np.concatenate(vecs)
        g, inv = self._half_lattice_metric(keys)
        v = np.stack([vecs.real, vecs.imag], axis=-1)
        gn = self.field.raw(self.points)
        w = (_speed(gn[rows], v) + 4 * _speed(g[inv], v) + _speed(gn[cols], v)) / 6
        # fields that blow up at the boundary have no finite boundary sources
        if cross_z0 and getattr(self.field, "smooth_to_boundary", True):
            z0 = np.concatenate(cross_z0)
            z1 = np.concatenate(cross_z1)
            nodes_c = np.concatenate(cross_node)
            lens = segment_lengths(self.field, z0, z1)
            order = np.lexsort((lens, nodes_c))
            first = np.ones(len(order), dtype=bool)
            first[1:] = nodes_c[order][1:] != nodes_c[order][:-1]
            pick = order[first]
            src_best[nodes_c[pick]] = lens[pick]
            src_point[nodes_c[pick]] = z1[pick]
        self.edge_rows, self.edge_cols = rows, cols
        self.edge_w = np.maximum(w, 1e-300)
        self.src_dist = src_best
        self.src_point = src_point
        self._adj = csr_matrix((self.edge_w, (rows, cols)), shape=(self.n + 1, self.n + 1))

    def _with_slot(self, targets, weights):
        extra = csr_matrix((np.maximum(weights, 1e-300), (np.full(len(targets), self.n), targets)),
                           shape=(self.n + 1, self.n + 1))
        return self._adj + extra

    def boundary_distances(self):
        """(dist, root node) from multi-source Dijkstra seeded at boundary crossings."""
        has = np.isfinite(self.src_dist)
        if not has.any():
            raise GridTooCoarse("no grid edge crosses the boundary")
        graph = self._with_slot(np.flatnonzero(has), self.src_dist[has])
        dist, pred = dijkstra(graph, directed=True, indices=self.n, return_predecessors=True)
        dist = dist[: self.n]
        pred = pred[: self.n]
        if not np.all(np.isfinite(dist)):
            raise GridTooCoarse(f"{int((~np.isfinite(dist)).sum())} interior nodes are unreachable")
        anc = np.where(pred == self.n, np.arange(self.n), pred)
        while True:
            nxt = anc[anc]
            if np.array_equal(nxt, anc):
                break
            anc = nxt
        return dist, anc

    def attach(self, p: complex):
        """Grid nodes visible from p within the stencil reach, with segment lengths."""
        spec = self.spec
        reach = (self.radius + 1) * max(spec.hx, spec.hy)
        fx = (p.real - spec.lo.real) / spec.hx
        fy = (p.imag - spec.lo.imag) / spec.hy
        k = self.radius + 2
        i0, j0 = int(np.floor(fx)), int(np.floor(fy))
        ii, jj = np.meshgrid(np.arange(i0 - k, i0 + k + 2), np.arange(j0 - k, j0 + k + 2))
        ii, jj = ii.ravel(), jj.ravel()
        ok = (ii >= 0) & (ii < spec.nx) & (jj >= 0) & (jj < spec.ny)
        ii, jj = ii[ok], jj[ok]
        ok = self.interior[jj, ii]
        ii, jj = ii[ok], jj[ok]
        zn = self.nodes[jj, ii]
        d = zn - p
        close = (np.abs(d) <= reach) & (np.abs(d) > 0)
        ii, jj, zn, d = ii[close], jj[close], zn[close], d[close]
        vis = first_exit(self.domain, np.full(len(d), p), d) > 1.0
        zn, ii, jj = zn[vis], ii[vis], jj[vis]
        lens = segment_lengths(self.field, np.full(len(zn), p), zn)
        exact = np.flatnonzero(np.abs(self.nodes[jj, ii] - p) == 0)
        return self.index[jj, ii], lens, exact

    def from_point(self, p: complex):
        """Node distances from an arbitrary interior point."""
        p = complex(p)
        targets, lens, _ = self.attach(p)
        if len(targets) == 0:
            raise GridTooCoarse(f"no grid node is visible from {p}")
        i = self._node_at(p)
        if i is not None:
            targets = np.append(targets, i)
            lens = np.append(lens, 1e-300)
        graph = self._with_slot(targets, lens)
        dist = dijkstra(graph, directed=True, indices=self.n)
        return dist[: self.n]

    def path(self, p: complex, q: complex) -> np.ndarray:
        """Polyline p -> grid nodes -> q along a shortest grid path."""
        p, q = complex(p), complex(q)
        d = q - p
        reach = (self.radius + 1) * max(self.spec.hx, self.spec.hy)
        targets, lens, _ = self.attach(p)
        if len(targets) == 0:
            raise GridTooCoarse(f"no grid node is visible from {p}")
        graph = self._with_slot(targets, lens)
        dist, pred = dijkstra(graph, directed=True, indices=self.n, return_predecessors=True)
        qt, qlens, _ = self.attach(q)
        best = np.inf if len(qt) == 0 else float(np.min(dist[qt] + qlens))
        if abs(d) <= reach and first_exit(self.domain, p, d) > 1.0:
            if float(segment_lengths(self.field, p, q)) <= best:
                return np.array([p, q])
        if not np.isfinite(best):
            raise GridTooCoarse(f"{q} is not reachable from {p}")
        node = int(qt[np.argmin(dist[qt] + qlens)])
        chain = []
        while node != self.n and node >= 0:
            chain.append(self.points[node])
            node = int(pred[node])
        return np.array([p] + chain[::-1] + [q])

    def _node_at(self, p):
        spec = self.spec
        fx = (p.real - spec.lo.real) / spec.hx
        fy = (p.imag - spec.lo.imag) / spec.hy
        i, j = int(round(fx)), int(round(fy))
        if 0 <= i < spec.nx and 0 <= j < spec.ny and self.nodes[j, i] == p and self.interior[j, i]:
            return int(self.index[j, i])
        return None

    def to_point(self, node_dist, q: complex) -> float:
        q = complex(q)
        i = self._node_at(q)
        if i is not None:
            return float(node_dist[i])
        targets, lens, _ = self.attach(q)
        if len(targets) == 0:
            return float("inf")
        return float(np.min(node_dist[targets] + lens))

    def point_distance(self, p: complex, q: complex, node_dist=None) -> float:
        """Shortest-path distance between two arbitrary interior points."""
        if node_dist is None:
            node_dist = self.from_point(p)
        best = self.to_point(node_dist, q)
        d = complex(q) - complex(p)
        reach = (self.radius + 1) * max(self.spec.hx, self.spec.hy)
        if abs(d) == 0:
            return 0.0
        if abs(d) <= reach and first_exit(self.domain, complex(p), d) > 1.0:
            best = min(best, float(segment_lengths(self.field, complex(p), complex(q))))
        return best

    def grid_values(self, node_values, fill=np.nan):
        out = np.full(self.nodes.shape, fill, dtype=float)
        out[self.interior] = node_values
        return out
