"""Bergman kernels, Bergman metrics and representative coordinates.

Kernels follow the convention K(z, w) holomorphic in z and antiholomorphic
in w. Closed forms cover the disc, the ball in C^n and concentric annuli
(Laurent series). ``NumericBasis`` is an independent oracle: it builds the
Gram matrix of a monomial/Laurent basis by quadrature and inverts it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import linalg

from .automorphism import Automorphism
from .domain import Annulus, Disc, PlanarDomain
from .errors import ExperimentalWarning, InvalidInput, KernelZero, NumericalBreakdown, TruncationWarning
from .group import CompactGroup, haar_nodes
from .metric import MetricField, conformal_field


class KernelModel:
    domain: PlanarDomain

    def kernel(self, z, w):
        raise NotImplementedError

    def diag_jet(self, z):
        """(K, K_z, K_zzbar) on the diagonal w = z, for the metric factor."""
        raise NotImplementedError

    def metric_factor(self, z):
        k, kz, kzz = self.diag_jet(np.asarray(z, dtype=complex))
        return (kzz * k - np.abs(kz) ** 2) / k**2


@dataclass(frozen=True)
class DiscClosed(KernelModel):
    """Disc of radius R about c: R^2 / (pi (R^2 - (z-c) conj(w-c))^2)."""

    center: complex = 0j
    radius: float = 1.0

    @property
    def domain(self):
        return Disc(self.center, self.radius)

    def kernel(self, z, w):
        z = np.asarray(z, dtype=complex) - self.center
        w = np.asarray(w, dtype=complex) - self.center
        r2 = self.radius**2
        return r2 / (np.pi * (r2 - z * np.conj(w)) ** 2)

    def diag_jet(self, z):
        u = z - self.center
        r2 = self.radius**2
        s = r2 - np.abs(u) ** 2
        k = r2 / (np.pi * s**2)
        kz = 2 * r2 * np.conj(u) / (np.pi * s**3)
        kzz = 2 * r2 * (s + 3 * np.abs(u) ** 2) / (np.pi * s**4)
        return k, kz, kzz

    def metric_factor(self, z):
        u = np.asarray(z, dtype=complex) - self.center
        r2 = self.radius**2
        return 2 * r2 / (r2 - np.abs(u) ** 2) ** 2


@dataclass(frozen=True)
class BallClosed(KernelModel):
    """Unit ball in C^n: n!/pi^n (1 - <z, w>)^-(n+1)."""

    n: int

    def kernel(self, z, w):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        if z.shape[-1] != self.n or w.shape[-1] != self.n:
            raise InvalidInput(f"ball kernel expects vectors of length {self.n}")
        inner = np.sum(z * np.conj(w), axis=-1)
        return math.factorial(self.n) / np.pi**self.n * (1 - inner) ** (-(self.n + 1))


@dataclass(frozen=True)
class AnnulusSeries(KernelModel):
    """Laurent series sum_{|m| <= N} (z conj w)^m / nu_m on {r < |z| < R}."""

    r: float
    R: float
    truncation: int = 60

    @property
    def domain(self):
        return Annulus(self.r, self.R)

    def log_norms(self):
        """(m, log nu_m), computed without overflow for large truncations."""
        m = np.arange(-self.truncation, self.truncation + 1)
        p = (m + 1).astype(float)
        q = self.r / self.R
        out = np.empty(len(m))
        pos, neg, zero = p > 0, p < 0, p == 0
        out[pos] = math.log(math.pi) + 2 * p[pos] * math.log(self.R) + np.log1p(-q ** (2 * p[pos])) - np.log(p[pos])
        out[neg] = (math.log(math.pi) + 2 * p[neg] * math.log(self.r)
                    + np.log1p(-q ** (-2 * p[neg])) - np.log(-p[neg]))
        out[zero] = math.log(2 * math.pi * math.log(self.R / self.r))
        return m, out

    def norms(self):
        m, lognu = self.log_norms()
        return m, np.exp(lognu)

    def _terms(self, t):
        """t^m / nu_m for each m, as an array with a trailing axis."""
        m, lognu = self.log_norms()
        return np.exp(np.log(np.asarray(t, dtype=float))[..., None] * m - lognu), m

    def tail_bound(self, t):
        """Geometric bound on the omitted terms for |z conj w| = t."""
        N = self.truncation
        t = np.asarray(t, dtype=float)
        q_pos = t / self.R**2
        q_neg = self.r**2 / t
        terms, _ = self._terms(t)
        out = np.zeros(t.shape)
        for last, q in ((terms[..., -1], q_pos), (terms[..., 0], q_neg)):
            # term ratio is q * (m+2)/(m+1) <= q * (N+2)/(N+1)
            qq = q * (N + 2) / (N + 1)
            with np.errstate(divide="ignore"):
                out = out + np.where(qq < 1, last * qq / np.where(qq < 1, 1 - qq, 1.0), np.inf)
        return out

    def _warn_tail(self, z, w, value):
        t = np.abs(np.asarray(z) * np.conj(np.asarray(w)))
        diag = 0.5 * (self._diag_value(np.abs(z) ** 2) + self._diag_value(np.abs(w) ** 2))
        tail = self.tail_bound(t)
        if np.any(tail > 1e-12 * diag):
            warnings.warn(
                f"annulus series truncated at N={self.truncation}: tail bound "
                f"{float(np.max(tail / diag)):.2e} of the diagonal value", TruncationWarning, stacklevel=3)

    def _diag_value(self, t):
        return np.sum(self._terms(t)[0], axis=-1)

    def kernel(self, z, w, warn: bool = True):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        u = z * np.conj(w)
        terms, m = self._terms(np.abs(u))
        val = np.sum(terms * np.exp(1j * np.angle(u)[..., None] * m), axis=-1)
        if warn:
            self._warn_tail(z, w, val)
        return val

    def diag_jet(self, z):
        t = np.abs(z) ** 2
        terms, m = self._terms(t)
        f = np.sum(terms, axis=-1)
        f1 = np.sum(m * terms, axis=-1) / t
        f2 = np.sum(m * (m - 1) * terms, axis=-1) / t**2
        # d/dz f(z zbar) = zbar f'(t); d2/dz dzbar = f' + t f''
        return f, np.conj(z) * f1, f1 + t * f2


def _gl(n, a, b):
    x, w = leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


class NumericBasis(KernelModel):
    """Gram-matrix oracle for the Bergman kernel of a circle domain.

    Basis: ((z - c0)/R0)^m for m = 0..degree about the outer circle, and
    ((z - c_h)/r_h)^-m for m = 1..degree about each hole. Gram entries come
    from either

    * ``quadrature="polar"``: Gauss-Legendre product rule in polar
      coordinates (concentric disc/annulus only), or
    * ``quadrature="boundary"``: Green's identity, turning each area
      integral into trapezoid sums on the boundary circles.
    """

    def __init__(self, domain: PlanarDomain, degree: int = 30, quadrature: str | None = None,
                 radial_nodes: int = 64, angular_nodes: int | None = None, boundary_nodes: int | None = None):
        self.domain = domain
        self.degree = int(degree)
        circles = domain.circles
        concentric = all(c.center == circles[0].center for c in circles) and len(circles) <= 2
        if quadrature is None:
            quadrature = "polar" if concentric else "boundary"
        if quadrature == "polar" and not concentric:
            raise InvalidInput("polar quadrature needs a disc or concentric annulus")
        self.quadrature = quadrature
        self.outer = circles[0]
        self.hole_list = circles[1:]
        if quadrature == "polar":
            span = 2 * self.degree + 1
            nt = angular_nodes or max(64, span + 64)
            gram = self._gram_polar(max(64, radial_nodes), max(64, nt))
        else:
            q = boundary_nodes or max(256, 8 * self.degree)
            gram = self._gram_boundary(q)
        gram = 0.5 * (gram + gram.conj().T)
        s = 1.0 / np.sqrt(np.real(np.diag(gram)))
        self.scale = s
        self.gram = gram * s[:, None] * s[None, :]
        try:
            cho = linalg.cho_factor(self.gram, lower=True)
            inv = linalg.cho_solve(cho, np.eye(len(s)))
        except linalg.LinAlgError:
            w, v = np.linalg.eigh(self.gram)
            keep = w > 1e-13 * w.max()
            inv = (v[:, keep] / w[keep]) @ v[:, keep].conj().T
        # K(z, w) = b(z)^T A conj(b(w)) with A = (G^-1)^T for G_jk = <phi_j, phi_k>
        self.A = inv.T
        self.size = len(s)

    def basis(self, z, derivative: bool = False):
        z = np.asarray(z, dtype=complex)[..., None]
        cols = []
        c0, R0 = self.outer.center, self.outer.radius
        m = np.arange(self.degree + 1)
        u = (z - c0) / R0
        if derivative:
            cols.append(np.where(m == 0, 0, m * u ** np.maximum(m - 1, 0)) / R0)
        else:
            cols.append(u**m)
        for h in self.hole_list:
            m = np.arange(1, self.degree + 1)
            v = (z - h.center) / h.radius
            cols.append(-m * v ** (-m - 1) / h.radius if derivative else v ** (-m))
        return np.concatenate(cols, axis=-1)

    def _antiderivative_conj(self, z):
        """Psi_k with d/dzbar Psi_k = conj(phi_k), single-valued on the closure."""
        z = np.asarray(z, dtype=complex)[..., None]
        cols = []
        c0, R0 = self.outer.center, self.outer.radius
        m = np.arange(self.degree + 1)
        cols.append(np.conj((z - c0) ** (m + 1)) / ((m + 1) * R0**m))
        for h in self.hole_list:
            m = np.arange(1, self.degree + 1)
            d = z - h.center
            with np.errstate(divide="ignore", invalid="ignore"):
                pw = np.conj(d ** (1 - m)) * h.radius**m / np.where(m == 1, 1, 1 - m)
            logterm = h.radius * np.log(np.abs(d) ** 2)
            cols.append(np.where(m == 1, logterm, pw))
        return np.concatenate(cols, axis=-1)

    def _gram_polar(self, nr, nt):
        c = self.outer.center
        R = self.outer.radius
        r0 = self.hole_list[0].radius if self.hole_list else 0.0
        rr, wr = _gl(nr, r0, R)
        th, wt = _gl(nt, 0.0, 2 * np.pi)
        z = c + rr[:, None] * np.exp(1j * th[None, :])
        w = (wr * rr)[:, None] * wt[None, :]
        B = self.basis(z.ravel())
        return (B * w.ravel()[:, None]).T @ np.conj(B)

    def _gram_boundary(self, q):
        g = 0
        th = 2 * np.pi * np.arange(q) / q
        for circ in self.domain.circles:
            e = np.exp(1j * th)
            z = circ.center + circ.radius * e
            orient = 1.0 if circ.outer else -1.0
            dz = orient * 1j * circ.radius * e * (2 * np.pi / q)
            B = self.basis(z)
            P = self._antiderivative_conj(z)
            g = g + (B * dz[:, None]).T @ P / 2j
        return g

    def kernel(self, z, w):
        bz = self.basis(z) * self.scale
        bw = self.basis(w) * self.scale
        return np.sum((bz @ self.A) * np.conj(bw), axis=-1)

    def diag_jet(self, z):
        b = self.basis(z) * self.scale
        db = self.basis(z, derivative=True) * self.scale
        bA = b @ self.A
        dbA = db @ self.A
        k = np.real(np.sum(bA * np.conj(b), axis=-1))
        kz = np.sum(dbA * np.conj(b), axis=-1)
        kzz = np.real(np.sum(dbA * np.conj(db), axis=-1))
        return k, kz, kzz


@dataclass(frozen=True)
class Transported(KernelModel):
    """Kernel of psi^-1(base) from a base model: K0(psi z, psi w) psi'(z) conj(psi'(w)).

    ``psi`` maps this domain onto ``base.domain``.
    """

    base: KernelModel
    psi: Automorphism
    image: PlanarDomain

    @property
    def domain(self):
        return self.image

    def kernel(self, z, w):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        k0 = self.base.kernel(self.psi.apply(z), self.psi.apply(w))
        return k0 * self.psi.derivative(z) * np.conj(self.psi.derivative(w))

    def metric_factor(self, z):
        z = np.asarray(z, dtype=complex)
        return np.abs(self.psi.derivative(z)) ** 2 * self.base.metric_factor(self.psi.apply(z))

    def diag_jet(self, z):
        z = np.asarray(z, dtype=complex)
        d1 = self.psi.derivative(z)
        d2 = self.psi.nth_derivative(z, 2)
        k0, k0z, _ = self.base.diag_jet(self.psi.apply(z))
        k = np.abs(d1) ** 2 * k0
        kz = k * (d2 / d1 + d1 * k0z / k0)
        kzz = self.metric_factor(z) * k + np.abs(kz) ** 2 / k
        return k, kz, kzz


def bergman_model(domain: PlanarDomain, truncation: int = 400, degree: int = 30) -> KernelModel:
    """Closed form when one exists (disc, annulus or a Moebius image of them), else the oracle."""
    from .domain import MoebiusImage

    if isinstance(domain, Disc):
        return DiscClosed(domain.center, domain.radius)
    if isinstance(domain, Annulus):
        return AnnulusSeries(domain.inner, domain.outer, truncation)
    if isinstance(domain, MoebiusImage):
        base = bergman_model(domain.base, truncation, degree)
        if not isinstance(base, NumericBasis):
            return Transported(base, domain.map.inverse(), domain)
    return numeric_basis(domain, degree)


def numeric_basis(domain: PlanarDomain, degree: int = 30, **kw) -> NumericBasis:
    from .domain import DiscMinusDiscs

    if isinstance(domain, DiscMinusDiscs) and kw.get("quadrature") == "polar":
        raise InvalidInput("polar quadrature is not available for disc-minus-discs")
    if isinstance(domain, DiscMinusDiscs):
        warnings.warn("Bergman kernels of disc-minus-discs domains are oracle-only (experimental)",
                      ExperimentalWarning, stacklevel=2)
    return NumericBasis(domain, degree, **kw)


def ball_monomial_norms_numeric(n: int, degree: int, nodes: int = 64) -> dict:
    """||z^alpha||^2 on the unit ball of C^n (n <= 2) by Gauss-Legendre quadrature.

    Angular integrals of monomials are exact (factor (2 pi)^n); the radial
    part is integrated numerically.
    """
    if n == 1:
        r, wr = _gl(nodes, 0.0, 1.0)
        return {(a,): float(2 * np.pi * np.sum(wr * r ** (2 * a + 1))) for a in range(degree + 1)}
    if n != 2:
        raise InvalidInput("numeric ball norms implemented for n <= 2")
    s, ws = _gl(nodes, 0.0, 1.0)
    t, wt = _gl(nodes, 0.0, np.pi / 2)
    r1 = s[:, None] * np.cos(t)[None, :]
    r2 = s[:, None] * np.sin(t)[None, :]
    w = (ws * s)[:, None] * wt[None, :]
    out = {}
    for a1 in range(degree + 1):
        for a2 in range(degree + 1 - a1):
            val = np.sum(w * r1 ** (2 * a1 + 1) * r2 ** (2 * a2 + 1))
            out[(a1, a2)] = float((2 * np.pi) ** 2 * val)
    return out


def ball_oracle_kernel(n: int, z, w, degree: int = 40, nodes: int = 64):
    norms = ball_monomial_norms_numeric(n, degree, nodes)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    total = 0j
    for alpha, nrm in norms.items():
        total += np.prod(z ** np.array(alpha)) * np.prod(np.conj(w) ** np.array(alpha)) / nrm
    return total


def kernel(model: KernelModel, z, w):
    return model.kernel(z, w)


def bergman_metric_field(model: KernelModel, domain: PlanarDomain | None = None) -> MetricField:
    """Conformal field B(z) I with B = d^2 log K(z,z) / dz dzbar."""
    domain = domain or model.domain

    def factor(z):
        b = model.metric_factor(z)
        if np.any(~(b > 0)):
            raise NumericalBreakdown("Bergman metric factor is not positive",
                                     {"min": float(np.nanmin(b))})
        return b

    return conformal_field(domain, factor, f"Bergman({type(model).__name__})",
                           smooth_to_boundary=False)


def transformation_residual(model1: KernelModel, model2: KernelModel, phi: Automorphism, pairs) -> float:
    """max |phi'(z) K2(phi z, phi w) conj(phi'(w)) - K1(z, w)| / |K1(z, w)|."""
    worst = 0.0
    for z, w in pairs:
        lhs = phi.derivative(z) * model2.kernel(phi.apply(z), phi.apply(w)) * np.conj(phi.derivative(w))
        rhs = model1.kernel(z, w)
        worst = max(worst, float(abs(lhs - rhs) / abs(rhs)))
    return worst


def _diameter(model):
    dom = getattr(model, "domain", None)
    return dom.diameter if dom is not None else 2.0


def representative_coords(model: KernelModel, p: complex, z, step: float | None = None):
    """b_p(z) = d/d(conj w) [log K(z,w) - log K(w,w)] at w = p.

    Wirtinger derivative by central differences in x and y; logarithms are
    taken of ratios to the value at w = p so the branch stays fixed.
    """
    h = step if step is not None else 1e-5 * _diameter(model)
    z = np.asarray(z, dtype=complex)
    kzp = model.kernel(z, p)
    kpp = model.kernel(p, p)
    kzz = model.kernel(z, z)
    if np.any(np.abs(kzp) < 1e-12 * np.sqrt(np.abs(kzz * kpp))):
        raise KernelZero("K(z, p) vanishes to working precision")

    def g(w):
        return np.log(model.kernel(z, w) / kzp) - np.log(model.kernel(w, w) / kpp)

    dx = (g(p + h) - g(p - h)) / (2 * h)
    dy = (g(p + 1j * h) - g(p - 1j * h)) / (2 * h)
    return 0.5 * (dx + 1j * dy)


def linear_fit_residual(x, y) -> tuple[complex, float]:
    """Best complex-linear fit y ~ c x; returns (c, relative residual)."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    c = np.vdot(x, y) / np.vdot(x, x)
    return complex(c), float(np.linalg.norm(y - c * x) / np.linalg.norm(y))


@dataclass(frozen=True)
class LeviInput:
    """Defining function with analytic holomorphic derivatives, evaluated at z, w in C^n."""

    n: int
    rho: Callable
    drho: Callable
    d2rho: Callable
    z: tuple
    w: tuple


def levi_polynomial(inp: LeviInput) -> complex:
    z = np.asarray(inp.z, dtype=complex)
    w = np.asarray(inp.w, dtype=complex)
    if z.shape != (inp.n,) or w.shape != (inp.n,):
        raise InvalidInput(f"points must have dimension {inp.n}")
    d1 = np.asarray(inp.drho(w), dtype=complex)
    d2 = np.asarray(inp.d2rho(w), dtype=complex)
    if d1.shape != (inp.n,) or d2.shape != (inp.n, inp.n):
        raise InvalidInput("derivative evaluators have the wrong shape")
    dz = z - w
    return complex(inp.rho(w) + dz @ d1 + 0.5 * dz @ d2 @ dz)


def ball_levi_input(z, w) -> LeviInput:
    """Levi data for rho(w) = |w|^2 - 1 (holomorphic second partials vanish)."""
    z = tuple(np.atleast_1d(np.asarray(z, dtype=complex)))
    w = tuple(np.atleast_1d(np.asarray(w, dtype=complex)))
    n = len(z)
    return LeviInput(
        n,
        rho=lambda w: float(np.sum(np.abs(w) ** 2) - 1),
        drho=lambda w: np.conj(w),
        d2rho=lambda w: np.zeros((n, n), dtype=complex),
        z=z,
        w=w,
    )


def derivative_sups(group: CompactGroup, order: int, samples, n: int = 64) -> list[float]:
    """Per-order sup of |d^k alpha / dz^k| over Haar nodes and samples, k = 1..order."""
    if not 1 <= order <= 4:
        raise InvalidInput("order must be between 1 and 4")
    z = np.asarray(samples, dtype=complex)
    sups = [0.0] * order
    for a, _ in haar_nodes(group, n):
        for k in range(1, order + 1):
            sups[k - 1] = max(sups[k - 1], float(np.max(np.abs(a.nth_derivative(z, k)))))
    return sups


def derivative_bound_probe(group: CompactGroup, order: int, samples, n: int = 64) -> float:
    return max(derivative_sups(group, order, samples, n))


def write_kernel_csv(path, z, w, values) -> int:
    """Kernel values with header re(z),im(z),re(w),im(w),re(K),im(K)."""
    import csv

    from .metric import fmt

    z, w, values = (np.atleast_1d(np.asarray(a, dtype=complex)) for a in (z, w, values))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["re(z)", "im(z)", "re(w)", "im(w)", "re(K)", "im(K)"])
        for a, b, k in zip(z, w, values):
            out.writerow([fmt(a.real), fmt(a.imag), fmt(b.real), fmt(b.imag), fmt(k.real), fmt(k.imag)])
    return len(z)
