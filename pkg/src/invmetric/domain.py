"""Bounded planar domains whose boundary is a finite union of circles.

Every domain kind normalizes to one outer circle plus a list of holes.
Each boundary circle carries its own defining function, ``|z - c| - r``
for the outer circle and ``r - |z - c|`` for holes, so gradients and
boundary distances are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .automorphism import Automorphism, from_json as aut_from_json
from .errors import AmbiguousComponent, EmptySample, InvalidDomain, OutsideDomain

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float
    outer: bool

    def rho(self, z):
        d = np.abs(np.asarray(z) - self.center)
        return d - self.radius if self.outer else self.radius - d

    def rho_quadratic(self, z):
        d2 = np.abs(np.asarray(z) - self.center) ** 2
        r2 = self.radius**2
        return d2 - r2 if self.outer else r2 - d2

    def points(self, m: int) -> np.ndarray:
        theta = 2 * np.pi * np.arange(m) / m
        return self.center + self.radius * np.exp(1j * theta)

    def nearest_point(self, z):
        v = np.asarray(z) - self.center
        return self.center + self.radius * v / np.abs(v)


class PlanarDomain:
    """Base for the concrete kinds below."""

    kind = "abstract"

    @property
    def circles(self) -> tuple[Circle, ...]:
        raise NotImplementedError

    @property
    def outer_circle(self) -> Circle:
        return self.circles[0]

    @property
    def hole_circles(self) -> tuple[Circle, ...]:
        return self.circles[1:]

    def to_json(self):
        raise NotImplementedError

    def rho(self, z):
        """Max of the per-component defining functions (signed-distance form)."""
        z = np.asarray(z)
        out = self.circles[0].rho(z)
        for c in self.circles[1:]:
            out = np.maximum(out, c.rho(z))
        return out

    def contains(self, z, tol: float = 0.0):
        return self.rho(z) < tol

    def boundary_distance(self, z):
        """Euclidean distance to the boundary, for any z (no interior check)."""
        return np.abs(self.rho(z)) if len(self.circles) == 1 else np.min(
            np.stack([np.abs(c.rho(z)) for c in self.circles]), axis=0
        )

    def nearest_boundary_point(self, z):
        z = np.asarray(z, dtype=complex)
        d = np.stack([np.abs(c.rho(z)) for c in self.circles])
        idx = np.argmin(d, axis=0)
        pts = np.stack([c.nearest_point(z) for c in self.circles])
        return np.take_along_axis(pts, idx[None, ...], axis=0)[0]

    @property
    def diameter(self) -> float:
        return 2.0 * self.outer_circle.radius

    @cached_property
    def interior_point(self) -> complex:
        zs = _bbox_grid(self, 65)
        d = np.where(self.rho(zs) < 0, self.boundary_distance(zs), -np.inf)
        return complex(zs.ravel()[np.argmax(d)])

    @cached_property
    def inradius(self) -> float:
        """Largest Euclidean boundary distance over the domain."""
        from scipy.optimize import minimize

        zs = _bbox_grid(self, 129)
        d = np.where(self.rho(zs) < 0, self.boundary_distance(zs), -np.inf)
        z0 = zs.ravel()[np.argmax(d)]

        def neg(x):
            z = complex(x[0], x[1])
            if self.rho(z) >= 0:
                return 0.0
            return -float(self.boundary_distance(z))

        res = minimize(neg, [z0.real, z0.imag], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12})
        return max(-res.fun, float(np.max(d)))


def _bbox_grid(domain, n):
    oc = domain.outer_circle
    x = np.linspace(oc.center.real - oc.radius, oc.center.real + oc.radius, n)
    y = np.linspace(oc.center.imag - oc.radius, oc.center.imag + oc.radius, n)
    return x[None, :] + 1j * y[:, None]


@dataclass(frozen=True)
class Disc(PlanarDomain):
    center: complex = 0j
    radius: float = 1.0
    kind = "disc"

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidDomain("disc radius must be positive")
        object.__setattr__(self, "center", complex(self.center))

    @property
    def circles(self):
        return (Circle(self.center, float(self.radius), True),)

    def to_json(self):
        return {"disc": {"center": [self.center.real, self.center.imag], "radius": self.radius}}


@dataclass(frozen=True)
class Annulus(PlanarDomain):
    """{inner < |z| < outer}, centered at the origin."""

    inner: float
    outer: float
    kind = "annulus"

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise InvalidDomain(f"annulus needs 0 < inner < outer, got {self.inner}, {self.outer}")

    @property
    def circles(self):
        return (Circle(0j, float(self.outer), True), Circle(0j, float(self.inner), False))

    def to_json(self):
        return {"annulus": {"inner": self.inner, "outer": self.outer}}


@dataclass(frozen=True)
class DiscMinusDiscs(PlanarDomain):
    outer: Disc
    holes: tuple = field(default=())
    kind = "disc_minus_discs"

    def __post_init__(self):
        object.__setattr__(self, "holes", tuple(self.holes))
        R, C = self.outer.radius, self.outer.center
        for h in self.holes:
            if abs(h.center - C) + h.radius >= R:
                raise InvalidDomain(f"hole {h} is not inside the open outer disc")
        for i, h in enumerate(self.holes):
            for g in self.holes[i + 1:]:
                if abs(h.center - g.center) <= h.radius + g.radius:
                    raise InvalidDomain(f"holes {h} and {g} overlap")

    @property
    def circles(self):
        return (Circle(self.outer.center, float(self.outer.radius), True),) + tuple(
            Circle(h.center, float(h.radius), False) for h in self.holes
        )

    def to_json(self):
        return {
            "disc_minus_discs": {
                "outer": self.outer.to_json()["disc"],
                "holes": [h.to_json()["disc"] for h in self.holes],
            }
        }


def image_circle(circle: Circle, aut: Automorphism) -> tuple[complex, float]:
    """Center and radius of the image of a circle under a Moebius map."""
    m = aut.matrix()
    (a, b), (c, d) = m
    c0, r = circle.center, circle.radius
    if abs(c) <= 1e-300:
        return complex((a * c0 + b) / d), float(abs(a / d) * r)
    p = -d / c
    if abs(abs(p - c0) - r) <= 1e-12 * max(1.0, r):
        raise InvalidDomain("Moebius map sends a boundary circle to a line")
    if abs(p - c0) <= 1e-300:
        center = a / c
    else:
        # the pole's reflection in the circle maps to the image center
        center = aut.apply(c0 + r * r / np.conj(p - c0))
    radius = abs(aut.apply(c0 + r) - center)
    return complex(center), float(radius)


@dataclass(frozen=True)
class MoebiusImage(PlanarDomain):
    base: PlanarDomain
    map: Automorphism
    kind = "moebius_image"

    def __post_init__(self):
        pole = self.map.pole()
        if pole is not None and self.base.rho(pole) <= BOUNDARY_TOL:
            raise InvalidDomain("Moebius map has its pole in the closure of the base domain")
        _ = self.circles

    @cached_property
    def circles(self):
        inside = self.map.apply(self.base.interior_point)
        imgs = [image_circle(c, self.map) for c in self.base.circles]
        outer = [i for i, (c, r) in enumerate(imgs) if abs(inside - c) < r]
        if len(outer) != 1:
            raise InvalidDomain("image of the base domain is not a bounded circle domain")
        k = outer[0]
        circles = [Circle(imgs[k][0], imgs[k][1], True)]
        circles += [Circle(c, r, False) for i, (c, r) in enumerate(imgs) if i != k]
        return tuple(circles)

    def to_json(self):
        return {"moebius_image": {"base": self.base.to_json(), "map": self.map.to_json()}}


@dataclass(frozen=True)
class GridSpec:
    """Rectangular node grid; ``lo``/``hi`` are opposite corners, nodes include both."""

    lo: complex
    hi: complex
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid resolution must be at least 8 per axis")
        object.__setattr__(self, "lo", complex(self.lo))
        object.__setattr__(self, "hi", complex(self.hi))

    @classmethod
    def for_domain(cls, domain: PlanarDomain, resolution: int, pad_cells: float = 2.0):
        oc = domain.outer_circle
        r = oc.radius
        step = 2 * r / (resolution - 1 - 2 * pad_cells)
        half = r + pad_cells * step
        return cls(oc.center - half * (1 + 1j), oc.center + half * (1 + 1j), resolution, resolution)

    @property
    def hx(self) -> float:
        return (self.hi.real - self.lo.real) / (self.nx - 1)

    @property
    def hy(self) -> float:
        return (self.hi.imag - self.lo.imag) / (self.ny - 1)

    @property
    def xs(self):
        return self.lo.real + self.hx * np.arange(self.nx)

    @property
    def ys(self):
        return self.lo.imag + self.hy * np.arange(self.ny)

    def nodes(self) -> np.ndarray:
        """Complex node coordinates, shape (ny, nx); row-major is y-outer."""
        return self.xs[None, :] + 1j * self.ys[:, None]

    def coarsened(self) -> "GridSpec":
        return GridSpec(self.lo, self.hi, (self.nx - 1) // 2 + 1, (self.ny - 1) // 2 + 1)

    def contains_domain(self, domain: PlanarDomain) -> bool:
        oc = domain.outer_circle
        return (self.lo.real <= oc.center.real - oc.radius and self.hi.real >= oc.center.real + oc.radius
                and self.lo.imag <= oc.center.imag - oc.radius and self.hi.imag >= oc.center.imag + oc.radius)


def eval_defining(domain: PlanarDomain, z, form: str = "distance"):
    """Defining function value at ``z``; negative inside.

    ``form="quadratic"`` uses ``|z-c|^2 - r^2`` per component instead of the
    signed-distance form (for the unit disc this is ``|z|^2 - 1``).
    """
    if form == "distance":
        return domain.rho(z)
    if form != "quadratic":
        raise ValueError(f"unknown defining-function form {form!r}")
    out = domain.circles[0].rho_quadratic(z)
    for c in domain.circles[1:]:
        out = np.maximum(out, c.rho_quadratic(z))
    return out


def active_component(domain: PlanarDomain, z: complex, tol: float = 1e-12) -> Circle:
    vals = sorted(((float(c.rho(z)), i) for i, c in enumerate(domain.circles)), reverse=True)
    if len(vals) > 1 and vals[0][0] - vals[1][0] <= tol:
        raise AmbiguousComponent(f"{z} is equidistant from two boundary components")
    return domain.circles[vals[0][1]]


def grad_defining(domain: PlanarDomain, z: complex, form: str = "distance") -> np.ndarray:
    """Analytic Euclidean gradient of the active component's defining function."""
    circ = active_component(domain, z)
    v = complex(z) - circ.center
    sign = 1.0 if circ.outer else -1.0
    if form == "quadratic":
        g = 2 * sign * v
    else:
        if abs(v) == 0:
            raise AmbiguousComponent("gradient undefined at the circle center")
        g = sign * v / abs(v)
    return np.array([g.real, g.imag])


def euclidean_boundary_distance(domain: PlanarDomain, z) -> float:
    if not np.all(domain.rho(z) < 0):
        raise OutsideDomain(f"{z} is not an interior point")
    d = domain.boundary_distance(z)
    return float(d) if np.ndim(d) == 0 else d


def sample_interior(domain: PlanarDomain, spec: GridSpec, margin: float = 0.0) -> np.ndarray:
    """Grid nodes with rho < 0 and boundary distance >= margin, row-major."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    z = spec.nodes().ravel()
    keep = (domain.rho(z) < 0) & (domain.boundary_distance(z) >= margin)
    if not keep.any():
        raise EmptySample(f"no grid node has boundary distance >= {margin}")
    return z[keep]


def from_json(obj) -> PlanarDomain:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise InvalidDomain(f"domain must be a single-key object, got {obj!r}")
    (key, val), = obj.items()
    if key == "disc":
        c = val.get("center", [0.0, 0.0])
        return Disc(complex(c[0], c[1]), float(val.get("radius", 1.0)))
    if key == "annulus":
        return Annulus(float(val["inner"]), float(val["outer"]))
    if key == "disc_minus_discs":
        outer = from_json({"disc": val.get("outer", {})})
        holes = tuple(from_json({"disc": h}) for h in val.get("holes", []))
        return DiscMinusDiscs(outer, holes)
    if key == "moebius_image":
        return MoebiusImage(from_json(val["base"]), aut_from_json(val["map"]))
    if key in ("infinitely_connected",):
        raise InvalidDomain("infinitely connected domains have no smooth defining function")
    raise InvalidDomain(f"unknown domain kind {key!r}")


def four_holed_disc() -> DiscMinusDiscs:
    """Unit disc minus four radius-1/10 discs centered at +-1/2, +-i/2."""
    holes = tuple(Disc(c, 0.1) for c in (0.5, -0.5, 0.5j, -0.5j))
    return DiscMinusDiscs(Disc(0j, 1.0), holes)


def rigid_three_holed_disc() -> DiscMinusDiscs:
    holes = (Disc(0.5, 0.1), Disc(0.5j, 0.05), Disc(-0.5, 1 / 30))
    return DiscMinusDiscs(Disc(0j, 1.0), holes)
