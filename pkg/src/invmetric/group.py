"""Compact automorphism groups of circle domains and their Haar quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automorphism import IDENTITY, Automorphism, Inversion, Rotation, compose, conjugate
from .domain import BOUNDARY_TOL, Annulus, Disc, MoebiusImage, PlanarDomain
from .errors import InvalidAutomorphism, InvalidGroup

ADMIT_TOL = 1e-9
DEFAULT_CIRCLE_NODES = 64


def self_map_residual(aut: Automorphism, domain: PlanarDomain, m: int = 64) -> float:
    """Max distance from the image of each boundary circle to the boundary set.

    Returns ``inf`` when the map sends an interior point outside the domain
    or has its pole in the closure.
    """
    if m < 16:
        raise ValueError("need at least 16 boundary samples per component")
    pole = aut.pole()
    if pole is not None and domain.rho(pole) <= BOUNDARY_TOL:
        return float("inf")
    worst = 0.0
    for circ in domain.circles:
        w = aut.apply(circ.points(m))
        worst = max(worst, float(np.max(domain.boundary_distance(w))))
    if not domain.rho(aut.apply(domain.interior_point)) < 0:
        return float("inf")
    return worst


def check_automorphism(aut: Automorphism, domain: PlanarDomain, tol: float = ADMIT_TOL) -> None:
    pole = aut.pole()
    if pole is not None and domain.rho(pole) <= BOUNDARY_TOL:
        raise InvalidAutomorphism(f"pole {pole} lies in the closure of the domain")
    res = self_map_residual(aut, domain)
    if not res < tol:
        raise InvalidAutomorphism(f"self-map residual {res:.3e} exceeds {tol:.1e}")


def _rotation_base(domain: PlanarDomain) -> tuple[PlanarDomain, Automorphism | None]:
    """Rotation-invariant base domain and the map carrying it onto ``domain``."""
    if isinstance(domain, (Annulus, Disc)):
        if isinstance(domain, Disc) and domain.center != 0:
            raise InvalidGroup("circle groups need a disc centered at the origin")
        return domain, None
    if isinstance(domain, MoebiusImage):
        base, phi = _rotation_base(domain.base)
        return base, domain.map if phi is None else compose(phi, domain.map)
    raise InvalidGroup(f"no rotation action on a {domain.kind} domain")


@dataclass(frozen=True)
class CompactGroup:
    """A compact group acting on ``domain``.

    ``structure`` is "finite", "circle" or "circle_with_inversion". Circle
    structures act on ``base_domain`` by rotations (and one inversion coset)
    and are carried to ``domain`` by ``conjugator`` when it is set.
    """

    structure: str
    domain: PlanarDomain
    elements: tuple = ()
    inversion: float | None = None
    conjugator: Automorphism | None = None
    base_domain: PlanarDomain | None = None

    def base_nodes(self, n: int):
        if self.structure == "finite":
            w = 1.0 / len(self.elements)
            return [(a, w) for a in self.elements]
        thetas = 2 * np.pi * np.arange(n) / n
        rots = [Rotation(float(t)) for t in thetas]
        if self.structure == "circle":
            return [(r, 1.0 / n) for r in rots]
        inv = Inversion(self.inversion)
        w = 1.0 / (2 * n)
        return [(r, w) for r in rots] + [(compose(inv, r), w) for r in rots]

    def nodes(self, n: int = DEFAULT_CIRCLE_NODES):
        if self.conjugator is None:
            return self.base_nodes(n)
        return [(conjugate(a, self.conjugator), w) for a, w in self.base_nodes(n)]

    def parameter_scan(self, m: int):
        """Dense family of elements (same as nodes for finite groups)."""
        return [a for a, _ in self.nodes(m)]


def finite_group(domain: PlanarDomain, elements, check: bool = True, samples: int = 32) -> CompactGroup:
    elements = tuple(elements)
    if not elements:
        raise InvalidGroup("finite group needs at least one element")
    group = CompactGroup("finite", domain, elements)
    if check:
        for a in elements:
            try:
                check_automorphism(a, domain)
            except InvalidAutomorphism as exc:
                raise InvalidGroup(f"element {a} rejected: {exc}") from None
        verify_closure(group, samples)
    return group


def verify_closure(group: CompactGroup, samples: int = 32, tol: float = 1e-10) -> None:
    """Every pairwise composite must match some element on sample points."""
    zs = _sample_points(group.domain, samples)
    table = np.stack([a.apply(zs) for a in group.elements])
    for f in group.elements:
        for g in group.elements:
            img = g.apply(f.apply(zs))
            dev = np.max(np.abs(table - img[None, :]), axis=1)
            if not np.min(dev) < tol:
                raise InvalidGroup(f"composite of {f} and {g} is not a group element")
    ident = np.max(np.abs(table - zs[None, :]), axis=1)
    if not np.min(ident) < tol:
        raise InvalidGroup("identity is missing from the finite group")


def _sample_points(domain: PlanarDomain, count: int) -> np.ndarray:
    rng = np.random.default_rng(12345)
    oc = domain.outer_circle
    out = []
    while len(out) < count:
        z = oc.center + oc.radius * (rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1))
        if domain.rho(z) < -0.01 * oc.radius:
            out.append(z)
    return np.array(out)


def circle_group(domain: PlanarDomain, inversion: float | None = None, check: bool = True) -> CompactGroup:
    """Rotations (plus the coset of ``zeta -> inversion/zeta``) of the base annulus or disc.

    On a MoebiusImage domain the group is conjugated onto the image.
    """
    base, phi = _rotation_base(domain)
    if inversion is not None and not isinstance(base, Annulus):
        raise InvalidGroup("an inversion coset needs an annulus base")
    if inversion is not None and not np.isclose(inversion, base.inner * base.outer, rtol=1e-12):
        raise InvalidGroup(f"inversion constant must be inner*outer = {base.inner * base.outer}")
    structure = "circle" if inversion is None else "circle_with_inversion"
    group = CompactGroup(structure, domain, (), inversion, phi, base)
    if check:
        for a, _ in group.nodes(16):
            try:
                check_automorphism(a, domain)
            except InvalidAutomorphism as exc:
                raise InvalidGroup(f"node {a} rejected: {exc}") from None
    return group


def trivial_group(domain: PlanarDomain) -> CompactGroup:
    return CompactGroup("finite", domain, (IDENTITY,))


def haar_nodes(group: CompactGroup, n: int = DEFAULT_CIRCLE_NODES):
    """(automorphism, weight) pairs; weights sum to one."""
    if n < 1:
        raise ValueError("n must be positive")
    return group.nodes(n)


def conjugate_group(group: CompactGroup, phi: Automorphism) -> CompactGroup:
    """The group phi o G o phi^-1 acting on phi(domain)."""
    target = MoebiusImage(group.domain, phi)
    if group.structure == "finite":
        elements = tuple(conjugate(a, phi) for a in group.elements)
        return finite_group(target, elements)
    conj = phi if group.conjugator is None else compose(group.conjugator, phi)
    new = CompactGroup(group.structure, target, (), group.inversion, conj, group.base_domain)
    for a, _ in new.nodes(16):
        try:
            check_automorphism(a, target)
        except InvalidAutomorphism as exc:
            raise InvalidGroup(f"conjugated node {a} rejected: {exc}") from None
    return new


def group_from_json(obj, domain: PlanarDomain) -> CompactGroup:
    from .automorphism import from_json

    structure = obj.get("structure", "finite")
    if structure == "finite":
        return finite_group(domain, [from_json(e) for e in obj["elements"]])
    if structure == "circle":
        return circle_group(domain)
    if structure == "circle_with_inversion":
        base, _ = _rotation_base(domain)
        k = obj.get("inversion", getattr(base, "inner", 0) * getattr(base, "outer", 0))
        return circle_group(domain, inversion=float(k))
    if structure == "trivial":
        return trivial_group(domain)
    raise InvalidGroup(f"unknown group structure {structure!r}")
