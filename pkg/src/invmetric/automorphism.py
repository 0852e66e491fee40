"""Holomorphic self-maps of planar domains in linear-fractional form.

Every form here (rotation, general Moebius map, inversion, composite) is a
linear fractional transformation, so each one also exposes its 2x2 complex
matrix. Evaluation and derivatives are analytic and work elementwise on
numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidAutomorphism


def _moebius_eval(m, z):
    (a, b), (c, d) = m
    return (a * z + b) / (c * z + d)


def _moebius_nth_derivative(m, z, order):
    (a, b), (c, d) = m
    det = a * d - b * c
    if order == 0:
        return _moebius_eval(m, z)
    if c == 0:
        if order == 1:
            return np.zeros_like(np.asarray(z, dtype=complex)) + det / (d * d)
        return np.zeros_like(np.asarray(z, dtype=complex))
    sign = 1.0 if order % 2 == 1 else -1.0
    return sign * math.factorial(order) * det * c ** (order - 1) / (c * z + d) ** (order + 1)


class Automorphism:
    """Common interface of the linear-fractional forms."""

    def apply(self, z):
        raise NotImplementedError

    def derivative(self, z):
        raise NotImplementedError

    def matrix(self) -> np.ndarray:
        raise NotImplementedError

    def inverse(self) -> "Automorphism":
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def nth_derivative(self, z, order: int):
        """``order``-th complex derivative, from the composed matrix."""
        return _moebius_nth_derivative(self.matrix(), z, order)

    def pole(self):
        """Finite pole of the map, or None when it fixes infinity."""
        (_, _), (c, d) = self.matrix()
        if abs(c) <= 1e-300:
            return None
        return complex(-d / c)

    def __call__(self, z):
        return self.apply(z)


@dataclass(frozen=True)
class Rotation(Automorphism):
    theta: float

    def apply(self, z):
        return np.exp(1j * self.theta) * z

    def derivative(self, z):
        return np.exp(1j * self.theta) + 0 * np.asarray(z, dtype=complex)

    def nth_derivative(self, z, order):
        if order == 0:
            return self.apply(z)
        if order == 1:
            return self.derivative(z)
        return 0 * np.asarray(z, dtype=complex)

    def matrix(self):
        return np.array([[np.exp(1j * self.theta), 0], [0, 1]], dtype=complex)

    def inverse(self):
        return Rotation(-self.theta)

    def to_json(self):
        return {"rotation": self.theta}


@dataclass(frozen=True)
class Moebius(Automorphism):
    """zeta -> (a zeta + b) / (c zeta + d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise InvalidAutomorphism("Moebius map with ad - bc = 0")

    def apply(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivative(self, z):
        det = self.a * self.d - self.b * self.c
        return det / (self.c * z + self.d) ** 2

    def matrix(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=complex)

    def inverse(self):
        return Moebius(self.d, -self.b, -self.c, self.a)

    def to_json(self):
        return {"moebius": [[complex(v).real, complex(v).imag] for v in (self.a, self.b, self.c, self.d)]}


@dataclass(frozen=True)
class Inversion(Automorphism):
    """zeta -> k / zeta."""

    k: float

    def __post_init__(self):
        if self.k == 0:
            raise InvalidAutomorphism("inversion constant must be nonzero")

    def apply(self, z):
        return self.k / z

    def derivative(self, z):
        return -self.k / z**2

    def matrix(self):
        return np.array([[0, self.k], [1, 0]], dtype=complex)

    def inverse(self):
        return self

    def to_json(self):
        return {"inversion": self.k}


@dataclass(frozen=True)
class Composite(Automorphism):
    """Applies ``parts`` left to right: Composite([f, g]) is g after f."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise InvalidAutomorphism("empty composite")

    def apply(self, z):
        for part in self.parts:
            z = part.apply(z)
        return z

    def derivative(self, z):
        out = 1.0
        for part in self.parts:
            out = out * part.derivative(z)
            z = part.apply(z)
        return out

    def matrix(self):
        m = np.eye(2, dtype=complex)
        for part in self.parts:
            m = part.matrix() @ m
        return m

    def inverse(self):
        return Composite(tuple(p.inverse() for p in reversed(self.parts)))

    def to_json(self):
        return {"composite": [p.to_json() for p in self.parts]}


IDENTITY = Rotation(0.0)


def compose(*auts: Automorphism) -> Automorphism:
    """Left-to-right composite, flattening nested composites."""
    parts = []
    for a in auts:
        parts.extend(a.parts if isinstance(a, Composite) else [a])
    if len(parts) == 1:
        return parts[0]
    return Composite(tuple(parts))


def conjugate(alpha: Automorphism, phi: Automorphism) -> Automorphism:
    """phi o alpha o phi^-1."""
    return compose(phi.inverse(), alpha, phi)


def as_moebius(aut: Automorphism) -> Moebius:
    (a, b), (c, d) = aut.matrix()
    return Moebius(complex(a), complex(b), complex(c), complex(d))


def apply(aut: Automorphism, z):
    return aut.apply(z)


def complex_derivative(aut: Automorphism, z):
    return aut.derivative(z)


def real_jacobian(aut: Automorphism, z) -> np.ndarray:
    """Real 2x2 Jacobian [[Re a', -Im a'], [Im a', Re a']] (stacked over z)."""
    d = np.asarray(aut.derivative(z), dtype=complex)
    out = np.empty(d.shape + (2, 2))
    out[..., 0, 0] = d.real
    out[..., 0, 1] = -d.imag
    out[..., 1, 0] = d.imag
    out[..., 1, 1] = d.real
    return out


def disc_sequence(j: int) -> Moebius:
    """The disc automorphism zeta -> (zeta + s)/(1 + s zeta), s = 1 - 1/j."""
    s = 1.0 - 1.0 / j
    return Moebius(1.0, s, s, 1.0)


def disc_moebius(a: complex, theta: float = 0.0) -> Moebius:
    """e^{i theta} (zeta - a)/(1 - conj(a) zeta)."""
    u = np.exp(1j * theta)
    return Moebius(u, -u * a, -np.conj(a), 1.0)


def _complex_from_json(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise InvalidAutomorphism(f"complex number must be [re, im], got {v!r}")
        return complex(float(v[0]), float(v[1]))
    return complex(float(v))


def from_json(obj) -> Automorphism:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise InvalidAutomorphism(f"automorphism must be a single-key object, got {obj!r}")
    (key, val), = obj.items()
    if key == "rotation":
        return Rotation(float(val))
    if key == "moebius":
        if len(val) != 4:
            raise InvalidAutomorphism("moebius needs [a, b, c, d]")
        return Moebius(*(_complex_from_json(v) for v in val))
    if key == "inversion":
        return Inversion(float(val))
    if key == "composite":
        return Composite(tuple(from_json(p) for p in val))
    raise InvalidAutomorphism(f"unknown automorphism form {key!r}")
