"""Geometry, angle handling and seeded randomness used across the package.

Angles cross the public API in degrees and are converted to radians only at
the boundary of a computation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirection

_U64_MAX = 2**64 - 1


@dataclass(frozen=True)
class Vec3:
    """A point or displacement in meters."""

    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Vec3.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, value)

    def __add__(self, other: Vec3) -> Vec3:
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> Vec3:
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __neg__(self) -> Vec3:
        return Vec3(-self.x, -self.y, -self.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @classmethod
    def from_iterable(cls, values) -> Vec3:
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


def normalize_degrees(angle: float) -> float:
    """Map ``angle`` into the half-open interval (-180, 180]."""
    a = math.fmod(float(angle), 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def angle_difference(a: float, b: float) -> float:
    """Signed smallest difference ``a - b`` in degrees, in (-180, 180]."""
    return normalize_degrees(a - b)


@dataclass(frozen=True)
class Bearing:
    """A planar direction in degrees, normalized to (-180, 180]."""

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError("bearing must be finite")
        object.__setattr__(self, "angle", normalize_degrees(self.angle))

    @classmethod
    def from_radians(cls, rad: float) -> Bearing:
        return cls(math.degrees(rad))

    @property
    def radians(self) -> float:
        return math.radians(self.angle)

    def error_to(self, other: Bearing) -> float:
        """Absolute angular distance to ``other`` in degrees."""
        return abs(angle_difference(self.angle, other.angle))


@dataclass(frozen=True)
class Seed:
    """A 64-bit unsigned seed; equal seeds give bit-identical runs."""

    value: int

    def __post_init__(self):
        v = int(self.value)
        if not 0 <= v <= _U64_MAX:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.value!r}")
        object.__setattr__(self, "value", v)

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.value))

    def spawn(self, n: int) -> list[Seed]:
        """Derive ``n`` independent child seeds (stable across runs)."""
        children = np.random.SeedSequence(self.value).spawn(n)
        return [Seed(int(c.generate_state(1, dtype=np.uint64)[0])) for c in children]


def as_seed(seed) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(seed)


def make_rng(seed) -> np.random.Generator:
    """The single generator type used everywhere; never the global numpy state."""
    return as_seed(seed).rng()


def distance(a: Vec3, b: Vec3) -> float:
    """Euclidean distance between two points in meters."""
    return (a - b).norm()


def bearing_in_plane(frm: Vec3, to: Vec3) -> Bearing:
    """Direction from ``frm`` to ``to`` projected onto the horizontal plane.

    Electrodes are vertical, so the horizontal plane is the one orthogonal to
    their orientation. Zero degrees is the +x axis, positive towards +y.
    """
    dx = to.x - frm.x
    dy = to.y - frm.y
    if dx == 0.0 and dy == 0.0:
        raise DegenerateDirection("horizontal projection of the direction is zero")
    return Bearing.from_radians(math.atan2(dy, dx))
