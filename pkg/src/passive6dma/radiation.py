"""Element radiation patterns.

Both supported patterns are half-space patterns: an element only picks up
(or re-radiates) power on its front side. For a path direction vector d
(DOA of an arriving path or DOD of a departing one) and a surface with
unit normal n, the front side is n . (-d) > 0; the boundary counts as the
back side.

directive   gain = A * (n . -d) / (lambda^2 / (4 pi)) on the front side
isotropic   gain = A * 2        / (lambda^2 / (4 pi)) on the front side

With the default effective area A = (lambda/2)^2 the directive gain at
normal incidence is exactly pi and the isotropic front-side gain is 2 pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SurfacePose, surface_normal

PATTERN_KINDS = ("directive", "isotropic")

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class RadiationPattern:
    kind: str
    wavelength: float
    area: float

    def __post_init__(self):
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.wavelength <= 0 or self.area <= 0:
            raise ValueError("wavelength and area must be positive")

    @classmethod
    def create(cls, kind: str, wavelength: float, area: float | None = None):
        if area is None:
            area = (wavelength / 2.0) ** 2
        return cls(kind, wavelength, area)


def pattern_gain(pattern: RadiationPattern, normals, directions) -> np.ndarray:
    """Vectorized gain for propagation directions hitting surfaces.

    normals: (..., 3) unit outward normals, directions: (..., 3) unit
    propagation vectors (pointing toward the surface). Shapes broadcast.
    """
    normals = np.asarray(normals, dtype=float)
    directions = np.asarray(directions, dtype=float)
    cos_in = -np.sum(normals * directions, axis=-1)
    scale = pattern.area / (pattern.wavelength**2 / (4.0 * math.pi))
    if pattern.kind == "directive":
        gain = scale * cos_in
    else:
        gain = scale * 2.0 * np.ones_like(cos_in)
    return np.where(cos_in > 0.0, gain, 0.0)


def _check_unit(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
        raise ValueError("direction must have unit norm")
    return d


def incident_gain(pattern: RadiationPattern, pose: SurfacePose, direction) -> float:
    """Gain toward an arriving path with propagation direction `direction`."""
    d = _check_unit(direction)
    return float(pattern_gain(pattern, surface_normal(pose), d))


def reflective_gain(pattern: RadiationPattern, pose: SurfacePose, direction) -> float:
    """Gain toward the departing path with DOD vector `direction`.

    Same form as incident_gain with the DOD vector in place of the DOA
    vector: the front side of a departing path s is n . (-s) > 0.
    """
    d = _check_unit(direction)
    return float(pattern_gain(pattern, surface_normal(pose), d))
