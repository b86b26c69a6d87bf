"""Linear transverse beam optics for the five-magnet tuning section.

Coordinate system (4D transverse phase space)
---------------------------------------------
Vector  v = (x, x', y, y')

  x   [m]    horizontal displacement from the reference axis
  x'  [rad]  horizontal slope dx/ds
  y   [m]    vertical displacement
  y'  [rad]  vertical slope dy/ds

A beam is carried as first and second moments only: a 4-vector mean and a
4x4 covariance matrix. All linear elements act as affine maps

    v_out = R @ v_in + d
    Sigma_out = R @ Sigma_in @ R.T

so Gaussian beams stay Gaussian and the screen observables (centroid and
RMS size per plane) are exact, with no particle sampling.

Sign conventions
----------------
+x is to the right, +y is up. A positive horizontal corrector angle adds
to x' (beam steered right downstream); a positive vertical corrector angle
adds to y' (beam steered up). A quadrupole with k1 > 0 focuses in x and
defocuses in y; k1 < 0 swaps the planes.

Element misalignments are exact transverse frame shifts: a beam entering a
displaced quadrupole on the displaced axis sees no kick, while an on-axis
beam picks up the feed-down steering d = (I - R) @ (dx, 0, dy, 0).

Units are SI throughout this module (m, rad); only the screen readout
converts to millimetres.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AffineMap",
    "BeamParameters",
    "Lattice",
    "LatticeGeometry",
    "OpticsError",
    "TransverseState",
    "corrector_map",
    "drift_map",
    "quad_map",
    "read_screen",
    "track",
]

# Below this |k1| the quadrupole map is evaluated as its k -> 0 series to
# avoid catastrophic cancellation in sin(sqrt(k) L)/sqrt(k).
_K1_SERIES_THRESHOLD = 1e-10


class OpticsError(ValueError):
    """Inconsistent optics input (non-finite values, invalid covariance)."""


# ---------------------------------------------------------------------------
# Beam state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransverseState:
    """Gaussian beam as first and second moments in (x, x', y, y').

    Parameters
    ----------
    mean:       shape (4,), metres and radians.
    covariance: shape (4, 4), symmetric positive semi-definite.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TransverseState)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.covariance, other.covariance)
        )

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        cov = np.asarray(self.covariance, dtype=float).reshape(4, 4)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise OpticsError("beam state contains non-finite values")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise OpticsError("covariance matrix is not symmetric")
        if np.any(np.diag(cov) < -1e-15):
            raise OpticsError("covariance has a negative diagonal entry")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def from_moments(
        cls,
        mean: tuple[float, float, float, float],
        sigmas: tuple[float, float, float, float],
    ) -> "TransverseState":
        """Uncorrelated Gaussian from per-coordinate standard deviations."""
        sig = np.asarray(sigmas, dtype=float)
        return cls(np.asarray(mean, dtype=float), np.diag(sig**2))


@dataclass(frozen=True)
class BeamParameters:
    """Screen readout in millimetres: centroid and RMS size per plane."""

    mu_x: float
    sigma_x: float
    mu_y: float
    sigma_y: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mu_x, self.sigma_x, self.mu_y, self.sigma_y)


# ---------------------------------------------------------------------------
# Affine transfer maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineMap:
    """First-order transfer map v -> R @ v + d."""

    R: np.ndarray
    d: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(4, 4))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float).reshape(4))

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(np.eye(4), np.zeros(4))

    def compose(self, first: "AffineMap") -> "AffineMap":
        """Map applying `first`, then `self`."""
        return AffineMap(self.R @ first.R, self.R @ first.d + self.d)

    def apply(self, state: TransverseState) -> TransverseState:
        mean = self.R @ state.mean + self.d
        cov = self.R @ state.covariance @ self.R.T
        cov = 0.5 * (cov + cov.T)  # re-symmetrise rounding residue
        return TransverseState(mean, cov)


def drift_map(length: float) -> AffineMap:
    """Field-free drift of the given length."""
    if not math.isfinite(length) or length < 0:
        raise OpticsError(f"invalid drift length {length!r}")
    R = np.eye(4)
    R[0, 1] = length
    R[2, 3] = length
    return AffineMap(R, np.zeros(4))


def _quad_plane_blocks(k1: float, length: float) -> tuple[np.ndarray, np.ndarray]:
    """2x2 blocks (focusing plane, defocusing plane) for gradient k1 > 0.

    Focusing:   [[cos p,        sin p / sqrt(k)], [-sqrt(k) sin p, cos p]]
    Defocusing: [[cosh p,      sinh p / sqrt(k)], [ sqrt(k) sinh p, cosh p]]
    with p = sqrt(k) * length.
    """
    kr = math.sqrt(k1)
    p = kr * length
    foc = np.array([[math.cos(p), math.sin(p) / kr],
                    [-kr * math.sin(p), math.cos(p)]])
    defoc = np.array([[math.cosh(p), math.sinh(p) / kr],
                      [kr * math.sinh(p), math.cosh(p)]])
    return foc, defoc


def quad_map(
    k1: float,
    length: float,
    misalignment: tuple[float, float] = (0.0, 0.0),
) -> AffineMap:
    """Thick quadrupole of strength ``k1`` [1/m^2] and the given length [m].

    k1 > 0 focuses in x and defocuses in y; k1 < 0 swaps the planes. A
    transverse misalignment (dx, dy) [m] shifts the magnetic axis, adding
    the feed-down offset d = (I - R) @ (dx, 0, dy, 0) so that a beam
    travelling along the displaced axis is untouched.
    """
    if not (math.isfinite(k1) and math.isfinite(length)) or length <= 0:
        raise OpticsError(f"invalid quadrupole parameters k1={k1!r}, length={length!r}")
    dx, dy = misalignment
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise OpticsError("non-finite quadrupole misalignment")

    R = np.eye(4)
    if abs(k1) < _K1_SERIES_THRESHOLD:
        R[0, 1] = length
        R[2, 3] = length
    elif k1 > 0:
        foc, defoc = _quad_plane_blocks(k1, length)
        R[0:2, 0:2] = foc
        R[2:4, 2:4] = defoc
    else:
        foc, defoc = _quad_plane_blocks(-k1, length)
        R[0:2, 0:2] = defoc
        R[2:4, 2:4] = foc

    axis = np.array([dx, 0.0, dy, 0.0])
    d = (np.eye(4) - R) @ axis
    return AffineMap(R, d)


def corrector_map(angle: float, plane: str) -> AffineMap:
    """Thin steering kick of ``angle`` [rad] in the given plane.

    plane="horizontal" adds the angle to x' (positive steers right);
    plane="vertical" adds it to y' (positive steers up).
    """
    if not math.isfinite(angle):
        raise OpticsError(f"non-finite corrector angle {angle!r}")
    d = np.zeros(4)
    if plane == "horizontal":
        d[1] = angle
    elif plane == "vertical":
        d[3] = angle
    else:
        raise OpticsError(f"unknown corrector plane {plane!r}")
    return AffineMap(np.eye(4), d)


# ---------------------------------------------------------------------------
# Lattice
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeGeometry:
    """Longitudinal layout of the section, metres from its entrance.

    Quadrupole positions are magnet entrances; correctors are thin kicks
    at their position; the screen position is the readout plane. Order
    must be q1 < q2 < cv < q3 < ch < screen with no overlapping magnets.
    """

    quad_length: float = 0.122
    q1: float = 0.18
    q2: float = 0.732
    cv: float = 1.054
    q3: float = 1.234
    ch: float = 1.806
    screen: float = 2.506

    def __post_init__(self) -> None:
        L = self.quad_length
        if not math.isfinite(L) or L <= 0:
            raise OpticsError(f"invalid quadrupole length {L!r}")
        markers = [
            ("q1", self.q1, self.q1 + L),
            ("q2", self.q2, self.q2 + L),
            ("cv", self.cv, self.cv),
            ("q3", self.q3, self.q3 + L),
            ("ch", self.ch, self.ch),
            ("screen", self.screen, self.screen),
        ]
        cursor = 0.0
        for name, start, end in markers:
            if not (math.isfinite(start) and start >= cursor - 1e-12):
                raise OpticsError(
                    f"element order violated at {name!r}: starts at {start} before {cursor}"
                )
            cursor = end

    def drift_lengths(self) -> tuple[float, ...]:
        """Drifts between entrance, the five magnets and the screen."""
        L = self.quad_length
        return (
            self.q1,
            self.q2 - (self.q1 + L),
            self.cv - (self.q2 + L),
            self.q3 - self.cv,
            self.ch - (self.q3 + L),
            self.screen - self.ch,
        )


@dataclass(frozen=True)
class Lattice:
    """The Q1, Q2, CV, Q3, CH, screen section with fixed misalignments.

    Geometry and misalignments are immutable; magnet strengths are applied
    per ``track`` call, so one Lattice can be shared across threads.
    """

    geometry: LatticeGeometry = field(default_factory=LatticeGeometry)
    quad_misalignments: tuple[tuple[float, float], ...] = (
        (0.0, 0.0),
        (0.0, 0.0),
        (0.0, 0.0),
    )
    screen_misalignment: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if len(self.quad_misalignments) != 3:
            raise OpticsError("exactly three quadrupole misalignments required")

    def element_maps(
        self, q1: float, q2: float, cv: float, q3: float, ch: float
    ) -> list[AffineMap]:
        """Element maps in beam order for the given magnet strengths."""
        g = self.geometry
        d = g.drift_lengths()
        m = self.quad_misalignments
        return [
            drift_map(d[0]),
            quad_map(q1, g.quad_length, m[0]),
            drift_map(d[1]),
            quad_map(q2, g.quad_length, m[1]),
            drift_map(d[2]),
            corrector_map(cv, "vertical"),
            drift_map(d[3]),
            quad_map(q3, g.quad_length, m[2]),
            drift_map(d[4]),
            corrector_map(ch, "horizontal"),
            drift_map(d[5]),
        ]


def track(lattice: Lattice, settings, incoming: TransverseState) -> TransverseState:
    """Transport the incoming beam to the screen plane.

    ``settings`` provides q1/q2/q3 strengths [1/m^2] and cv/ch angles [rad]
    (see :class:`beamtune.task.MagnetSettings`); callers are responsible for
    clamping to actuator ranges first.
    """
    combined = AffineMap.identity()
    maps = lattice.element_maps(settings.q1, settings.q2, settings.cv,
                                settings.q3, settings.ch)
    for element in maps:
        combined = element.compose(combined)
    return combined.apply(incoming)


def read_screen(
    state: TransverseState,
    screen_misalignment: tuple[float, float] = (0.0, 0.0),
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> BeamParameters:
    """Analytic moment readout of the beam at a misaligned screen, in mm.

    Positions are reported relative to the displaced screen centre and
    optionally blurred with independent Gaussian noise of width
    ``noise_sigma`` [m]; beam sizes are read without noise.
    """
    var_x = float(state.covariance[0, 0])
    var_y = float(state.covariance[2, 2])
    if var_x < 0 or var_y < 0:
        raise OpticsError("negative covariance diagonal at screen")
    dx, dy = screen_misalignment
    mu_x = float(state.mean[0]) - dx
    mu_y = float(state.mean[2]) - dy
    if noise_sigma > 0:
        if rng is None:
            raise OpticsError("noise_sigma > 0 requires an rng")
        mu_x += noise_sigma * rng.standard_normal()
        mu_y += noise_sigma * rng.standard_normal()
    return BeamParameters(
        mu_x=mu_x * 1e3,
        sigma_x=math.sqrt(var_x) * 1e3,
        mu_y=mu_y * 1e3,
        sigma_y=math.sqrt(var_y) * 1e3,
    )
