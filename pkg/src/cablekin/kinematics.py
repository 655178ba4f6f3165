"""Closed-form kinematics of a four-cable suspended robot.

Pulleys sit on top of four poles at height ``H``::

    P1 = (0, 0, H)   P2 = (0, D, H)   P3 = (B, D, H)   P4 = (B, 0, H)

A cable of length ``L_i`` runs from pulley ``P_i`` to the robot.  Winding
pulley ``i`` (radius ``r_i``) by ``dtheta_i`` radians changes its cable
length by ``r_i * dtheta_i``; positive rotations pay cable out.

Everything here is 64-bit and side-effect free.  The array helpers at the
bottom share their arithmetic with the scalar API so both paths produce
identical bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    InconsistentLengthsError,
    InfeasibleRotationError,
    SingularGeometryError,
    WorkspaceError,
)

DEFAULT_TOL = 1e-6


class Point3(NamedTuple):
    x: float
    y: float
    z: float


def _four(values, name: str) -> tuple[float, float, float, float]:
    vals = tuple(float(v) for v in values)
    if len(vals) != 4:
        raise ValueError(f"{name} needs 4 values, got {len(vals)}")
    if not all(math.isfinite(v) for v in vals):
        raise ValueError(f"{name} must be finite: {vals}")
    return vals  # type: ignore[return-value]


@dataclass(frozen=True)
class Rig:
    """Perimeter dimensions in meters plus one winch radius per pulley."""

    B: float
    D: float
    H: float
    radii: tuple[float, float, float, float]

    def __post_init__(self):
        for name in ("B", "D", "H"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        radii = _four(self.radii, "radii")
        if any(r <= 0 for r in radii):
            raise ValueError(f"pulley radii must be positive, got {radii}")
        object.__setattr__(self, "radii", radii)

    @classmethod
    def uniform(cls, B: float, D: float, H: float, r: float) -> "Rig":
        return cls(B, D, H, (r, r, r, r))

    @property
    def base(self) -> Point3:
        """Top-centre rest pose every movement starts from."""
        return Point3(self.B / 2, self.D / 2, self.H)


@dataclass(frozen=True)
class StringLengths:
    L: tuple[float, float, float, float]

    def __post_init__(self):
        L = _four(self.L, "lengths")
        if any(v < 0 for v in L):
            raise ValueError(f"cable lengths must be non-negative, got {L}")
        object.__setattr__(self, "L", L)

    def __iter__(self):
        return iter(self.L)

    def __getitem__(self, i):
        return self.L[i]


@dataclass(frozen=True)
class Rotations:
    dtheta: tuple[float, float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "dtheta", _four(self.dtheta, "rotations"))

    def __iter__(self):
        return iter(self.dtheta)

    def __getitem__(self, i):
        return self.dtheta[i]


@dataclass(frozen=True)
class RobotBox:
    """Box robot of size 2b x 2d x h.

    Cables attach at the corners of the top face; positions refer to the
    centroid of the bottom face.
    """

    b: float
    d: float
    h: float

    def __post_init__(self):
        for name in ("b", "d", "h"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative, got {v}")
            object.__setattr__(self, name, v)


POINT_ROBOT = RobotBox(0.0, 0.0, 0.0)


def pulley_positions(rig: Rig) -> list[Point3]:
    B, D, H = rig.B, rig.D, rig.H
    return [Point3(0.0, 0.0, H), Point3(0.0, D, H), Point3(B, D, H), Point3(B, 0.0, H)]


def _check_box_fits(rig: Rig, box: RobotBox) -> None:
    if not (2 * box.b < rig.B and 2 * box.d < rig.D and box.h < rig.H):
        raise WorkspaceError(f"{box} does not fit inside rig {rig.B}x{rig.D}x{rig.H}")


def _check_workspace(rig: Rig, box: RobotBox, p: Point3) -> None:
    x, y, z = p
    if not all(math.isfinite(v) for v in p):
        raise WorkspaceError(f"non-finite point {p}")
    ok = (
        box.b <= x <= rig.B - box.b
        and box.d <= y <= rig.D - box.d
        and 0.0 <= z <= rig.H - box.h
    )
    if not ok:
        raise WorkspaceError(f"point {tuple(p)} lies outside the workspace of rig "
                             f"B={rig.B} D={rig.D} H={rig.H} with box {box}")


def cable_lengths(B, D, H, x, y, z, b=0.0, d=0.0, h=0.0):
    """Cable lengths for scalars or broadcastable arrays; returns a 4-tuple.

    With ``b = d = h = 0`` this is the point robot.
    """
    dx0 = x - b
    dx1 = B - b - x
    dy0 = y - d
    dy1 = D - d - y
    dz = H - h - z
    dz2 = dz * dz
    return (
        np.sqrt(dx0 * dx0 + dy0 * dy0 + dz2),
        np.sqrt(dx0 * dx0 + dy1 * dy1 + dz2),
        np.sqrt(dx1 * dx1 + dy1 * dy1 + dz2),
        np.sqrt(dx1 * dx1 + dy0 * dy0 + dz2),
    )


def inverse_lengths(rig: Rig, p: Point3) -> StringLengths:
    p = Point3(*p)
    _check_workspace(rig, POINT_ROBOT, p)
    return StringLengths(cable_lengths(rig.B, rig.D, rig.H, *p))


def box_inverse_lengths(rig: Rig, box: RobotBox, p: Point3) -> StringLengths:
    p = Point3(*p)
    _check_box_fits(rig, box)
    _check_workspace(rig, box, p)
    return StringLengths(cable_lengths(rig.B, rig.D, rig.H, *p, box.b, box.d, box.h))


def lengths_to_rotations(rig: Rig, initial: StringLengths, current: StringLengths) -> Rotations:
    return Rotations([(L - L0) / r for L0, L, r in zip(initial, current, rig.radii)])


def rotations_to_lengths(rig: Rig, initial: StringLengths, rot: Rotations) -> StringLengths:
    out = []
    for i, (L0, dt, r) in enumerate(zip(initial, rot, rig.radii)):
        L = L0 + r * dt
        if L < 0:
            # a rotation computed from a zero-length cable may undershoot by rounding
            if L < -1e-12 * max(L0, 1.0):
                raise InfeasibleRotationError(
                    f"cable {i} would reach length {L:.6g} (L0={L0}, r={r}, dtheta={dt})")
            L = 0.0
        out.append(L)
    return StringLengths(out)


def target_to_rotations(rig: Rig, target: Point3) -> Rotations:
    """Rotations that carry the robot from the base location to ``target``."""
    start = inverse_lengths(rig, rig.base)
    end = inverse_lengths(rig, target)
    return lengths_to_rotations(rig, start, end)


def forward_xy(rig: Rig, lengths: StringLengths) -> tuple[float, float]:
    L1, L2, L3, _ = lengths
    y = (L1 * L1 - L2 * L2 + rig.D * rig.D) / (2 * rig.D)
    x = (L2 * L2 - L3 * L3 + rig.B * rig.B) / (2 * rig.B)
    return x, y


def _solve_z(rig: Rig, box: RobotBox, lengths, x: float, y: float, tol: float) -> Point3:
    L = lengths.L
    sq = [v * v for v in L]
    scale = max(max(sq), 1e-300)
    u = x - box.b
    v = y - box.d
    radicand = sq[0] - u * u - v * v
    if radicand < 0:
        if radicand < -tol * scale:
            raise InconsistentLengthsError(
                f"lengths {L} admit no real height (radicand {radicand:.6g})")
        radicand = 0.0
    # suspended robot hangs below the attachment plane
    z = rig.H - box.h - math.sqrt(radicand)

    predicted = cable_lengths(rig.B, rig.D, rig.H, x, y, z, box.b, box.d, box.h)
    for i, (Lp, s) in enumerate(zip(predicted, sq)):
        resid = abs(float(Lp) ** 2 - s)
        if resid > tol * scale:
            raise InconsistentLengthsError(
                f"cable {i} residual {resid:.3g} m^2 exceeds tolerance for lengths {L}")
    return Point3(x, y, z)


def forward_position(rig: Rig, lengths: StringLengths, tol: float = DEFAULT_TOL) -> Point3:
    """Recover the point-robot position from four cable lengths.

    ``tol`` bounds each squared-length residual relative to the largest
    squared length.
    """
    lengths = StringLengths(lengths.L if isinstance(lengths, StringLengths) else lengths)
    x, y = forward_xy(rig, lengths)
    return _solve_z(rig, POINT_ROBOT, lengths, x, y, tol)


def box_forward_position(rig: Rig, box: RobotBox, lengths: StringLengths,
                         tol: float = DEFAULT_TOL) -> Point3:
    lengths = StringLengths(lengths.L if isinstance(lengths, StringLengths) else lengths)
    span_y = rig.D - 2 * box.d
    span_x = rig.B - 2 * box.b
    if span_y == 0 or span_x == 0:
        raise SingularGeometryError(f"box {box} spans the rig {rig.B}x{rig.D}")
    L1, L2, L3, _ = lengths
    y = 0.5 * ((L1 * L1 - L2 * L2) / span_y + rig.D)
    x = 0.5 * ((L2 * L2 - L3 * L3) / span_x + rig.B)
    return _solve_z(rig, box, lengths, x, y, tol)


def rotations_for_targets(B, D, H, R, x, y, z) -> np.ndarray:
    """Vectorised :func:`target_to_rotations` for a shared winch radius.

    All arguments broadcast; returns an array of shape ``(..., 4)``.
    No workspace check is made.
    """
    B, D, H, R, x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64)
                                                for a in (B, D, H, R, x, y, z)))
    start = cable_lengths(B, D, H, B / 2, D / 2, H)
    end = cable_lengths(B, D, H, x, y, z)
    return np.stack([(L - L0) / R for L0, L in zip(start, end)], axis=-1)


def roundtrip_error(trials: int = 1000, seed: int = 0) -> float:
    """Largest per-coordinate error of FK after IK over random rigs and points.

    Each trial draws a rig with sides in [1, 7] m, then checks a point robot
    (driven through motor rotations from the base location) and a box robot
    (driven through cable lengths).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        B, D, H = rng.uniform(1.0, 7.0, size=3)
        rig = Rig(B, D, H, tuple(rng.uniform(0.005, 0.02, size=4)))
        p = Point3(*rng.uniform(0.0, 1.0, size=3) * (B, D, H))
        base_lengths = inverse_lengths(rig, rig.base)
        lengths = rotations_to_lengths(rig, base_lengths, target_to_rotations(rig, p))
        got = forward_position(rig, lengths)
        worst = max(worst, max(abs(a - b) for a, b in zip(got, p)))

        box = RobotBox(*(rng.uniform(0.0, 0.4, size=3) * (B, D, H)))
        lo = np.array([box.b, box.d, 0.0])
        hi = np.array([B - box.b, D - box.d, H - box.h])
        q = Point3(*(lo + rng.uniform(0.0, 1.0, size=3) * (hi - lo)))
        got = box_forward_position(rig, box, box_inverse_lengths(rig, box, q))
        worst = max(worst, max(abs(a - b) for a, b in zip(got, q)))
    return worst
