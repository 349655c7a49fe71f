"""The 15-parameter bifurcation model.

A bifurcation is a straight parent tube followed by two offspring tubes whose
centrelines first bend along circular arcs (toroidal sections) and then run
straight.  Both arcs start at the distal end of the parent, tangent to the
parent axis, and bend in opposite senses within the branching plane.

Orientation is stored as intrinsic Z-Y-Z Euler angles in degrees: ``yaw`` and
``pitch`` are the azimuth and polar angle of the parent axis measured from
+z, and ``roll`` turns the branching plane about the parent axis.  The local
frame columns are (bend direction of offspring 1, plane normal, parent axis).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.spatial.transform import Rotation

PARAM_NAMES = (
    "parent_length", "parent_diameter",
    "angle1", "curvature1", "diameter1",
    "angle2", "curvature2", "diameter2",
    "x", "y", "z",
    "yaw", "pitch", "roll",
    "carina_radius",
)

# offspring straight run after the arc, in parent diameters
DEFAULT_EXTENSION = 1.5
DEFAULT_CARINA_RADIUS = 0.5


@dataclass(frozen=True)
class BifurcationParams:
    parent_length: float
    parent_diameter: float
    angle1: float
    curvature1: float
    diameter1: float
    angle2: float
    curvature2: float
    diameter2: float
    x: float
    y: float
    z: float
    yaw: float
    pitch: float
    roll: float
    carina_radius: float = DEFAULT_CARINA_RADIUS

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not np.isfinite(v):
                raise ValueError(f"{f.name} is not finite")
            object.__setattr__(self, f.name, v)
        if min(self.parent_diameter, self.diameter1, self.diameter2) <= 0:
            raise ValueError("diameters must be positive")
        if self.parent_length <= 0:
            raise ValueError("parent_length must be positive")

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "BifurcationParams":
        return cls(*(float(v) for v in arr))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "BifurcationParams":
        return cls(**{n: d[n] for n in PARAM_NAMES if n in d})

    # geometry ---------------------------------------------------------------

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_euler("ZYZ", [self.yaw, self.pitch, self.roll], degrees=True)

    @property
    def frame(self) -> np.ndarray:
        """3x3 matrix with columns (bend direction, plane normal, parent axis)."""
        return self.rotation.as_matrix()

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def direction(self) -> np.ndarray:
        return self.frame[:, 2]

    @property
    def branch_point(self) -> np.ndarray:
        return self.position + self.parent_length * self.direction

    def offspring(self, which: int) -> dict:
        """Arc centre, exit point, exit tangent and diameter of offspring 1 or 2."""
        frame = self.frame
        u, v = frame[:, 2], frame[:, 0]
        if which == 1:
            theta, radius, diam, bend = self.angle1, self.curvature1, self.diameter1, v
        elif which == 2:
            theta, radius, diam, bend = self.angle2, self.curvature2, self.diameter2, -v
        else:
            raise ValueError("offspring index must be 1 or 2")
        t = np.radians(theta)
        centre = self.branch_point + radius * bend
        exit_point = centre + radius * (-bend * np.cos(t) + u * np.sin(t))
        tangent = u * np.cos(t) + bend * np.sin(t)
        return {"centre": centre, "exit_point": exit_point, "exit_tangent": tangent / np.linalg.norm(tangent),
                "diameter": diam, "angle": theta, "curvature": radius}

    def branching_angle(self, which: int) -> float:
        """Angle in degrees between the parent axis and the offspring exit tangent."""
        return angle_between(self.direction, self.offspring(which)["exit_tangent"])

    def canonical(self) -> "BifurcationParams":
        """Same geometry with offspring 1 the larger-diameter (major) daughter.

        Ties keep the current order.  Swapping the offspring is compensated by
        turning the branching plane half a revolution.
        """
        if self.diameter2 <= self.diameter1:
            return self
        return replace(
            self,
            angle1=self.angle2, curvature1=self.curvature2, diameter1=self.diameter2,
            angle2=self.angle1, curvature2=self.curvature1, diameter2=self.diameter1,
            roll=_wrap_degrees(self.roll + 180.0),
        )


def _wrap_degrees(a: float) -> float:
    return (a + 180.0) % 360.0 - 180.0


def angle_between(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def euler_from_frame(frame: np.ndarray) -> tuple[float, float, float]:
    """Z-Y-Z Euler angles (degrees) of a proper rotation matrix."""
    import warnings

    with warnings.catch_warnings():
        # gimbal lock at pitch 0 is harmless: the composed rotation is preserved
        warnings.simplefilter("ignore", UserWarning)
        yaw, pitch, roll = Rotation.from_matrix(frame).as_euler("ZYZ", degrees=True)
    return float(yaw), float(pitch), float(roll)


def frame_from_axes(direction, bend) -> np.ndarray:
    """Orthonormal frame from a parent axis and an (approximate) bend direction."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    v = np.asarray(bend, dtype=float)
    v = v - np.dot(v, u) * u
    n = np.linalg.norm(v)
    if n < 1e-12:
        v = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(v) < 1e-6:
            v = np.cross(u, [0.0, 1.0, 0.0])
        n = np.linalg.norm(v)
    v = v / n
    w = np.cross(u, v)
    return np.column_stack([v, w, u])


def params_from_geometry(start, direction, bend, parent_length, parent_diameter,
                         angles, curvatures, diameters, carina_radius=DEFAULT_CARINA_RADIUS) -> BifurcationParams:
    """Build parameters from a parent axis and the in-plane bend direction of
    offspring 1."""
    yaw, pitch, roll = euler_from_frame(frame_from_axes(direction, bend))
    x, y, z = (float(c) for c in start)
    return BifurcationParams(
        parent_length, parent_diameter,
        angles[0], curvatures[0], diameters[0],
        angles[1], curvatures[1], diameters[1],
        x, y, z, yaw, pitch, roll, carina_radius,
    )
