"""Model-to-image distance along surface normals.

Points are sampled on a stratified (length, circumference) grid over the
parent tube and both offspring tubes.  Samples buried inside another part of
the model (or inside the branch-point transition ball, or within the carina
radius of the sibling tube) are not on the model's outer surface and are
dropped.  From each remaining sample a ray is marched along the normal,
inwards if the sample sits outside the lumen and outwards otherwise, until it
crosses the lumen boundary, taken as the 0.5 level of the trilinearly
interpolated lumen indicator and located by linear interpolation between ray
steps.  The objective is the mean squared crossing
distance in mm^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..volume import Label, Volume
from .model import DEFAULT_EXTENSION, BifurcationParams

N_AROUND = 16


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveConfig:
    samples: int = 512
    extension: float = DEFAULT_EXTENSION
    max_ray_mm: float = 5.0
    # distance charged to rays that leave the grid or never cross the boundary
    penalty_mm: float = 5.0
    step_fraction: float = 0.25

    def __post_init__(self):
        if self.samples < 64:
            raise ValueError("surface_objective needs at least 64 samples")


@dataclass
class ObjectiveResult:
    value: float
    kept: int
    penalized: int
    offspring_kept: int
    offspring_total: int
    # surface samples kept on offspring 1 and offspring 2
    kept_by_offspring: tuple[int, int] = (0, 0)

    @property
    def offspring_fraction(self) -> float:
        return self.offspring_kept / self.offspring_total if self.offspring_total else 0.0

    @property
    def min_offspring_fraction(self) -> float:
        """Exposed fraction of the less exposed offspring surface."""
        if not self.offspring_total:
            return 0.0
        return 2.0 * min(self.kept_by_offspring) / self.offspring_total


@njit(cache=True)
def _frame(yaw, pitch, roll):
    a = math.radians(yaw)
    b = math.radians(pitch)
    c = math.radians(roll)
    ca, sa, cb, sb, cc, sc = math.cos(a), math.sin(a), math.cos(b), math.sin(b), math.cos(c), math.sin(c)
    v = np.array([ca * cb * cc - sa * sc, sa * cb * cc + ca * sc, -sb * cc])
    n = np.array([-ca * cb * sc - sa * cc, -sa * cb * sc + ca * cc, sb * sc])
    u = np.array([ca * sb, sa * sb, cb])
    return u, v, n


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _norm(a):
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


@njit(cache=True)
def _offspring_distance(q, E, C, bend, u, nrm, R, theta, X, t, ext):
    """Distance from q to an offspring centreline (arc then straight run)."""
    w = q - C
    a = -_dot(w, bend)
    c = _dot(w, u)
    h = _dot(w, nrm)
    phi = math.atan2(c, a)
    if 0.0 <= phi <= theta:
        rho = math.sqrt(a * a + c * c) - R
        d_arc = math.sqrt(rho * rho + h * h)
    else:
        d_arc = min(_norm(q - E), _norm(q - X))
    s = _dot(q - X, t)
    if s < 0.0:
        s = 0.0
    elif s > ext:
        s = ext
    d_seg = _norm(q - X - s * t)
    return min(d_arc, d_seg)


@njit(cache=True)
def _lumen_at(lumen, p, spacing):
    """Trilinear interpolation of the lumen indicator; -1 off the grid."""
    fx = p[0] / spacing[0]
    fy = p[1] / spacing[1]
    fz = p[2] / spacing[2]
    nz, ny, nx = lumen.shape
    if fx < 0.0 or fy < 0.0 or fz < 0.0 or fx > nx - 1 or fy > ny - 1 or fz > nz - 1:
        return -1.0
    x0 = min(int(fx), nx - 2) if nx > 1 else 0
    y0 = min(int(fy), ny - 2) if ny > 1 else 0
    z0 = min(int(fz), nz - 2) if nz > 1 else 0
    x1 = min(x0 + 1, nx - 1)
    y1 = min(y0 + 1, ny - 1)
    z1 = min(z0 + 1, nz - 1)
    tx = fx - x0
    ty = fy - y0
    tz = fz - z0
    c00 = lumen[z0, y0, x0] * (1.0 - tx) + lumen[z0, y0, x1] * tx
    c01 = lumen[z0, y1, x0] * (1.0 - tx) + lumen[z0, y1, x1] * tx
    c10 = lumen[z1, y0, x0] * (1.0 - tx) + lumen[z1, y0, x1] * tx
    c11 = lumen[z1, y1, x0] * (1.0 - tx) + lumen[z1, y1, x1] * tx
    c0 = c00 * (1.0 - ty) + c01 * ty
    c1 = c10 * (1.0 - ty) + c11 * ty
    return c0 * (1.0 - tz) + c1 * tz


@njit(cache=True)
def _objective_kernel(params, lumen, spacing, n_along, n_around, extension, step, max_ray, penalty):
    Lp, Dp = params[0], params[1]
    P0 = params[8:11].copy()
    u, v, nrm = _frame(params[11], params[12], params[13])
    carina = params[14]
    rp = 0.5 * Dp
    E = P0 + Lp * u

    Cs = np.empty((2, 3))
    Xs = np.empty((2, 3))
    Ts = np.empty((2, 3))
    Bs = np.empty((2, 3))
    Rs = np.empty(2)
    ths = np.empty(2)
    rs = np.empty(2)
    exts = np.empty(2)
    for i in range(2):
        sgn = 1.0 if i == 0 else -1.0
        th = math.radians(params[2 + 3 * i])
        R = params[3 + 3 * i]
        b = sgn * v
        C = E + R * b
        Cs[i] = C
        Xs[i] = C + R * (-b * math.cos(th) + u * math.sin(th))
        Ts[i] = u * math.cos(th) + b * math.sin(th)
        Bs[i] = b
        Rs[i] = R
        ths[i] = th
        rs[i] = 0.5 * params[4 + 3 * i]
        exts[i] = extension * Dp

    total = 0.0
    kept = 0
    penalized = 0
    off_kept = np.zeros(2, dtype=np.int64)
    off_total = 0
    q = np.empty(3)
    nvec = np.empty(3)
    p = np.empty(3)
    max_steps = int(max_ray / step) + 1
    for comp in range(3):
        for j in range(n_along):
            frac = (j + 0.5) / n_along
            if comp == 0:
                centre = P0 + (frac * Lp) * u
                e1 = v
                e2 = nrm
                radius = rp
            else:
                i = comp - 1
                arc_len = Rs[i] * ths[i]
                s = frac * (arc_len + exts[i])
                b = Bs[i]
                if s < arc_len:
                    phi = s / Rs[i]
                    e1 = -b * math.cos(phi) + u * math.sin(phi)
                    centre = Cs[i] + Rs[i] * e1
                else:
                    e1 = -b * math.cos(ths[i]) + u * math.sin(ths[i])
                    centre = Xs[i] + (s - arc_len) * Ts[i]
                e2 = nrm
                radius = rs[i]
            for k in range(n_around):
                psi = 2.0 * math.pi * (k + 0.5) / n_around
                cp = math.cos(psi)
                sp = math.sin(psi)
                for d in range(3):
                    nvec[d] = cp * e1[d] + sp * e2[d]
                    q[d] = centre[d] + radius * nvec[d]
                # drop samples buried inside another part of the model
                if comp == 0:
                    buried = False
                    for i in range(2):
                        if _offspring_distance(q, E, Cs[i], Bs[i], u, nrm, Rs[i], ths[i], Xs[i], Ts[i], exts[i]) < rs[i]:
                            buried = True
                    if buried:
                        continue
                else:
                    off_total += 1
                    i = comp - 1
                    o = 1 - i
                    w = q - P0
                    tp = _dot(w, u)
                    if 0.0 <= tp <= Lp:
                        radial = w - tp * u
                        if _norm(radial) < rp:
                            continue
                    if _norm(q - E) < rp:
                        continue
                    if _offspring_distance(q, E, Cs[o], Bs[o], u, nrm, Rs[o], ths[o], Xs[o], Ts[o], exts[o]) < rs[o] + carina:
                        continue
                    off_kept[i] += 1
                kept += 1
                val = _lumen_at(lumen, q, spacing)
                if val < 0.0:
                    total += penalty * penalty
                    penalized += 1
                    continue
                # march towards the 0.5 iso-surface of the interpolated indicator
                inside = val >= 0.5
                sgn = 1.0 if inside else -1.0
                hit = -1.0
                prev = val
                for m in range(1, max_steps + 1):
                    t = m * step
                    for d in range(3):
                        p[d] = q[d] + sgn * t * nvec[d]
                    cur = _lumen_at(lumen, p, spacing)
                    if cur < 0.0:
                        break
                    if (cur >= 0.5) != inside:
                        hit = t - step + step * (prev - 0.5) / (prev - cur)
                        break
                    prev = cur
                if hit < 0.0:
                    total += penalty * penalty
                    penalized += 1
                else:
                    total += hit * hit
    if kept == 0:
        return penalty * penalty, 0, 0, off_kept[0], off_kept[1], off_total
    return total / kept, kept, penalized, off_kept[0], off_kept[1], off_total


def lumen_grid(volume: Volume) -> np.ndarray:
    grid = volume.labels == Label.LUMEN
    if not grid.any():
        raise ObjectiveError("volume has no lumen voxels; segment it first")
    return grid.astype(np.float32)


class SurfaceObjective:
    """Callable objective bound to one lumen grid."""

    def __init__(self, volume: Volume, config: ObjectiveConfig | None = None, lumen: np.ndarray | None = None):
        self.config = config or ObjectiveConfig()
        self.lumen = lumen_grid(volume) if lumen is None else lumen
        self.spacing = np.asarray(volume.spacing_mm, dtype=np.float64)
        self.step = self.config.step_fraction * float(self.spacing.min())
        self.n_along = max(1, math.ceil(self.config.samples / (3 * N_AROUND)))
        self.evaluations = 0

    def evaluate(self, params) -> ObjectiveResult:
        arr = params.to_array() if isinstance(params, BifurcationParams) else np.asarray(params, dtype=np.float64)
        self.evaluations += 1
        c = self.config
        value, kept, pen, k1, k2, ot = _objective_kernel(
            arr, self.lumen, self.spacing, self.n_along, N_AROUND, c.extension,
            self.step, c.max_ray_mm, c.penalty_mm)
        if not math.isfinite(value):
            raise ObjectiveError("objective is not finite")
        return ObjectiveResult(float(value), int(kept), int(pen), int(k1 + k2), int(ot), (int(k1), int(k2)))

    def __call__(self, params) -> float:
        return self.evaluate(params).value


def surface_objective(params: BifurcationParams, volume: Volume, samples: int = 512, **kwargs) -> float:
    """Mean squared normal distance (mm^2) from the model surface to the lumen boundary."""
    return SurfaceObjective(volume, ObjectiveConfig(samples=samples, **kwargs))(params)
