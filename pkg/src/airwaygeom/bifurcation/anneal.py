"""Fitting one bifurcation: simulated annealing then a coordinate polish.

The optimizer works on 14 local coordinates around the starting parameters:
parent length and diameter, per-offspring angle / arc radius / diameter, a
position offset, and a small rotation vector applied in the starting frame.
The carina radius is never touched.  Arc radii may drop well below the tube
radius: a near-zero arc is a straight daughter leaving the branch point, the
shape of a sharp junction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import BifurcationParams
from .objective import ObjectiveConfig, SurfaceObjective

N_FREE = 14
# smallest arc radius, in parent diameters
MIN_ARC_RATIO = 0.02


@dataclass(frozen=True)
class AnnealConfig:
    max_evaluations: int = 20000
    cooling: float = 0.95
    chain_length: int = 100
    # starting temperature as a fraction of the starting objective
    initial_temperature: float = 0.2
    polish_evaluations: int = 1500
    seed: int = 0
    # convergence flags
    max_residual: float = 1.0
    max_penalized_fraction: float = 0.25
    min_offspring_fraction: float = 0.35


@dataclass
class FitResult:
    params: BifurcationParams
    residual: float
    initial_residual: float
    converged: bool
    evaluations: int
    history: list[float] = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict)


@njit(cache=True)
def _rotvec_matrix(r):
    theta = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    if theta < 1e-15:
        return np.eye(3)
    k = r / theta
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(theta) * K + (1.0 - math.cos(theta)) * (K @ K)


@njit(cache=True)
def _euler_zyz(R):
    cb = min(1.0, max(-1.0, R[2, 2]))
    pitch = math.acos(cb)
    sb = math.sin(pitch)
    if sb > 1e-12:
        yaw = math.atan2(R[1, 2], R[0, 2])
        roll = math.atan2(R[2, 1], -R[2, 0])
    elif cb > 0:
        yaw = math.atan2(R[1, 0], R[0, 0])
        roll = 0.0
    else:
        yaw = math.atan2(-R[1, 0], -R[0, 0])
        roll = 0.0
    return math.degrees(yaw), math.degrees(pitch), math.degrees(roll)


@njit(cache=True)
def _local_to_params(z, base_pos, base_frame, carina):
    out = np.empty(15)
    out[0] = z[0]
    out[1] = z[1]
    for i in range(2):
        out[2 + 3 * i] = z[2 + 3 * i]
        out[3 + 3 * i] = z[3 + 3 * i]
        out[4 + 3 * i] = z[4 + 3 * i]
    out[8] = base_pos[0] + z[8]
    out[9] = base_pos[1] + z[9]
    out[10] = base_pos[2] + z[10]
    R = base_frame @ _rotvec_matrix(z[11:14].copy())
    yaw, pitch, roll = _euler_zyz(R)
    out[11] = yaw
    out[12] = pitch
    out[13] = roll
    out[14] = carina
    return out


class LocalCoordinates:
    """Map between the 14 optimizer coordinates and full parameters."""

    def __init__(self, start: BifurcationParams):
        self.start = start
        self.base_pos = start.position
        self.base_frame = np.ascontiguousarray(start.frame)
        self.carina = start.carina_radius
        d = start.parent_diameter
        L = start.parent_length
        dmin = 0.25 * d
        self.z0 = np.array([
            L, d,
            start.angle1, start.curvature1, start.diameter1,
            start.angle2, start.curvature2, start.diameter2,
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ])
        tilt = math.radians(35.0)
        spin = math.radians(100.0)
        self.lower = np.array([
            max(0.2 * L, 0.5), max(0.5 * d, 0.5),
            3.0, MIN_ARC_RATIO * d, dmin,
            3.0, MIN_ARC_RATIO * d, dmin,
            -0.75 * d, -0.75 * d, -0.75 * d, -tilt, -tilt, -spin,
        ])
        self.upper = np.array([
            1.8 * L + d, 1.6 * d,
            87.0, 3.5 * d, 1.2 * d,
            87.0, 3.5 * d, 1.2 * d,
            0.75 * d, 0.75 * d, 0.75 * d, tilt, tilt, spin,
        ])
        self.lower = np.minimum(self.lower, self.z0)
        self.upper = np.maximum(self.upper, self.z0)
        self.steps = np.array([
            0.08 * L, 0.05 * d,
            4.0, 0.1 * d, 0.05 * d,
            4.0, 0.1 * d, 0.05 * d,
            0.05 * d, 0.05 * d, 0.05 * d, math.radians(3.0), math.radians(3.0), math.radians(6.0),
        ])

    def to_array(self, z) -> np.ndarray:
        return _local_to_params(np.asarray(z, dtype=np.float64), self.base_pos, self.base_frame, self.carina)

    def to_params(self, z) -> BifurcationParams:
        if np.array_equal(z, self.z0):
            return self.start
        return BifurcationParams.from_array(self.to_array(z))

    def clip(self, z) -> np.ndarray:
        return np.minimum(np.maximum(z, self.lower), self.upper)


def offspring_separation(params: BifurcationParams, extension: float) -> float:
    """Distance between the offspring centreline ends over their mean diameter.

    Below 1 the two offspring still overlap where the model ends, so no
    carina separates them: the fit has folded both into a single tube.
    """
    reach = extension * params.parent_diameter
    ends = []
    for i in (1, 2):
        off = params.offspring(i)
        ends.append(off["exit_point"] + reach * off["exit_tangent"])
    return float(np.linalg.norm(ends[0] - ends[1]) / (0.5 * (params.diameter1 + params.diameter2)))


def _assess(res, params: BifurcationParams, config: AnnealConfig, extension: float) -> tuple[bool, dict]:
    diag = {
        "kept_samples": res.kept,
        "penalized_fraction": res.penalized / res.kept if res.kept else 1.0,
        "offspring_fraction": res.min_offspring_fraction,
        "offspring_separation": offspring_separation(params, extension),
    }
    ok = (
        res.value <= config.max_residual
        and diag["penalized_fraction"] <= config.max_penalized_fraction
        and diag["offspring_fraction"] >= config.min_offspring_fraction
        and diag["offspring_separation"] >= 1.0
    )
    return ok, diag


def _exposure_penalty(res, config: AnnealConfig, penalty_sq: float) -> float:
    # an offspring mostly buried in its sibling or the parent hides its surface
    # from the objective; steer the search away from such collapsed shapes
    deficit = config.min_offspring_fraction - res.min_offspring_fraction
    return 4.0 * penalty_sq * deficit / config.min_offspring_fraction if deficit > 0 else 0.0


def fit_bifurcation(volume, initial: BifurcationParams, optimizer: AnnealConfig | None = None,
                    objective: SurfaceObjective | None = None,
                    objective_config: ObjectiveConfig | None = None) -> FitResult:
    """Adjust 14 of the 15 parameters to minimize the surface objective.

    The annealer minimizes the objective plus a penalty on offspring whose
    surface is mostly buried, so that a bifurcation cannot collapse into a
    single tube.  The best point is tracked with exposed shapes ranked ahead
    of buried ones; the returned residual (the plain objective) never exceeds
    the starting residual, and the run is fully determined by
    ``optimizer.seed``.
    """
    config = optimizer or AnnealConfig()
    if objective is None:
        objective = SurfaceObjective(volume, objective_config)
    penalty_sq = objective.config.penalty_mm ** 2
    coords = LocalCoordinates(initial)
    rng = np.random.default_rng(config.seed)

    def f(z):
        res = objective.evaluate(coords.to_array(z))
        pen = _exposure_penalty(res, config, penalty_sq)
        return res.value + pen, (pen > 0, res.value)

    z = coords.z0.copy()
    fz, kz = f(z)
    initial_key = kz
    best, kbest = z.copy(), kz
    evals = 1
    history = [kz[1]]
    temp = max(config.initial_temperature * fz, 1e-6)
    scale = np.ones(N_FREE)
    sa_budget = max(config.max_evaluations - config.polish_evaluations, 0)
    tried = np.zeros(N_FREE)
    accepted = np.zeros(N_FREE)
    while evals < sa_budget:
        for _ in range(config.chain_length):
            if evals >= sa_budget:
                break
            i = int(rng.integers(N_FREE))
            cand = z.copy()
            cand[i] += coords.steps[i] * scale[i] * rng.standard_normal()
            cand = coords.clip(cand)
            fc, kc = f(cand)
            evals += 1
            tried[i] += 1
            delta = fc - fz
            if delta <= 0 or rng.random() < math.exp(-delta / temp):
                z, fz = cand, fc
                accepted[i] += 1
                if kc < kbest:
                    best, kbest = z.copy(), kc
        # per-coordinate step adaptation towards a moderate acceptance rate
        rate = np.divide(accepted, tried, out=np.full(N_FREE, 0.3), where=tried > 0)
        scale = np.clip(np.where(rate > 0.45, scale * 1.4, np.where(rate < 0.15, scale * 0.7, scale)), 0.02, 5.0)
        tried[:] = 0
        accepted[:] = 0
        temp *= config.cooling
        history.append(kbest[1])

    # coordinate polish with step halving
    z, kz = best.copy(), kbest
    steps = coords.steps.copy()
    budget = config.max_evaluations
    while evals < budget and np.any(steps > 1e-3 * coords.steps):
        improved = False
        for i in range(N_FREE):
            for sign in (1.0, -1.0):
                if evals >= budget:
                    break
                cand = z.copy()
                cand[i] += sign * steps[i]
                cand = coords.clip(cand)
                if np.array_equal(cand, z):
                    continue
                _, kc = f(cand)
                evals += 1
                if kc < kz:
                    z, kz = cand, kc
                    improved = True
                    break
        if not improved:
            steps *= 0.5
    if kz[1] > initial_key[1]:
        # only reachable from a start whose offspring were buried
        z, kz = coords.z0.copy(), initial_key
    history.append(kz[1])
    params = coords.to_params(z)
    res = objective.evaluate(params)
    converged, diag = _assess(res, params, config, objective.config.extension)
    return FitResult(params, res.value, initial_key[1], converged, evals, history, diag)
