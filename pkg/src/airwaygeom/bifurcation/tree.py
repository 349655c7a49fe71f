"""Airway trees: bifurcation-by-bifurcation descent and angle collection."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..codes import AngleCode, BranchCode, parse_branch
from ..volume import Volume
from .model import (DEFAULT_CARINA_RADIUS, PARAM_NAMES, BifurcationParams, angle_between, frame_from_axes,
                    params_from_geometry)
from .objective import ObjectiveConfig, SurfaceObjective

logger = logging.getLogger(__name__)

RESOLUTION_VOXELS = 6


class ExtractionError(RuntimeError):
    pass


@dataclass
class TreeEntry:
    params: BifurcationParams
    residual: float
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


class AirwayTree(dict):
    """Mapping ``BranchCode -> TreeEntry`` rooted at B1."""

    def validate(self) -> None:
        for code in self:
            if code.parent is not None and code.parent not in self:
                raise ValueError(f"{code} present without its parent {code.parent}")

    @property
    def max_generation(self) -> int:
        return max((c.generation for c in self), default=0)

    def angles(self) -> dict[AngleCode, float]:
        out = {}
        for code, entry in self.items():
            for i in (1, 2):
                out[code.angle(i)] = entry.params.branching_angle(i)
        return out

    def to_json(self) -> dict:
        out = {}
        for code in sorted(self, key=str):
            e = self[code]
            d = e.params.to_dict()
            d["residual"] = e.residual
            d["converged"] = e.converged
            out[str(code)] = d
        return out

    @classmethod
    def from_json(cls, data: dict) -> "AirwayTree":
        tree = cls()
        for key, d in data.items():
            params = BifurcationParams.from_dict({n: d[n] for n in PARAM_NAMES})
            tree[parse_branch(key)] = TreeEntry(params, float(d.get("residual", 0.0)), bool(d.get("converged", True)))
        tree.validate()
        return tree

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "AirwayTree":
        return cls.from_json(json.loads(Path(path).read_text()))


def collect_angles(tree: AirwayTree, generation_filter) -> tuple[list[tuple[AngleCode, float]], list[BranchCode]]:
    """Branching angles of the tree's bifurcations in the given generations.

    Returns ``(angles, missing)``: angles ordered lexicographically by code,
    and the bifurcation codes of those generations that the tree lacks
    (relative to a complete binary tree, minus subtrees under missing codes).
    """
    gens = set(int(g) for g in generation_filter)
    if not gens:
        return [], []
    rows = [(code.angle(i), entry.params.branching_angle(i))
            for code, entry in tree.items() if code.generation in gens for i in (1, 2)]
    rows.sort(key=lambda r: str(r[0]))
    missing = []
    frontier = [BranchCode()]
    while frontier:
        code = frontier.pop(0)
        if code.generation > max(gens):
            continue
        if code not in tree:
            if code.generation in gens:
                missing.append(code)
            continue
        frontier.extend([code.child(1), code.child(2)])
    return rows, sorted(missing, key=str)


def write_angles_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "degrees"])
        for code, deg in rows:
            w.writerow([str(code), f"{deg:.6f}"])


def _voxel(p, spacing):
    return tuple(int(math.floor(c / s + 0.5)) for c, s in zip(p, spacing))


def axis_run(lumen: np.ndarray, spacing, start, direction, max_mm: float) -> float:
    """Distance travelled along ``direction`` from ``start`` before leaving the lumen."""
    step = 0.25 * min(spacing)
    nz, ny, nx = lumen.shape
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    t = 0.0
    while t < max_mm:
        x, y, z = _voxel(np.asarray(start) + t * d, spacing)
        if not (0 <= x < nx and 0 <= y < ny and 0 <= z < nz) or not lumen[z, y, x]:
            return t
        t += step
    return max_mm


def estimate_trachea_init(volume: Volume, probe_mm: float = 10.0,
                          objective: SurfaceObjective | None = None) -> BifurcationParams:
    """Starting parameters for the tracheal bifurcation, read off the lumen
    labels: the trachea is taken to enter through the first z-slice that holds
    lumen."""
    if objective is None:
        objective = SurfaceObjective(volume)
    lumen = objective.lumen
    sx, sy, sz = volume.spacing_mm
    zs = np.flatnonzero(lumen.any(axis=(1, 2)))
    z0 = int(zs[0])

    def centroid(z):
        ys, xs = np.nonzero(lumen[z])
        return np.array([xs.mean() * sx, ys.mean() * sy, z * sz]), xs.size

    top, count = centroid(z0)
    diameter = 2.0 * math.sqrt(count * sx * sy / math.pi)
    z1 = min(int(z0 + round(probe_mm / sz)), int(zs[-1]))
    lower, _ = centroid(z1)
    direction = lower - top if z1 > z0 else np.array([0.0, 0.0, 1.0])
    direction /= np.linalg.norm(direction)
    start = top + 0.5 * sz * direction
    return probe_bifurcation(objective, start, direction, diameter)


def _lumen_components(lumen, spacing, centre, axis, r_in, r_out):
    """Connected lumen pieces inside a forward half-shell around ``centre``.

    Returns ``(points_mm, radii)`` per piece, largest first.
    """
    spacing = np.asarray(spacing, dtype=float)
    lo = np.floor((centre - r_out) / spacing).astype(int)
    hi = np.ceil((centre + r_out) / spacing).astype(int) + 1
    shape = np.array(lumen.shape[::-1])
    lo = np.clip(lo, 0, shape)
    hi = np.clip(hi, 0, shape)
    sub = lumen[lo[2]:hi[2], lo[1]:hi[1], lo[0]:hi[0]] > 0.5
    zz, yy, xx = np.meshgrid(*(np.arange(lo[i], hi[i]) * spacing[i] for i in (2, 1, 0)), indexing="ij")
    rel = np.stack([xx - centre[0], yy - centre[1], zz - centre[2]], axis=-1)
    r = np.linalg.norm(rel, axis=-1)
    mask = sub & (r >= r_in) & (r <= r_out) & (rel @ axis > 0.0)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3, 3)))
    pieces = []
    for k in range(1, n + 1):
        sel = labels == k
        pts = np.stack([xx[sel], yy[sel], zz[sel]], axis=-1)
        pieces.append((pts, r[sel]))
    pieces.sort(key=lambda p: -len(p[0]))
    return pieces


def probe_bifurcation(objective: SurfaceObjective, start, direction, diameter: float,
                      carina_radius: float = DEFAULT_CARINA_RADIUS, n_lengths: int = 24) -> BifurcationParams:
    """Rough bifurcation parameters from the lumen alone.

    Runs along the parent axis until it leaves the lumen at the carina, then
    looks at the lumen in a half-shell beyond that point.  The two largest
    pieces there are the daughters; each daughter's diameter follows from its
    cross-section.  The branch point is searched along the parent axis: for
    each candidate the daughters are aimed at their piece centroids and the
    candidate with the lowest objective wins.  Without two pieces the guess
    falls back to a symmetric 35 degree split.
    """
    lumen = objective.lumen
    spacing = objective.spacing
    start = np.asarray(start, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    voxel = float(np.prod(spacing))
    run = axis_run(lumen, spacing, start, u, 40.0 * diameter)
    carina = start + run * u
    r_in, r_out = 0.75 * diameter, 1.75 * diameter
    pieces = [p for p in _lumen_components(lumen, spacing, carina, u, r_in, r_out) if len(p[0]) >= 8][:2]
    if len(pieces) < 2:
        length = max(run - 0.5 * diameter, diameter)
        frame = frame_from_axes(u, [1.0, 0.0, 0.0])
        return params_from_geometry(start, u, frame[:, 0], length, diameter, (35.0, 35.0),
                                    (0.05 * diameter,) * 2, (0.8 * diameter,) * 2, carina_radius)
    diams = [min(2.0 * math.sqrt(len(pts) * voxel / (r_out - r_in) / math.pi), diameter) for pts, _ in pieces]
    cents = [pts.mean(axis=0) for pts, _ in pieces]
    if diams[1] > diams[0]:
        diams.reverse()
        cents.reverse()
    best, fbest = None, math.inf
    for length in np.linspace(max(0.3 * run, 0.5), run, n_lengths):
        bp = start + length * u
        dirs = [c - bp for c in cents]
        perp = [d - (d @ u) * u for d in dirs]
        angles = tuple(float(np.clip(angle_between(u, d), 3.0, 87.0)) for d in dirs)
        cand = params_from_geometry(start, u, perp[0] - perp[1], float(length), diameter, angles,
                                    (0.05 * diameter,) * 2, tuple(diams), carina_radius)
        fc = objective(cand)
        if fc < fbest:
            best, fbest = cand, fc
    return best


def scan_start(objective: SurfaceObjective, guess: BifurcationParams, n_roll: int = 12,
               length_fractions=(0.5, 0.65, 0.8, 0.9, 1.0)) -> BifurcationParams:
    """Coarse grid over branching-plane roll and parent length; the best
    grid point seeds the annealer."""
    best, fbest = guess, objective(guess)
    for frac in length_fractions:
        for k in range(n_roll):
            cand = replace(guess, parent_length=max(frac * guess.parent_length, 0.5),
                           roll=guess.roll + 180.0 * k / n_roll)
            fc = objective(cand)
            if fc < fbest:
                best, fbest = cand, fc
    return best


def child_guess(objective: SurfaceObjective, parent: BifurcationParams, which: int) -> BifurcationParams:
    """Starting parameters for the bifurcation at the far end of an offspring.

    The child's parent axis follows the offspring exit tangent and starts one
    offspring diameter past the exit point, clear of the junction.
    """
    off = parent.offspring(which)
    d = off["diameter"]
    t = off["exit_tangent"]
    start = off["exit_point"] + d * t
    return probe_bifurcation(objective, start, t, d, parent.carina_radius)


def extract_tree(volume: Volume, trachea_init: BifurcationParams | None = None, optimizer=None,
                 objective_config: ObjectiveConfig | None = None, max_generation: int = 8,
                 resolution_voxels: int = RESOLUTION_VOXELS, scan: bool = False) -> AirwayTree:
    """Fit B1, then every offspring wide enough to resolve, breadth first.

    An offspring seeds a child fit when its fitted diameter is at least
    ``resolution_voxels`` times the finer in-plane spacing; narrower offspring
    are leaves.  Within each fit the wider offspring becomes daughter 1.
    """
    from .anneal import AnnealConfig, fit_bifurcation

    config = optimizer or AnnealConfig()
    objective = SurfaceObjective(volume, objective_config)
    lumen = objective.lumen
    spacing = volume.spacing_mm
    threshold = resolution_voxels * min(spacing[0], spacing[1])
    if trachea_init is None:
        trachea_init = estimate_trachea_init(volume, objective=objective)
    tree = AirwayTree()
    queue: list[tuple[BranchCode, BifurcationParams]] = [(BranchCode(), trachea_init)]
    while queue:
        code, guess = queue.pop(0)
        start = scan_start(objective, guess) if scan else guess
        seed = config.seed + 7919 * len(tree)
        try:
            result = fit_bifurcation(volume, start, replace(config, seed=seed), objective=objective)
        except Exception as exc:
            if code.generation == 1:
                raise ExtractionError(f"tracheal bifurcation fit failed: {exc}") from exc
            logger.warning("fit of %s failed: %s", code, exc)
            continue
        params = result.params.canonical()
        tree[code] = TreeEntry(params, result.residual, result.converged, result.diagnostics)
        logger.info("%s residual %.3f converged %s", code, result.residual, result.converged)
        if not result.converged or code.generation >= max_generation:
            continue
        for which in (1, 2):
            if params.offspring(which)["diameter"] >= threshold:
                queue.append((code.child(which), child_guess(objective, params, which)))
    return tree
