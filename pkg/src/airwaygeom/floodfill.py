"""Leak-resistant 3D limited flood fill.

The fill is a breadth-first front: every voxel at front distance ``d`` is
labeled before any voxel at ``d + 1``, and within a layer voxels are taken in
ascending (z, y, x) order.  A voxel cap stops the front mid-layer
deterministically.

Hole gating works by morphological reconstruction.  A voxel is a *core*
voxel when the whole Euclidean ball of radius ``hole_size`` around it is
admissible air.  The seed's connected core region is then geodesically
dilated ``hole_size`` steps back into the admissible air, which restores the
lumen next to walls but cannot re-open a passage narrower than
``2 * hole_size + 1`` voxels.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .volume import DEFAULT_AIR_THRESHOLD, Label, Volume

MAX_HOLE_SIZE = 10


class StopReason(str, enum.Enum):
    EXHAUSTED = "Exhausted"
    CAP_REACHED = "CapReached"
    SEED_INVALID = "SeedInvalid"


@dataclass(frozen=True)
class FillConfig:
    seed: tuple[int, int, int]
    target_label: Label = Label.LUMEN
    max_voxels: int = 2**62
    hole_size: int = 0
    connectivity: int = 6
    hu_threshold: float = DEFAULT_AIR_THRESHOLD

    def __post_init__(self):
        if len(self.seed) != 3 or min(self.seed) < 0:
            raise ValueError(f"seed must be three non-negative voxel indices, got {self.seed}")
        object.__setattr__(self, "seed", tuple(int(c) for c in self.seed))
        object.__setattr__(self, "target_label", Label(self.target_label))
        if self.target_label not in (Label.LUMEN, Label.PARENCHYMA):
            raise ValueError("target_label must be LUMEN or PARENCHYMA")
        if self.max_voxels < 1:
            raise ValueError("max_voxels must be at least 1")
        if not 0 <= self.hole_size <= MAX_HOLE_SIZE:
            raise ValueError(f"hole_size must lie in [0, {MAX_HOLE_SIZE}]")
        if self.connectivity not in (6, 26):
            raise ValueError("connectivity must be 6 or 26")


_PLUG_RE = re.compile(r"^\s*(\d+):(\d+)\s*,\s*(\d+):(\d+)\s*,\s*(\d+):(\d+)\s*$")


@dataclass(frozen=True)
class PlugBox:
    """Axis-aligned voxel box, bounds inclusive on every axis."""

    x0: int
    x1: int
    y0: int
    y1: int
    z0: int
    z1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1 or self.z0 > self.z1:
            raise ValueError(f"plug box has lo > hi on some axis: {self}")
        if min(self.x0, self.y0, self.z0) < 0:
            raise ValueError(f"plug box has negative bounds: {self}")

    @classmethod
    def parse(cls, text: str) -> "PlugBox":
        """Parse ``x0:x1,y0:y1,z0:z1``."""
        m = _PLUG_RE.match(text)
        if not m:
            raise ValueError(f"plug must look like x0:x1,y0:y1,z0:z1, got {text!r}")
        return cls(*(int(g) for g in m.groups()))

    @classmethod
    def from_dict(cls, d) -> "PlugBox":
        if isinstance(d, str):
            return cls.parse(d)
        return cls(int(d["x0"]), int(d["x1"]), int(d["y0"]), int(d["y1"]), int(d["z0"]), int(d["z1"]))

    def to_dict(self) -> dict:
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1, "z0": self.z0, "z1": self.z1}

    def check(self, dims) -> None:
        nx, ny, nz = dims
        if self.x1 >= nx or self.y1 >= ny or self.z1 >= nz:
            raise ValueError(f"plug box {self.to_dict()} exceeds volume dims {tuple(dims)}")

    def index(self):
        return (slice(self.z0, self.z1 + 1), slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1))

    def contains(self, coord) -> bool:
        x, y, z = coord
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1 and self.z0 <= z <= self.z1


@dataclass
class FillReport:
    voxels_filled: int
    front_layers: int
    stop_reason: StopReason
    bounding_box: tuple[tuple[int, int], tuple[int, int], tuple[int, int]] | None = None
    layer_sizes: list[int] = field(default_factory=list)
    # flat (z, y, x) C-order indices per layer, only kept when requested
    layers: list[np.ndarray] | None = None

    def to_dict(self) -> dict:
        return {
            "voxels_filled": self.voxels_filled,
            "front_layers": self.front_layers,
            "stop_reason": self.stop_reason.value,
            "bounding_box": None if self.bounding_box is None else [list(b) for b in self.bounding_box],
        }


def apply_plugs(volume: Volume, plugs: Iterable[PlugBox]) -> int:
    """Label every voxel inside any box as ``Label.PLUG``; returns the number
    of distinct voxels covered."""
    plugs = list(plugs)
    for p in plugs:
        p.check(volume.dims)
    if not plugs:
        return 0
    covered = np.zeros(volume.shape, dtype=bool)
    for p in plugs:
        covered[p.index()] = True
    volume.labels[covered] = Label.PLUG
    return int(np.count_nonzero(covered))


def ball_offsets(radius: int) -> np.ndarray:
    """Euclidean voxel ball as a boolean structuring element."""
    r = int(radius)
    g = np.arange(-r, r + 1)
    zz, yy, xx = np.meshgrid(g, g, g, indexing="ij")
    return (xx**2 + yy**2 + zz**2) <= r * r


def connectivity_structure(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(3, 1 if connectivity == 6 else 3)


def _neighbor_offsets(connectivity: int, pshape) -> np.ndarray:
    _, py, px = pshape
    struct = connectivity_structure(connectivity)
    offs = []
    for dz, dy, dx in np.argwhere(struct) - 1:
        if dz == dy == dx == 0:
            continue
        offs.append(dz * py * px + dy * px + dx)
    return np.array(sorted(offs), dtype=np.int64)


def admissible_mask(volume: Volume, hu_threshold: float) -> np.ndarray:
    """Air voxels that are still unlabeled (plugs, walls and earlier fills block)."""
    return (volume.intensities < hu_threshold) & (volume.labels == Label.UNLABELED)


def gated_region(admissible: np.ndarray, seed_zyx, hole_size: int, connectivity: int) -> np.ndarray:
    """Voxels a fill from ``seed_zyx`` may enter once the hole gate is applied."""
    if hole_size == 0:
        return admissible
    # crop to the seed's plain connected component; the gate only shrinks it
    struct = connectivity_structure(connectivity)
    comp_labels, _ = ndimage.label(admissible, structure=struct)
    comp = comp_labels == comp_labels[seed_zyx]
    del comp_labels
    zs, ys, xs = (np.flatnonzero(comp.any(axis=a)) for a in ((1, 2), (0, 2), (0, 1)))
    pad = hole_size + 1
    lo = [max(v[0] - pad, 0) for v in (zs, ys, xs)]
    hi = [min(v[-1] + pad + 1, n) for v, n in zip((zs, ys, xs), admissible.shape)]
    box = tuple(slice(a, b) for a, b in zip(lo, hi))
    sub = comp[box]
    # the grid edge is not a wall: air is taken to continue past it.  The crop
    # is padded by s + 1, so this only matters where the box meets the edge.
    core = ndimage.binary_erosion(sub, structure=ball_offsets(hole_size), border_value=1)
    local_seed = tuple(s - l for s, l in zip(seed_zyx, lo))
    # a seed near a wall may sit outside the core: keep the
    # core pieces within s steps of it.  Only the core is regrown, so the
    # seed's own neighbourhood never adds reach through a hole.
    reach = np.zeros_like(sub)
    reach[local_seed] = True
    reach = ndimage.binary_dilation(reach, structure=struct, iterations=hole_size, mask=sub)
    core_labels, _ = ndimage.label(core, structure=struct)
    touched = np.unique(core_labels[reach & core])
    del reach, core
    out = np.zeros_like(admissible)
    if touched.size == 0:
        # the seed sits in an opening narrower than the gate
        out[seed_zyx] = True
        return out
    seeded = np.isin(core_labels, touched)
    del core_labels
    grown = ndimage.binary_dilation(seeded, structure=struct, iterations=hole_size, mask=sub)
    out[box] = grown
    return out


def _layered_bfs(region: np.ndarray, seed_zyx, connectivity: int, cap: int):
    """Breadth-first sweep of ``region`` from the seed, yielding each front
    layer as ``(z, y, x)`` index arrays in ascending C order.

    The grid is padded by one false voxel on every side so neighbour lookups
    need no bounds checks.
    """
    nz, ny, nx = region.shape
    pshape = (nz + 2, ny + 2, nx + 2)
    open_ = np.zeros(pshape, dtype=bool)
    open_[1:-1, 1:-1, 1:-1] = region
    open_flat = open_.reshape(-1)
    offs = _neighbor_offsets(connectivity, pshape)
    pz, py, px = pshape
    z, y, x = seed_zyx
    frontier = np.array([(z + 1) * py * px + (y + 1) * px + (x + 1)], dtype=np.int64)
    open_flat[frontier] = False
    filled = 0
    while frontier.size:
        if filled + frontier.size > cap:
            frontier = frontier[: cap - filled]
        filled += frontier.size
        zi, rem = np.divmod(frontier, py * px)
        yi, xi = np.divmod(rem, px)
        yield zi - 1, yi - 1, xi - 1
        if filled >= cap:
            return
        nb = (frontier[:, None] + offs[None, :]).ravel()
        nb = nb[open_flat[nb]]
        frontier = np.unique(nb)
        open_flat[frontier] = False


def limited_flood_fill(volume: Volume, config: FillConfig, plugs: Sequence[PlugBox] = (),
                       record_layers: bool = False) -> FillReport:
    """Fill from ``config.seed`` in place, labeling ``config.target_label``.

    Plugs are stamped into the label grid first.  An invalid seed (outside the
    grid, not air, already labeled or plugged) labels nothing and reports
    ``StopReason.SEED_INVALID``.
    """
    apply_plugs(volume, plugs)
    x, y, z = config.seed
    if not volume.contains(config.seed):
        return FillReport(0, 0, StopReason.SEED_INVALID)
    seed_zyx = (z, y, x)
    if volume.intensities[seed_zyx] >= config.hu_threshold or volume.labels[seed_zyx] != Label.UNLABELED:
        return FillReport(0, 0, StopReason.SEED_INVALID)

    region = gated_region(admissible_mask(volume, config.hu_threshold), seed_zyx,
                          config.hole_size, config.connectivity)
    labels = volume.labels
    nz, ny, nx = volume.shape
    sizes: list[int] = []
    kept: list[np.ndarray] | None = [] if record_layers else None
    lo = np.array([nx, ny, nz])
    hi = np.array([-1, -1, -1])
    for zi, yi, xi in _layered_bfs(region, seed_zyx, config.connectivity, config.max_voxels):
        labels[zi, yi, xi] = config.target_label
        sizes.append(int(zi.size))
        lo = np.minimum(lo, [xi.min(), yi.min(), zi.min()])
        hi = np.maximum(hi, [xi.max(), yi.max(), zi.max()])
        if kept is not None:
            kept.append((zi * ny + yi) * nx + xi)
    del region
    filled = int(sum(sizes))
    reason = StopReason.CAP_REACHED if filled >= config.max_voxels else StopReason.EXHAUSTED
    bbox = tuple((int(a), int(b)) for a, b in zip(lo, hi))
    return FillReport(filled, len(sizes), reason, bbox, sizes, kept)


def segment_airways(volume: Volume, parenchyma_cfg: FillConfig, lumen_cfg: FillConfig,
                    plugs: Sequence[PlugBox] = ()) -> tuple[Volume, tuple[FillReport, FillReport]]:
    """Two-phase segmentation on a copy of ``volume``.

    Phase one fills the parenchyma so that wall holes are sealed from the
    outside; phase two fills the lumen from the trachea seed, treating the
    parenchyma as wall.
    """
    out = volume.copy()
    apply_plugs(out, plugs)
    p_cfg = FillConfig(parenchyma_cfg.seed, Label.PARENCHYMA, parenchyma_cfg.max_voxels,
                       parenchyma_cfg.hole_size, parenchyma_cfg.connectivity, parenchyma_cfg.hu_threshold)
    l_cfg = FillConfig(lumen_cfg.seed, Label.LUMEN, lumen_cfg.max_voxels,
                       lumen_cfg.hole_size, lumen_cfg.connectivity, lumen_cfg.hu_threshold)
    first = limited_flood_fill(out, p_cfg)
    second = limited_flood_fill(out, l_cfg)
    return out, (first, second)
