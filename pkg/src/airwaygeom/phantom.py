"""Synthetic airway-tree phantoms with exact ground truth.

Each airway is a straight tube of constant diameter with rounded ends, named
by the code of the bifurcation at its distal end: ``B1`` is the trachea,
``B11`` and ``B12`` its major and minor daughters, and so on.  An airway bifurcates when both its
daughters are present among the phantom branches; otherwise it is a leaf.

Daughters of an airway leave its end point in a common branching plane,
daughter 1 bending towards the plane's bend vector and daughter 2 away from
it.  A daughter's own branching plane is, by default, perpendicular to its
parent's plane; ``roll_deg`` turns it further about the daughter's axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bifurcation.model import BifurcationParams, params_from_geometry
from .bifurcation.tree import AirwayTree, TreeEntry
from .codes import BranchCode, parse_branch
from .volume import Volume

MAX_DEPTH = 5


class PhantomError(ValueError):
    pass


@dataclass(frozen=True)
class BranchSpec:
    """One airway.  ``angle_deg`` is the angle to the parent airway's axis and
    is ignored for the trachea."""

    code: str
    length_mm: float
    diameter_mm: float
    angle_deg: float | None = None
    roll_deg: float = 0.0

    @property
    def branch(self) -> BranchCode:
        return parse_branch(self.code)

    @property
    def parent_code(self) -> str | None:
        p = self.branch.parent
        return None if p is None else str(p)


@dataclass
class PhantomSpec:
    branches: list[BranchSpec]
    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float] = (0.5, 0.5, 1.0)
    origin_mm: tuple[float, float, float] | None = None
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    lumen_hu: int = -1000
    tissue_hu: int = 40
    parenchyma_hu: int | None = None
    wall_mm: float = 1.0
    noise_sd: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        self.branches = [b if isinstance(b, BranchSpec) else BranchSpec(**b) for b in self.branches]
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        self.direction = tuple(float(c) for c in self.direction)
        if self.origin_mm is None:
            nx, ny, _ = self.dims
            sx, sy, sz = self.spacing_mm
            self.origin_mm = ((nx - 1) * sx / 2.0, (ny - 1) * sy / 2.0, -2.0)
        self.origin_mm = tuple(float(c) for c in self.origin_mm)
        self.validate()

    @property
    def generations(self) -> int:
        """Deepest bifurcation generation in the tree."""
        codes = {b.code for b in self.branches}
        gens = [b.branch.generation for b in self.branches if str(b.branch.child(1)) in codes]
        return max(gens, default=0)

    def by_code(self) -> dict[str, BranchSpec]:
        return {b.code: b for b in self.branches}

    def validate(self) -> None:
        table = {}
        for b in self.branches:
            if b.code in table:
                raise PhantomError(f"duplicate airway {b.code}")
            table[b.code] = b
        if "B1" not in table:
            raise PhantomError("spec lacks the trachea (B1)")
        for b in self.branches:
            if b.length_mm <= 0 or b.diameter_mm <= 0:
                raise PhantomError(f"{b.code}: length and diameter must be positive")
            pc = b.parent_code
            if pc is None:
                continue
            if pc not in table:
                raise PhantomError(f"{b.code}: parent airway {pc} missing")
            sibling = str(b.branch.parent.child(3 - b.branch.path[-1]))
            if sibling not in table:
                raise PhantomError(f"{b.code}: sibling {sibling} missing; bifurcations need two daughters")
            if b.diameter_mm > table[pc].diameter_mm:
                raise PhantomError(f"{b.code}: daughter wider than parent")
            if b.angle_deg is None or not 0.0 < b.angle_deg < 90.0:
                raise PhantomError(f"{b.code}: branching angle must lie in (0, 90) degrees")
            if b.branch.path[-1] == 1 and b.diameter_mm < table[sibling].diameter_mm:
                raise PhantomError(f"{b.code}: daughter 1 must be the major (wider) daughter")
        if self.generations > MAX_DEPTH:
            raise PhantomError(f"tree depth {self.generations} exceeds {MAX_DEPTH}")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise PhantomError("dims must be three positive integers")
        if min(self.spacing_mm) <= 0:
            raise PhantomError("spacing must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branches"] = [asdict(b) for b in self.branches]
        return d

    @classmethod
    def from_dict(cls, d) -> "PhantomSpec":
        d = dict(d)
        d["branches"] = [BranchSpec(**b) for b in d["branches"]]
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class Airway:
    code: str
    start: np.ndarray
    end: np.ndarray
    direction: np.ndarray
    bend: np.ndarray
    diameter: float
    length: float


@dataclass
class PlantedBifurcation:
    code: str
    branch_point: np.ndarray
    parent_direction: np.ndarray
    bend: np.ndarray
    daughter_directions: tuple[np.ndarray, np.ndarray]
    angles: tuple[float, float]
    parent_diameter: float
    daughter_diameters: tuple[float, float]
    parent_length: float


@dataclass
class GroundTruth:
    airways: dict[str, Airway]
    bifurcations: dict[str, PlantedBifurcation]
    lumen_voxels: int
    exterior_air_voxels: int
    wall_voxels: int
    branch_voxels: dict[str, np.ndarray] = field(repr=False)
    lumen_mask: np.ndarray = field(repr=False)
    exterior_mask: np.ndarray = field(repr=False)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dims: tuple[int, int, int] = (1, 1, 1)

    def angles(self) -> dict[str, float]:
        out = {}
        for code, b in self.bifurcations.items():
            out[f"{code}A1"] = b.angles[0]
            out[f"{code}A2"] = b.angles[1]
        return dict(sorted(out.items()))

    def params(self, code: str, carina_radius: float = 0.5) -> BifurcationParams:
        """Model parameters that reproduce a planted bifurcation: a straight
        parent clipped to the grid and near-zero arcs, so the daughters run
        straight from the branch point.  A non-tracheal parent starts one
        diameter past its own origin, clear of the junction it leaves."""
        b = self.bifurcations[code]
        extent = np.array([(n - 1) * s for n, s in zip(self.dims, self.spacing_mm)])
        length = b.parent_length
        if code != "B1":
            length = max(length - b.parent_diameter, 0.5 * length)
        start = b.branch_point - length * b.parent_direction
        margin = max(self.spacing_mm)
        while np.any(start < margin) or np.any(start > extent - margin):
            length *= 0.95
            start = b.branch_point - length * b.parent_direction
            if length < b.parent_diameter:
                break
        d1, d2 = b.daughter_diameters
        return params_from_geometry(start, b.parent_direction, b.bend, length, b.parent_diameter,
                                    b.angles, (0.02 * b.parent_diameter,) * 2, (d1, d2), carina_radius)

    def tree(self) -> AirwayTree:
        tree = AirwayTree()
        for code in self.bifurcations:
            tree[parse_branch(code)] = TreeEntry(self.params(code), 0.0, True)
        return tree


def _rotate(vec, axis, degrees):
    """Rodrigues rotation of ``vec`` about unit ``axis``."""
    t = math.radians(degrees)
    return vec * math.cos(t) + np.cross(axis, vec) * math.sin(t) + axis * np.dot(axis, vec) * (1 - math.cos(t))


def layout(spec: PhantomSpec) -> tuple[dict[str, Airway], dict[str, PlantedBifurcation]]:
    """Place every airway in millimetre coordinates."""
    table = spec.by_code()
    d0 = np.asarray(spec.direction, dtype=float)
    d0 /= np.linalg.norm(d0)
    ref = np.array([1.0, 0.0, 0.0]) if abs(d0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e0 = ref - np.dot(ref, d0) * d0
    e0 /= np.linalg.norm(e0)
    airways: dict[str, Airway] = {}
    bifs: dict[str, PlantedBifurcation] = {}

    def place(code, start, direction, reference):
        b = table[code]
        bend = _rotate(reference, direction, b.roll_deg)
        bend = bend - np.dot(bend, direction) * direction
        bend /= np.linalg.norm(bend)
        end = start + b.length_mm * direction
        airways[code] = Airway(code, start, end, direction, bend, b.diameter_mm, b.length_mm)
        c1, c2 = code + "1", code + "2"
        if c1 not in table:
            return
        normal = np.cross(direction, bend)
        dirs = []
        for child, sign in ((c1, 1.0), (c2, -1.0)):
            t = math.radians(table[child].angle_deg)
            dc = math.cos(t) * direction + sign * math.sin(t) * bend
            dirs.append(dc / np.linalg.norm(dc))
        bifs[code] = PlantedBifurcation(
            code, end.copy(), direction.copy(), bend.copy(), (dirs[0], dirs[1]),
            (float(table[c1].angle_deg), float(table[c2].angle_deg)),
            b.diameter_mm, (table[c1].diameter_mm, table[c2].diameter_mm), b.length_mm)
        for child, dc in ((c1, dirs[0]), (c2, dirs[1])):
            place(child, end.copy(), dc, normal)

    place("B1", np.asarray(spec.origin_mm, dtype=float), d0, e0)
    return airways, bifs


def _check_bounds(spec: PhantomSpec, airways: dict[str, Airway]) -> None:
    extent = np.array([(n - 1) * s for n, s in zip(spec.dims, spec.spacing_mm)])
    for code, a in airways.items():
        r = a.diameter / 2.0 + spec.wall_mm
        points = [a.end] if code == "B1" else [a.start, a.end]
        for p in points:
            if np.any(p - r < 0) or np.any(p + r > extent):
                raise PhantomError(f"airway {code} exceeds the volume bounds {tuple(extent)} mm")


def _segment_distance(points, a, b):
    ab = b - a
    t = np.clip(((points - a) @ ab) / float(ab @ ab), 0.0, 1.0)
    return np.linalg.norm(points - a - t[:, None] * ab, axis=1)


def collisions(spec: PhantomSpec, samples: int = 64) -> list[tuple[str, str, float]]:
    """Pairs of airways (other than parent/daughter or siblings) whose walls
    come closer than ``wall_mm``; returns (code, code, gap_mm)."""
    airways, _ = layout(spec)
    codes = sorted(airways)
    out = []
    ts = np.linspace(0.0, 1.0, samples)[:, None]
    for i, ca in enumerate(codes):
        a = airways[ca]
        pa = a.start + ts * (a.end - a.start)
        for cb in codes[i + 1:]:
            b = airways[cb]
            related = ca == cb[:-1] or cb == ca[:-1] or ca[:-1] == cb[:-1]
            if related:
                continue
            gap = _segment_distance(pa, b.start, b.end).min() - (a.diameter + b.diameter) / 2.0
            if gap < 2 * spec.wall_mm:
                out.append((ca, cb, float(gap)))
    return out


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, GroundTruth]:
    """Rasterize the tree.  Lumen voxels get ``lumen_hu``; voxels within
    ``wall_mm`` of the lumen get ``tissue_hu``; everything else is parenchyma
    (``parenchyma_hu``) or, when that is ``None``, tissue."""
    spec.validate()
    airways, bifs = layout(spec)
    _check_bounds(spec, airways)
    nx, ny, nz = spec.dims
    spacing = np.array(spec.spacing_mm)
    field_mm = np.full((nz, ny, nx), np.inf, dtype=np.float32)
    owner = np.full((nz, ny, nx), -1, dtype=np.int16)
    codes = sorted(airways)
    for idx, code in enumerate(codes):
        a = airways[code]
        r = a.diameter / 2.0
        reach = r + spec.wall_mm + spacing.max()
        lo = np.floor((np.minimum(a.start, a.end) - reach) / spacing).astype(int)
        hi = np.ceil((np.maximum(a.start, a.end) + reach) / spacing).astype(int) + 1
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, [nx, ny, nz])
        if np.any(hi <= lo):
            continue
        xs = np.arange(lo[0], hi[0]) * spacing[0]
        ys = np.arange(lo[1], hi[1]) * spacing[1]
        zs = np.arange(lo[2], hi[2]) * spacing[2]
        zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
        d = (_segment_distance(pts, a.start, a.end) - r).reshape(zz.shape).astype(np.float32)
        box = (slice(lo[2], hi[2]), slice(lo[1], hi[1]), slice(lo[0], hi[0]))
        sub_field = field_mm[box]
        sub_owner = owner[box]
        closer = d < sub_field
        sub_field[closer] = d[closer]
        sub_owner[closer & (d <= 0)] = idx

    lumen = field_mm <= 0
    wall = (field_mm > 0) & (field_mm <= spec.wall_mm)
    rest = ~(lumen | wall)
    del field_mm
    intensities = np.empty((nz, ny, nx), dtype=np.float32)
    intensities[lumen] = spec.lumen_hu
    intensities[wall] = spec.tissue_hu
    intensities[rest] = spec.tissue_hu if spec.parenchyma_hu is None else spec.parenchyma_hu
    if spec.noise_sd > 0:
        rng = np.random.default_rng(spec.rng_seed)
        intensities += spec.noise_sd * rng.standard_normal(intensities.shape, dtype=np.float32)
    intensities = np.clip(np.rint(intensities), -32768, 32767).astype(np.int16)
    volume = Volume(intensities, spec.spacing_mm)

    flat_owner = owner.reshape(-1)
    branch_voxels = {}
    order = np.argsort(flat_owner, kind="stable")
    sorted_owner = flat_owner[order]
    for idx, code in enumerate(codes):
        lo_i, hi_i = np.searchsorted(sorted_owner, [idx, idx + 1])
        branch_voxels[code] = np.sort(order[lo_i:hi_i])
    exterior = rest if spec.parenchyma_hu is not None else np.zeros_like(rest)
    truth = GroundTruth(
        airways=airways,
        bifurcations=bifs,
        lumen_voxels=int(np.count_nonzero(lumen)),
        exterior_air_voxels=int(np.count_nonzero(exterior)),
        wall_voxels=int(np.count_nonzero(wall)),
        branch_voxels=branch_voxels,
        lumen_mask=lumen,
        exterior_mask=exterior,
        spacing_mm=spec.spacing_mm,
        dims=spec.dims,
    )
    return volume, truth


def inject_pinhole(volume: Volume, location, radius: int = 0, lumen_hu: int = -1000,
                   hu_threshold: float = -500.0) -> Volume:
    """Copy of ``volume`` with the wall voxels in a Euclidean voxel ball around
    ``location`` (x, y, z) set to ``lumen_hu``.

    ``location`` must be a wall voxel with at least one air 6-neighbour.
    """
    x, y, z = (int(c) for c in location)
    if not volume.contains((x, y, z)):
        raise PhantomError(f"pinhole location {location} outside the volume")
    air = volume.intensities < hu_threshold
    if air[z, y, x]:
        raise PhantomError(f"pinhole location {location} is not a wall voxel")
    nz, ny, nx = volume.shape
    touches = False
    for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        zz, yy, xx = z + dz, y + dy, x + dx
        if 0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx and air[zz, yy, xx]:
            touches = True
    if not touches:
        raise PhantomError(f"pinhole location {location} is not adjacent to lumen")
    out = volume.copy()
    r = int(radius)
    g = np.arange(-r, r + 1)
    for dz in g:
        for dy in g:
            for dx in g:
                if dx * dx + dy * dy + dz * dz > r * r:
                    continue
                zz, yy, xx = z + dz, y + dy, x + dx
                if 0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx and not air[zz, yy, xx]:
                    out.intensities[zz, yy, xx] = lumen_hu
    return out


def pinhole_sites(truth: GroundTruth, limit: int = 16) -> list[tuple[int, int, int]]:
    """Wall voxels with truth lumen on one side and exterior air on the
    opposite side along one axis: removing one of them opens a leak."""
    lumen, ext = truth.lumen_mask, truth.exterior_mask
    wall = ~(lumen | ext)
    found = []
    for axis in (2, 1, 0):
        fwd = [slice(None)] * 3
        mid = [slice(None)] * 3
        bwd = [slice(None)] * 3
        fwd[axis], mid[axis], bwd[axis] = slice(2, None), slice(1, -1), slice(None, -2)
        hit = wall[tuple(mid)] & ((lumen[tuple(bwd)] & ext[tuple(fwd)]) | (ext[tuple(bwd)] & lumen[tuple(fwd)]))
        for z, y, x in np.argwhere(hit):
            pos = [z, y, x]
            pos[axis] += 1
            found.append((int(pos[2]), int(pos[1]), int(pos[0])))
            if len(found) >= limit:
                return sorted(set(found))
    return sorted(set(found))


def standard_tree(generations: int = 4, trachea_diameter: float = 9.0, major_ratio: float = 0.86,
                  minor_ratio: float = 0.76, lengths=(30.0, 24.0, 18.0, 14.0, 11.0, 8.0),
                  leaf_diameters=(2.4, 2.2), exclude=(), small_branch: str | None = "B11111",
                  small_diameter: float = 2.5, seed: int = 7) -> list[BranchSpec]:
    """Branch list for a tree whose bifurcations run to ``generations``.

    Daughters of the deepest bifurcations get ``leaf_diameters``.  Airways
    named in ``exclude`` do not branch.  ``small_branch`` (if given) becomes a
    ``small_diameter`` airway that itself bifurcates, for exercising the
    resolution cut-off.  Angles are drawn from a seeded generator: major
    daughters 22-38 degrees, minor daughters 36-55 degrees.
    """
    rng = np.random.default_rng(seed)
    out = [BranchSpec("B1", lengths[0], trachea_diameter)]
    diam = {"B1": trachea_diameter}
    frontier = ["B1"]
    excluded = set(exclude)
    while frontier:
        code = frontier.pop(0)
        gen = len(code) - 1
        if gen > generations or code in excluded:
            continue
        a1 = float(np.round(rng.uniform(22.0, 38.0), 1))
        a2 = float(np.round(rng.uniform(36.0, 55.0), 1))
        if gen == generations:
            d1, d2 = leaf_diameters
        else:
            d1, d2 = diam[code] * major_ratio, diam[code] * minor_ratio
        depth = min(gen, len(lengths) - 1)
        for digit, angle, d in ((1, a1, d1), (2, a2, d2)):
            child = code + str(digit)
            diam[child] = round(d, 3)
            out.append(BranchSpec(child, lengths[depth], diam[child], angle))
            if gen < generations:
                frontier.append(child)
    if small_branch:
        table = {b.code: b for b in out}
        if small_branch in table:
            b = table[small_branch]
            sib = table[small_branch[:-1] + ("2" if small_branch[-1] == "1" else "1")]
            d = small_diameter
            out = [BranchSpec(b.code, b.length_mm, d, b.angle_deg) if x.code == small_branch else x for x in out]
            if sib.diameter_mm > d and small_branch[-1] == "1":
                out = [BranchSpec(sib.code, sib.length_mm, d, sib.angle_deg) if x.code == sib.code else x for x in out]
            depth = min(len(small_branch) - 1, len(lengths) - 1)
            out.append(BranchSpec(small_branch + "1", lengths[depth], round(0.8 * d, 3), 30.0))
            out.append(BranchSpec(small_branch + "2", lengths[depth], round(0.7 * d, 3), 45.0))
    return out


def fit_dims(branches, spacing_mm=(0.5, 0.5, 1.0), margin_mm: float = 6.0, direction=(0.0, 0.0, 1.0),
             wall_mm: float = 1.0):
    """Grid dims and trachea origin that just contain the tree plus a margin."""
    probe = PhantomSpec(branches, dims=(1, 1, 1), spacing_mm=spacing_mm, origin_mm=(0.0, 0.0, 0.0),
                        direction=direction, wall_mm=wall_mm)
    airways, _ = layout(probe)
    pts = []
    for code, a in airways.items():
        r = a.diameter / 2.0 + wall_mm
        for p in ([a.end] if code == "B1" else [a.start, a.end]):
            pts.append(p - r)
            pts.append(p + r)
    pts = np.array(pts)
    lo = pts.min(axis=0) - margin_mm
    hi = pts.max(axis=0) + margin_mm
    spacing = np.array(spacing_mm)
    lo[2] = 0.0
    top = -2.0
    dims = np.ceil((hi - lo) / spacing).astype(int) + 1
    origin = -lo
    origin[2] = top
    dims[2] = int(np.ceil((hi[2] + top) / spacing[2])) + 1
    return tuple(int(d) for d in dims), tuple(float(o) for o in origin)


def standard_phantom_spec(generations: int = 4, spacing_mm=(0.5, 0.5, 1.0), parenchyma_hu: int | None = None,
                          wall_mm: float = 1.0, noise_sd: float = 0.0, rng_seed: int = 0, **tree_kwargs) -> PhantomSpec:
    branches = standard_tree(generations, **tree_kwargs)
    dims, origin = fit_dims(branches, spacing_mm, wall_mm=wall_mm)
    return PhantomSpec(branches, dims, spacing_mm, origin, parenchyma_hu=parenchyma_hu, wall_mm=wall_mm,
                       noise_sd=noise_sd, rng_seed=rng_seed)
