import numpy as np
import pytest

from airwaygeom.bifurcation.model import angle_between
from airwaygeom.phantom import (BranchSpec, PhantomError, PhantomSpec, fit_dims, generate_phantom, inject_pinhole,
                                pinhole_sites, standard_phantom_spec, standard_tree)


def one_bifurcation(a1=35.0, a2=55.0, **kw):
    branches = [BranchSpec("B1", 20.0, 8.0), BranchSpec("B11", 12.0, 6.0, a1), BranchSpec("B12", 12.0, 5.0, a2)]
    dims, origin = fit_dims(branches)
    return PhantomSpec(branches, dims, origin_mm=origin, **kw)


def test_planted_angles_exact():
    _, truth = generate_phantom(one_bifurcation())
    assert truth.bifurcations["B1"].angles == (35.0, 55.0)
    assert truth.angles() == {"B1A1": 35.0, "B1A2": 55.0}


def test_two_intensities_without_noise():
    vol, truth = generate_phantom(one_bifurcation())
    assert set(np.unique(vol.intensities).tolist()) == {-1000, 40}
    assert np.count_nonzero(vol.intensities == -1000) == truth.lumen_voxels


def test_pool_tree_has_13_bifurcations():
    branches = standard_tree(4, exclude=("B1221", "B1222"), small_branch=None)
    dims, origin = fit_dims(branches)
    _, truth = generate_phantom(PhantomSpec(branches, dims, origin_mm=origin))
    assert len(truth.bifurcations) == 13
    assert len(truth.angles()) == 26


def test_same_seed_bitwise():
    a, _ = generate_phantom(one_bifurcation(noise_sd=30.0, rng_seed=4))
    b, _ = generate_phantom(one_bifurcation(noise_sd=30.0, rng_seed=4))
    c, _ = generate_phantom(one_bifurcation(noise_sd=30.0, rng_seed=5))
    assert a.intensities.tobytes() == b.intensities.tobytes()
    assert a.intensities.tobytes() != c.intensities.tobytes()


def test_direction_vectors_match_spec(small_phantom):
    spec, _, truth = small_phantom
    table = spec.by_code()
    for code, b in truth.bifurcations.items():
        for i, d in enumerate(b.daughter_directions):
            planted = table[f"{code}{i + 1}"].angle_deg
            assert abs(angle_between(b.parent_direction, d) - planted) < 1e-9


def brute_force_lumen(spec, truth):
    """Independent rasterization: a voxel is lumen when its centre lies
    within any airway capsule."""
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing_mm
    zz, yy, xx = np.meshgrid(np.arange(nz) * sz, np.arange(ny) * sy, np.arange(nx) * sx, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1)
    inside = np.zeros((nz, ny, nx), bool)
    for a in truth.airways.values():
        ab = a.end - a.start
        t = np.clip(((pts - a.start) @ ab) / (ab @ ab), 0.0, 1.0)
        closest = a.start + t[..., None] * ab
        inside |= np.linalg.norm(pts - closest, axis=-1) <= a.diameter / 2.0 + 1e-9
    return inside


def test_lumen_count_matches_brute_force(small_phantom):
    spec, vol, truth = small_phantom
    oracle = brute_force_lumen(spec, truth)
    # voxels within float32 rounding of a capsule surface may go either way
    diff = np.count_nonzero(oracle != truth.lumen_mask)
    assert diff <= 2
    assert abs(int(oracle.sum()) - truth.lumen_voxels) <= 2
    assert truth.lumen_voxels == np.count_nonzero(vol.intensities == spec.lumen_hu)
    assert truth.lumen_voxels == sum(v.size for v in truth.branch_voxels.values())


def test_out_of_bounds():
    spec = one_bifurcation()
    spec.dims = (20, 20, 20)
    with pytest.raises(PhantomError):
        generate_phantom(spec)


@pytest.mark.parametrize("change,msg", [
    (lambda b: b[:2], "sibling"),
    (lambda b: [b[0], BranchSpec("B11", 12, 6, 95.0), b[2]], "angle"),
    (lambda b: [b[0], BranchSpec("B11", 12, 9.0, 30.0), b[2]], "wider"),
    (lambda b: [b[0], BranchSpec("B11", 12, 4.0, 30.0), b[2]], "major"),
    (lambda b: b[1:], "trachea"),
])
def test_spec_validation(change, msg):
    good = one_bifurcation().branches
    with pytest.raises(PhantomError, match=msg):
        PhantomSpec(change(good), (10, 10, 10))


def test_spec_json_round_trip(tmp_path):
    spec = standard_phantom_spec(2)
    spec.save(tmp_path / "s.json")
    assert PhantomSpec.load(tmp_path / "s.json") == spec


def test_depth_limit():
    branches = [BranchSpec("B1", 10, 9.0)]
    code = "B1"
    for _ in range(6):
        branches += [BranchSpec(code + "1", 5, 3.0, 30.0), BranchSpec(code + "2", 5, 3.0, 40.0)]
        code += "1"
    with pytest.raises(PhantomError, match="depth"):
        PhantomSpec(branches, (10, 10, 10))


@pytest.fixture(scope="module")
def slab():
    """Air slab over a tissue floor three voxels thick: a flat wall."""
    from airwaygeom.volume import Volume
    arr = np.full((9, 9, 9), -1000, np.int16)
    arr[:, :, :3] = 40
    return Volume(arr, (1, 1, 1))


def test_pinhole_radius_zero(slab):
    out = inject_pinhole(slab, (2, 4, 4), 0)
    assert np.count_nonzero(out.intensities != slab.intensities) == 1


def test_pinhole_radius_one_flat_wall(slab):
    out = inject_pinhole(slab, (2, 4, 4), 1)
    changed = np.count_nonzero(out.intensities != slab.intensities)
    # ball of radius 1 is the 7-voxel cross; one arm lies in the air already
    assert changed == 6 <= 7


def test_pinhole_errors(slab):
    with pytest.raises(PhantomError, match="not a wall"):
        inject_pinhole(slab, (5, 4, 4))
    with pytest.raises(PhantomError, match="not adjacent"):
        inject_pinhole(slab, (0, 4, 4))
    with pytest.raises(PhantomError, match="outside"):
        inject_pinhole(slab, (20, 4, 4))


def test_pinhole_leaks_only_without_gate():
    from airwaygeom.floodfill import FillConfig, limited_flood_fill
    from airwaygeom.volume import Label
    spec = standard_phantom_spec(1, small_branch=None, parenchyma_hu=-850)
    vol, truth = generate_phantom(spec)
    site = pinhole_sites(truth)[0]
    holed = inject_pinhole(vol, site)
    a = truth.airways["B1"]
    seed = tuple(int(round(c / s)) for c, s in zip(a.start + 4 * a.direction, vol.spacing_mm))
    results = {}
    for s in (0, 2):
        v = holed.copy()
        limited_flood_fill(v, FillConfig(seed, hole_size=s))
        results[s] = np.count_nonzero((v.labels == Label.LUMEN) & truth.exterior_mask)
    assert results[0] > 0 and results[2] == 0
