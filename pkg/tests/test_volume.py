import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airwaygeom.volume import (Label, Volume, VolumeFormatError, air_mask, export_slice, load_volume, read_pgm,
                               save_volume, slice_image)


def write_header(tmp_path, dims, spacing, nbytes, name="v"):
    raw = tmp_path / f"{name}.raw"
    raw.write_bytes(bytes(nbytes))
    hdr = tmp_path / f"{name}.json"
    hdr.write_text(json.dumps({"dims": dims, "spacing_mm": spacing, "dtype": "i16",
                               "order": "x-fastest", "data_file": raw.name}))
    return hdr


def test_load_64_voxels(tmp_path):
    vol = load_volume(write_header(tmp_path, [4, 4, 4], [0.5, 0.5, 1.0], 128))
    assert vol.dims == (4, 4, 4)
    assert vol.intensities.size == 64
    assert vol.count(Label.UNLABELED) == 64


def test_size_mismatch(tmp_path):
    with pytest.raises(VolumeFormatError, match="size mismatch"):
        load_volume(write_header(tmp_path, [4, 4, 4], [0.5, 0.5, 1.0], 100))


def test_bad_spacing(tmp_path):
    with pytest.raises(VolumeFormatError):
        load_volume(write_header(tmp_path, [4, 4, 4], [0.5, 0.0, 1.0], 128))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_volume(tmp_path / "nope.json")
    hdr = write_header(tmp_path, [4, 4, 4], [1, 1, 1], 128)
    (tmp_path / "v.raw").unlink()
    with pytest.raises((FileNotFoundError, VolumeFormatError)):
        load_volume(hdr)


def test_little_endian_x_fastest(tmp_path):
    raw = np.arange(24, dtype="<i2")
    (tmp_path / "a.raw").write_bytes(raw.tobytes())
    (tmp_path / "a.json").write_text(json.dumps({"dims": [4, 3, 2], "spacing_mm": [1, 1, 1], "dtype": "i16",
                                                  "order": "x-fastest", "data_file": "a.raw"}))
    vol = load_volume(tmp_path / "a.json")
    assert vol.intensities[0, 0, 1] == 1  # x advances first
    assert vol.intensities[0, 1, 0] == 4
    assert vol.intensities[1, 0, 0] == 12


def test_round_trip_bitwise(tmp_path, small_phantom):
    _, volume, truth = small_phantom
    vol = volume.copy()
    vol.labels[truth.lumen_mask] = Label.LUMEN
    save_volume(vol, tmp_path / "p.json")
    back = load_volume(tmp_path / "p.json", True)
    assert back.intensities.tobytes() == vol.intensities.tobytes()
    assert back.labels.tobytes() == vol.labels.tobytes()
    assert back.spacing_mm == vol.spacing_mm


def test_invalid_labels_rejected():
    with pytest.raises(VolumeFormatError):
        Volume(np.zeros((2, 2, 2)), (1, 1, 1), np.full((2, 2, 2), 9))


def test_air_mask_examples():
    vol = Volume(np.array([[[-1000, 0]]]), (1, 1, 1))
    mask = air_mask(vol, -500)
    assert mask[0, 0, 0] and not mask[0, 0, 1]


def test_air_mask_phantom_bookkeeping():
    from airwaygeom.phantom import generate_phantom, standard_phantom_spec
    spec = standard_phantom_spec(1, small_branch=None, parenchyma_hu=-850)
    volume, truth = generate_phantom(spec)
    assert np.count_nonzero(air_mask(volume, -500)) == truth.lumen_voxels + truth.exterior_air_voxels


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-1100, 100), st.integers(0, 300))
def test_air_mask_monotone(seed, t, dt):
    rng = np.random.default_rng(seed)
    vol = Volume(rng.integers(-1100, 100, size=(3, 4, 5)), (1, 1, 1))
    assert np.count_nonzero(air_mask(vol, t)) <= np.count_nonzero(air_mask(vol, t + dt))


def test_slice_dims_and_range():
    vol = Volume(np.zeros((7, 5, 3)), (1, 1, 1))  # nx=3, ny=5, nz=7
    assert slice_image(vol, "z", 3).shape == (5, 3)
    assert slice_image(vol, "y", 0).shape == (7, 3)
    assert slice_image(vol, "x", 2).shape == (7, 5)
    with pytest.raises(IndexError):
        slice_image(vol, "z", 7)
    with pytest.raises(ValueError):
        slice_image(vol, "w", 0)


@pytest.mark.parametrize("axis", ["x", "y", "z"])
def test_slice_pixel_count(tmp_path, axis):
    vol = Volume(np.zeros((7, 5, 3)), (1, 1, 1))
    path = export_slice(vol, axis, 1, tmp_path / "s.pgm")
    nx, ny, nz = vol.dims
    others = {"x": ny * nz, "y": nx * nz, "z": nx * ny}[axis]
    assert read_pgm(path).size == others
    assert path.read_bytes().startswith(b"P5\n")


def test_white_pixels_match_lumen(small_lumen, tmp_path):
    vol, truth = small_lumen
    z = vol.dims[2] // 3
    img = read_pgm(export_slice(vol, "z", z, tmp_path / "o.pgm", overlay_labels=True))
    assert np.count_nonzero(img == 255) == np.count_nonzero(vol.labels[z] == Label.LUMEN)
    assert np.count_nonzero(img == 255) > 0
