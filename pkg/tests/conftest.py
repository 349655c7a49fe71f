import numpy as np
import pytest

from airwaygeom.phantom import generate_phantom, standard_phantom_spec
from airwaygeom.volume import Volume

TISSUE, AIR = 40, -1000


def cavity_volume(shape=(11, 11, 11), lo=(3, 3, 3), size=(5, 5, 5), spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Tissue block with one sealed air box; ``lo``/``size`` are (x, y, z)."""
    arr = np.full(shape, TISSUE, dtype=np.int16)
    x, y, z = lo
    sx, sy, sz = size
    arr[z:z + sz, y:y + sy, x:x + sx] = AIR
    return Volume(arr, spacing)


def pinhole_cavity(s_wall=1):
    """Sealed 5x5x5 cavity next to exterior air, joined by a one-voxel hole.

    Grid is 21 (x) by 11 by 11.  The cavity spans x 2..6; the wall at
    x = 7 is ``s_wall`` thick; everything from x = 7 + s_wall on is air.
    """
    arr = np.full((11, 11, 21), TISSUE, dtype=np.int16)
    arr[3:8, 3:8, 2:7] = AIR
    arr[:, :, 7 + s_wall:] = AIR
    arr[5, 5, 7:7 + s_wall] = AIR
    return Volume(arr, (1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def small_phantom():
    """Two-generation phantom without the narrow test branch."""
    spec = standard_phantom_spec(2, small_branch=None)
    volume, truth = generate_phantom(spec)
    return spec, volume, truth


@pytest.fixture(scope="session")
def small_lumen(small_phantom):
    from airwaygeom.volume import Label
    _, volume, truth = small_phantom
    vol = volume.copy()
    vol.labels[truth.lumen_mask] = Label.LUMEN
    return vol, truth


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
