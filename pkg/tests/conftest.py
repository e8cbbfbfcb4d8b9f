import numpy as np
import pytest

from smpci.mask import cosine_mask, square_mask
from smpci.materials import material
from smpci.phantom import ImagingGeometry

PIXEL = 27.5e-6
APERTURE_1 = 8.12e-6  # square mask with w_e = 4.06 um

_ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail):
    _ACCEPTANCE_LINES.append((number, f"criterion {number} {'PASS' if passed else 'FAIL'}: "
                                      f"{title} -- {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def mask1():
    return square_mask(APERTURE_1, PIXEL, m_max=101)


@pytest.fixture
def mask2():
    return cosine_mask(PIXEL)


@pytest.fixture
def pmma():
    return material("pmma", 20.0)


def make_geometry(n_x=128, n_y=1, oversampling=32, z=0.6, energy=20.0):
    return ImagingGeometry.from_energy(energy, z=z, pixel_size=PIXEL,
                                       oversampling=oversampling,
                                       n_pixels_x=n_x, n_pixels_y=n_y)


@pytest.fixture
def geom():
    return make_geometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
