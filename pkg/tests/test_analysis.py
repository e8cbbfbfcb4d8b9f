import numpy as np
import pytest

from smpci.analysis import detectability, model_vs_oracle, tube_feature_contrast
from smpci.materials import material
from smpci.phantom import cylinder_phantom

from conftest import PIXEL, make_geometry


def test_detectability_is_matched_filter_snr():
    diff = np.array([3.0, 4.0, 100.0])
    roi = np.array([True, True, False])
    assert detectability(diff, 0.5, roi) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        detectability(diff, 0.0, roi)


def tube_contrast(energy, counts=1e4, seed=0, mask=None):
    g = make_geometry(n_x=256, n_y=32, oversampling=16, energy=energy)
    mats = tuple(material(n, energy) for n in ("polyethylene", "water", "pmma"))
    return tube_feature_contrast(mask, g, 2.75e-3, 0.35e-3, 1.5e-3, mats, counts, seed)


def test_rod_absorption_contrast_shows_in_pb_at_low_energy(mask1):
    # PMMA attenuates ~16% less than water at 20 keV, so PB sees the rod
    low, high = tube_contrast(20.0, mask=mask1), tube_contrast(30.0, mask=mask1)
    assert low["pb"]["rod"] > 3 * high["pb"]["rod"]
    assert low["rod_dpc_over_pb"] < high["rod_dpc_over_pb"]


def test_contrast_ratio_does_not_depend_on_dose(mask1):
    a = tube_contrast(30.0, counts=1e4, mask=mask1)
    b = tube_contrast(30.0, counts=1e6, mask=mask1)
    assert a["rod_dpc_over_pb"] == pytest.approx(b["rod_dpc_over_pb"], rel=0.1)
    assert b["pb"]["rod"] == pytest.approx(10 * a["pb"]["rod"], rel=0.1)


def test_field_of_view_needs_air_background(mask1):
    g = make_geometry(n_x=204, oversampling=8, energy=30.0)
    mats = tuple(material(n, 30.0) for n in ("polyethylene", "water", "pmma"))
    with pytest.raises(ValueError, match="background"):
        tube_feature_contrast(mask1, g, 2.75e-3, 0.35e-3, 1.5e-3, mats)


def test_self_comparison_is_exact(mask1, pmma):
    g = make_geometry(n_x=128)
    build = lambda geom: cylinder_phantom(1.5e-3, pmma, geom)
    cmp_ = model_vs_oracle(build, mask1, g, reference="closed")
    assert cmp_.stats["interior"]["max_rel"] == 0.0
    with pytest.raises(ValueError, match="reference"):
        model_vs_oracle(build, mask1, g, reference="crystal ball")
