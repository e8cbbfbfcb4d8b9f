import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from smpci import io as sio
from smpci.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, data, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def small_rod(**extra):
    d = {"geometry": {"energy_kev": 20.0, "z_m": 0.6, "pixel_size_um": 27.5,
                      "oversampling": 16, "n_pixels_x": 128, "n_pixels_y": 2},
         "mask": {"type": "square", "period_um": 55.0, "aperture_um": 8.12, "m_max": 101},
         "phantom": {"type": "cylinder", "radius_um": 1500.0, "material": "pmma"},
         "noise": {"enabled": True, "mean_counts": 5000, "seed": 5}}
    d.update(extra)
    return d


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_mask_analyze_cosine_mask(tmp_path, capsys):
    assert main(["mask-analyze", "--config", str(CONFIGS / "mask2_rod.yaml"),
                 "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "w_e = 13.75 um" in text
    report = json.loads((tmp_path / "mask_report.json").read_text())
    assert report["w_e_um"] == pytest.approx(13.75, rel=1e-14)
    assert report["alpha_series"] == 1.0 and report["alpha_boundary"] == 1.0
    assert report["physical"]
    prof = np.loadtxt(tmp_path / "mask_profile.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(prof[:, 1], 0.5 + 0.5 * np.cos(np.pi * prof[:, 0] / 27.5),
                               atol=1e-12)


def test_mask_analyze_constant_mask_warns(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"geometry": {"energy_kev": 20.0, "z_m": 0.6,
                                            "pixel_size_um": 27.5},
                               "mask": {"type": "fourier", "period_um": 55.0,
                                        "coefficients": [1.0]}})
    assert main(["mask-analyze", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    captured = capsys.readouterr()
    assert "no DPC sensitivity" in captured.err
    report = json.loads((tmp_path / "o" / "mask_report.json").read_text())
    assert report["w_e_um"] == pytest.approx(27.5) and report["alpha_boundary"] == 0.0
    # retrieval refuses to produce a DPC image
    assert main(["retrieve", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_NUMERIC
    assert "alpha is 0" in capsys.readouterr().err


def test_mask_analyze_sampled_binary(tmp_path, capsys):
    assert main(["mask-analyze", "--config", str(CONFIGS / "sampled_mask.yaml"),
                 "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "mask_report.json").read_text())
    assert report["w_e_um"] == pytest.approx(4.06, rel=0.01)
    assert report["alpha_series"] == pytest.approx(1.0137525, rel=0.01)


def test_simulate_vacuum_flat_field(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "flat.yaml"),
                 "--out", str(tmp_path)]) == 0
    for form in ("closed", "integrated"):
        img = sio.read_image(tmp_path / f"flat_field_{form}")
        np.testing.assert_allclose(img.pixels, 13.75e-6, rtol=1e-6)


def test_simulate_rod_has_alternating_fringes(tmp_path):
    cfg = write_cfg(tmp_path, small_rod(noise={"enabled": False}))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    raw = sio.read_image(tmp_path / "o" / "raw_sm_closed").pixels[0]
    flat = sio.read_image(tmp_path / "o" / "flat_field_closed").pixels[0]
    c = raw / flat
    fringe = c[1:-1] - 0.5 * (c[:-2] + c[2:])
    flank = slice(70, 115)  # right flank of the rod
    signs = np.sign(fringe[flank])
    assert np.all(signs[1:] == -signs[:-1])


def test_manifest_lists_every_file(tmp_path):
    cfg = write_cfg(tmp_path, small_rod())
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    m = manifest(out)
    listed = {e["path"]: e for e in m["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(listed) == on_disk
    for name, entry in listed.items():
        assert entry["sha256"] == sio.sha256_file(out / name)


def test_determinism_and_seed_override(tmp_path):
    cfg = write_cfg(tmp_path, small_rod())
    for d in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d)]) == 0
    a, b = (tmp_path / "a" / "manifest.json").read_bytes(), (tmp_path / "b" / "manifest.json").read_bytes()
    assert a == b
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c"),
                 "--seed", "6"]) == 0
    noisy = {e["path"]: e["sha256"] for e in manifest(tmp_path / "c")["files"]}
    ref = {e["path"]: e["sha256"] for e in manifest(tmp_path / "a")["files"]}
    assert noisy["raw_sm_closed.f32"] == ref["raw_sm_closed.f32"]
    assert noisy["raw_sm_closed_noisy.f32"] != ref["raw_sm_closed_noisy.f32"]


def test_retrieve_from_files_and_flat_on_flat(tmp_path):
    cfg = write_cfg(tmp_path, small_rod(noise={"enabled": False}))
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(sim)]) == 0
    out = tmp_path / "ret"
    assert main(["retrieve", "--config", str(cfg), "--raw", str(sim / "flat_field_closed"),
                 "--flat", str(sim / "flat_field_closed.hdr"), "--out", str(out)]) == 0
    np.testing.assert_allclose(sio.read_image(out / "pb").pixels, 1.0, atol=1e-7)
    np.testing.assert_array_equal(sio.read_image(out / "dpc").pixels, 0.0)
    out2 = tmp_path / "ret2"
    assert main(["retrieve", "--config", str(cfg), "--raw", str(sim / "raw_sm_closed"),
                 "--flat", str(sim / "flat_field_closed"), "--out", str(out2)]) == 0
    xs = np.loadtxt(out2 / "cross_section.csv", delimiter=",", skiprows=1)
    dpc = xs[:, 2]
    centre = 63
    assert np.sign(dpc[centre - 20]) == -np.sign(dpc[centre + 20]) != 0
    assert (out2 / "dpc.pgm").exists() and (out2 / "valid.f32").exists()


def test_retrieve_shape_mismatch_and_missing_file(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_rod())
    sim = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(sim)]) == 0
    flat_small = write_cfg(tmp_path, {**small_rod(), "geometry": {
        **small_rod()["geometry"], "n_pixels_x": 64}, "phantom": {"type": "vacuum"}},
        "small.yaml")
    assert main(["simulate", "--config", str(flat_small), "--out", str(tmp_path / "s2")]) == 0
    rc = main(["retrieve", "--config", str(cfg), "--raw", str(sim / "raw_sm_closed"),
               "--flat", str(tmp_path / "s2" / "flat_field_closed"), "--out", str(tmp_path / "x")])
    assert rc == EXIT_NUMERIC and "differ in shape" in capsys.readouterr().err
    rc = main(["retrieve", "--config", str(cfg), "--raw", str(tmp_path / "none"),
               "--flat", str(sim / "flat_field_closed"), "--out", str(tmp_path / "y")])
    assert rc == EXIT_IO


def test_config_errors_exit_2(tmp_path, capsys):
    d = small_rod()
    d["geometry"]["pixel_sise_um"] = 27.5
    cfg = write_cfg(tmp_path, d)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "pixel_sise_um" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_coverage_error_exit_3(tmp_path, capsys):
    d = small_rod()
    d["phantom"]["radius_um"] = 5000.0
    cfg = write_cfg(tmp_path, d)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
    assert "does not fit" in capsys.readouterr().err


def test_phantom_gen(tmp_path):
    cfg = write_cfg(tmp_path, small_rod())
    assert main(["phantom-gen", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    hdr = json.loads((tmp_path / "o" / "object.hdr").read_text())
    assert hdr["fields"] == ["T", "phi", "dphi_dx", "lap_phi"]
    assert hdr["metadata"]["type"] == "cylinder"


def test_compare_self_is_zero(tmp_path, capsys):
    cfg = write_cfg(tmp_path, small_rod(oracle={"reference": "closed"}))
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "compare_report.json").read_text())
    for region in ("interior", "rim", "outside"):
        assert rep["stats"][region]["max_rel"] == 0.0
    assert rep["stats"]["fringe"]["sign_match"] == 1.0


def test_compare_against_wave_reference(tmp_path, capsys):
    assert main(["compare", "--config", str(CONFIGS / "mask2_rod.yaml"),
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "compare_report.json").read_text())
    assert rep["stats"]["interior"]["rms_rel"] < 0.03
    rows = (tmp_path / "compare.csv").read_text().splitlines()
    assert rows[0] == "x_um,reference,model,rel_diff,region" and len(rows) == 129


def test_entry_point_runs():
    exe = shutil.which("smpci")
    cmd = [exe] if exe else [sys.executable, "-m", "smpci.cli"]
    res = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "smpci" in res.stdout
