"""``smpci`` command line: mask analysis, phantom export, simulation, retrieval, comparison.

Exit codes: 0 success, 2 configuration error, 3 numerical or coverage
error, 4 file I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .analysis import model_vs_oracle, tube_feature_contrast
from .config import ConfigError, RunConfig, load_config
from .forward import (DetectorImage, add_poisson_noise, forward_pb, forward_sm_closed,
                      forward_sm_integrated)
from .mask import (PHYSICALITY_TOL, boundary_contrast, contrast_alpha, effective_aperture,
                   mask_parameters, transmission_at)
from .phantom import vacuum
from .retrieval import cross_section, flat_field_correct, pair_centers, retrieve

log = logging.getLogger("smpci")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
ALPHA_ZERO_TOL = 1e-9


class _Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def add(self, paths):
        self.files.extend(paths if isinstance(paths, list) else [paths])

    def image(self, img: DetectorImage, name: str, preview: bool = True):
        self.add(sio.write_image(img, self.out / name))
        if preview and self.cfg.outputs.previews:
            self.add(sio.write_preview(img.pixels, self.out / name))

    def finish(self, command: str):
        cfg = self.cfg.model_dump(mode="json", exclude={"base_dir"})
        cfg["outputs"].pop("directory", None)
        return sio.write_manifest(self.out, self.files,
                                  {"command": command, "version": __version__, "config": cfg})


# -- commands ----------------------------------------------------------------

def cmd_mask_analyze(cfg: RunConfig, run: _Run):
    mask = cfg.build_mask()
    w_e = effective_aperture(mask)
    a_series = contrast_alpha(mask)
    a_boundary = boundary_contrast(mask)
    lo, hi = mask.extrema()
    physical = lo >= -PHYSICALITY_TOL and hi <= 1 + PHYSICALITY_TOL
    report = {"pixel_size_um": mask.pixel_size * 1e6, "period_um": mask.period * 1e6,
              "m_max": mask.m_max, "w_e_um": w_e * 1e6, "alpha_series": a_series,
              "alpha_boundary": a_boundary, "transmission_min": lo, "transmission_max": hi,
              "physical": physical, "coefficients": list(mask.coefficients)}
    print(f"w_e = {w_e * 1e6:.6g} um")
    print(f"alpha (cosine series, m_max = {mask.m_max}) = {a_series:.6g}")
    print(f"alpha (M(0) - M(p)) = {a_boundary:.6g}")
    print(f"physicality: {'ok' if physical else 'VIOLATED'} (min {lo:.4g}, max {hi:.4g})")
    if abs(a_boundary) < ALPHA_ZERO_TOL:
        report["warning"] = "no DPC sensitivity"
        print("warning: alpha = 0, no DPC sensitivity", file=sys.stderr)
    run.add(sio.write_json(run.out / "mask_report.json", report))
    x = mask.phase_offset + mask.period * np.arange(512) / 512
    run.add(sio.write_csv(run.out / "mask_profile.csv",
                          {"x_um": x * 1e6, "series": mask.series(x),
                           "transmission": transmission_at(mask, x)}))


def cmd_phantom_gen(cfg: RunConfig, run: _Run):
    geom = cfg.build_geometry()
    obj = cfg.build_object(geom)
    run.add(sio.write_object(obj, run.out / "object"))
    row = {name: getattr(obj, name)[0] for name in sio.OBJECT_FIELDS}
    run.add(sio.write_csv(run.out / "object_profile.csv", {"x_um": geom.fine_x() * 1e6, **row}))
    print(f"phantom {obj.metadata.get('type')}: fine grid {obj.shape[0]} x {obj.shape[1]}, "
          f"spacing {obj.grid_spacing * 1e6:.4g} um")


def _simulate_images(cfg: RunConfig):
    geom = cfg.build_geometry()
    mask = cfg.build_mask()
    mp = mask_parameters(mask)
    obj = cfg.build_object(geom)
    po = cfg.geometry.parity_origin
    out = {}
    if "closed" in cfg.outputs.forms:
        out["flat_field_closed"] = forward_sm_closed(vacuum(geom), mp, geom, po)
        out["raw_sm_closed"] = forward_sm_closed(obj, mp, geom, po)
    if "integrated" in cfg.outputs.forms:
        if po:
            raise ValueError("the integrated form uses the physical mask position; "
                             "use parity_origin 0 or the closed form only")
        out["flat_field_integrated"] = forward_sm_integrated(vacuum(geom), mask, geom)
        out["raw_sm_integrated"] = forward_sm_integrated(obj, mask, geom)
    if cfg.outputs.pb_reference:
        out["raw_pb"] = forward_pb(obj, geom)
    if cfg.noise.enabled:
        n, seed = cfg.noise.mean_counts, cfg.noise.seed
        for form in ("closed", "integrated"):
            if f"raw_sm_{form}" in out:
                out[f"raw_sm_{form}_noisy"] = add_poisson_noise(out[f"raw_sm_{form}"], n, seed)
                out[f"flat_field_{form}_noisy"] = add_poisson_noise(
                    out[f"flat_field_{form}"], n, seed + 1)
    return out


def cmd_simulate(cfg: RunConfig, run: _Run):
    images = _simulate_images(cfg)
    for name, img in images.items():
        run.image(img, name)
    print("wrote " + ", ".join(images))


def cmd_retrieve(cfg: RunConfig, run: _Run, raw_path=None, flat_path=None):
    mask = cfg.build_mask()
    mp = mask_parameters(mask)
    if abs(mp.alpha) < ALPHA_ZERO_TOL:
        raise ValueError("mask contrast alpha is 0: intensity carries no DPC signal, "
                         "refusing to retrieve")
    raw_path = raw_path or cfg.resolve(cfg.retrieval.raw_path)
    flat_path = flat_path or cfg.resolve(cfg.retrieval.flat_path)
    if (raw_path is None) != (flat_path is None):
        raise ConfigError("give both a raw and a flat image, or neither")
    if raw_path is not None:
        raw, flat = sio.read_image(raw_path), sio.read_image(flat_path)
        source = "files"
    else:
        imgs = _simulate_images(cfg.model_copy(update={
            "outputs": cfg.outputs.model_copy(update={"forms": ["closed"]})}))
        suffix = "_noisy" if cfg.noise.enabled else ""
        raw, flat = imgs["raw_sm_closed" + suffix], imgs["flat_field_closed" + suffix]
        source = "simulated closed form" + (" with noise" if suffix else "")
    res = retrieve(flat_field_correct(raw, flat), mp, cfg.retrieval.pairing,
                   cfg.geometry.parity_origin)
    run.image(res.pb, "pb")
    run.image(res.dpc, "dpc")
    run.image(DetectorImage(res.valid.astype(float), res.pb.pixel_size, "valid",
                            res.pb.provenance), "valid", preview=False)
    x = pair_centers(raw.shape[1], raw.pixel_size, cfg.retrieval.pairing)
    run.add(sio.write_csv(run.out / "cross_section.csv",
                          {"x_um": x * 1e6, "pb": cross_section(res.pb),
                           "dpc_um": cross_section(res.dpc) * 1e6,
                           "valid_fraction": res.valid.mean(axis=0)}))
    n_bad = int((~res.valid).sum())
    print(f"retrieved from {source}: {res.pb.shape[1]} pair columns, "
          f"{n_bad} invalid pairs")
    if source != "files" and cfg.phantom.type == "tube":
        ph = cfg.phantom
        mats = tuple(cfg.material(n) for n in
                     (ph.tube_material, ph.fill_material, ph.rod_material))
        c = tube_feature_contrast(mask, cfg.build_geometry(), ph.outer_radius_um * 1e-6,
                                  ph.wall_um * 1e-6, ph.rod_radius_um * 1e-6, mats,
                                  cfg.noise.mean_counts, cfg.noise.seed)
        run.add(sio.write_json(run.out / "contrast.json", c))
        print(f"rod detectability dpc/pb = {c['rod_dpc_over_pb']:.3g}, "
              f"wall detectability pb/dpc = {c['wall_pb_over_dpc']:.3g}")


def cmd_compare(cfg: RunConfig, run: _Run):
    o = cfg.oracle
    geom = cfg.build_geometry()
    cmp_ = model_vs_oracle(cfg.build_object_factory(), cfg.build_mask(), geom,
                           cfg.build_geometry(o.oversampling), o.blur_fwhm_um * 1e-6,
                           o.transfer, o.guard_fraction, o.reference,
                           cfg.geometry.parity_origin)
    region = np.full(cmp_.x.shape, "outside", dtype=object)
    for name in ("rim", "interior"):
        region[cmp_.regions[name]] = name
    rel = cmp_.model / cmp_.reference - 1
    path = run.out / "compare.csv"
    with open(path, "w", newline="") as f:
        f.write("x_um,reference,model,rel_diff,region\n")
        for row in zip(cmp_.x * 1e6, cmp_.reference, cmp_.model, rel, region):
            f.write(",".join(repr(float(v)) for v in row[:4]) + f",{row[4]}\n")
    run.add(path)
    run.add(sio.write_json(run.out / "compare_report.json",
                           {"reference": o.reference, "blur_fwhm_um": o.blur_fwhm_um,
                            "transfer": o.transfer, "stats": cmp_.stats}))
    lines = [f"reference: {o.reference} (transfer {o.transfer}, blur {o.blur_fwhm_um} um)"]
    for name, st in cmp_.stats.items():
        if "rms_rel" in st:
            lines.append(f"{name:9s} n={st['n']:4d}  rms rel {st['rms_rel']:.3%}  "
                         f"max rel {st['max_rel']:.3%}")
    fr = cmp_.stats["fringe"]
    lines.append(f"fringe    n={fr['n']:4d}  sign match {fr['sign_match']:.3f}")
    text = "\n".join(lines) + "\n"
    (run.out / "compare_report.txt").write_text(text)
    run.add(run.out / "compare_report.txt")
    print(text, end="")


COMMANDS = {"mask-analyze": cmd_mask_analyze, "phantom-gen": cmd_phantom_gen,
            "simulate": cmd_simulate, "retrieve": cmd_retrieve, "compare": cmd_compare}


def build_parser():
    ap = argparse.ArgumentParser(prog="smpci",
                                 description="Single-mask X-ray phase contrast simulation "
                                             "and retrieval")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="noise seed (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "retrieve":
            p.add_argument("--raw", type=Path, help="raw single-mask image (.f32/.hdr)")
            p.add_argument("--flat", type=Path, help="flat-field image (.f32/.hdr)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = cfg.model_copy(update={"noise": cfg.noise.model_copy(
                update={"seed": args.seed})})
        out = args.out or cfg.resolve(cfg.outputs.directory)
        run = _Run(cfg, out)
        extra = {}
        if args.command == "retrieve":
            extra = {"raw_path": args.raw, "flat_path": args.flat}
        COMMANDS[args.command](cfg, run, **extra)
        run.finish(args.command)
    except ConfigError as exc:
        print(f"smpci: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"smpci: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"smpci: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
