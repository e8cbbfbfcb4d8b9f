"""File formats: raw float images with sidecars, 16-bit previews, CSVs, manifests.

Raw images are little-endian float32, row-major, with a JSON ``.hdr`` sidecar
holding width, height, pixel size (µm), kind and provenance. Previews are
binary PGM (P5, maxval 65535, big-endian samples) scaled linearly between
the image minimum and maximum; the scaling lands in the preview's own
sidecar. Nothing written here carries a timestamp, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .forward import DetectorImage
from .phantom import ProjectedObject

OBJECT_FIELDS = ("T", "phi", "dphi_dx", "lap_phi")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    return value


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_image(img: DetectorImage, path) -> list[Path]:
    """Write ``<path>.f32`` and ``<path>.hdr``; returns the written paths."""
    base = Path(path)
    data = base.with_suffix(".f32")
    hdr = base.with_suffix(".hdr")
    np.ascontiguousarray(img.pixels, dtype="<f4").tofile(data)
    _dump_json({"width": img.shape[1], "height": img.shape[0],
                "pixel_size_um": img.pixel_size * 1e6, "kind": img.kind,
                "dtype": "float32", "byte_order": "little",
                "provenance": img.provenance}, hdr)
    return [data, hdr]


def read_image(path) -> DetectorImage:
    """Read an image written by :func:`write_image` (either file of the pair)."""
    base = Path(path)
    hdr_path, data_path = base.with_suffix(".hdr"), base.with_suffix(".f32")
    try:
        hdr = json.loads(hdr_path.read_text())
        w, h = int(hdr["width"]), int(hdr["height"])
        raw = np.fromfile(data_path, dtype="<f4")
    except (OSError, ValueError, KeyError) as exc:
        raise OSError(f"cannot read image {base}: {exc}") from exc
    if raw.size != w * h:
        raise OSError(f"{data_path}: expected {w * h} samples, found {raw.size}")
    return DetectorImage(raw.reshape(h, w).astype(float), hdr["pixel_size_um"] * 1e-6,
                         hdr["kind"], hdr.get("provenance", {}))


def write_preview(pixels, path) -> list[Path]:
    """16-bit PGM preview plus a sidecar recording the linear scaling."""
    a = np.asarray(pixels, dtype=float)
    lo, hi = float(np.min(a)), float(np.max(a))
    span = hi - lo
    scaled = np.zeros_like(a) if span == 0 else (a - lo) / span
    gray = np.round(scaled * 65535).astype(">u2")
    pgm = Path(path).with_suffix(".pgm")
    with open(pgm, "wb") as f:
        f.write(f"P5\n{a.shape[1]} {a.shape[0]}\n65535\n".encode("ascii"))
        f.write(gray.tobytes())
    side = Path(path).with_suffix(".pgm.json")
    _dump_json({"scaling": "linear", "min": lo, "max": hi,
                "formula": "min + gray / 65535 * (max - min)"}, side)
    return [pgm, side]


def read_preview(path):
    """Gray levels (uint16) of a P5 preview written by :func:`write_preview`."""
    blob = Path(path).read_bytes()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise OSError(f"{path}: not a binary PGM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w)


def write_object(obj: ProjectedObject, path) -> list[Path]:
    """Planar float32 export of T, phi, dphi/dx, lap(phi) with a JSON sidecar."""
    base = Path(path)
    data = base.with_suffix(".f32")
    stack = np.stack([getattr(obj, name) for name in OBJECT_FIELDS])
    np.ascontiguousarray(stack, dtype="<f4").tofile(data)
    hdr = base.with_suffix(".hdr")
    _dump_json({"fields": list(OBJECT_FIELDS), "layout": "planar",
                "width": obj.shape[1], "height": obj.shape[0],
                "grid_spacing_um": obj.grid_spacing * 1e6, "dtype": "float32",
                "byte_order": "little", "metadata": obj.metadata}, hdr)
    return [data, hdr]


def write_csv(path, columns: dict) -> Path:
    """Columns of equal length to CSV, header in insertion order."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[n]) for n in names]
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(names)
        for row in zip(*arrays):
            wr.writerow([repr(float(v)) for v in row])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    _dump_json(obj, path)
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, extra: dict | None = None) -> Path:
    """``manifest.json`` listing each file (relative path, size, sha256), sorted."""
    out_dir = Path(out_dir)
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        entries.append({"path": f.relative_to(out_dir.resolve()).as_posix(),
                        "bytes": f.stat().st_size, "sha256": sha256_file(f)})
    entries.sort(key=lambda e: e["path"])
    path = out_dir / "manifest.json"
    _dump_json({"files": entries, **(extra or {})}, path)
    return path
