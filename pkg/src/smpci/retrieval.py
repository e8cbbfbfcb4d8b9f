"""Split a flat-field corrected single-mask image into PB and DPC images.

Neighbouring columns ``n`` and ``n+1`` form a pair::

    pb  = (I_n + I_{n+1}) / 2                        ~ T (1 - L)
    dpc = (-1)^n (w_e / alpha) (I_n - I_{n+1}) / (I_n + I_{n+1})   ~ D

``dpc`` is ``D = (z/k) dphi/dx``, the lateral ray displacement at the
detector in meters; ``D / z`` is the refraction angle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import DetectorImage, parity_sign
from .mask import MaskParameters


@dataclass(frozen=True)
class RetrievalResult:
    pb: DetectorImage
    dpc: DetectorImage
    valid: np.ndarray
    pairing: str
    mask_params: MaskParameters

    def refraction_angle(self, z: float | None = None):
        """DPC image converted to refraction angle (rad)."""
        z = z if z is not None else self.dpc.provenance.get("z")
        if not z:
            raise ValueError("propagation distance unknown; pass z")
        return self.dpc.pixels / z


def flat_field_correct(raw: DetectorImage, flat: DetectorImage) -> DetectorImage:
    """Pointwise ``raw / flat``."""
    if raw.shape != flat.shape:
        raise ValueError(f"raw {raw.shape} and flat {flat.shape} differ in shape")
    bad = np.argwhere(~(flat.pixels > 0))
    if len(bad):
        where = ", ".join(f"(row {r}, col {c})" for r, c in bad[:5])
        more = f" and {len(bad) - 5} more" if len(bad) > 5 else ""
        raise ValueError(f"flat field must be positive; bad pixels at {where}{more}")
    prov = {**raw.provenance, "flat_level": 1.0}
    return DetectorImage(raw.pixels / flat.pixels, raw.pixel_size, "corrected", prov)


def _pairs(pixels, pairing):
    if pairing == "sliding":
        left = np.arange(pixels.shape[1] - 1)
    elif pairing == "disjoint":
        left = np.arange(0, pixels.shape[1] - 1, 2)
    else:
        raise ValueError(f"pairing must be 'sliding' or 'disjoint', got {pairing!r}")
    return left, pixels[:, left], pixels[:, left + 1]


def retrieve(corrected: DetectorImage, mask_params: MaskParameters,
             pairing: str = "sliding", parity_origin: int = 0) -> RetrievalResult:
    """PB and DPC images from neighbouring-column sums and differences.

    Sliding pairing gives ``width - 1`` output columns (pair ``j`` = columns
    ``j, j+1``); disjoint pairing gives ``width // 2`` (columns ``2j, 2j+1``).
    Pairs whose sum is not positive are zeroed and flagged invalid.
    """
    if not mask_params.alpha > 0:
        raise ValueError("mask contrast alpha is 0: the mask carries no DPC signal")
    px = corrected.pixels
    if px.shape[1] < 2:
        raise ValueError("need at least 2 columns to form pixel pairs")
    left, a, b = _pairs(px, pairing)
    total = a + b
    valid = np.isfinite(total) & (total > 0)
    safe = np.where(valid, total, 1.0)
    sign = parity_sign(px.shape[1], parity_origin)[left]
    pb = np.where(valid, 0.5 * total, 0.0)
    dpc = np.where(valid, sign * (mask_params.w_e / mask_params.alpha) * (a - b) / safe, 0.0)
    stride = 1 if pairing == "sliding" else 2
    prov = {**corrected.provenance, "pairing": pairing, "parity_origin": parity_origin,
            "w_e": mask_params.w_e, "alpha": mask_params.alpha,
            "pair_stride": stride, "pair_center_offset": 1.0}
    pb_img = DetectorImage(pb, corrected.pixel_size, "retrieved_pb", prov)
    dpc_img = DetectorImage(dpc, corrected.pixel_size, "retrieved_dpc", prov)
    return RetrievalResult(pb_img, dpc_img, valid, pairing, mask_params)


def pair_centers(n_columns: int, pixel_size: float, pairing: str = "sliding"):
    """x positions (m) of the shared boundary of each retrieved pair."""
    left = np.arange(n_columns - 1) if pairing == "sliding" else np.arange(0, n_columns - 1, 2)
    return (left + 1) * pixel_size


def fringe_amplitude_map(corrected: DetectorImage) -> DetectorImage:
    """``|I_n - (I_{n-1} + I_{n+1}) / 2|``; border columns are 0."""
    px = corrected.pixels
    if px.shape[1] < 3:
        raise ValueError("need at least 3 columns")
    out = np.zeros_like(px)
    out[:, 1:-1] = np.abs(px[:, 1:-1] - 0.5 * (px[:, :-2] + px[:, 2:]))
    return DetectorImage(out, corrected.pixel_size, "fringe", dict(corrected.provenance))


def cross_section(img: DetectorImage):
    """Row-averaged profile."""
    return img.pixels.mean(axis=0)
