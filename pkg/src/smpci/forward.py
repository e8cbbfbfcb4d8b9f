"""Detector intensities: propagation-based, pixel-integrated single-mask, closed form.

Units
-----
``raw_pb`` images hold the mean intensity over a pixel (vacuum = 1).
Single-mask images (``raw_sm``, ``flat_field``) hold intensity integrated
across the pixel width and averaged over its height, so they carry meters
and a flat field reads ``w_e`` in every pixel.

Parity
------
Column ``n`` gets the DPC sign ``(-1)**(n + parity_origin)``. With
``parity_origin = 0`` and an ideally aligned mask, pixel 0 has its left
boundary on a fully open mask point, and a positive phase gradient (rays
bent towards +x) brightens even columns:

    I_n = w_e T_n (1 - L_n) + alpha (-1)**n T_n D_n
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mask import MaskParameters, MaskSpec, transmission_at
from .phantom import ImagingGeometry, ProjectedObject

KINDS = ("raw_pb", "raw_sm", "flat_field", "corrected", "retrieved_pb", "retrieved_dpc",
         "valid", "fringe")


@dataclass(frozen=True)
class DetectorImage:
    """2D pixel array plus the parameters that produced it."""

    pixels: np.ndarray
    pixel_size: float
    kind: str
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown image kind {self.kind!r}")
        px = np.array(self.pixels, dtype=float, copy=True)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2D array")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def shape(self):
        return self.pixels.shape

    def with_pixels(self, pixels, kind=None, **prov):
        return DetectorImage(pixels, self.pixel_size, kind or self.kind,
                             {**self.provenance, **prov})


def bin_fine(field_, geom: ImagingGeometry, reduce_x: str = "mean"):
    """Bin a fine-grid field into pixels: y always averaged, x averaged or summed."""
    f = np.asarray(field_, dtype=float)
    os_ = geom.oversampling
    nfy, nfx = f.shape
    f = f.reshape(nfy, nfx // os_, os_)
    f = f.sum(axis=2) if reduce_x == "sum" else f.mean(axis=2)
    if nfy == 1:
        return np.repeat(f, geom.n_pixels_y, axis=0)
    return f.reshape(nfy // os_, os_, -1).mean(axis=1)


def pixel_averages(obj: ProjectedObject, geom: ImagingGeometry):
    """Per-pixel ``T_n``, ``D_n = (z/k) <dphi/dx>`` and ``L_n = (z/k) <lap phi>``."""
    obj.check_covers(geom)
    s = geom.z / geom.k
    return (bin_fine(obj.T, geom), s * bin_fine(obj.dphi_dx, geom),
            s * bin_fine(obj.lap_phi, geom))


def parity_sign(n_columns: int, parity_origin: int = 0):
    return np.where((np.arange(n_columns) + parity_origin) % 2 == 0, 1.0, -1.0)


def forward_pb(obj: ProjectedObject, geom: ImagingGeometry) -> DetectorImage:
    """Propagation-based image ``T (1 - (z/k) lap phi)``, area-averaged per pixel."""
    obj.check_covers(geom)
    fine = obj.T * (1.0 - geom.z / geom.k * obj.lap_phi)
    return DetectorImage(bin_fine(fine, geom), geom.pixel_size, "raw_pb",
                         {"model": "pb", "z": geom.z, "k": geom.k, "flat_level": 1.0})


def _mask_band_check(mask: MaskSpec, geom: ImagingGeometry):
    c = np.abs(np.asarray(mask.coefficients))
    high = mask.aperture is not None or mask.profile is not None or np.any(c[6:] > 1e-12)
    if high and geom.oversampling < 16:
        raise ValueError(
            f"oversampling {geom.oversampling} too low for a mask with harmonics "
            "above m = 5; need at least 16"
        )


def forward_sm_integrated(obj: ProjectedObject, mask: MaskSpec,
                          geom: ImagingGeometry) -> DetectorImage:
    """Single-mask image from the pixel integrals of the approximated TIE.

    Per pixel::

        I_n = int T M dx - (z/k) int T dM/dx dphi/dx dx - (z/k) int T M lap(phi) dx

    Object factors are sampled at fine-cell centres (midpoint rule); the
    mask enters through its exact cell integrals, so ``int_cell M`` uses the
    antiderivative and ``int_cell dM/dx`` is ``M(right) - M(left)``.
    """
    obj.check_covers(geom)
    _mask_band_check(mask, geom)
    h = geom.grid_spacing
    x = geom.fine_x()
    m_cell = mask.cell_average(x, h) * h
    dm_cell = transmission_at(mask, x + 0.5 * h) - transmission_at(mask, x - 0.5 * h)
    s = geom.z / geom.k
    T = obj.T
    fine = T * m_cell - s * (T * dm_cell * obj.dphi_dx + T * m_cell * obj.lap_phi)
    pixels = bin_fine(fine, geom, reduce_x="sum")
    kind = "flat_field" if obj.metadata.get("type") == "vacuum" else "raw_sm"
    w_e = mask.coefficients[0] * mask.pixel_size
    return DetectorImage(pixels, geom.pixel_size, kind,
                         {"model": "sm_integrated", "z": geom.z, "k": geom.k,
                          "flat_level": w_e})


def neglected_gradient_term(obj: ProjectedObject, mask: MaskSpec, geom: ImagingGeometry):
    """Per-pixel ``(z/k) int M dT/dx dphi/dx dx``, the term dropped from the model.

    Diagnostic only; it never enters a forward image.
    """
    obj.check_covers(geom)
    h = geom.grid_spacing
    x = geom.fine_x()
    dT = np.gradient(obj.T, h, axis=1, edge_order=2)
    fine = mask.cell_average(x, h) * h * dT * obj.dphi_dx
    return geom.z / geom.k * bin_fine(fine, geom, reduce_x="sum")


def forward_sm_closed(obj: ProjectedObject, mask_params: MaskParameters,
                      geom: ImagingGeometry, parity_origin: int = 0) -> DetectorImage:
    """Closed-form single-mask image ``w_e T(1-L) + alpha (-1)^n T D``."""
    T, D, L = pixel_averages(obj, geom)
    sign = parity_sign(geom.n_pixels_x, parity_origin)
    pixels = mask_params.w_e * T * (1.0 - L) + mask_params.alpha * sign * T * D
    kind = "flat_field" if obj.metadata.get("type") == "vacuum" else "raw_sm"
    return DetectorImage(pixels, geom.pixel_size, kind,
                         {"model": "sm_closed", "z": geom.z, "k": geom.k,
                          "w_e": mask_params.w_e, "alpha": mask_params.alpha,
                          "parity_origin": parity_origin, "flat_level": mask_params.w_e})


def add_poisson_noise(img: DetectorImage, mean_counts_per_pixel: float, seed: int,
                      flat_level: float | None = None) -> DetectorImage:
    """Photon noise: scale so the flat level maps to ``mean_counts_per_pixel``.

    ``flat_level`` defaults to the image's recorded flat level (``w_e`` for
    single-mask images, 1 for propagation-based ones). Negative model values
    (the linearised model can undershoot at sharp rims) count as zero flux.
    """
    if not mean_counts_per_pixel > 0:
        raise ValueError("mean_counts_per_pixel must be positive")
    level = flat_level if flat_level is not None else img.provenance.get("flat_level", 1.0)
    rng = np.random.default_rng(seed)
    scale = mean_counts_per_pixel / level
    counts = rng.poisson(np.clip(img.pixels, 0.0, None) * scale)
    return img.with_pixels(counts / scale, noise_counts=mean_counts_per_pixel, noise_seed=seed)
