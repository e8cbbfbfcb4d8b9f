"""Scalar wave-optics reference: exit field, free-space propagation, detection.

The exit field behind mask and object is ``sqrt(T M) exp(i phi)`` on the
fine grid, padded with a guard band of whole mask periods so the padded mask
stays periodic. The object perturbation is tapered to vacuum across the
guard band with a raised cosine. Propagation multiplies the spectrum by the
angular-spectrum transfer function (or its Fresnel approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forward import DetectorImage, bin_fine
from .mask import MaskSpec
from .phantom import ImagingGeometry, ProjectedObject

TRANSFER_FUNCTIONS = ("angular_spectrum", "fresnel")


class SamplingError(ValueError):
    """The grid cannot represent the field or its propagation."""


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude on a padded fine grid.

    A single-row field is uniform along y. ``guard`` is the number of guard
    samples on each side along (x, y).
    """

    values: np.ndarray
    grid_spacing: float
    wavelength: float
    guard: tuple = (0, 0)
    has_mask: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def power(self) -> float:
        """``sum |u|^2 dA`` (per unit length along y for a single-row field)."""
        area = self.grid_spacing if self.values.shape[0] == 1 else self.grid_spacing**2
        return float(np.sum(self.intensity) * area)

    def cropped(self):
        gx, gy = self.guard
        v = self.values
        v = v[:, gx:v.shape[1] - gx] if gx else v
        return v[gy:v.shape[0] - gy] if gy else v


def _taper(n: int):
    """Raised cosine falling from 1 to 0 over ``n`` samples."""
    t = (np.arange(n) + 0.5) / n
    return 0.5 * (1 + np.cos(np.pi * t))


def _pad_axis(f, guard: int, axis: int, vacuum_value: float):
    """Extend edge values into the guard band, tapered towards ``vacuum_value``."""
    if guard == 0:
        return f
    f = np.moveaxis(f, axis, -1)
    w = _taper(guard)
    left = vacuum_value + (f[..., :1] - vacuum_value) * w[::-1]
    right = vacuum_value + (f[..., -1:] - vacuum_value) * w
    out = np.concatenate([left, f, right], axis=-1)
    return np.moveaxis(out, -1, axis)


def guard_pixels(n_pixels: int, guard_fraction: float) -> int:
    """Guard width in pixels: at least ``guard_fraction`` of the detector, even."""
    g = max(2, math.ceil(guard_fraction * n_pixels))
    return g + (g % 2)


def build_exit_field(obj: ProjectedObject, mask: MaskSpec | None, geom: ImagingGeometry,
                     guard_fraction: float = 0.25) -> ComplexField:
    """Exit wave ``sqrt(T M) exp(i phi)`` with a vacuum guard band.

    The mask enters through its exact mean over each fine cell, so sharp
    binary edges carry the correct flux at any sampling. ``mask=None`` gives
    a propagation-based (mask-free) field.
    """
    obj.check_covers(geom)
    if guard_fraction < 0.1:
        raise ValueError("guard band must be at least 10% of the field per side")
    h = geom.grid_spacing
    os_ = geom.oversampling
    if mask is not None:
        nz = np.nonzero(np.abs(np.asarray(mask.coefficients)) > 1e-12)[0]
        top = int(nz.max()) if len(nz) and mask.aperture is None and mask.profile is None else 0
        if top >= os_:
            raise SamplingError(
                f"mask harmonic m={top} aliases at oversampling {os_}; "
                f"grid spacing must be below {mask.pixel_size / top:.4g} m"
            )
    steps = np.abs(np.diff(obj.phi, axis=1))
    smooth = ~(obj.rim[:, 1:] | obj.rim[:, :-1])
    if np.any(steps[smooth] > math.pi):
        worst = float(steps[smooth].max())
        raise SamplingError(
            f"phase changes by {worst:.3g} rad between samples; grid spacing must "
            f"be below {h * math.pi / worst:.4g} m"
        )
    gx = guard_pixels(geom.n_pixels_x, guard_fraction) * os_
    gy = 0 if obj.y_invariant else guard_pixels(geom.n_pixels_y, guard_fraction) * os_
    T = _pad_axis(obj.T, gx, 1, 1.0)
    phi = _pad_axis(obj.phi, gx, 1, 0.0)
    if gy:
        T = _pad_axis(T, gy, 0, 1.0)
        phi = _pad_axis(phi, gy, 0, 0.0)
    x = (np.arange(T.shape[1]) - gx + 0.5) * h
    M = mask.cell_average(x, h)[None, :] if mask is not None else 1.0
    u = np.sqrt(T * M) * np.exp(1j * phi)
    meta = {"object_type": obj.metadata.get("type"), "z": 0.0}
    return ComplexField(u, h, geom.wavelength, (gx, gy), mask is not None, meta)


def _frequencies(n: int, h: float):
    return 2 * np.pi * np.fft.fftfreq(n, h)


def check_transfer_sampling(fld: ComplexField, z: float):
    """The transfer-function chirp is resolved when ``h >= lambda z / L``."""
    h = fld.grid_spacing
    for n in fld.values.shape:
        if n == 1:
            continue
        required = fld.wavelength * z / (n * h)
        if h < required:
            raise SamplingError(
                f"transfer function aliases: spacing {h:.4g} m below "
                f"lambda z / L = {required:.4g} m; coarsen the grid or enlarge the field"
            )


def propagate(fld: ComplexField, z: float, transfer: str = "angular_spectrum") -> ComplexField:
    """Free-space propagation over ``z`` by spectral multiplication.

    The common phase ``exp(i k z)`` is dropped. The propagator is unitary for
    propagating waves, so power is conserved.
    """
    if transfer not in TRANSFER_FUNCTIONS:
        raise ValueError(f"transfer must be one of {TRANSFER_FUNCTIONS}")
    if z < 0:
        raise ValueError("propagation distance must be non-negative")
    meta = {**fld.metadata, "z": fld.metadata.get("z", 0.0) + z, "transfer": transfer}
    if z == 0:
        return ComplexField(fld.values.copy(), fld.grid_spacing, fld.wavelength,
                            fld.guard, fld.has_mask, meta)
    check_transfer_sampling(fld, z)
    ny, nx = fld.values.shape
    k = fld.k
    kx = _frequencies(nx, fld.grid_spacing)
    q2 = kx[None, :] ** 2
    if ny > 1:
        q2 = q2 + _frequencies(ny, fld.grid_spacing)[:, None] ** 2
    if np.any(q2 >= k**2):
        raise SamplingError("grid resolves evanescent waves; spacing is below a wavelength")
    if transfer == "angular_spectrum":
        # sqrt(k^2 - q^2) - k without cancellation
        kz_minus_k = -q2 / (np.sqrt(k**2 - q2) + k)
    else:
        kz_minus_k = -q2 / (2 * k)
    H = np.exp(1j * z * kz_minus_k)
    if ny == 1:
        out = np.fft.ifft(np.fft.fft(fld.values, axis=1) * H, axis=1)
    else:
        out = np.fft.ifft2(np.fft.fft2(fld.values) * H)
    return ComplexField(out, fld.grid_spacing, fld.wavelength, fld.guard, fld.has_mask, meta)


def gaussian_blur(intensity, grid_spacing: float, fwhm: float):
    """Periodic Gaussian convolution by spectral multiplication."""
    if fwhm <= 0:
        return intensity
    sigma = fwhm / (2 * math.sqrt(2 * math.log(2)))
    ny, nx = intensity.shape
    g = np.exp(-0.5 * (_frequencies(nx, grid_spacing) * sigma) ** 2)[None, :]
    if ny > 1:
        g = g * np.exp(-0.5 * (_frequencies(ny, grid_spacing) * sigma) ** 2)[:, None]
    return np.real(np.fft.ifft2(np.fft.fft2(intensity) * g))


def detect(fld: ComplexField, geom: ImagingGeometry, source_blur_fwhm: float = 0.0) -> DetectorImage:
    """Intensity, optional source blur, then area binning into detector pixels.

    A masked field is binned like the single-mask forward models (integrated
    across the pixel width); a mask-free field like the propagation-based one.
    """
    I = gaussian_blur(fld.intensity, fld.grid_spacing, source_blur_fwhm)
    gx, gy = fld.guard
    I = I[:, gx:I.shape[1] - gx] if gx else I
    I = I[gy:I.shape[0] - gy] if gy else I
    if I.shape[1] != geom.fine_shape[1]:
        raise ValueError("field does not cover the detector")
    prov = {"model": "wave_oracle", "z": fld.metadata.get("z"), "k": geom.k,
            "blur_fwhm": source_blur_fwhm, "transfer": fld.metadata.get("transfer")}
    if fld.has_mask:
        pixels = bin_fine(I, geom, reduce_x="sum") * fld.grid_spacing
        kind = "flat_field" if fld.metadata.get("object_type") == "vacuum" else "raw_sm"
        level = float(np.median(pixels)) if kind == "flat_field" else None
        prov["flat_level"] = level
    else:
        pixels = bin_fine(I, geom)
        kind = "raw_pb"
        prov["flat_level"] = 1.0
    if prov["flat_level"] is None:
        prov.pop("flat_level")
    return DetectorImage(pixels, geom.pixel_size, kind, prov)


def simulate(obj: ProjectedObject, mask: MaskSpec | None, geom: ImagingGeometry,
             source_blur_fwhm: float = 0.0, transfer: str = "angular_spectrum",
             guard_fraction: float = 0.25) -> DetectorImage:
    """Exit field, propagation over ``geom.z`` and detection in one call."""
    fld = build_exit_field(obj, mask, geom, guard_fraction)
    return detect(propagate(fld, geom.z, transfer), geom, source_blur_fwhm)


# -- comparison --------------------------------------------------------------

def region_masks(metadata: dict, geom: ImagingGeometry, interior_fraction: float = 0.8):
    """Column masks for ``interior`` (|s| < 0.8 R), ``rim`` and ``outside``."""
    xc = geom.pixel_centers_x()
    if "center" not in metadata or "radius" not in metadata:
        everything = np.ones(geom.n_pixels_x, bool)
        return {"interior": everything, "rim": ~everything, "outside": ~everything}
    s = np.abs(xc - metadata["center"])
    R = metadata["radius"]
    interior = s < interior_fraction * R
    rim = ~interior & (s <= R + geom.pixel_size)
    return {"interior": interior, "rim": rim, "outside": ~(interior | rim)}


def fringe_component(profile):
    """``I_n - (I_{n-1} + I_{n+1}) / 2`` for interior samples, 0 at the ends."""
    f = np.zeros_like(profile)
    f[1:-1] = profile[1:-1] - 0.5 * (profile[:-2] + profile[2:])
    return f


def compare_profiles(reference, test, regions: dict, fringe_threshold: float = 0.25):
    """Relative-difference statistics of ``test`` against ``reference`` per region.

    ``fringe_sign_match`` is the fraction of fringe-region columns where the
    two fringe components share a sign; the fringe region holds interior
    columns whose reference fringe exceeds ``fringe_threshold`` of its
    interior maximum.
    """
    reference = np.asarray(reference, float)
    test = np.asarray(test, float)
    rel = (test - reference) / reference
    stats = {}
    for name, sel in regions.items():
        if not np.any(sel):
            continue
        r = rel[sel]
        stats[name] = {"n": int(sel.sum()), "rms_rel": float(np.sqrt(np.mean(r**2))),
                       "max_rel": float(np.max(np.abs(r)))}
    fr, ft = fringe_component(reference), fringe_component(test)
    interior = regions.get("interior", np.ones_like(reference, bool)).copy()
    interior[[0, -1]] = False
    peak = np.abs(fr[interior]).max() if np.any(interior) else 0.0
    region = interior & (np.abs(fr) >= fringe_threshold * peak) & (peak > 0)
    match = float(np.mean(np.sign(fr[region]) == np.sign(ft[region]))) if np.any(region) else 1.0
    stats["fringe"] = {"n": int(region.sum()), "sign_match": match}
    return stats
