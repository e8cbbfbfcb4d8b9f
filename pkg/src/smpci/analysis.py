"""Scene-level experiments shared by the CLI and the test suite.

``model_vs_oracle`` lines up flat-field corrected cross-sections of the
closed-form model and the wave reference on the same scene.
``tube_feature_contrast`` measures how detectable the rod and the tube wall
are in the retrieved PB and DPC images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .forward import add_poisson_noise, forward_pb, forward_sm_closed, pixel_averages
from .mask import MaskSpec, mask_parameters
from .phantom import ImagingGeometry, ProjectedObject, tube_phantom, vacuum
from .retrieval import flat_field_correct, pair_centers, retrieve


@dataclass
class Comparison:
    x: np.ndarray
    reference: np.ndarray
    model: np.ndarray
    regions: dict
    stats: dict


def model_vs_oracle(build_object, mask: MaskSpec, geom: ImagingGeometry,
                    oracle_geom: ImagingGeometry | None = None,
                    blur_fwhm: float = 3.5e-6, transfer: str = "angular_spectrum",
                    guard_fraction: float = 0.25, reference: str = "wave",
                    parity_origin: int = 0) -> Comparison:
    """Corrected cross-sections from the closed form and from the reference.

    ``build_object(geom)`` returns the phantom on a given geometry, so the
    oracle can run at its own oversampling. ``reference="closed"`` compares
    the model with itself (a zero-difference sanity run).
    """
    mp = mask_parameters(mask)
    obj = build_object(geom)
    model = flat_field_correct(forward_sm_closed(obj, mp, geom, parity_origin),
                               forward_sm_closed(vacuum(geom), mp, geom, parity_origin))
    if reference == "closed":
        ref = model
    elif reference == "wave":
        og = oracle_geom or geom
        if parity_origin:
            raise ValueError("the wave reference uses the physical mask position; "
                             "parity_origin must be 0")
        o_obj = build_object(og)
        sim = oracle.simulate(o_obj, mask, og, blur_fwhm, transfer, guard_fraction)
        flat = oracle.simulate(vacuum(og), mask, og, blur_fwhm, transfer, guard_fraction)
        ref = flat_field_correct(sim, flat)
    else:
        raise ValueError(f"reference must be 'wave' or 'closed', got {reference!r}")
    r_prof, m_prof = ref.pixels.mean(axis=0), model.pixels.mean(axis=0)
    regions = oracle.region_masks(obj.metadata, geom)
    stats = oracle.compare_profiles(r_prof, m_prof, regions)
    return Comparison(geom.pixel_centers_x(), r_prof, m_prof, regions, stats)


def round_trip_errors(obj: ProjectedObject, mask: MaskSpec, geom: ImagingGeometry,
                      interior_fraction: float = 0.8):
    """Noise-free retrieval of the closed-form image against the true pair values.

    Returns the relative L2 error of the retrieved displacement and the
    maximum relative pb deviation, both over pairs with ``|s| < f R``.
    """
    mp = mask_parameters(mask)
    corr = flat_field_correct(forward_sm_closed(obj, mp, geom),
                              forward_sm_closed(vacuum(geom), mp, geom))
    res = retrieve(corr, mp)
    _, D, _ = pixel_averages(obj, geom)
    d_true = 0.5 * (D[:, :-1] + D[:, 1:])
    pb = forward_pb(obj, geom).pixels
    pb_true = 0.5 * (pb[:, :-1] + pb[:, 1:])
    xc = pair_centers(geom.n_pixels_x, geom.pixel_size)
    sel = np.abs(xc - obj.metadata["center"]) < interior_fraction * obj.metadata["radius"]
    d_err = np.linalg.norm((res.dpc.pixels - d_true)[:, sel]) / np.linalg.norm(d_true[:, sel])
    pb_err = np.max(np.abs(res.pb.pixels[:, sel] / pb_true[:, sel] - 1))
    return float(d_err), float(pb_err)


def detectability(difference, noise_sigma: float, roi) -> float:
    """Known-signal detectability ``||difference[roi]|| / sigma`` in white noise."""
    if not noise_sigma > 0:
        raise ValueError("noise sigma must be positive")
    return float(np.sqrt(np.sum(np.asarray(difference)[roi] ** 2)) / noise_sigma)


def tube_feature_contrast(mask: MaskSpec, geom: ImagingGeometry, outer_r: float, wall: float,
                          rod_r: float, materials, mean_counts: float = 1e4, seed: int = 0,
                          rim_pixels: int = 2, background_margin: float = 0.25e-3):
    """Detectability of the rod and of the tube wall in retrieved PB and DPC.

    A feature's signal is the retrieved image with the feature minus the
    image with that feature replaced by the fill material (noise free); the
    noise level is the standard deviation of each noisy retrieved image in
    the air background. Columns within ``rim_pixels`` of a material boundary
    are left out of each region: the sharp-edge response there depends on
    sampling and blur rather than on the material contrast.
    """
    tube_m, fill_m, rod_m = materials
    mp = mask_parameters(mask)
    flat = forward_sm_closed(vacuum(geom), mp, geom)

    def run(mats, counts=None):
        obj = tube_phantom(outer_r, wall, rod_r, mats, geom)
        raw = forward_sm_closed(obj, mp, geom)
        f = flat
        if counts:
            raw = add_poisson_noise(raw, counts, seed)
            f = add_poisson_noise(flat, counts, seed + 1)
        return obj, retrieve(flat_field_correct(raw, f), mp)

    obj, full = run(materials)
    _, no_rod = run((tube_m, fill_m, fill_m))
    _, no_wall = run((fill_m, fill_m, rod_m))
    _, noisy = run(materials, mean_counts)

    c = obj.metadata["center"]
    s = np.abs(pair_centers(geom.n_pixels_x, geom.pixel_size) - c)
    edge = rim_pixels * geom.pixel_size
    inner = outer_r - wall
    rois = {"rod": s < rod_r - edge,
            "wall": (s > inner + edge) & (s < outer_r - edge)}
    background = s > outer_r + background_margin
    if not np.any(background):
        raise ValueError("field of view leaves no air background beside the tube")
    out = {}
    for attr in ("pb", "dpc"):
        sigma = float(getattr(noisy, attr).pixels[:, background].std())
        base = getattr(full, attr).pixels[0]
        out[attr] = {
            "noise_sigma": sigma,
            "rod": detectability(base - getattr(no_rod, attr).pixels[0], sigma, rois["rod"]),
            "wall": detectability(base - getattr(no_wall, attr).pixels[0], sigma, rois["wall"]),
        }
    out["rod_dpc_over_pb"] = out["dpc"]["rod"] / out["pb"]["rod"]
    out["wall_pb_over_dpc"] = out["pb"]["wall"] / out["dpc"]["wall"]
    return out
