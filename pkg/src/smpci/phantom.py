"""Object-plane projected fields for analytic phantoms.

Coordinates are detector-plane: pixel ``n`` spans ``[n p, (n+1) p]`` and the
fine grid samples each pixel at ``oversampling`` cell centres per axis.
Phase is negative for a retarding object: ``phi = -k delta t``.

A phantom that is uniform along y is stored as a single fine row (shape
``(1, nx)``) and broadcast over the detector rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HC_KEV_M = 12.398419843320026e-10  # h c in keV * m


def wavenumber_from_kev(energy_kev: float) -> float:
    """Wave number ``2 pi / lambda`` (rad/m) for a photon energy in keV."""
    if energy_kev <= 0:
        raise ValueError("energy must be positive")
    return 2 * math.pi * energy_kev / HC_KEV_M


@dataclass(frozen=True)
class Material:
    name: str
    delta: float
    beta: float

    def __post_init__(self):
        if self.delta < 0 or self.beta < 0:
            raise ValueError(f"{self.name}: delta and beta must be non-negative")


VACUUM = Material("vacuum", 0.0, 0.0)


@dataclass(frozen=True)
class ImagingGeometry:
    """Propagation distance, wave number and detector sampling.

    Parameters
    ----------
    z : float
        Object-to-detector distance (m).
    k : float
        Wave number (rad/m).
    pixel_size : float
        Detector pixel size ``p`` (m).
    oversampling : int
        Fine-grid samples per pixel along each axis; even and at least 8.
    n_pixels_x, n_pixels_y : int
        Detector size.
    """

    z: float
    k: float
    pixel_size: float
    oversampling: int = 32
    n_pixels_x: int = 128
    n_pixels_y: int = 1

    def __post_init__(self):
        if not (self.z > 0 and self.k > 0 and self.pixel_size > 0):
            raise ValueError("z, k and pixel_size must be positive")
        if self.oversampling < 8 or self.oversampling % 2:
            raise ValueError(f"oversampling must be even and >= 8, got {self.oversampling}")
        if self.n_pixels_x < 1 or self.n_pixels_y < 1:
            raise ValueError("detector must have at least one pixel")

    @classmethod
    def from_energy(cls, energy_kev: float, **kwargs) -> "ImagingGeometry":
        return cls(k=wavenumber_from_kev(energy_kev), **kwargs)

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.k

    @property
    def grid_spacing(self) -> float:
        return self.pixel_size / self.oversampling

    @property
    def fine_shape(self):
        return (self.n_pixels_y * self.oversampling, self.n_pixels_x * self.oversampling)

    @property
    def extent_x(self) -> float:
        return self.n_pixels_x * self.pixel_size

    @property
    def extent_y(self) -> float:
        return self.n_pixels_y * self.pixel_size

    def fine_x(self):
        """Fine-cell centres along x."""
        n = self.n_pixels_x * self.oversampling
        return (np.arange(n) + 0.5) * self.grid_spacing

    def fine_y(self):
        n = self.n_pixels_y * self.oversampling
        return (np.arange(n) + 0.5) * self.grid_spacing

    def pixel_centers_x(self):
        return (np.arange(self.n_pixels_x) + 0.5) * self.pixel_size

    def replace(self, **changes) -> "ImagingGeometry":
        from dataclasses import replace

        return replace(self, **changes)


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProjectedObject:
    """Projected transmission, phase and phase derivatives on the fine grid.

    ``T`` is the intensity transmission, ``phi`` the phase (rad),
    ``dphi_dx`` in rad/m and ``lap_phi`` the transverse Laplacian in rad/m^2.
    ``rim`` flags samples whose derivatives come from finite differences
    rather than closed form.
    """

    grid_spacing: float
    T: np.ndarray
    phi: np.ndarray
    dphi_dx: np.ndarray
    lap_phi: np.ndarray
    rim: np.ndarray | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        shape = np.shape(self.T)
        for name in ("T", "phi", "dphi_dx", "lap_phi"):
            arr = getattr(self, name)
            if np.ndim(arr) != 2 or np.shape(arr) != shape:
                raise ValueError(f"field {name} has shape {np.shape(arr)}, expected {shape}")
            object.__setattr__(self, name, _frozen(arr))
        if np.any(self.T < 0) or np.any(self.T > 1 + 1e-12):
            raise ValueError("transmission must lie in [0, 1]")
        rim = np.zeros(shape, bool) if self.rim is None else np.asarray(self.rim, bool)
        rim = np.ascontiguousarray(np.broadcast_to(rim, shape))
        rim.setflags(write=False)
        object.__setattr__(self, "rim", rim)

    @property
    def shape(self):
        return self.T.shape

    @property
    def y_invariant(self) -> bool:
        return self.T.shape[0] == 1

    def check_covers(self, geom: ImagingGeometry):
        """Raise if the fine grid does not match the detector field of view."""
        ny, nx = geom.fine_shape
        if not math.isclose(self.grid_spacing, geom.grid_spacing, rel_tol=1e-9):
            raise CoverageError(
                f"object spacing {self.grid_spacing:.6g} m differs from "
                f"geometry spacing {geom.grid_spacing:.6g} m"
            )
        if self.shape[1] != nx or self.shape[0] not in (1, ny):
            raise CoverageError(
                f"object grid {self.shape} does not cover detector fine grid ({ny}, {nx})"
            )


class CoverageError(ValueError):
    """Object grid and detector field of view disagree."""


def vacuum(geom: ImagingGeometry) -> ProjectedObject:
    nx = geom.fine_shape[1]
    ones, zeros = np.ones((1, nx)), np.zeros((1, nx))
    return ProjectedObject(geom.grid_spacing, ones, zeros, zeros, zeros,
                           metadata={"type": "vacuum"})


def derivatives_from_phase(phi, grid_spacing: float):
    """x-gradient and transverse Laplacian of a sampled phase.

    Second-order centred differences inside, second-order one-sided at the
    borders. A field with a single row is treated as uniform in y.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] < 3 or (phi.shape[0] != 1 and phi.shape[0] < 3):
        raise ValueError("phase needs at least 3 samples along each used axis")
    h = grid_spacing
    dx = np.gradient(phi, h, axis=1, edge_order=2)
    lap = _second_difference(phi, h, axis=1)
    if phi.shape[0] > 1:
        lap = lap + _second_difference(phi, h, axis=0)
    return dx, lap


def _second_difference(f, h, axis):
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2 * f[..., 1:-1] + f[..., :-2]) / h**2
    if f.shape[-1] >= 4:
        out[..., 0] = (2 * f[..., 0] - 5 * f[..., 1] + 4 * f[..., 2] - f[..., 3]) / h**2
        out[..., -1] = (2 * f[..., -1] - 5 * f[..., -2] + 4 * f[..., -3] - f[..., -4]) / h**2
    else:
        out[..., 0] = out[..., 1]
        out[..., -1] = out[..., -2]
    return np.moveaxis(out, -1, axis)


def chord(s, radius: float, h: float):
    """Chord length ``2 sqrt(R^2 - s^2)`` of a disc and its first two s-derivatives.

    Derivatives are closed form for ``|s| < R - 2h``; inside the rim band
    ``|s| - R`` within ``2h`` they are finite differences of the chord,
    and zero beyond.
    """
    s = np.asarray(s, dtype=float)
    r2 = radius**2 - s**2
    inside = r2 > 0
    t = np.where(inside, 2 * np.sqrt(np.where(inside, r2, 1.0)), 0.0)
    core = np.abs(s) < radius - 2 * h
    safe = np.where(core, r2, 1.0)
    dt = np.where(core, -2 * s / np.sqrt(safe), 0.0)
    d2t = np.where(core, -2 * radius**2 / safe**1.5, 0.0)
    rim = np.abs(np.abs(s) - radius) <= 2 * h
    if np.any(rim):
        fd1 = np.gradient(t, h, edge_order=2)
        fd2 = _second_difference(t[None, :], h, axis=1)[0]
        dt = np.where(rim, fd1, dt)
        d2t = np.where(rim, fd2, d2t)
    return t, dt, d2t, rim


def _check_fits(center, radius, extent, what):
    if radius <= 0:
        raise ValueError(f"{what}: radius must be positive")
    if center - radius < 0 or center + radius > extent:
        raise CoverageError(f"{what} of radius {radius:.4g} m does not fit in the field of view")


def _from_thickness(parts, k, h, shape_axis, n_other, rim, metadata):
    """Combine per-material (t, dt, d2t) along one axis into a ProjectedObject."""
    phi = sum(-k * m.delta * t for m, (t, _, _) in parts)
    grad = sum(-k * m.delta * dt for m, (_, dt, _) in parts)
    lap = sum(-k * m.delta * d2t for m, (_, _, d2t) in parts)
    T = np.exp(sum(-2 * k * m.beta * t for m, (t, _, _) in parts))
    if shape_axis == "x":
        fields = [a[None, :] for a in (T, phi, grad, lap)]
        rim2 = rim[None, :]
    else:
        col = [a[:, None] for a in (T, phi, lap)]
        fields = [np.repeat(c, n_other, axis=1) for c in col]
        fields.insert(2, np.zeros_like(fields[0]))
        rim2 = np.repeat(rim[:, None], n_other, axis=1)
    return ProjectedObject(h, *fields, rim=rim2, metadata=metadata)


def cylinder_phantom(radius: float, material: Material, geometry: ImagingGeometry,
                     axis: str = "y", center: float | None = None) -> ProjectedObject:
    """Uniform rod of ``material`` with its axis along ``axis``.

    The across-axis coordinate is x for a rod along y (the usual case: the
    rod crosses the mask strips' normal) and y for a rod along x.
    """
    h = geometry.grid_spacing
    if axis == "y":
        coord, extent, n_other = geometry.fine_x(), geometry.extent_x, None
    elif axis == "x":
        coord, extent, n_other = geometry.fine_y(), geometry.extent_y, geometry.fine_shape[1]
    else:
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    c = 0.5 * extent if center is None else center
    _check_fits(c, radius, extent, "cylinder")
    t, dt, d2t, rim = chord(coord - c, radius, h)
    meta = {"type": "cylinder", "axis": axis, "center": c, "radius": radius,
            "material": material.name}
    return _from_thickness([(material, (t, dt, d2t))], geometry.k, h,
                           "x" if axis == "y" else "y", n_other, rim, meta)


def tube_phantom(outer_r: float, wall: float, rod_r: float, materials,
                 geometry: ImagingGeometry, rod_offset: float = 0.0,
                 center: float | None = None, clearance: float = 0.0) -> ProjectedObject:
    """Water-filled tube with an off-axis-capable rod inside, rod along y.

    ``materials`` is ``(tube, water, rod)``. Thicknesses come from nested
    chords: tube wall = chord(outer) - chord(inner), water = chord(inner) -
    chord(rod), rod = chord(rod).
    """
    tube_m, water_m, rod_m = materials
    inner = outer_r - wall
    if wall <= 0 or inner <= 0 or rod_r <= 0:
        raise ValueError("tube wall, inner radius and rod radius must be positive")
    if abs(rod_offset) + rod_r + clearance > inner:
        raise ValueError(
            f"rod (radius {rod_r:.4g} m, offset {rod_offset:.4g} m) does not fit "
            f"inside the tube bore of radius {inner:.4g} m"
        )
    h = geometry.grid_spacing
    c = 0.5 * geometry.extent_x if center is None else center
    _check_fits(c, outer_r, geometry.extent_x, "tube")
    s = geometry.fine_x() - c
    co, ci, cr = chord(s, outer_r, h), chord(s, inner, h), chord(s - rod_offset, rod_r, h)
    shell = tuple(a - b for a, b in zip(co[:3], ci[:3]))
    bore = tuple(a - b for a, b in zip(ci[:3], cr[:3]))
    parts = [(tube_m, shell), (water_m, bore), (rod_m, cr[:3])]
    rim = co[3] | ci[3] | cr[3]
    meta = {"type": "tube", "center": c, "radius": outer_r, "inner_radius": inner,
            "rod_radius": rod_r, "rod_center": c + rod_offset,
            "materials": [m.name for m in materials]}
    return _from_thickness(parts, geometry.k, h, "x", None, rim, meta)


def gaussian_phantom(amplitude: float, sigma: float, geometry: ImagingGeometry,
                     absorption: float = 0.0, center=None) -> ProjectedObject:
    """Smooth 2D blob: ``phi = -A g``, ``T = exp(-B g)``, ``g = exp(-r^2 / 2 sigma^2)``.

    All derivatives are closed form; useful where the slow-variation
    assumption of the closed-form model should hold.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    cx, cy = (0.5 * geometry.extent_x, 0.5 * geometry.extent_y) if center is None else center
    x = geometry.fine_x() - cx
    y = geometry.fine_y() - cy
    X, Y = np.meshgrid(x, y)
    g = np.exp(-(X**2 + Y**2) / (2 * sigma**2))
    phi = -amplitude * g
    dphi = amplitude * X / sigma**2 * g
    lap = -amplitude * g * ((X**2 + Y**2) / sigma**4 - 2 / sigma**2)
    T = np.exp(-absorption * g)
    meta = {"type": "gaussian", "center": cx, "radius": 3 * sigma,
            "amplitude": amplitude, "sigma": sigma}
    return ProjectedObject(geometry.grid_spacing, T, phi, dphi, lap, metadata=meta)


def broadcast_rows(field_, n_rows: int):
    """Expand a y-invariant (single-row) field to ``n_rows`` fine rows."""
    return np.broadcast_to(field_, (n_rows, field_.shape[1])) if field_.shape[0] == 1 else field_
