"""Periodic absorption mask: cosine Fourier series and its two imaging parameters.

The mask transmission is

    M(x) = sum_m C_m cos(2 pi m (x - x0) / P),   P = 2p

with ``p`` the detector pixel size and ``x0`` a lateral misalignment. With
``x0 = 0`` the open strip centres fall on every other pixel boundary, so the
left boundary of pixel 0 sits at a fully open point.

Only two numbers reach the detector signal: the effective aperture
``w_e = C_0 p`` and the contrast ``alpha = M(0) - M(p) = 2 sum C_odd``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PHYSICALITY_TOL = 1e-6
DEFAULT_M_MAX = 51


@dataclass(frozen=True)
class MaskSpec:
    """Mask transmission as a cosine series with period ``2p``.

    Parameters
    ----------
    coefficients : tuple of float
        ``C_0 .. C_M`` (unitless).
    period : float
        Mask period in meters, twice the detector pixel size.
    phase_offset : float
        Lateral shift of the mask in meters (0 = ideal alignment).
    aperture : float, optional
        Open width of a binary mask. When set, the transmission is the exact
        rectangle wave and the coefficients are its truncated series.
    profile : tuple of (tuple, tuple), optional
        Tabulated ``(x, M)`` over one period. When set, the transmission is
        the periodic linear interpolant of the table.
    """

    coefficients: tuple
    period: float
    phase_offset: float = 0.0
    aperture: float | None = None
    profile: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if not coeffs:
            raise ValueError("mask needs at least the C_0 coefficient")
        if not self.period > 0:
            raise ValueError(f"mask period must be positive, got {self.period}")
        if not 0.0 < coeffs[0] <= 1.0 + PHYSICALITY_TOL:
            raise ValueError(f"C_0 must lie in (0, 1], got {coeffs[0]}")
        if self.aperture is not None and not 0.0 < self.aperture <= self.period:
            raise ValueError("aperture must lie in (0, period]")
        lo, hi = self.extrema()
        if lo < -PHYSICALITY_TOL or hi > 1.0 + PHYSICALITY_TOL:
            raise ValueError(
                f"mask transmission leaves [0, 1]: min {lo:.6g}, max {hi:.6g}"
            )

    @property
    def pixel_size(self) -> float:
        return 0.5 * self.period

    @property
    def m_max(self) -> int:
        return len(self.coefficients) - 1

    def extrema(self, points_per_period: int | None = None):
        """Min and max of the transmission over one period."""
        n = points_per_period or max(64, 16 * (self.m_max + 1))
        x = self.phase_offset + self.period * np.arange(n) / n
        m = transmission_at(self, x)
        return float(m.min()), float(m.max())

    def series(self, x):
        """Truncated cosine series, regardless of any exact profile."""
        x = np.asarray(x, dtype=float)
        m = np.arange(len(self.coefficients))
        arg = np.multiply.outer(x - self.phase_offset, 2 * np.pi * m / self.period)
        return np.cos(arg) @ np.asarray(self.coefficients)

    def antiderivative(self, x):
        """Integral of the transmission from ``phase_offset`` to ``x``."""
        x = np.asarray(x, dtype=float)
        u = x - self.phase_offset
        P = self.period
        if self.aperture is not None:
            h = 0.5 * self.aperture
            n = np.floor(u / P)
            r = u - n * P
            return n * self.aperture + np.clip(r, 0, h) + np.clip(r - (P - h), 0, h)
        if self.profile is not None:
            n = np.floor(u / P)
            r = u - n * P
            g0 = _profile_integral(self.profile, P, 0.0)
            total = _profile_integral(self.profile, P, P) - g0
            return n * total + _profile_integral(self.profile, P, r) - g0
        c = np.asarray(self.coefficients)
        out = c[0] * u
        for m in range(1, len(c)):
            w = 2 * np.pi * m / P
            out = out + c[m] * np.sin(w * u) / w
        return out

    def cell_average(self, centers, width: float):
        """Exact mean transmission over cells ``[c - width/2, c + width/2]``."""
        centers = np.asarray(centers, dtype=float)
        hi = self.antiderivative(centers + 0.5 * width)
        lo = self.antiderivative(centers - 0.5 * width)
        return (hi - lo) / width


@dataclass(frozen=True)
class MaskParameters:
    """The two scalars of the closed-form model.

    ``w_e`` is in meters; ``alpha`` is unitless.
    """

    w_e: float
    alpha: float

    def __post_init__(self):
        if not self.w_e > 0:
            raise ValueError(f"w_e must be positive, got {self.w_e}")
        if not -PHYSICALITY_TOL <= self.alpha <= 1.0 + PHYSICALITY_TOL:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def _profile_table(profile, period):
    """Tabulated profile extended by one sample on each side for wrapping."""
    xs = np.asarray(profile[0], dtype=float)
    ms = np.asarray(profile[1], dtype=float)
    xs = np.concatenate([[xs[-1] - period], xs, [xs[0] + period]])
    ms = np.concatenate([[ms[-1]], ms, [ms[0]]])
    return xs, ms


def _profile_integral(profile, period, r):
    """Integral of the linear interpolant from the table start to ``r``."""
    xs, ms = _profile_table(profile, period)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ms[1:] + ms[:-1]) * np.diff(xs))])
    r = np.asarray(r, dtype=float)
    idx = np.clip(np.searchsorted(xs, r, side="right") - 1, 0, len(xs) - 2)
    dx = r - xs[idx]
    slope = (ms[idx + 1] - ms[idx]) / (xs[idx + 1] - xs[idx])
    return cum[idx] + ms[idx] * dx + 0.5 * slope * dx**2


def transmission_at(mask: MaskSpec, x):
    """Mask transmission at position(s) ``x`` (meters)."""
    x = np.asarray(x, dtype=float)
    P = mask.period
    if mask.aperture is not None:
        r = np.mod(x - mask.phase_offset + 0.5 * P, P) - 0.5 * P
        h = 0.5 * mask.aperture
        return np.where(np.abs(r) < h, 1.0, np.where(np.abs(np.abs(r) - h) <= 1e-12 * P, 0.5, 0.0))
    if mask.profile is not None:
        xs, ms = _profile_table(mask.profile, P)
        return np.interp(np.mod(x - mask.phase_offset, P), xs, ms)
    return mask.series(x)


def transmission_slope_jump(mask: MaskSpec, left, right):
    """``M(right) - M(left)``: the exact integral of dM/dx over each interval."""
    return transmission_at(mask, right) - transmission_at(mask, left)


def square_mask(aperture: float, pixel_size: float, m_max: int = DEFAULT_M_MAX,
                phase_offset: float = 0.0) -> MaskSpec:
    """Ideal binary mask with open width ``aperture`` centred on x = 0.

    Coefficients follow the rectangle-wave series
    ``C_0 = a / 2p``, ``C_m = 2 sin(m pi a / 2p) / (m pi)``.
    """
    period = 2.0 * pixel_size
    if not 0 < aperture <= period:
        raise ValueError(f"aperture must lie in (0, {period}], got {aperture}")
    m = np.arange(1, m_max + 1)
    cm = 2.0 / (m * np.pi) * np.sin(m * np.pi * aperture / period)
    coeffs = (aperture / period,) + tuple(cm)
    return MaskSpec(coeffs, period, phase_offset, aperture=aperture)


def cosine_mask(pixel_size: float, phase_offset: float = 0.0) -> MaskSpec:
    """``M(x) = 0.5 + 0.5 cos(pi x / p)``."""
    return MaskSpec((0.5, 0.5), 2.0 * pixel_size, phase_offset)


def fourier_from_profile(samples, period: float, m_max: int,
                         keep_profile: bool = False) -> MaskSpec:
    """Project a sampled transmission profile onto the cosine basis.

    Samples are wrapped into one period starting at x = 0 and the first
    ``m_max + 1`` cosine coefficients are fitted by least squares, which for
    uniform samples over one period is the discrete cosine projection.

    With ``keep_profile`` the returned mask evaluates the tabulated profile
    exactly (periodic linear interpolation) and keeps the coefficients only
    for ``w_e`` and ``alpha``; use this for binary profiles whose truncated
    series overshoots [0, 1].
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must be an (N, 2) array of (x, transmission)")
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    order = np.argsort(samples[:, 0], kind="stable")
    x, t = samples[order, 0], samples[order, 1]
    spacing = np.median(np.diff(x)) if len(x) > 1 else 0.0
    if x.max() - x.min() + spacing < period * (1 - 1e-9):
        raise ValueError("samples must cover at least one full period")
    in_period = x < x.min() + period * (1 - 1e-12)
    x, t = x[in_period], t[in_period]
    if len(x) < 2 * m_max:
        raise ValueError(
            f"{len(x)} samples per period cannot resolve m_max={m_max}; "
            f"need at least {2 * m_max}"
        )
    m = np.arange(m_max + 1)
    basis = np.cos(np.multiply.outer(x, 2 * np.pi * m / period))
    coeffs, *_ = np.linalg.lstsq(basis, t, rcond=None)
    profile = None
    if keep_profile:
        r = np.mod(x, period)
        order = np.argsort(r)
        profile = (tuple(r[order]), tuple(t[order]))
    return MaskSpec(tuple(coeffs), period, 0.0, profile=profile)


def effective_aperture(mask: MaskSpec) -> float:
    """``w_e = C_0 p`` in meters."""
    return mask.coefficients[0] * mask.pixel_size


def contrast_alpha(mask: MaskSpec, m_max: int | None = None) -> float:
    """``2 * sum C_{2j+1}`` over odd indices up to ``m_max``."""
    c = mask.coefficients
    top = mask.m_max if m_max is None else min(m_max, mask.m_max)
    return 2.0 * math.fsum(c[m] for m in range(1, top + 1, 2))


def boundary_contrast(mask: MaskSpec) -> float:
    """``M(0) - M(p)`` from the transmission itself (offset removed)."""
    x0 = mask.phase_offset
    return float(transmission_at(mask, x0) - transmission_at(mask, x0 + mask.pixel_size))


def mask_parameters(mask: MaskSpec) -> MaskParameters:
    """``(w_e, alpha)`` for the forward model and retrieval.

    alpha is taken as ``M(0) - M(p)``; for a pure cosine series this equals
    the odd-coefficient sum exactly, and for exact binary or tabulated
    profiles it avoids the truncation tail of the series.
    """
    return MaskParameters(effective_aperture(mask), boundary_contrast(mask))


def read_profile_csv(path) -> np.ndarray:
    """Read a ``x_um,transmission`` CSV into an (N, 2) array in meters."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x_um", "transmission"]:
            raise ValueError(f"{path}: header must be 'x_um,transmission', got {header}")
        rows = [(float(a) * 1e-6, float(b)) for a, b in (r for r in reader if r)]
    if not rows:
        raise ValueError(f"{path}: no samples")
    return np.asarray(rows)


def mask_from_definition(defn: dict, base_dir=None) -> MaskSpec:
    """Build a mask from a ``square``, ``fourier`` or ``sampled`` definition.

    Lengths are given in micrometers (``*_um`` keys).
    """
    kind = defn.get("type")
    if kind == "square":
        return square_mask(
            defn["aperture_um"] * 1e-6,
            0.5 * defn["period_um"] * 1e-6,
            m_max=defn.get("m_max", DEFAULT_M_MAX),
            phase_offset=defn.get("offset_um", 0.0) * 1e-6,
        )
    if kind == "fourier":
        return MaskSpec(
            tuple(defn["coefficients"]),
            defn["period_um"] * 1e-6,
            defn.get("offset_um", 0.0) * 1e-6,
        )
    if kind == "sampled":
        path = Path(defn["csv_path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        samples = read_profile_csv(path)
        period = defn["period_um"] * 1e-6 if "period_um" in defn else None
        if period is None:
            raise ValueError("sampled mask needs period_um")
        m = fourier_from_profile(samples, period, defn.get("m_max", DEFAULT_M_MAX),
                                 keep_profile=True)
        offset = defn.get("offset_um", 0.0) * 1e-6
        if offset:
            m = MaskSpec(m.coefficients, m.period, offset, profile=m.profile)
        return m
    raise ValueError(f"unknown mask type {kind!r}")
