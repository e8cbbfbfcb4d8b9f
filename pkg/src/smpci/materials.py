"""Refractive-index decrements and absorption indices for common phantom materials.

``delta`` follows from the electron density, ``r_e lambda^2 n_e / (2 pi)``,
which holds well away from absorption edges (all elements here are light).
``beta`` is ``mu lambda / (4 pi)`` with ``mu`` from the mixture rule over
tabulated elemental mass attenuation coefficients (total, with coherent
scattering), interpolated log-log in energy.
"""

from __future__ import annotations

import numpy as np

from .phantom import HC_KEV_M, Material

CLASSICAL_ELECTRON_RADIUS = 2.8179403262e-15  # m
AVOGADRO = 6.02214076e23

# NIST XCOM total attenuation with coherent scattering, cm^2/g
_ENERGIES_KEV = np.array([15.0, 20.0, 30.0, 40.0, 50.0])
_MASS_ATTENUATION = {
    "H": np.array([0.3854, 0.3695, 0.3570, 0.3458, 0.3355]),
    "C": np.array([0.7071, 0.4420, 0.2562, 0.2076, 0.1871]),
    "O": np.array([1.549, 0.8651, 0.3779, 0.2585, 0.2132]),
}
_ATOMS = {"H": (1, 1.008), "C": (6, 12.011), "O": (8, 15.999)}  # Z, molar mass g/mol

# density g/cm^3, mass fractions
COMPOUNDS = {
    "pmma": (1.19, {"H": 0.080538, "C": 0.599848, "O": 0.319614}),
    "water": (1.00, {"H": 0.111894, "O": 0.888106}),
    "polyethylene": (0.93, {"H": 0.143711, "C": 0.856289}),
}


def electron_density(name: str) -> float:
    """Electrons per m^3."""
    rho, fractions = COMPOUNDS[name]
    per_gram = sum(w * _ATOMS[el][0] / _ATOMS[el][1] for el, w in fractions.items())
    return per_gram * rho * AVOGADRO * 1e6


def linear_attenuation(name: str, energy_kev: float) -> float:
    """Linear attenuation coefficient (1/m)."""
    if not _ENERGIES_KEV[0] <= energy_kev <= _ENERGIES_KEV[-1]:
        raise ValueError(
            f"energy {energy_kev} keV outside tabulated range "
            f"[{_ENERGIES_KEV[0]:g}, {_ENERGIES_KEV[-1]:g}]"
        )
    rho, fractions = COMPOUNDS[name]
    le = np.log(energy_kev)
    mass_mu = sum(
        w * np.exp(np.interp(le, np.log(_ENERGIES_KEV), np.log(_MASS_ATTENUATION[el])))
        for el, w in fractions.items()
    )
    return float(mass_mu * rho * 100.0)


def material(name: str, energy_kev: float) -> Material:
    """:class:`Material` for a tabulated compound at a photon energy."""
    if name not in COMPOUNDS:
        raise KeyError(f"unknown material {name!r}; known: {sorted(COMPOUNDS)}")
    lam = HC_KEV_M / energy_kev
    delta = CLASSICAL_ELECTRON_RADIUS * lam**2 * electron_density(name) / (2 * np.pi)
    beta = linear_attenuation(name, energy_kev) * lam / (4 * np.pi)
    return Material(name, float(delta), float(beta))
