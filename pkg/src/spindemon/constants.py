"""Physical constants in the unit system used throughout the package.

Energies are in micro-electronvolts (ueV), temperatures in kelvin, rates
in 1/s, magnetic fields in tesla, gyromagnetic ratios in GHz/T.  All unit
conversions live here so the rest of the code never repeats them.
"""

# CODATA exact values, re-expressed:
#   k_B = 1.380649e-23 J/K / 1.602176634e-19 J/eV = 8.617333262e-5 eV/K
#   h   = 6.62607015e-34 J*s / 1.602176634e-19 J/eV = 4.135667696e-15 eV*s
BOLTZMANN_UEV_PER_K = 86.17333262
"""Boltzmann constant in ueV per kelvin."""

PLANCK_UEV_S = 4.135667696e-9
"""Planck constant in ueV * s."""

PLANCK_UEV_PER_GHZ = PLANCK_UEV_S * 1e9
"""Energy in ueV of one GHz quantum (h * 1 GHz)."""
