"""Physical constants pinned for the whole package.

Internal unit system: energies in cm^-1, magnetic fields in tesla,
temperatures in kelvin, distances in angstrom. Everything that converts
between these units lives here so there is exactly one place to audit.
"""

# Bohr magneton and Boltzmann constant in spectroscopic units.
MU_B_CM1_PER_T = 0.4668645       # cm^-1 per tesla
K_B_CM1_PER_K = 0.6950348        # cm^-1 per kelvin

# CGS values used for the point-dipole coupling and molar susceptibility.
MU_B_ERG_PER_G = 9.2740100783e-21    # erg/G
PLANCK_ERG_S = 6.62607015e-27        # erg s
C_CM_PER_S = 2.99792458e10           # cm/s
HC_ERG_CM = PLANCK_ERG_S * C_CM_PER_S
AVOGADRO = 6.02214076e23

# chi_mol [cm^3/mol] = CHI_MOL_PER_MUB_PER_T * m[mu_B per molecule] / H[T].
# This is N_A * mu_B(CGS) / 1e4 (tesla -> oersted), the familiar
# "5585 erg/(G mol)" magnetometry constant divided by 1e4.
CHI_MOL_PER_MUB_PER_T = AVOGADRO * MU_B_ERG_PER_G / 1.0e4

ANGSTROM_CM = 1.0e-8
