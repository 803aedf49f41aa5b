"""Equilibrium magnetism from the spectrum: Boltzmann populations,
magnetization, molar susceptibility, and powder averaging.

Magnetization is reported in Bohr magnetons per molecule, projected on
the field direction; the moment operator is -gJ*(J1+J2).n (mu_B units),
consistent with the +gJ*muB*J.B Zeeman convention. Molar susceptibility
uses chi_mol [cm^3/mol] = 0.5585 * m[mu_B] / B[T] (see constants).

By default the dimer observables are evaluated on the electronic-only
product space; hyperfine and quadrupole terms (~0.02 cm^-1) are invisible
above ~1 K and would make powder loops needlessly heavy. Pass
include_nuclear=True for small toy models or sub-kelvin studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .constants import CHI_MOL_PER_MUB_PER_T, K_B_CM1_PER_K, MU_B_CM1_PER_T
from .hamiltonian import (
    DimerModel,
    FieldSpec,
    IonModel,
    dimer_hamiltonian_parts,
    ion_hamiltonian_parts,
)

ModelLike = Union[IonModel, DimerModel]


def boltzmann_populations(energies: Sequence[float], temperature: float) -> np.ndarray:
    """Normalized Boltzmann weights, numerically stable via energy shifting."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    e = np.asarray(energies, dtype=float)
    x = -(e - e.min()) / (K_B_CM1_PER_K * temperature)
    p = np.exp(x)
    return p / p.sum()


def free_energy(energies: Sequence[float], temperature: float) -> float:
    """Helmholtz free energy -kT ln Z in cm^-1 (shift-stable)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    e = np.asarray(energies, dtype=float)
    kt = K_B_CM1_PER_K * temperature
    e0 = e.min()
    return float(e0 - kt * np.log(np.sum(np.exp(-(e - e0) / kt))))


@dataclass(frozen=True)
class OrientationGrid:
    """Unit directions with positive weights summing to 1."""

    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float)
        w = np.array(self.weights, dtype=float)
        if d.ndim != 2 or d.shape[1] != 3 or len(w) != len(d):
            raise ValueError("directions must be (n, 3) with matching weights")
        norms = np.linalg.norm(d, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must be unit vectors")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        d.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @classmethod
    def fibonacci(cls, n: int = 200) -> "OrientationGrid":
        """Deterministic equal-weight Fibonacci sphere covering."""
        i = np.arange(n) + 0.5
        phi = np.pi * (1.0 + np.sqrt(5.0)) * i
        cos_t = 1.0 - 2.0 * i / n
        sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))
        dirs = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return cls(dirs, np.full(n, 1.0 / n))

    @classmethod
    def gauss_legendre(cls, n_polar: int = 12, n_azimuthal: int = 24) -> "OrientationGrid":
        """Product quadrature: Gauss-Legendre in cos(theta), uniform in phi.

        Integrates polynomials in cos(theta) up to degree 2*n_polar - 1
        exactly (e.g. cos^2 with n_polar >= 2)."""
        x, wx = np.polynomial.legendre.leggauss(n_polar)
        phi = 2.0 * np.pi * (np.arange(n_azimuthal) + 0.5) / n_azimuthal
        ct, ph = np.meshgrid(x, phi, indexing="ij")
        st = np.sqrt(1.0 - ct**2)
        dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1).reshape(-1, 3)
        w = np.repeat(wx / 2.0, n_azimuthal) / n_azimuthal
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return cls(dirs, w)

    @classmethod
    def single(cls, direction) -> "OrientationGrid":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(d[None, :], np.array([1.0]))

    def rotated(self, rotation: np.ndarray) -> "OrientationGrid":
        r = np.asarray(rotation, float)
        return OrientationGrid(self.directions @ r.T, self.weights.copy())


def powder_average(evaluator: Callable[[np.ndarray], float], grid: OrientationGrid) -> float:
    """Weighted mean of evaluator(direction) over the orientation grid.

    Evaluations run in a fixed order and reduce deterministically."""
    vals = np.array([evaluator(d) for d in grid.directions], dtype=float)
    return float(np.dot(grid.weights, vals))


@dataclass(frozen=True)
class ObservableSeries:
    """Temperature- or field-indexed scalar series with provenance meta."""

    axis: np.ndarray
    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if a.ndim != 1 or a.shape != v.shape:
            raise ValueError("axis and values must be equal-length vectors")
        if np.any(np.diff(a) <= 0):
            raise ValueError("axis must be strictly increasing")
        object.__setattr__(self, "axis", a)
        object.__setattr__(self, "values", v)


def _parts(model: ModelLike, include_nuclear: bool):
    if isinstance(model, DimerModel):
        h0, zgens = dimer_hamiltonian_parts(model, include_nuclear=include_nuclear)
        h0 = h0.toarray()
        zgens = tuple(z.toarray() for z in zgens)
    elif isinstance(model, IonModel):
        h0, zgens = ion_hamiltonian_parts(model, include_nuclear=include_nuclear)
    else:
        raise TypeError(f"expected IonModel or DimerModel, got {type(model)!r}")
    if all(np.abs(m.imag).max() == 0.0 for m in (h0, *zgens)):
        h0 = np.ascontiguousarray(h0.real)
        zgens = tuple(np.ascontiguousarray(z.real) for z in zgens)
    return h0, zgens


def _moments_along(h0, zgens, nhat, b):
    """Eigen-energies and per-state moments (mu_B) along nhat at field b."""
    hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
    w, v = np.linalg.eigh(h0 + b * hz)
    # moment operator is -dH/dB / muB
    m_diag = -np.real(np.einsum("in,ij,jn->n", v.conj(), hz, v)) / MU_B_CM1_PER_T
    return w, m_diag


def magnetization(
    model: ModelLike,
    fieldspec: FieldSpec,
    temperature: float,
    include_nuclear: bool = False,
) -> float:
    """Thermal magnetization (mu_B per molecule) projected on the field axis."""
    h0, zgens = _parts(model, include_nuclear)
    w, m_diag = _moments_along(h0, zgens, fieldspec.unit_vector(), fieldspec.magnitude)
    p = boltzmann_populations(w, temperature)
    return float(p @ m_diag)


def magnetization_fd(
    model: ModelLike,
    fieldspec: FieldSpec,
    temperature: float,
    delta: float = 1.0e-5,
    include_nuclear: bool = False,
) -> float:
    """-dF/dB by central finite difference (mu_B); oracle for magnetization."""
    h0, zgens = _parts(model, include_nuclear)
    nhat = fieldspec.unit_vector()
    hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]

    def f(b):
        return free_energy(np.linalg.eigvalsh(h0 + b * hz), temperature)

    b = fieldspec.magnitude
    return float((f(b - delta) - f(b + delta)) / (2.0 * delta) / MU_B_CM1_PER_T)


def chi_t_series(
    model: ModelLike,
    t_grid: Sequence[float],
    probe_field: float = 0.1,
    grid: Optional[OrientationGrid] = None,
    include_nuclear: bool = False,
    warn_nonlinear: bool = False,
) -> ObservableSeries:
    """Powder-averaged chi*T (cm^3 K mol^-1) over a temperature grid.

    chi is measured as M/B at the probe field, matching the experimental
    definition; one diagonalization per orientation serves every
    temperature. Set warn_nonlinear=True to get a UserWarning when
    M(2B)/2 deviates from M(B) by more than 1% at the lowest temperature
    (the probe leaves the linear regime when kT drops below the Zeeman
    energy, which is physical, not an error).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if grid is None:
        grid = OrientationGrid.fibonacci(200)
    h0, zgens = _parts(model, include_nuclear)
    kt = K_B_CM1_PER_K * t_grid

    m_total = np.zeros_like(t_grid)
    for nhat, wgt in zip(grid.directions, grid.weights):
        w, m_diag = _moments_along(h0, zgens, nhat, probe_field)
        x = -(w[None, :] - w.min()) / kt[:, None]
        p = np.exp(x)
        p /= p.sum(axis=1, keepdims=True)
        m_total += wgt * (p @ m_diag)

    if warn_nonlinear:
        import warnings

        t_min = float(t_grid.min())
        m1 = _powder_m(h0, zgens, grid, probe_field, t_min)
        m2 = _powder_m(h0, zgens, grid, 2.0 * probe_field, t_min)
        if m1 != 0 and abs(m2 / 2.0 - m1) / abs(m1) > 0.01:
            warnings.warn(
                f"probe field {probe_field} T is outside the linear regime at "
                f"{t_min} K (M(2B)/2 deviates by "
                f"{abs(m2 / 2 - m1) / abs(m1):.1%})",
                UserWarning,
                stacklevel=2,
            )

    chi = CHI_MOL_PER_MUB_PER_T * m_total / probe_field
    meta = {
        "probe_field_T": probe_field,
        "orientations": len(grid),
        "include_nuclear": include_nuclear,
    }
    if isinstance(model, DimerModel):
        meta["model"] = model.fingerprint()
    return ObservableSeries(axis=t_grid, values=chi * t_grid, kind="chi_T", meta=meta)


def _powder_m(h0, zgens, grid, b, temperature):
    total = 0.0
    for nhat, wgt in zip(grid.directions, grid.weights):
        w, m_diag = _moments_along(h0, zgens, nhat, b)
        total += wgt * float(boltzmann_populations(w, temperature) @ m_diag)
    return total


def m_vs_h_series(
    model: ModelLike,
    h_grid: Sequence[float],
    temperature: float,
    grid: Optional[OrientationGrid] = None,
    include_nuclear: bool = False,
) -> ObservableSeries:
    """Powder-averaged magnetization curve M(B) in mu_B per molecule."""
    h_grid = np.asarray(h_grid, dtype=float)
    if grid is None:
        grid = OrientationGrid.fibonacci(200)
    h0, zgens = _parts(model, include_nuclear)
    values = np.array([_powder_m(h0, zgens, grid, b, temperature) for b in h_grid])
    meta = {
        "temperature_K": temperature,
        "orientations": len(grid),
        "include_nuclear": include_nuclear,
    }
    if isinstance(model, DimerModel):
        meta["model"] = model.fingerprint()
    return ObservableSeries(axis=h_grid, values=values, kind="m_vs_h", meta=meta)


def curie_chi_t(gj: float, j: float, n_ions: int = 1) -> float:
    """High-temperature Curie limit of chi*T (cm^3 K mol^-1)."""
    return n_ions * CHI_MOL_PER_MUB_PER_T * MU_B_CM1_PER_T * gj**2 * j * (j + 1) / (3.0 * K_B_CM1_PER_K)


def series_to_csv(series: ObservableSeries, path) -> None:
    """CSV export: axis column plus value column, units in # headers."""
    axis_name, value_name = {
        "chi_T": ("T_K", "chiT_cm3_K_per_mol"),
        "m_vs_h": ("H_T", "M_muB_per_molecule"),
    }.get(series.kind, ("axis", "value"))
    lines = [f"# {series.kind} export", f"# columns: {axis_name}, {value_name}"]
    for key, val in series.meta.items():
        lines.append(f"# {key}: {val}")
    for a, v in zip(series.axis, series.values):
        lines.append(f"{a:.9g},{v:.9g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
