"""Landau-Zener staircase hysteresis over the ground-manifold diagram.

A sweep initializes Boltzmann populations over the nuclear sublevels of
the fully polarized electronic state, then transports them diabatically
from crossing to crossing. At each crossing, population is exchanged
between the two diabatic states with the Landau-Zener probability
p = 1 - exp(-pi*Delta^2 / (2*hbar*|slope difference|*rate)). Between
crossings the evolution is purely diabatic: no thermal repopulation
mid-sweep (sweep durations are far below the >1000 s nuclear
equilibration the protocol assumes at the start field).

Tunnel gaps are supplied per crossing class through a SplittingTable:
with the axial parameter set the computed splittings vanish identically,
so the gaps are phenomenological inputs, not outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .constants import C_CM_PER_S
from .hamiltonian import DimerModel
from .spectrum import (
    CrossingClass,
    CrossingEvent,
    EffectiveModel,
    ZeemanDiagram,
    classify_crossing,
    effective_model,
    find_crossings,
    zeeman_sweep,
)


class PolarizationError(RuntimeError):
    """Electronic state not fully polarized at the initialization field."""


class ConfigurationError(ValueError):
    """A crossing in the sweep window has no configured tunnel gap."""


@dataclass(frozen=True)
class SweepProtocol:
    """Field sweep: start -> end (tesla) at a fixed rate (T/s) and bath
    temperature (kelvin). init_wait marks full thermal equilibration of
    the nuclear system at the start field."""

    start_field: float
    end_field: float
    rate: float
    temperature: float
    init_wait: bool = True

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("sweep rate must be positive")
        if self.start_field == self.end_field:
            raise ValueError("start and end fields must differ")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class SplittingTable:
    """Tunnel gaps (cm^-1) per crossing class.

    co_gap may be a single value or a map sum_iz -> gap. A None entry
    means "not covered": encountering such a crossing in the sweep window
    raises ConfigurationError. Nuclear-nonconserving crossings default to
    gap 0 (no tunneling). single_flip_broadening_mt smears single-flip
    steps with a Gaussian field profile of that width.
    """

    co_gap: Union[float, Mapping[int, float], None] = None
    single_flip_gap: Optional[float] = None
    nonconserving_gap: Optional[float] = 0.0
    single_flip_broadening_mt: float = 0.0

    def gap_for(self, kind: CrossingClass, sum_iz: Optional[float], fieldval: float) -> float:
        if kind is CrossingClass.CO_TUNNELING:
            g = self.co_gap
            if isinstance(g, Mapping):
                key = int(round(sum_iz)) if sum_iz is not None else None
                if key not in g:
                    raise ConfigurationError(
                        f"co-tunneling crossing at {fieldval * 1e3:.2f} mT with "
                        f"sum_iz={sum_iz} has no gap entry"
                    )
                return float(g[key])
        elif kind is CrossingClass.SINGLE_FLIP:
            g = self.single_flip_gap
        else:
            g = self.nonconserving_gap
        if g is None:
            raise ConfigurationError(
                f"{kind.value} crossing at {fieldval * 1e3:.2f} mT is not covered "
                "by the splitting table"
            )
        if g < 0:
            raise ValueError("tunnel gaps must be non-negative")
        return float(g)


def lz_probability(gap: float, slope_diff: float, rate: float) -> float:
    """Landau-Zener transfer probability for one linear crossing.

    p = 1 - exp(-pi*Delta^2/(2*hbar*v)) with v = |slope difference|*rate.
    In cm^-1 / tesla / (T/s) units the exponent reduces to
    pi^2 * c[cm/s] * Delta^2 / (slope_diff * rate), using hc/hbar = 2*pi*c.
    """
    if slope_diff <= 0:
        raise ValueError("slope difference must be positive")
    if rate <= 0:
        raise ValueError("sweep rate must be positive")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    exponent = np.pi**2 * C_CM_PER_S * gap**2 / (slope_diff * rate)
    return float(-np.expm1(-exponent))


@dataclass(frozen=True)
class ThermalState:
    """Boltzmann-initialized nuclear populations of the polarized branch."""

    populations: np.ndarray     # over the ground nuclear sublevels, sums to 1
    energies: np.ndarray        # cm^-1, ascending
    sum_iz: np.ndarray          # total nuclear projection per sublevel
    jz_sum: float               # electronic polarization of the branch


def _ground_branch(energies: np.ndarray, jz_sum: np.ndarray, n_nuclear: int, jz_max: float):
    """Indices of the polarized ground nuclear multiplet, with diagnostics."""
    order = np.argsort(energies)
    ground = order[:n_nuclear]
    spread = float(energies[ground[-1]] - energies[ground[0]])
    gap = float(energies[order[n_nuclear]] - energies[ground[-1]])
    branch = jz_sum[ground]
    polarized = np.all(np.abs(np.abs(branch) - jz_max) < 0.5) and (
        np.all(branch > 0) or np.all(branch < 0)
    )
    if not polarized or gap <= spread:
        raise PolarizationError(
            "electronic state is not fully polarized at the initialization "
            f"field: ground-multiplet spread {spread:.4g} cm^-1, gap to the "
            f"next state {gap:.4g} cm^-1"
        )
    return ground


def thermal_init(
    model: DimerModel,
    fieldval: float,
    temperature: float,
    direction=(0.0, 0.0, 1.0),
    eff: Optional[EffectiveModel] = None,
) -> ThermalState:
    """Equilibrium populations over the nuclear sublevels of the polarized
    electronic state at the given field and temperature."""
    from .observables import boltzmann_populations

    if eff is None:
        eff = effective_model(model, direction)
    w, v = np.linalg.eigh(eff.hamiltonian(fieldval))
    p2 = np.abs(v) ** 2
    jz_sum = np.real(np.einsum("in,ij,jn->n", v.conj(), eff.label_ops["jz1"] + eff.label_ops["jz2"], v))
    iz_sum = np.real(np.einsum("in,ij,jn->n", v.conj(), eff.label_ops["iz1"] + eff.label_ops["iz2"], v))
    n_nuclear = model.ion1.i_space.dimension * model.ion2.i_space.dimension
    jz_max = model.ion1.J + model.ion2.J
    ground = _ground_branch(w, jz_sum, n_nuclear, jz_max)
    ground = ground[np.argsort(w[ground])]
    pops = boltzmann_populations(w[ground], temperature)
    return ThermalState(
        populations=pops,
        energies=w[ground],
        sum_iz=iz_sum[ground],
        jz_sum=float(np.mean(jz_sum[ground])),
    )


@dataclass(frozen=True)
class StepRecord:
    field: float
    kind: CrossingClass
    sum_iz: Optional[float]
    transfer: float             # net population moved at this crossing
    delta_m: float              # resulting jump of M/Ms


@dataclass(frozen=True)
class HysteresisTrace:
    """Normalized magnetization trace with its per-crossing step registry.

    population_history holds the track populations before the first and
    after every crossing (shape (n_events + 1, n_tracks)), aligned with
    track_sum_iz and track_m for conservation analyses.
    """

    field: np.ndarray
    m_normalized: np.ndarray
    steps: tuple
    population_history: np.ndarray
    track_sum_iz: np.ndarray
    track_m: np.ndarray

    def sum_iz_histogram(self, stage: int = -1) -> dict:
        """Population per total nuclear projection at a history stage."""
        pops = self.population_history[stage]
        out: dict = {}
        for p, s in zip(pops, self.track_sum_iz):
            key = int(round(s))
            out[key] = out.get(key, 0.0) + float(p)
        return out


def sweep_hysteresis(
    model: DimerModel,
    protocol: SweepProtocol,
    splittings: SplittingTable,
    direction=(0.0, 0.0, 1.0),
    n_points: int = 1601,
    grid_points: int = 1201,
    eff: Optional[EffectiveModel] = None,
    diagram: Optional[ZeemanDiagram] = None,
    events: Optional[Sequence[CrossingEvent]] = None,
) -> HysteresisTrace:
    """Simulate one magnetization half-loop through the crossing ladder.

    Populations start from thermal_init at the start field and are
    transported in field order; at every covered crossing the member
    state pairs exchange population with their Landau-Zener probability.
    M/Ms is the population-weighted -<Jz1+Jz2>/(J1+J2) of the diabatic
    tracks, so the trace is an exact staircase (plus optional Gaussian
    broadening of single-flip steps).
    """
    lo = min(protocol.start_field, protocol.end_field)
    hi = max(protocol.start_field, protocol.end_field)
    upward = protocol.end_field > protocol.start_field

    if eff is None:
        eff = effective_model(model, direction)
    if diagram is None:
        grid = np.linspace(lo, hi, grid_points)
        diagram = zeeman_sweep(model, grid, direction, mode="effective", eff=eff)
    if events is None:
        events = find_crossings(diagram, refine_gaps=False)

    n_tracks = diagram.n_tracks
    jz_max = model.ion1.J + model.ion2.J
    med = {k: np.array([np.median(diagram.labels[k][t]) for t in range(n_tracks)])
           for k in ("jz1", "jz2", "iz1", "iz2")}
    track_m = -(med["jz1"] + med["jz2"]) / jz_max
    track_sum_iz = med["iz1"] + med["iz2"]
    slopes = diagram.track_slopes()

    # thermal initialization on the start-field column of the diagram
    col = 0 if upward else diagram.energies.shape[1] - 1
    e_col = diagram.energies[:, col]
    n_nuclear = model.ion1.i_space.dimension * model.ion2.i_space.dimension
    ground = _ground_branch(e_col, med["jz1"] + med["jz2"], n_nuclear, jz_max)
    if not protocol.init_wait:
        raise NotImplementedError(
            "only fully equilibrated initialization is modeled (init_wait=True)"
        )
    from .observables import boltzmann_populations

    pops = np.zeros(n_tracks)
    pops[ground] = boltzmann_populations(e_col[ground], protocol.temperature)

    ordered = sorted(events, key=lambda ev: ev.field, reverse=not upward)
    history = [pops.copy()]
    steps: list[StepRecord] = []
    for ev in ordered:
        gap = splittings.gap_for(ev.kind, ev.sum_iz, ev.field)
        moved = 0.0
        delta_m = 0.0
        for x, y in ev.pairs:
            pair_kind = classify_crossing(diagram.track_labels(x), diagram.track_labels(y))
            lx = diagram.track_labels(x)
            pair_gap = splittings.gap_for(pair_kind, round(lx.iz1 + lx.iz2, 6), ev.field)
            if pair_gap == 0.0:
                continue
            sdiff = abs(slopes[x] - slopes[y])
            p = lz_probability(pair_gap, sdiff, protocol.rate)
            dx = p * (pops[y] - pops[x])
            pops[x] += dx
            pops[y] -= dx
            moved += abs(dx)
            delta_m += dx * (track_m[x] - track_m[y])
        if gap > 0.0 or moved > 0.0:
            steps.append(StepRecord(field=ev.field, kind=ev.kind, sum_iz=ev.sum_iz,
                                    transfer=moved, delta_m=delta_m))
        history.append(pops.copy())

    # synthesize the trace on the protocol's field axis (sweep order)
    axis = np.linspace(protocol.start_field, protocol.end_field, n_points)
    sign = 1.0 if upward else -1.0
    m0 = float(np.dot(history[0], track_m))
    m = np.full(n_points, m0)
    sigma = splittings.single_flip_broadening_mt * 1e-3
    for rec in steps:
        if rec.kind is CrossingClass.SINGLE_FLIP and sigma > 0:
            from math import erf

            prof = 0.5 * (1.0 + np.vectorize(erf)(sign * (axis - rec.field) / (np.sqrt(2) * sigma)))
        else:
            prof = (sign * (axis - rec.field) >= 0).astype(float)
        m += rec.delta_m * prof

    return HysteresisTrace(
        field=axis,
        m_normalized=m,
        steps=tuple(steps),
        population_history=np.asarray(history),
        track_sum_iz=track_sum_iz,
        track_m=track_m,
    )


def trace_to_csv(trace: HysteresisTrace, path, meta: Optional[dict] = None) -> None:
    lines = [
        "# hysteresis trace export",
        "# columns: field_T, m_norm",
        "# units: field tesla; m_norm dimensionless (M/Ms)",
    ]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {val}")
    for b, m in zip(trace.field, trace.m_normalized):
        lines.append(f"{b:.9g},{m:.9g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def steps_to_csv(trace: HysteresisTrace, path, meta: Optional[dict] = None) -> None:
    lines = [
        "# hysteresis step registry",
        "# columns: field_T, class, sum_iz, transfer",
        "# units: field tesla; transfer population fraction",
    ]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {val}")
    for rec in trace.steps:
        s = "" if rec.sum_iz is None else f"{rec.sum_iz:.6g}"
        lines.append(f"{rec.field:.9g},{rec.kind.value},{s},{rec.transfer:.9g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
