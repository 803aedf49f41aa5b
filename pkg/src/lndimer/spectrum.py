"""Field-sweep spectroscopy of the coupled dimer.

Exact diagonalization across magnetic-field grids, diabatic track
stitching by eigenvector overlap, detection/classification of level
crossings, tunnel-gap refinement, resonance-field extraction, and a
projected ground-doublet effective model (dimension 4*(2I1+1)*(2I2+1),
64 for the Tb dimer) that reproduces the full ground manifold at a tiny
fraction of the cost.

Degenerate eigenvector clusters are re-diagonalized against a fixed
combination of the label operators (Jz1, Jz2, Iz1, Iz2) before tracking,
which removes LAPACK's arbitrary rotations and makes labels, tracks, and
CSV output deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .constants import MU_B_CM1_PER_T
from .hamiltonian import DimerModel, dimer_hamiltonian_parts, ligand_field_h
from .spinops import OperatorMatrix, product_basis_m_values

HERMITICITY_TOL = 1e-12
DEGENERACY_ATOL = 1e-9          # cm^-1, exact-degeneracy clustering
LEVEL_MERGE_ATOL = 1e-9         # cm^-1, tracks equal over the whole grid
FIELD_REFINE_TOL = 1e-8         # tesla (0.00001 mT), bisection width
GAP_SCAN_HALFWIDTH = 2.0e-4     # tesla (0.2 mT)
GAP_SCAN_STEP = 5.0e-6          # tesla (0.005 mT)
LABEL_FLIP_TOL = 0.2            # on <Jz>/<Iz> for crossing classification

# generic (irrational-ratio) weights for the degeneracy-resolving label
# combination; any eigenbasis of this operator is a product basis
_LABEL_WEIGHTS = (1.0, 1.0 / np.pi, 1.0 / np.pi**2, 1.0 / np.pi**3)
_LABEL_NAMES = ("jz1", "jz2", "iz1", "iz2")


class SpectrumError(RuntimeError):
    pass


class EffectiveModelError(SpectrumError):
    """Ground doublet not isolated enough for the projected model."""


class CrossingClass(enum.Enum):
    CO_TUNNELING = "co_tunneling"
    SINGLE_FLIP = "single_flip"
    NUCLEAR_NONCONSERVING = "nuclear_nonconserving"


@dataclass(frozen=True)
class StateLabel:
    """Expectation-value labels of one eigenstate."""

    jz1: float
    jz2: float
    iz1: float
    iz2: float
    purity: float


@dataclass(frozen=True)
class EigenSolution:
    """Ascending eigenvalues, column eigenvectors, and the max residual
    |H v - E v| (cm^-1) over the returned columns."""

    energies: np.ndarray
    states: np.ndarray
    residual: float


def diagonalize(h, check_hermitian: bool = True) -> EigenSolution:
    """Dense Hermitian eigensolve with residual report.

    Accepts an OperatorMatrix or a square ndarray. Raises ValueError when
    the input violates the 1e-12 relative hermiticity contract.
    """
    data = h.data if isinstance(h, OperatorMatrix) else np.asarray(h)
    if check_hermitian:
        nrm = np.linalg.norm(data)
        if nrm > 0 and np.linalg.norm(data - data.conj().T) / nrm > HERMITICITY_TOL:
            raise ValueError("matrix is not Hermitian within 1e-12 relative norm")
    work = data.real if np.all(np.asarray(data).imag == 0.0) else data
    energies, states = np.linalg.eigh(work)
    resid = float(np.abs(work @ states - states * energies).max())
    return EigenSolution(energies=energies, states=states.astype(complex), residual=resid)


# ---------------------------------------------------------------------------
# effective (projected ground-doublet) model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EffectiveModel:
    """Dimer Hamiltonian projected on both ions' ligand-field ground
    doublets (pseudospin states localized on Jz = ±J), tensored with the
    full nuclear space.

    hamiltonian(b) = h0 + b * h1 for field magnitude b (tesla) along the
    fixed direction. When the transverse ligand-field terms vanish and
    the field is axial, h0 and h1 are exactly diagonal in the product
    basis and every track is an exact straight line.
    """

    model: DimerModel
    direction: tuple[float, float, float]
    h0: np.ndarray
    h1: np.ndarray
    label_ops: dict
    basis_labels: np.ndarray      # (dim, 4) nominal (jz1, jz2, iz1, iz2)
    isolation: tuple[float, float]

    @property
    def dimension(self) -> int:
        return self.h0.shape[0]

    @property
    def is_diagonal(self) -> bool:
        scale = max(np.abs(self.h0).max(), np.abs(self.h1).max(), 1.0)
        off0 = np.abs(self.h0 - np.diag(np.diag(self.h0))).max()
        off1 = np.abs(self.h1 - np.diag(np.diag(self.h1))).max()
        return max(off0, off1) < 1e-12 * scale

    def hamiltonian(self, b: float) -> np.ndarray:
        return self.h0 + b * self.h1


def _doublet_basis(ion) -> tuple[np.ndarray, float]:
    """Ligand-field ground doublet as pseudospin columns (up, down).

    Returns the (dim, 2) basis localized on Jz = ±J (by diagonalizing the
    projected Jz) and the isolation gap to the third ligand-field state.
    """
    from .spinops import angular_momentum_ops

    sol = diagonalize(ligand_field_h(ion))
    iso = float(sol.energies[2] - sol.energies[1])
    doublet = sol.states[:, :2]
    jz = angular_momentum_ops(ion.j_space)["jz"].data
    pj = doublet.conj().T @ jz @ doublet
    vals, vecs = np.linalg.eigh(pj)
    # order: +J-like first (descending-m convention)
    order = np.argsort(-vals)
    basis = doublet @ vecs[:, order]
    # deterministic phase: largest component real positive
    for c in range(2):
        k = np.argmax(np.abs(basis[:, c]))
        ph = basis[k, c] / abs(basis[k, c])
        basis[:, c] = basis[:, c] / ph
    return basis, iso


def effective_model(
    model: DimerModel,
    direction=(0.0, 0.0, 1.0),
    min_isolation: float = 10.0,
) -> EffectiveModel:
    """Project the dimer Hamiltonian on the product of ground doublets.

    Raises EffectiveModelError (citing the offending gap) when either
    ion's doublet is separated from its third ligand-field state by less
    than min_isolation (cm^-1).
    """
    nhat = np.asarray(direction, dtype=float)
    nhat = nhat / np.linalg.norm(nhat)

    b1, iso1 = _doublet_basis(model.ion1)
    b2, iso2 = _doublet_basis(model.ion2)
    for tag, iso in (("ion1", iso1), ("ion2", iso2)):
        if iso < min_isolation:
            raise EffectiveModelError(
                f"{tag} ground doublet isolation {iso:.4g} cm^-1 is below the "
                f"required {min_isolation:.4g} cm^-1"
            )

    di1 = model.ion1.i_space.dimension
    di2 = model.ion2.i_space.dimension
    basis = np.kron(np.kron(b1, b2), np.eye(di1 * di2))  # (full_dim, 4*di1*di2)

    h0_full, zgens = dimer_hamiltonian_parts(model, include_nuclear=True)
    hz_full = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
    h0 = basis.conj().T @ (h0_full @ basis)
    h1 = basis.conj().T @ (hz_full @ basis)

    m_vals = product_basis_m_values(model.spaces)
    label_ops = {}
    for col, name in enumerate(_LABEL_NAMES):
        diag = sparse.diags(m_vals[:, col])
        label_ops[name] = basis.conj().T @ (diag @ basis)

    nominal = np.stack([np.real(np.diag(label_ops[n])) for n in _LABEL_NAMES], axis=1)

    def _clean(a):
        a = np.asarray(a)
        return np.ascontiguousarray(a.real) if np.abs(a.imag).max() == 0.0 else a

    return EffectiveModel(
        model=model,
        direction=tuple(nhat),
        h0=_clean(h0),
        h1=_clean(h1),
        label_ops={k: _clean(v) for k, v in label_ops.items()},
        basis_labels=nominal,
        isolation=(iso1, iso2),
    )


# ---------------------------------------------------------------------------
# sweep machinery
# ---------------------------------------------------------------------------


def _canonicalize(w: np.ndarray, v: np.ndarray, label_apply: Callable) -> np.ndarray:
    """Resolve degenerate clusters against the fixed label combination.

    label_apply(V) must return the label-operator combination applied to
    the column stack V. Returns the rotated eigenvector matrix.
    """
    n = len(w)
    atol = max(DEGENERACY_ATOL, 1e-13 * max(abs(w[0]), abs(w[-1]), 1.0))
    i = 0
    v = v.copy()
    while i < n:
        j = i + 1
        while j < n and w[j] - w[j - 1] <= atol:
            j += 1
        if j - i > 1:
            block = v[:, i:j]
            mp = block.conj().T @ label_apply(block)
            mp = 0.5 * (mp + mp.conj().T)
            _, rot = np.linalg.eigh(mp)
            v[:, i:j] = block @ rot
        i = j
    # deterministic phases
    idx = np.argmax(np.abs(v), axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    ph = np.where(np.abs(ph) == 0, 1.0, ph / np.abs(ph))
    return v / ph[None, :]


def _label_combination_effective(eff: EffectiveModel) -> np.ndarray:
    return sum(wgt * eff.label_ops[name] for wgt, name in zip(_LABEL_WEIGHTS, _LABEL_NAMES))


@dataclass
class ZeemanDiagram:
    """Eigenvalue tracks over a field grid, stitched diabatically.

    energies has shape (n_tracks, n_fields); the label arrays (jz1, jz2,
    iz1, iz2, purity) share that shape. Tracks follow state character
    (maximum successive eigenvector overlap), not energy order.
    """

    field_grid: np.ndarray
    energies: np.ndarray
    labels: dict
    model: DimerModel
    direction: tuple[float, float, float]
    mode: str
    eff: Optional[EffectiveModel] = None
    n_states: Optional[int] = None
    _levels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_tracks(self) -> int:
        return self.energies.shape[0]

    def state_label(self, track: int, field_index: int) -> StateLabel:
        return StateLabel(*(self.labels[k][track, field_index] for k in
                            (*_LABEL_NAMES, "purity")))

    def track_labels(self, track: int) -> StateLabel:
        """Median labels along one track (robust near crossings)."""
        return StateLabel(*(float(np.median(self.labels[k][track])) for k in
                            (*_LABEL_NAMES, "purity")))

    def track_slopes(self) -> np.ndarray:
        """dE/dB per track (cm^-1/T), from a least-squares line fit."""
        b = self.field_grid
        bc = b - b.mean()
        denom = np.dot(bc, bc)
        return (self.energies - self.energies.mean(axis=1, keepdims=True)) @ bc / denom

    def level_ids(self) -> np.ndarray:
        """Group exactly-degenerate tracks; returns a level id per track."""
        if self._levels is None:
            e = self.energies
            diff = np.abs(e[:, None, :] - e[None, :, :]).max(axis=2)
            adj = sparse.csr_matrix(diff < LEVEL_MERGE_ATOL)
            from scipy.sparse.csgraph import connected_components

            _, ids = connected_components(adj, directed=False)
            self._levels = ids
        return self._levels


def _greedy_match(overlap: np.ndarray) -> np.ndarray:
    """Greedy bipartite assignment maximizing successive overlaps.

    Returns perm with perm[row] = column matched to `row`.
    """
    n = overlap.shape[0]
    order = np.argsort(overlap, axis=None)[::-1]
    rows_free = np.ones(n, dtype=bool)
    cols_free = np.ones(n, dtype=bool)
    perm = np.full(n, -1)
    assigned = 0
    for flat in order:
        r, c = divmod(int(flat), n)
        if rows_free[r] and cols_free[c]:
            perm[r] = c
            rows_free[r] = False
            cols_free[c] = False
            assigned += 1
            if assigned == n:
                break
    return perm


def _labels_from_vectors(v: np.ndarray, label_apply_diag: Callable) -> dict:
    out = label_apply_diag(v)
    out["purity"] = np.max(np.abs(v) ** 2, axis=0)
    return out


def _sparse_lowest(h: sparse.csr_matrix, k: int):
    """Lowest-k eigenpairs of a large sparse Hermitian matrix.

    Shift-invert Lanczos with a deterministic start vector; sigma sits
    below the spectrum via a Gershgorin bound.
    """
    n = h.shape[0]
    habs = abs(h)
    row_sums = np.asarray(habs.sum(axis=1)).ravel()
    diag = h.diagonal().real
    sigma = float((diag - (row_sums - np.abs(diag))).min()) - 1.0
    v0 = np.full(n, 1.0 / np.sqrt(n))
    shifted = (h - sigma * sparse.identity(n, dtype=h.dtype, format="csr")).tocsc()
    lu = spla.splu(shifted)
    opinv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=h.dtype)
    w, v = spla.eigsh(h, k=k, sigma=sigma, which="LM", OPinv=opinv, v0=v0)
    order = np.argsort(w)
    return w[order], v[:, order]


def zeeman_sweep(
    model: DimerModel,
    grid: Sequence[float],
    direction=(0.0, 0.0, 1.0),
    mode: str = "effective",
    n_states: Optional[int] = None,
    eff: Optional[EffectiveModel] = None,
) -> ZeemanDiagram:
    """Diagonalize across a sorted field grid and stitch diabatic tracks.

    mode="effective" sweeps the projected ground-doublet model (all of
    its states); mode="full" sweeps the full product space, keeping the
    lowest n_states levels (default: the effective-model dimension) via
    sparse shift-invert Lanczos.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("field grid must contain at least 2 points")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("field grid must be strictly increasing")

    if mode == "effective":
        if eff is None:
            eff = effective_model(model, direction)
        dim = eff.dimension
        stack = eff.h0[None, :, :] + grid[:, None, None] * eff.h1[None, :, :]
        energies, vectors = np.linalg.eigh(stack)
        comb = _label_combination_effective(eff)
        label_apply = lambda block: comb @ block

        def label_diag(v):
            return {
                name: np.real(np.einsum("in,ij,jn->n", v.conj(), eff.label_ops[name], v))
                for name in _LABEL_NAMES
            }

        per_field = [
            _canonicalize(energies[k], vectors[k], label_apply) for k in range(len(grid))
        ]
        per_field_w = [energies[k] for k in range(len(grid))]
    elif mode == "full":
        if n_states is None:
            di1 = model.ion1.i_space.dimension
            di2 = model.ion2.i_space.dimension
            n_states = 4 * di1 * di2
        h0, zgens = dimer_hamiltonian_parts(model, include_nuclear=True)
        nhat = np.asarray(direction, dtype=float)
        nhat = nhat / np.linalg.norm(nhat)
        hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
        if max(np.abs(h0.imag).max() if h0.nnz else 0.0,
               np.abs(hz.imag).max() if hz.nnz else 0.0) == 0.0:
            h0, hz = h0.real, hz.real
        m_vals = product_basis_m_values(model.spaces)
        dim = n_states
        label_diags = {name: m_vals[:, c] for c, name in enumerate(_LABEL_NAMES)}
        comb_diag = sum(w * label_diags[n] for w, n in zip(_LABEL_WEIGHTS, _LABEL_NAMES))
        label_apply = lambda block: comb_diag[:, None] * block

        def label_diag(v):
            p2 = np.abs(v) ** 2
            return {name: label_diags[name] @ p2 for name in _LABEL_NAMES}

        per_field = []
        per_field_w = []
        for b in grid:
            w, v = _sparse_lowest((h0 + b * hz).tocsr(), n_states)
            per_field.append(_canonicalize(w, v, label_apply))
            per_field_w.append(w)
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")

    n_fields = len(grid)
    track_e = np.empty((dim, n_fields))
    track_labels = {k: np.empty((dim, n_fields)) for k in (*_LABEL_NAMES, "purity")}

    # tracks start in energy order at the first grid point
    cur_cols = np.arange(dim)
    prev_v = per_field[0]
    for k in range(n_fields):
        if k > 0:
            cur_v = per_field[k]
            overlap = np.abs(prev_v.conj().T @ cur_v) ** 2
            perm = _greedy_match(overlap)
            cur_cols = perm[cur_cols]
            prev_v = cur_v
        w = per_field_w[k]
        v = per_field[k]
        track_e[:, k] = w[cur_cols]
        lab = _labels_from_vectors(v, label_diag)
        for name in track_labels:
            track_labels[name][:, k] = lab[name][cur_cols]

    return ZeemanDiagram(
        field_grid=grid,
        energies=track_e,
        labels=track_labels,
        model=model,
        direction=tuple(np.asarray(direction, float) / np.linalg.norm(direction)),
        mode=mode,
        eff=eff,
        n_states=n_states,
    )


# ---------------------------------------------------------------------------
# crossing detection and classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossingEvent:
    """One crossing between two (possibly degenerate) diabatic levels.

    track_a/track_b are representative track indices; pairs lists every
    member state pair of the two levels. conserved_sums collects the
    total nuclear projections of all nuclear-conserving member pairs.
    """

    field: float
    track_a: int
    track_b: int
    labels_a: StateLabel
    labels_b: StateLabel
    min_gap: float
    kind: CrossingClass
    sum_iz: Optional[float]
    conserved_sums: tuple
    pairs: tuple
    slope_diff: float


def _flip(a: float, b: float) -> bool:
    return abs(a + b) < LABEL_FLIP_TOL and abs(a) > 0.5


def _conserved(a: float, b: float) -> bool:
    return abs(a - b) < LABEL_FLIP_TOL


def classify_crossing(labels_a: StateLabel, labels_b: StateLabel) -> CrossingClass:
    """Selection-rule class of a single state pair.

    co_tunneling: both electronic projections reverse sign while each
    nuclear projection is conserved (tolerance 0.2); single_flip: exactly
    one electronic projection reverses; otherwise nuclear_nonconserving.
    """
    nuclear_ok = _conserved(labels_a.iz1, labels_b.iz1) and _conserved(labels_a.iz2, labels_b.iz2)
    flips = int(_flip(labels_a.jz1, labels_b.jz1)) + int(_flip(labels_a.jz2, labels_b.jz2))
    if flips == 2 and nuclear_ok:
        return CrossingClass.CO_TUNNELING
    if flips == 1:
        return CrossingClass.SINGLE_FLIP
    return CrossingClass.NUCLEAR_NONCONSERVING


def _refine_linear(diagram: ZeemanDiagram, ta: int, tb: int, k: int) -> float:
    b = diagram.field_grid
    d0 = diagram.energies[ta, k] - diagram.energies[tb, k]
    d1 = diagram.energies[ta, k + 1] - diagram.energies[tb, k + 1]
    if d1 == d0:
        return 0.5 * (b[k] + b[k + 1])
    return float(b[k] - d0 * (b[k + 1] - b[k]) / (d1 - d0))


def _tracked_pair_diff(diagram: ZeemanDiagram, ta: int, tb: int, bfield: float):
    """Diabatic energy difference E_a - E_b at an arbitrary field.

    States are re-identified by nearest label match against the tracks'
    median labels.
    """
    eff = diagram.eff
    if diagram.mode == "effective":
        w, v = np.linalg.eigh(eff.hamiltonian(bfield))
        comb = _label_combination_effective(eff)
        v = _canonicalize(w, v, lambda blk: comb @ blk)
        labs = {
            name: np.real(np.einsum("in,ij,jn->n", v.conj(), eff.label_ops[name], v))
            for name in _LABEL_NAMES
        }
    else:
        h0, zgens = dimer_hamiltonian_parts(diagram.model, include_nuclear=True)
        nhat = np.asarray(diagram.direction)
        hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
        h = (h0 + bfield * hz).tocsr()
        if np.abs(h.imag).max() == 0.0:
            h = h.real
        w, v = _sparse_lowest(h, diagram.n_states)
        m_vals = product_basis_m_values(diagram.model.spaces)
        p2 = np.abs(v) ** 2
        labs = {name: m_vals[:, c] @ p2 for c, name in enumerate(_LABEL_NAMES)}

    def pick(track):
        ref = diagram.track_labels(track)
        cost = sum(np.abs(labs[n] - getattr(ref, n)) for n in _LABEL_NAMES)
        return int(np.argmin(cost))

    ia, ib = pick(ta), pick(tb)
    return float(w[ia] - w[ib])


def _refine_bisect(diagram: ZeemanDiagram, ta: int, tb: int, k: int) -> float:
    b = diagram.field_grid
    lo, hi = float(b[k]), float(b[k + 1])
    dlo = diagram.energies[ta, k] - diagram.energies[tb, k]
    if dlo == 0.0:
        return lo
    for _ in range(60):
        if hi - lo < FIELD_REFINE_TOL:
            break
        mid = 0.5 * (lo + hi)
        dmid = _tracked_pair_diff(diagram, ta, tb, mid)
        if dmid == 0.0:
            return mid
        if (dmid > 0) == (dlo > 0):
            lo, dlo = mid, dmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _local_min_gap(diagram: ZeemanDiagram, ta: int, tb: int, bstar: float) -> float:
    """Adiabatic minimum gap near a crossing, by local dense re-diagonalization."""
    offsets = np.arange(-GAP_SCAN_HALFWIDTH, GAP_SCAN_HALFWIDTH + GAP_SCAN_STEP / 2, GAP_SCAN_STEP)
    fields = bstar + offsets
    b = diagram.field_grid
    ea = np.interp(fields, b, diagram.energies[ta])
    eb = np.interp(fields, b, diagram.energies[tb])
    estar = 0.5 * (ea + eb)
    if diagram.mode == "effective":
        eff = diagram.eff
        stack = eff.h0[None] + fields[:, None, None] * eff.h1[None]
        w = np.linalg.eigvalsh(stack)
    else:
        h0, zgens = dimer_hamiltonian_parts(diagram.model, include_nuclear=True)
        nhat = np.asarray(diagram.direction)
        hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
        rows = []
        for f in fields:
            h = (h0 + f * hz).tocsr()
            if np.abs(h.imag).max() == 0.0:
                h = h.real
            rows.append(_sparse_lowest(h, diagram.n_states)[0])
        w = np.asarray(rows)
    gaps = np.empty(len(fields))
    for i in range(len(fields)):
        order = np.argsort(np.abs(w[i] - estar[i]))
        gaps[i] = abs(w[i, order[0]] - w[i, order[1]])
    return float(gaps.min())


def find_crossings(
    diagram: ZeemanDiagram,
    manifold: Optional[Sequence[int]] = None,
    window: Optional[tuple[float, float]] = None,
    refine_gaps: bool = True,
) -> list[CrossingEvent]:
    """Detect and refine level crossings inside a field window.

    Sign changes of every pairwise diabatic-track energy difference are
    detected on the grid; exactly-degenerate tracks are first merged into
    levels so each event corresponds to one crossing of two distinct
    energy levels (member state pairs are kept on the event). Crossing
    fields are refined by bisection on the diabatic difference (exact
    linear solve when the effective model is diagonal) and min_gap by a
    local adiabatic scan.
    """
    b = diagram.field_grid
    if window is None:
        window = (float(b[0]), float(b[-1]))
    lo, hi = window
    if lo < b[0] - 1e-12 or hi > b[-1] + 1e-12:
        raise ValueError(f"window {window} outside the swept grid [{b[0]}, {b[-1]}]")
    mask = (b >= lo) & (b <= hi)
    if mask.sum() < 2:
        raise ValueError("window must contain at least 2 grid points")
    sel = np.where(mask)[0]

    tracks = np.arange(diagram.n_tracks) if manifold is None else np.asarray(manifold)
    levels = diagram.level_ids()
    groups: dict[int, list[int]] = {}
    for t in tracks:
        groups.setdefault(int(levels[t]), []).append(int(t))

    lin_exact = diagram.mode == "effective" and diagram.eff is not None and diagram.eff.is_diagonal
    level_list = sorted(groups)
    events: list[CrossingEvent] = []
    for i, la in enumerate(level_list):
        for lb in level_list[i + 1:]:
            ta, tb = groups[la][0], groups[lb][0]
            d = diagram.energies[ta, sel] - diagram.energies[tb, sel]
            if np.abs(d).max() < LEVEL_MERGE_ATOL:
                continue
            sign = np.sign(d)
            hits = np.where(sign[:-1] * sign[1:] < 0)[0]
            zeros = np.where(sign == 0)[0]
            kidx = sorted(set(int(sel[h]) for h in hits) | set(int(sel[z]) - (1 if sel[z] > sel[0] else 0) for z in zeros))
            for k in kidx:
                k = min(max(k, int(sel[0])), int(sel[-1]) - 1)
                if lin_exact:
                    bstar = _refine_linear(diagram, ta, tb, k)
                else:
                    bstar = _refine_bisect(diagram, ta, tb, k)
                if not (lo - 1e-9 <= bstar <= hi + 1e-9):
                    continue
                gap = _local_min_gap(diagram, ta, tb, bstar) if refine_gaps else float("nan")
                pairs = tuple((x, y) for x in groups[la] for y in groups[lb])
                pair_classes = [
                    (classify_crossing(diagram.track_labels(x), diagram.track_labels(y)), x, y)
                    for x, y in pairs
                ]
                conserved = []
                for cls, x, y in pair_classes:
                    if cls is CrossingClass.CO_TUNNELING:
                        lx = diagram.track_labels(x)
                        conserved.append(round(lx.iz1 + lx.iz2, 6))
                if any(c is CrossingClass.CO_TUNNELING for c, _, _ in pair_classes):
                    kind = CrossingClass.CO_TUNNELING
                elif any(c is CrossingClass.SINGLE_FLIP for c, _, _ in pair_classes):
                    kind = CrossingClass.SINGLE_FLIP
                else:
                    kind = CrossingClass.NUCLEAR_NONCONSERVING
                sums = tuple(sorted(set(conserved)))
                slopes = diagram.track_slopes()
                events.append(
                    CrossingEvent(
                        field=float(bstar),
                        track_a=ta,
                        track_b=tb,
                        labels_a=diagram.track_labels(ta),
                        labels_b=diagram.track_labels(tb),
                        min_gap=gap,
                        kind=kind,
                        sum_iz=sums[0] if len(sums) == 1 else None,
                        conserved_sums=sums,
                        pairs=pairs,
                        slope_diff=float(abs(slopes[ta] - slopes[tb])),
                    )
                )
    events.sort(key=lambda ev: (ev.field, ev.track_a, ev.track_b))
    return events


@dataclass(frozen=True)
class CrossingCensus:
    n_crossings: int
    n_co_classes: int
    n_distinct_co_fields: int
    co_fields: tuple


def crossing_census(events: Sequence[CrossingEvent], field_tol: float = 1e-4) -> CrossingCensus:
    """Counting summary: total level crossings, co-tunneling classes, and
    distinct co-tunneling resonance fields (merged within field_tol)."""
    co = [ev for ev in events if ev.kind is CrossingClass.CO_TUNNELING]
    fields: list[float] = []
    for ev in sorted(co, key=lambda e: e.field):
        if not any(abs(ev.field - f) < field_tol for f in fields):
            fields.append(ev.field)
    return CrossingCensus(
        n_crossings=len(events),
        n_co_classes=len(co),
        n_distinct_co_fields=len(fields),
        co_fields=tuple(fields),
    )


# ---------------------------------------------------------------------------
# resonance fields
# ---------------------------------------------------------------------------


def resonance_fields_first_order(model: DimerModel) -> dict[int, float]:
    """Closed-form diabatic estimate H(sum_iz) = -A_hf*sum_iz/(2*gJ*muB).

    First-order slope/intercept model of the co-tunneling crossings; the
    sign follows the +gJ*muB*J.B Zeeman convention.
    """
    a = model.ion1.A_hf
    gj = model.ion1.gJ
    imax = int(round(2 * model.ion1.I)) + int(round(2 * model.ion2.I))
    out = {}
    for twos in range(-imax, imax + 1, 2):
        s = twos / 2.0
        out[int(s) if s == int(s) else s] = -a * s / (2.0 * gj * MU_B_CM1_PER_T)
    return out


def resonance_fields(
    model: DimerModel,
    direction=(0.0, 0.0, 1.0),
    mode: str = "effective",
    window: tuple[float, float] = (-0.1, 0.1),
    grid_points: int = 801,
    eff: Optional[EffectiveModel] = None,
    refine_gaps: bool = False,
) -> dict:
    """Co-tunneling resonance fields keyed by conserved total nuclear
    projection sum_iz.

    With A_hf = 0 all keys map to 0.0 (degenerate crossings at zero
    field). mode="full" refines each effective-model prediction against
    the full product space by bisection on labeled state energies.
    """
    grid = np.linspace(window[0], window[1], grid_points)
    diagram = zeeman_sweep(model, grid, direction, mode="effective", eff=eff)
    events = find_crossings(diagram, window=window, refine_gaps=refine_gaps)
    fields: dict[float, list[float]] = {}
    for ev in events:
        if ev.kind is not CrossingClass.CO_TUNNELING:
            continue
        for s in ev.conserved_sums:
            fields.setdefault(float(s), []).append(ev.field)
    out = {_int_if_whole(s): float(np.mean(v)) for s, v in sorted(fields.items())}

    if mode == "full":
        out = {
            s: _full_resonance_bisect(model, diagram, s, f)
            for s, f in out.items()
        }
    elif mode != "effective":
        raise ValueError(f"unknown mode {mode!r}")
    return out


def _int_if_whole(s: float):
    return int(s) if float(s).is_integer() else s


def _full_resonance_bisect(model: DimerModel, diagram: ZeemanDiagram, s, f_eff: float) -> float:
    """Refine one co-tunneling field against the full product space."""
    # representative conserving pair for this sum: take it from the diagram
    co_tracks = None
    for ev in find_crossings(diagram, window=(f_eff - 2e-3, f_eff + 2e-3), refine_gaps=False):
        if ev.kind is CrossingClass.CO_TUNNELING and float(s) in ev.conserved_sums:
            for x, y in ev.pairs:
                lx, ly = diagram.track_labels(x), diagram.track_labels(y)
                if classify_crossing(lx, ly) is CrossingClass.CO_TUNNELING and \
                        abs(lx.iz1 + lx.iz2 - float(s)) < 0.1:
                    co_tracks = (lx, ly)
                    break
        if co_tracks:
            break
    if co_tracks is None:
        return f_eff

    h0, zgens = dimer_hamiltonian_parts(model, include_nuclear=True)
    nhat = np.asarray(diagram.direction)
    hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
    m_vals = product_basis_m_values(model.spaces)
    di1 = model.ion1.i_space.dimension
    di2 = model.ion2.i_space.dimension
    k_states = 4 * di1 * di2

    def diff(bfield: float) -> float:
        h = (h0 + bfield * hz).tocsr()
        if np.abs(h.imag).max() == 0.0:
            h = h.real
        w, v = _sparse_lowest(h, k_states)
        p2 = np.abs(v) ** 2
        labs = {name: m_vals[:, c] @ p2 for c, name in enumerate(_LABEL_NAMES)}

        def pick(ref):
            cost = sum(np.abs(labs[n] - getattr(ref, n)) for n in _LABEL_NAMES)
            return int(np.argmin(cost))

        return float(w[pick(co_tracks[0])] - w[pick(co_tracks[1])])

    lo, hi = f_eff - 1e-3, f_eff + 1e-3
    dlo, dhi = diff(lo), diff(hi)
    if dlo == 0.0:
        return lo
    if (dlo > 0) == (dhi > 0):  # bracket failed; widen once
        lo, hi = f_eff - 5e-3, f_eff + 5e-3
        dlo, dhi = diff(lo), diff(hi)
        if (dlo > 0) == (dhi > 0):
            return f_eff
    for _ in range(40):
        if hi - lo < FIELD_REFINE_TOL:
            break
        mid = 0.5 * (lo + hi)
        dm = diff(mid)
        if dm == 0.0:
            return mid
        if (dm > 0) == (dlo > 0):
            lo, dlo = mid, dm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def single_flip_resonance(
    model: DimerModel,
    direction=(0.0, 0.0, 1.0),
    window: tuple[float, float] = (0.2, 0.9),
    grid_points: int = 401,
    eff: Optional[EffectiveModel] = None,
):
    """Mean field of the single-flip (ferro <-> one-ion-reversed) crossings
    on the positive-field side, plus the contributing events."""
    grid = np.linspace(window[0], window[1], grid_points)
    diagram = zeeman_sweep(model, grid, direction, mode="effective", eff=eff)
    events = [
        ev for ev in find_crossings(diagram, window=window, refine_gaps=False)
        if ev.kind is CrossingClass.SINGLE_FLIP
    ]
    if not events:
        raise SpectrumError(f"no single-flip crossing found in window {window}")
    mean_field = float(np.mean([ev.field for ev in events]))
    return mean_field, events


def ground_manifold_energies(
    model: DimerModel,
    fields: Sequence[float],
    direction=(0.0, 0.0, 1.0),
    n_states: Optional[int] = None,
    mode: str = "full",
    eff: Optional[EffectiveModel] = None,
) -> np.ndarray:
    """Lowest-n_states energies at each field, shape (n_fields, n_states).

    Sorted ascending per field (adiabatic order); used to cross-validate
    the effective model against the full product space.
    """
    fields = np.asarray(fields, dtype=float)
    if mode == "effective":
        if eff is None:
            eff = effective_model(model, direction)
        stack = eff.h0[None] + fields[:, None, None] * eff.h1[None]
        w = np.linalg.eigvalsh(stack)
        return w if n_states is None else w[:, :n_states]
    h0, zgens = dimer_hamiltonian_parts(model, include_nuclear=True)
    nhat = np.asarray(direction, dtype=float)
    nhat = nhat / np.linalg.norm(nhat)
    hz = nhat[0] * zgens[0] + nhat[1] * zgens[1] + nhat[2] * zgens[2]
    if n_states is None:
        di1 = model.ion1.i_space.dimension
        di2 = model.ion2.i_space.dimension
        n_states = 4 * di1 * di2
    rows = []
    for b in fields:
        h = (h0 + b * hz).tocsr()
        if np.abs(h.imag).max() == 0.0:
            h = h.real
        rows.append(_sparse_lowest(h, n_states)[0])
    return np.asarray(rows)


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------


def diagram_to_csv(diagram: ZeemanDiagram, path, meta: Optional[dict] = None) -> None:
    """Write field_T, track_id, energy_cm1, jz1, jz2, iz1, iz2, purity rows."""
    lines = [
        "# zeeman diagram export",
        "# columns: field_T, track_id, energy_cm1, jz1, jz2, iz1, iz2, purity",
        "# units: field tesla; energy cm^-1; jz/iz dimensionless expectation values",
        f"# model: {diagram.model.fingerprint()}  mode: {diagram.mode}",
    ]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {val}")
    lab = diagram.labels
    for k, b in enumerate(diagram.field_grid):
        for t in range(diagram.n_tracks):
            lines.append(
                f"{b:.9g},{t},{diagram.energies[t, k]:.12g},"
                f"{lab['jz1'][t, k]:.6g},{lab['jz2'][t, k]:.6g},"
                f"{lab['iz1'][t, k]:.6g},{lab['iz2'][t, k]:.6g},"
                f"{lab['purity'][t, k]:.6g}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def crossings_to_csv(events: Sequence[CrossingEvent], path, meta: Optional[dict] = None) -> None:
    """Write field_T, class, sum_iz, min_gap_cm1, labels rows."""
    lines = [
        "# crossing export",
        "# columns: field_T, class, sum_iz, min_gap_cm1, "
        "jz1_a, jz2_a, iz1_a, iz2_a, jz1_b, jz2_b, iz1_b, iz2_b",
        "# units: field tesla; min_gap cm^-1; labels dimensionless",
    ]
    for key, val in (meta or {}).items():
        lines.append(f"# {key}: {val}")
    for ev in events:
        s = "" if ev.sum_iz is None else f"{ev.sum_iz:.6g}"
        la, lb = ev.labels_a, ev.labels_b
        lines.append(
            f"{ev.field:.9g},{ev.kind.value},{s},{ev.min_gap:.6g},"
            f"{la.jz1:.6g},{la.jz2:.6g},{la.iz1:.6g},{la.iz2:.6g},"
            f"{lb.jz1:.6g},{lb.jz2:.6g},{lb.iz1:.6g},{lb.iz2:.6g}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
