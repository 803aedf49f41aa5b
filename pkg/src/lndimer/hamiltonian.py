"""Single-ion and coupled-dimer spin Hamiltonians.

Builds, in cm^-1:

* the tetragonal ligand-field Hamiltonian
  H_lf = alpha*A20*O_2^0 + beta*(A40*O_4^0 + A44*O_4^4)
       + gamma*(A60*O_6^0 + A64*O_6^4),
* the single-ion electron-nuclear Hamiltonian
  H = H_lf + gJ*muB*(J.B) + A_hf*(I.J) + P*(Iz^2 - I(I+1)/3),
* the point-dipole coupling tensor D between two anisotropic g-matrices,
  normalized so it plugs into H = -2*J1.D.J2, and
* the dimer Hamiltonian
  H = -2*sum_ab J1a*(D + J_ex*delta_ab)*J2b + H_ion1 + H_ion2
  on the slot order (J1, J2, I1, I2).

Sign conventions: the Zeeman term is +gJ*muB*J.B, so the magnetic moment
operator is -gJ*muB*J and the low-field ground state at B > 0 along z has
Jz = -J character. The point-dipole tensor is evaluated in Gaussian units
(muB in erg/G, r in cm), converted to cm^-1, and multiplied by -1/2 so that
the -2*J1.D.J2 form gives a ferromagnetic ground state for two easy-axis
ions stacked along z (D_zz > 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sparse

from .constants import ANGSTROM_CM, HC_ERG_CM, MU_B_CM1_PER_T, MU_B_ERG_PER_G
from .spinops import (
    OperatorMatrix,
    SpinKind,
    SpinSpace,
    angular_momentum_ops,
    stevens_operator,
)

# Stevens multiplicative factors for the Tb3+ 7F6 ground term (standard
# operator-equivalent tables; the defaults for LigandFieldParams).
TB3_ALPHA = -1.0 / 99.0
TB3_BETA = 2.0 / 16335.0
TB3_GAMMA = -1.0 / 891891.0


@dataclass(frozen=True)
class LigandFieldParams:
    """A_k^q ligand-field parameters (cm^-1) and Stevens factors."""

    A20: float = 0.0
    A40: float = 0.0
    A60: float = 0.0
    A44: float = 0.0
    A64: float = 0.0
    stevens_alpha: float = TB3_ALPHA
    stevens_beta: float = TB3_BETA
    stevens_gamma: float = TB3_GAMMA

    def __post_init__(self):
        for name in ("A20", "A40", "A60", "A44", "A64",
                     "stevens_alpha", "stevens_beta", "stevens_gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class IonModel:
    """One lanthanide ion: electronic J multiplet plus nuclear spin I."""

    J: float
    I: float
    gJ: float
    lf: LigandFieldParams
    A_hf: float = 0.0
    P: float = 0.0

    def __post_init__(self):
        if self.gJ <= 0:
            raise ValueError("gJ must be positive")
        # SpinSpace validates the half-integer constraint
        object.__setattr__(self, "J", SpinSpace(self.J, SpinKind.ELECTRONIC).quantum_number)
        object.__setattr__(self, "I", SpinSpace(self.I, SpinKind.NUCLEAR).quantum_number)

    @property
    def j_space(self) -> SpinSpace:
        return SpinSpace(self.J, SpinKind.ELECTRONIC)

    @property
    def i_space(self) -> SpinSpace:
        return SpinSpace(self.I, SpinKind.NUCLEAR)


def ising_g_tensor(g_zz: float) -> np.ndarray:
    """g-matrix with only the easy-axis component, diag(0, 0, g_zz)."""
    return np.diag([0.0, 0.0, g_zz])


def isotropic_g_tensor(g: float) -> np.ndarray:
    return g * np.eye(3)


@dataclass(frozen=True, eq=False)
class DimerModel:
    """Two coupled ions with a point-dipole (or overridden) interaction.

    The effective coupling tensor is K = D + J_ex * identity, where D is
    the point-dipole tensor from (g_tensor1, g_tensor2, r_vec) unless
    coupling_override replaces it. K enters as H = -2 * J1 . K . J2.
    """

    ion1: IonModel
    ion2: IonModel
    r_vec: tuple[float, float, float]
    g_tensor1: Optional[np.ndarray] = None
    g_tensor2: Optional[np.ndarray] = None
    J_ex: float = 0.0
    coupling_override: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.asarray(self.r_vec, dtype=float)
        if r.shape != (3,) or np.linalg.norm(r) <= 0:
            raise ValueError("r_vec must be a nonzero 3-vector (angstrom)")
        object.__setattr__(self, "r_vec", tuple(r))
        g1 = self.g_tensor1 if self.g_tensor1 is not None else ising_g_tensor(self.ion1.gJ)
        g2 = self.g_tensor2 if self.g_tensor2 is not None else ising_g_tensor(self.ion2.gJ)
        for name, g in (("g_tensor1", g1), ("g_tensor2", g2)):
            g = np.array(g, dtype=float)
            if g.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
            g.flags.writeable = False
            object.__setattr__(self, name, g)
        if self.coupling_override is not None:
            ov = np.array(self.coupling_override, dtype=float)
            if ov.shape != (3, 3):
                raise ValueError("coupling_override must be 3x3 (cm^-1)")
            ov.flags.writeable = False
            object.__setattr__(self, "coupling_override", ov)
        k = self.coupling_tensor()
        if np.abs(k - k.T).max() > 1e-10:
            raise ValueError("effective coupling tensor must be symmetric")

    @property
    def spaces(self) -> tuple[SpinSpace, SpinSpace, SpinSpace, SpinSpace]:
        """Composite slot order (J1, J2, I1, I2)."""
        return (
            self.ion1.j_space,
            self.ion2.j_space,
            self.ion1.i_space,
            self.ion2.i_space,
        )

    @property
    def dimension(self) -> int:
        return int(np.prod([s.dimension for s in self.spaces]))

    def dipolar(self) -> np.ndarray:
        return dipolar_tensor(self.g_tensor1, self.g_tensor2, self.r_vec)

    def coupling_tensor(self) -> np.ndarray:
        d = self.coupling_override if self.coupling_override is not None else self.dipolar()
        return d + self.J_ex * np.eye(3)

    def fingerprint(self) -> str:
        """Stable hex digest of all model parameters (for output provenance)."""
        import hashlib

        parts = []
        for ion in (self.ion1, self.ion2):
            parts += [ion.J, ion.I, ion.gJ, ion.A_hf, ion.P,
                      ion.lf.A20, ion.lf.A40, ion.lf.A60, ion.lf.A44, ion.lf.A64,
                      ion.lf.stevens_alpha, ion.lf.stevens_beta, ion.lf.stevens_gamma]
        parts += list(self.r_vec) + [self.J_ex]
        parts += list(np.asarray(self.g_tensor1).ravel())
        parts += list(np.asarray(self.g_tensor2).ravel())
        if self.coupling_override is not None:
            parts += list(np.asarray(self.coupling_override).ravel())
        blob = ",".join(f"{p:.12e}" for p in parts).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FieldSpec:
    """Applied magnetic field: magnitude (tesla) and unit direction.

    misalignment_deg tilts the field away from `direction` (within the
    plane spanned by `direction` and x, or y if direction is along x);
    used for easy-axis misalignment studies.
    """

    magnitude: float
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0)
    misalignment_deg: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("field direction must be a nonzero vector")
        object.__setattr__(self, "direction", tuple(d / n))

    def unit_vector(self) -> np.ndarray:
        d = np.asarray(self.direction)
        if self.misalignment_deg == 0.0:
            return d
        ref = np.array([1.0, 0.0, 0.0])
        if abs(np.dot(ref, d)) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        axis = np.cross(d, ref)
        axis /= np.linalg.norm(axis)
        th = np.deg2rad(self.misalignment_deg)
        # Rodrigues rotation of d about axis
        return (d * np.cos(th) + np.cross(axis, d) * np.sin(th)
                + axis * np.dot(axis, d) * (1 - np.cos(th)))

    def vector(self) -> np.ndarray:
        return self.magnitude * self.unit_vector()


def ligand_field_h(ion: IonModel) -> OperatorMatrix:
    """Ligand-field Hamiltonian on the ion's J space (cm^-1)."""
    sp = ion.j_space
    lf = ion.lf
    h = np.zeros((sp.dimension, sp.dimension), dtype=complex)
    terms = (
        (lf.stevens_alpha * lf.A20, 2, 0),
        (lf.stevens_beta * lf.A40, 4, 0),
        (lf.stevens_beta * lf.A44, 4, 4),
        (lf.stevens_gamma * lf.A60, 6, 0),
        (lf.stevens_gamma * lf.A64, 6, 4),
    )
    for coeff, k, q in terms:
        if coeff != 0.0:
            h += coeff * stevens_operator(sp, k, q).data
    return OperatorMatrix(h, (sp,))


def _ion_operator_set(ion: IonModel):
    jops = angular_momentum_ops(ion.j_space)
    iops = angular_momentum_ops(ion.i_space)
    return jops, iops


def single_ion_h(ion: IonModel, field: FieldSpec) -> OperatorMatrix:
    """Full single-ion Hamiltonian on (J ⊗ I), cm^-1.

    Zeeman uses the full vector product gJ*muB*(J.B); with the default
    easy-axis field it reduces to the axial gJ*muB*Jz*Bz form.
    """
    jops, iops = _ion_operator_set(ion)
    dj, di = ion.j_space.dimension, ion.i_space.dimension
    eye_i = np.eye(di)
    eye_j = np.eye(dj)

    h = np.kron(ligand_field_h(ion).data, eye_i)
    bvec = field.vector()
    for comp, bk in zip(("jx", "jy", "jz"), bvec):
        if bk != 0.0:
            h = h + ion.gJ * MU_B_CM1_PER_T * bk * np.kron(jops[comp].data, eye_i)
    if ion.A_hf != 0.0:
        hf = sum(
            np.kron(jops[c].data, iops[c].data) for c in ("jx", "jy", "jz")
        )
        h = h + ion.A_hf * hf
    if ion.P != 0.0:
        iz = iops["jz"].data
        quad = iz @ iz - ion.I * (ion.I + 1) / 3.0 * np.eye(di)
        h = h + ion.P * np.kron(eye_j, quad)
    return OperatorMatrix(h, (ion.j_space, ion.i_space))


def dipolar_tensor(g1: np.ndarray, g2: np.ndarray, r_vec) -> np.ndarray:
    """Point-dipole coupling tensor D (cm^-1) for H = -2 * J1 . D . J2.

    Evaluates (muB^2/r^3) * [g1.g2 - 3 (g1.rhat)(rhat^T.g2)] in Gaussian
    units and multiplies by -1/2 to match the -2*J1.D.J2 convention. For
    two easy-axis ions stacked along their common axis this yields
    D_zz = +g_zz^2 * muB^2 / r^3 (ferromagnetic ground state).
    """
    r = np.asarray(r_vec, dtype=float)
    rn = np.linalg.norm(r)
    if rn <= 0:
        raise ValueError("inter-ion vector must have positive length")
    rhat = r / rn
    r_cm = rn * ANGSTROM_CM
    pref = MU_B_ERG_PER_G**2 / r_cm**3 / HC_ERG_CM  # cm^-1
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    raw = pref * (g1 @ g2 - 3.0 * np.outer(g1 @ rhat, g2.T @ rhat))
    return -0.5 * raw


def dimer_h(model: DimerModel, field: FieldSpec) -> OperatorMatrix:
    """Coupled-dimer Hamiltonian on (J1, J2, I1, I2), cm^-1."""
    h0, zgens = dimer_hamiltonian_parts(model, include_nuclear=True)
    bvec = field.vector()
    h = h0 + bvec[0] * zgens[0] + bvec[1] * zgens[1] + bvec[2] * zgens[2]
    return OperatorMatrix(h.toarray(), model.spaces)


def dimer_hamiltonian_parts(model: DimerModel, include_nuclear: bool = True):
    """Field decomposition H(B) = H0 + B . (Zx, Zy, Zz), sparse CSR.

    Zk = gJ*muB*(J1k + J2k) embedded on the composite space, so the
    Hamiltonian at any field is H0 + sum_k B_k Zk with B in tesla. With
    include_nuclear=False the space is (J1, J2) and hyperfine/quadrupole
    terms are dropped (electronic-only model for bulk observables).
    """
    ion1, ion2 = model.ion1, model.ion2
    j1ops, i1ops = _ion_operator_set(ion1)
    j2ops, i2ops = _ion_operator_set(ion2)
    dj1, dj2 = ion1.j_space.dimension, ion2.j_space.dimension
    di1, di2 = ion1.i_space.dimension, ion2.i_space.dimension

    if include_nuclear:
        dims = (dj1, dj2, di1, di2)
    else:
        dims = (dj1, dj2)

    def emb(op_data: np.ndarray, slot: int):
        out = sparse.identity(1, format="csr", dtype=complex)
        for i, d in enumerate(dims):
            blk = sparse.csr_matrix(op_data) if i == slot else sparse.identity(d, dtype=complex, format="csr")
            out = sparse.kron(out, blk, format="csr")
        return out

    h0 = emb(ligand_field_h(ion1).data, 0) + emb(ligand_field_h(ion2).data, 1)

    k = model.coupling_tensor()
    comps = ("jx", "jy", "jz")
    for a in range(3):
        for b in range(3):
            if k[a, b] != 0.0:
                h0 = h0 - 2.0 * k[a, b] * (emb(j1ops[comps[a]].data, 0) @ emb(j2ops[comps[b]].data, 1))

    if include_nuclear:
        for ion, jops, iops, jslot, islot in (
            (ion1, j1ops, i1ops, 0, 2),
            (ion2, j2ops, i2ops, 1, 3),
        ):
            if ion.A_hf != 0.0:
                for c in comps:
                    h0 = h0 + ion.A_hf * (emb(jops[c].data, jslot) @ emb(iops[c].data, islot))
            if ion.P != 0.0:
                iz = iops["jz"].data
                quad = iz @ iz - ion.I * (ion.I + 1) / 3.0 * np.eye(iz.shape[0])
                h0 = h0 + ion.P * emb(quad, islot)

    zgens = []
    for c in comps:
        z = (ion1.gJ * emb(j1ops[c].data, 0) + ion2.gJ * emb(j2ops[c].data, 1)) * MU_B_CM1_PER_T
        zgens.append(z.tocsr())

    return h0.tocsr(), tuple(zgens)


def ion_hamiltonian_parts(ion: IonModel, include_nuclear: bool = False):
    """Single-ion field decomposition, dense (small spaces)."""
    jops, iops = _ion_operator_set(ion)
    if include_nuclear:
        h = single_ion_h(ion, FieldSpec(0.0)).data.copy()
        eye_i = np.eye(ion.i_space.dimension)
        zgens = tuple(
            ion.gJ * MU_B_CM1_PER_T * np.kron(jops[c].data, eye_i) for c in ("jx", "jy", "jz")
        )
        return h, zgens
    h = ligand_field_h(ion).data.copy()
    zgens = tuple(ion.gJ * MU_B_CM1_PER_T * jops[c].data for c in ("jx", "jy", "jz"))
    return h, zgens


# --- reference parameter set: the asymmetric Tb(III) phthalocyanine dimer ---

def tb2_dimer(
    a_hf: float = 0.0215,
    p_quad: float = 0.010,
    j_ex: float = 0.0,
    r_angstrom: float = 3.5230,
    coupling_override: Optional[np.ndarray] = None,
) -> DimerModel:
    """Tb(III) triple-decker dimer defaults: J=6, I=3/2, gJ=3/2.

    Site ligand fields A20=+289/A40=-209 and A20=+293/A40=-197 cm^-1 with
    the remaining A_k^q zero; hyperfine and quadrupole shared by both
    sites; Ising g = diag(0, 0, 3/2); ions stacked along z.
    """
    lf1 = LigandFieldParams(A20=289.0, A40=-209.0)
    lf2 = LigandFieldParams(A20=293.0, A40=-197.0)
    ion1 = IonModel(J=6, I=1.5, gJ=1.5, lf=lf1, A_hf=a_hf, P=p_quad)
    ion2 = IonModel(J=6, I=1.5, gJ=1.5, lf=lf2, A_hf=a_hf, P=p_quad)
    return DimerModel(
        ion1=ion1,
        ion2=ion2,
        r_vec=(0.0, 0.0, r_angstrom),
        J_ex=j_ex,
        coupling_override=coupling_override,
    )


def with_params(model: DimerModel, **params) -> DimerModel:
    """Copy of `model` with named physical parameters replaced.

    Supported names: A_hf, P (applied to both ions), J_ex, D_zz (installs
    a diag(0, 0, D_zz) coupling override).
    """
    ion1, ion2 = model.ion1, model.ion2
    kwargs = {}
    for name in ("A_hf", "P"):
        if name in params:
            v = params.pop(name)
            ion1 = replace(ion1, **{name: v})
            ion2 = replace(ion2, **{name: v})
    if "J_ex" in params:
        kwargs["J_ex"] = params.pop("J_ex")
    if "D_zz" in params:
        kwargs["coupling_override"] = np.diag([0.0, 0.0, params.pop("D_zz")])
    if params:
        raise ValueError(f"unknown parameters: {sorted(params)}")
    return replace(model, ion1=ion1, ion2=ion2, **kwargs)
