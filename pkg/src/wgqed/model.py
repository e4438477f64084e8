"""Effective spin model of an atom chain coupled to a waveguide.

All generators are written in the frame co-rotating with the drive, so the
drive term is time independent and the detuning Delta enters the diagonal.
Rates are in units of one reference rate, c = 1.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    EIT,
    FewExcitationBasis,
    Geometry,
    LevelScheme,
    SparseOperator,
    lowering_operator,
    one_body_operator,
    raising_operator,
)

log = logging.getLogger(__name__)

WEAK_DRIVE_FRACTION = 1e-2


class ModelMismatchError(ValueError):
    """Basis and model disagree on sites or level structure."""


class MissingDriveError(ValueError):
    """Operation needs a drive but the model has none."""


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """Pair interaction U_ij between excitations of the interacting mode.

    ``hardcore`` excludes double occupation of a site exactly; otherwise an
    on-site penalty (u0/2) n_j (n_j - 1) acts on the total site occupation.
    """

    u_ss: np.ndarray
    hardcore: bool = True
    u0: float = 0.0

    def __post_init__(self):
        u = np.array(self.u_ss, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("u_ss must be a square matrix")
        if not np.all(np.isfinite(u)):
            raise ValueError("u_ss entries must be finite")
        if not np.allclose(u, u.T, atol=0, rtol=0):
            raise ValueError("u_ss must be symmetric")
        if np.any(np.diag(u) != 0):
            raise ValueError("u_ss must have zero diagonal; same-site terms are set by hardcore/u0")
        if not np.isfinite(self.u0):
            raise ValueError("u0 must be finite; use hardcore=True for the exclusion limit")
        u.setflags(write=False)
        object.__setattr__(self, "u_ss", u)

    @classmethod
    def none(cls, n_sites: int, hardcore: bool = True, u0: float = 0.0) -> "InteractionSpec":
        return cls(np.zeros((n_sites, n_sites)), hardcore, u0)

    @classmethod
    def constant(cls, n_sites: int, c: float, hardcore: bool = True, u0: float = 0.0) -> "InteractionSpec":
        """Infinite-range interaction: every pair of excitations is shifted by ``c``."""
        u = np.full((n_sites, n_sites), float(c))
        np.fill_diagonal(u, 0.0)
        return cls(u, hardcore, u0)

    @property
    def n_sites(self) -> int:
        return self.u_ss.shape[0]

    @property
    def is_trivial(self) -> bool:
        return not np.any(self.u_ss) and not self.hardcore and self.u0 == 0


@dataclass(frozen=True)
class DriveSpec:
    amplitude: float
    detuning: float = 0.0
    direction: str = "right"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be >= 0")
        if self.direction != "right":
            raise ValueError("only right-going drives are supported")


@dataclass(frozen=True, eq=False)
class SpinModel:
    geometry: Geometry
    levels: LevelScheme
    interaction: InteractionSpec = field(default=None)  # type: ignore[assignment]
    drive: DriveSpec | None = None

    def __post_init__(self):
        n = self.geometry.n_sites
        if self.interaction is None:
            object.__setattr__(self, "interaction", InteractionSpec.none(n))
        if self.interaction.n_sites != n:
            raise ValueError(f"interaction matrix is {self.interaction.n_sites}x{self.interaction.n_sites}, expected {n}x{n}")
        if self.drive is not None and self.drive.amplitude > WEAK_DRIVE_FRACTION * self.levels.gamma:
            warnings.warn(
                f"drive amplitude {self.drive.amplitude:g} exceeds {WEAK_DRIVE_FRACTION:g} Gamma; "
                "weak-drive truncation may be inaccurate",
                stacklevel=2,
            )

    @property
    def n_sites(self) -> int:
        return self.geometry.n_sites

    @property
    def n_orbitals(self) -> int:
        return self.n_sites * self.levels.modes_per_site

    @property
    def detuning(self) -> float:
        return 0.0 if self.drive is None else self.drive.detuning

    @property
    def interacting_mode(self) -> int:
        """Mode index carrying U_ij: ``s`` for EIT atoms, ``a`` for two-level atoms."""
        return 1 if self.levels.kind == EIT else 0

    def with_drive(self, amplitude: float, detuning: float = 0.0) -> "SpinModel":
        return replace(self, drive=DriveSpec(amplitude, detuning))

    def with_detuning(self, detuning: float) -> "SpinModel":
        if self.drive is None:
            raise MissingDriveError("model has no drive to retune")
        return replace(self, drive=replace(self.drive, detuning=detuning))

    def with_interaction(self, interaction: InteractionSpec) -> "SpinModel":
        return replace(self, interaction=interaction)

    def a_orbitals(self) -> np.ndarray:
        return np.arange(self.n_sites) * self.levels.modes_per_site


def _check_basis(model: SpinModel, basis: FewExcitationBasis) -> None:
    if basis.site_count != model.n_sites or basis.modes_per_site != model.levels.modes_per_site:
        raise ModelMismatchError(
            f"basis has {basis.site_count} sites x {basis.modes_per_site} modes, "
            f"model has {model.n_sites} sites x {model.levels.modes_per_site} modes"
        )
    if basis.hardcore != model.interaction.hardcore:
        raise ModelMismatchError("basis hardcore flag differs from the interaction spec")


def waveguide_matrix(geometry: Geometry, gamma_1d: float) -> np.ndarray:
    """-i (Gamma_1D/2) exp(i k |z_i - z_j|)."""
    z = geometry.z
    return -0.5j * gamma_1d * np.exp(1j * geometry.k_in * np.abs(z[:, None] - z[None, :]))


def one_body_matrix(model: SpinModel, detuning: float | None = None) -> np.ndarray:
    """Single-excitation block of H_eff in the orbital basis (a and s interleaved)."""
    lv = model.levels
    d = model.detuning if detuning is None else detuning
    m = lv.modes_per_site
    n = model.n_sites
    h = np.zeros((n * m, n * m), dtype=complex)
    ia = np.arange(n) * m
    dl = lv.delta_L if lv.kind == EIT else 0.0
    h[np.ix_(ia, ia)] = waveguide_matrix(model.geometry, lv.gamma_1d)
    h[ia, ia] += -(dl + d + 0.5j * lv.gamma_prime)
    if m == 2:
        h[ia + 1, ia + 1] = -d
        h[ia, ia + 1] = -lv.rabi
        h[ia + 1, ia] = -lv.rabi
    return h


def interaction_diagonal(model: SpinModel, basis: FewExcitationBasis) -> np.ndarray:
    """Interaction energy of each basis configuration."""
    _check_basis(model, basis)
    occ = basis.occ
    n_orb = basis.n_orbitals
    m = basis.modes_per_site
    out = np.zeros(basis.dim)
    u = model.interaction.u_ss
    u0 = 0.0 if model.interaction.hardcore else model.interaction.u0
    mode = model.interacting_mode
    for i in range(occ.shape[1]):
        for j in range(i + 1, occ.shape[1]):
            o1, o2 = occ[:, i], occ[:, j]
            real = (o1 < n_orb) & (o2 < n_orb)
            if not real.any():
                continue
            s1, s2 = np.where(real, o1 // m, 0), np.where(real, o2 // m, 0)
            same = real & (s1 == s2)
            inter = real & ~same & (o1 % m == mode) & (o2 % m == mode)
            out += np.where(same, u0, 0.0)
            out += np.where(inter, u[s1, s2], 0.0)
    return out


def effective_hamiltonian(model: SpinModel, basis: FewExcitationBasis, detuning: float | None = None) -> SparseOperator:
    """Non-Hermitian H_eff (co-rotating frame) including interactions."""
    _check_basis(model, basis)
    h = one_body_operator(basis, one_body_matrix(model, detuning))
    diag = interaction_diagonal(model, basis)
    if np.any(diag):
        h = (h + sp.diags(diag.astype(complex))).tocsr()
    return h


def drive_vector(model: SpinModel) -> np.ndarray:
    """Orbital weights E exp(i k z_j) on the a modes."""
    if model.drive is None:
        raise MissingDriveError("model has no drive")
    v = np.zeros(model.n_orbitals, dtype=complex)
    v[model.a_orbitals()] = model.drive.amplitude * np.exp(1j * model.geometry.k_in * model.geometry.z)
    return v


def drive_hamiltonian(model: SpinModel, basis: FewExcitationBasis) -> SparseOperator:
    _check_basis(model, basis)
    up = raising_operator(basis, drive_vector(model))
    return (up + up.conj().T).tocsr()


class JumpOperators(NamedTuple):
    plus: SparseOperator
    minus: SparseOperator
    loss: tuple[SparseOperator, ...]

    def all(self) -> list[SparseOperator]:
        return [self.plus, self.minus, *self.loss]


def jump_operators(model: SpinModel, basis: FewExcitationBasis) -> JumpOperators:
    """Collective waveguide jumps O_+/- and independent per-site loss operators."""
    _check_basis(model, basis)
    lv = model.levels
    ia = model.a_orbitals()
    phase = np.exp(1j * model.geometry.k_in * model.geometry.z)
    ops = []
    for sign in (1, -1):
        w = np.zeros(model.n_orbitals, dtype=complex)
        w[ia] = np.sqrt(lv.gamma_1d / 4) * phase ** (-sign)
        ops.append(lowering_operator(basis, w))
    loss = []
    if lv.gamma_prime > 0:
        for j, o in enumerate(ia):
            w = np.zeros(model.n_orbitals, dtype=complex)
            w[o] = np.sqrt(lv.gamma_prime / 2)
            loss.append(lowering_operator(basis, w))
    return JumpOperators(ops[0], ops[1], tuple(loss))


def hermitian_hamiltonian(model: SpinModel, basis: FewExcitationBasis, include_drive: bool = True) -> SparseOperator:
    """H_at = H_eff + i sum_v O_v^dag O_v, plus the drive when present."""
    h = effective_hamiltonian(model, basis)
    for o in jump_operators(model, basis).all():
        h = h + 1j * (o.conj().T @ o)
    if include_drive and model.drive is not None:
        h = h + drive_hamiltonian(model, basis)
    return h.tocsr()


def _dissipators(model, basis):
    return jump_operators(model, basis).all()


def liouvillian_apply(model: SpinModel, basis: FewExcitationBasis, rho: np.ndarray, include_drive: bool = True) -> np.ndarray:
    """L[rho] = -i[H_at, rho] + sum_v (2 O rho O^dag - O^dag O rho - rho O^dag O)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("rho must be a square matrix")
    if rho.shape[0] != basis.dim:
        raise ValueError(f"rho is {rho.shape[0]}-dimensional, basis has dim {basis.dim}")
    h = hermitian_hamiltonian(model, basis, include_drive)
    out = -1j * (h @ rho - (h.T @ rho.T).T)
    for o in _dissipators(model, basis):
        od = o.conj().T
        odo = od @ o
        out += 2 * (o @ (od.T @ rho.T).T) - odo @ rho - (odo.T @ rho.T).T
    return out


def liouvillian_matrix(model: SpinModel, basis: FewExcitationBasis, include_drive: bool = True) -> sp.csr_matrix:
    """Superoperator acting on row-major vec(rho): vec(A rho B) = (A kron B^T) vec(rho)."""
    n = basis.dim
    eye = sp.identity(n, dtype=complex, format="csr")
    h = hermitian_hamiltonian(model, basis, include_drive)
    sup = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for o in _dissipators(model, basis):
        od = o.conj().T
        odo = (od @ o).tocsr()
        sup = sup + 2 * sp.kron(o, od.T) - sp.kron(odo, eye) - sp.kron(eye, odo.T)
    return sup.tocsr()


def output_weights(model: SpinModel, direction: str = "right", z_ref: float | None = None) -> np.ndarray:
    z = model.geometry.z
    k = model.geometry.k_in
    w = np.zeros(model.n_orbitals, dtype=complex)
    if model.n_sites == 0:
        return w
    if direction == "right":
        zr = z[-1] if z_ref is None else z_ref
        w[model.a_orbitals()] = -0.5j * model.levels.gamma_1d * np.exp(1j * k * (zr - z))
    elif direction == "left":
        zl = z[0] if z_ref is None else z_ref
        w[model.a_orbitals()] = -0.5j * model.levels.gamma_1d * np.exp(1j * k * (z - zl))
    else:
        raise ValueError("direction must be 'right' or 'left'")
    return w


def output_field_operator(
    model: SpinModel, basis: FewExcitationBasis, direction: str = "right", z_ref: float | None = None
) -> tuple[complex, SparseOperator]:
    """Output field as (c-number drive offset, atomic operator).

    Right-going: E exp(i k z_R) - i (Gamma_1D/2) sum_j exp(i k (z_R - z_j)) a_j.
    Left-going: -i (Gamma_1D/2) sum_j exp(i k (z_j - z_L)) a_j.
    """
    _check_basis(model, basis)
    offset = 0.0j
    if direction == "right" and model.drive is not None:
        z = model.geometry.z
        zr = (z[-1] if z.size else 0.0) if z_ref is None else z_ref
        offset = model.drive.amplitude * np.exp(1j * model.geometry.k_in * zr)
    return complex(offset), lowering_operator(basis, output_weights(model, direction, z_ref))
