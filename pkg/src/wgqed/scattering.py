"""Frequency-domain few-photon scattering.

Single-excitation Green's functions give the linear transmission T_k.  The
two-photon problem is solved on the unsymmetrized pair space with a
Lippmann-Schwinger T-matrix restricted to the pairs that interact.  Energies
are measured as detunings in the frame of the drive (omega = Delta).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np
import scipy.linalg as la

from .hilbert import EIT
from .model import SpinModel, waveguide_matrix

log = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-10
COND_LIMIT = 1e12


class DegenerateDenominatorError(ArithmeticError):
    """A two-excitation energy denominator vanishes."""


class SingularSolveError(ArithmeticError):
    """A linear solve is numerically singular."""


class EnergyConservationError(ValueError):
    """Outgoing and incoming total momenta differ."""


@dataclass(frozen=True, eq=False)
class SingleParticleHamiltonian:
    """H1 in the orbital basis; a and s modes are interleaved per site."""

    matrix: np.ndarray
    modes_per_site: int
    n_sites: int
    k_in: float
    positions: np.ndarray
    gamma_1d: float

    @property
    def a_index(self) -> np.ndarray:
        return np.arange(self.n_sites) * self.modes_per_site

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def in_vector(self) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.a_index] = np.exp(1j * self.k_in * self.positions)
        return v

    def out_vector(self) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.a_index] = np.exp(-1j * self.k_in * self.positions)
        return v

    def emission_vector(self) -> np.ndarray:
        """Weights of the connected output field, -i(Gamma_1D/2) exp(-i k z_j) on a modes."""
        return -0.5j * self.gamma_1d * self.out_vector()


@dataclass(frozen=True, eq=False)
class Eigensystem:
    """Right eigenvectors R (columns) and the bi-orthogonal left set Rinv (rows)."""

    values: np.ndarray
    right: np.ndarray
    left: np.ndarray


@dataclass(frozen=True, eq=False)
class PairSpace:
    """Interaction support inside the (n_orb)^2 product space."""

    n_orbitals: int
    first: np.ndarray
    second: np.ndarray
    inv_u: np.ndarray
    same_site: np.ndarray

    @property
    def size(self) -> int:
        return self.first.size

    @property
    def flat(self) -> np.ndarray:
        return self.first * self.n_orbitals + self.second

    @property
    def u_matrix(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.inv_u == 0, np.inf, 1.0 / np.where(self.inv_u == 0, 1, self.inv_u))


@dataclass
class ScatteringResult:
    kind: str
    axes: dict
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, ax in self.axes.items():
            if np.shape(ax)[0] != np.shape(self.values)[0]:
                raise ValueError(f"axis {name!r} length does not match values")


# ------------------------------------------------------------------ one photon

def single_particle_hamiltonian(model: SpinModel) -> SingleParticleHamiltonian:
    lv = model.levels
    m = lv.modes_per_site
    n = model.n_sites
    h = np.zeros((n * m, n * m), dtype=complex)
    ia = np.arange(n) * m
    dl = lv.delta_L if lv.kind == EIT else 0.0
    h[np.ix_(ia, ia)] = waveguide_matrix(model.geometry, lv.gamma_1d)
    h[ia, ia] += -dl - 0.5j * lv.gamma_prime
    if m == 2:
        h[ia, ia + 1] = lv.rabi
        h[ia + 1, ia] = lv.rabi
    return SingleParticleHamiltonian(h, m, n, model.geometry.k_in, model.geometry.z, lv.gamma_1d)


def green_function(h1: SingleParticleHamiltonian, omega: float) -> np.ndarray:
    """(omega - H1)^-1 by a dense LU solve, with a conditioning check."""
    a = omega * np.eye(h1.size) - h1.matrix
    if h1.size == 0:
        return a
    lu = la.lu_factor(a)
    rc = np.linalg.cond(a, 1)
    if not np.isfinite(rc) or rc > COND_LIMIT:
        raise SingularSolveError(f"omega - H1 is near singular at omega={omega:g} (condition {rc:.3e})")
    return la.lu_solve(lu, np.eye(h1.size, dtype=complex))


def transmission_coefficient(h1: SingleParticleHamiltonian, omega: float) -> complex:
    if h1.size == 0:
        return 1.0 + 0j
    u = la.solve(omega * np.eye(h1.size) - h1.matrix, h1.in_vector())
    return complex(1.0 + h1.emission_vector() @ u)


def reflection_coefficient(h1: SingleParticleHamiltonian, omega: float) -> complex:
    """Left-going amplitude referenced to the first atom."""
    if h1.size == 0:
        return 0j
    u = la.solve(omega * np.eye(h1.size) - h1.matrix, h1.in_vector())
    w = np.zeros(h1.size, dtype=complex)
    z0 = h1.positions[0]
    w[h1.a_index] = -0.5j * h1.gamma_1d * np.exp(1j * h1.k_in * (h1.positions - z0))
    return complex(w @ u)


def transmission_spectrum(model: SpinModel, omega_grid) -> ScatteringResult:
    h1 = single_particle_hamiltonian(model)
    grid = np.atleast_1d(np.asarray(omega_grid, dtype=float))
    t = np.array([transmission_coefficient(h1, w) for w in grid])
    return ScatteringResult("T_k", {"omega": grid}, t, {"n_sites": model.n_sites})


# ---------------------------------------------------------------- eigenpairs

def eigensystem(h1: SingleParticleHamiltonian, tol: float = DEGENERACY_TOL) -> Eigensystem:
    vals, right = la.eig(h1.matrix)
    if vals.size > 1:
        gaps = np.abs(vals[:, None] - vals[None, :])
        np.fill_diagonal(gaps, np.inf)
        i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
        if gaps[i, j] < tol:
            raise DegenerateDenominatorError(
                f"H1 eigenvalues {i} and {j} are degenerate within {tol:g}; perturb the geometry"
            )
    left = la.inv(right)
    return Eigensystem(vals, right, left)


# ---------------------------------------------------------------- pair space

def pair_space(model: SpinModel) -> PairSpace:
    """Same-site pairs (hardcore or u0) and interacting-mode pairs with U_ij != 0."""
    m = model.levels.modes_per_site
    n = model.n_sites
    inter = model.interaction
    first, second, inv_u, same = [], [], [], []
    if inter.hardcore or inter.u0 != 0:
        for j in range(n):
            for x in range(m):
                for y in range(m):
                    first.append(j * m + x)
                    second.append(j * m + y)
                    inv_u.append(0.0 if inter.hardcore else 1.0 / inter.u0)
                    same.append(True)
    mode = model.interacting_mode
    ii, jj = np.nonzero(inter.u_ss)
    for i, j in zip(ii, jj):
        first.append(i * m + mode)
        second.append(j * m + mode)
        inv_u.append(1.0 / inter.u_ss[i, j])
        same.append(False)
    return PairSpace(
        n * m,
        np.asarray(first, dtype=np.int64),
        np.asarray(second, dtype=np.int64),
        np.asarray(inv_u, dtype=float),
        np.asarray(same, dtype=bool),
    )


def _pair_denominators(es: Eigensystem, energy: complex) -> np.ndarray:
    den = energy - es.values[:, None] - es.values[None, :]
    small = np.abs(den) < DEGENERACY_TOL
    if small.any():
        l, lp = np.argwhere(small)[0]
        raise DegenerateDenominatorError(
            f"E - eps_{l} - eps_{lp} = {den[l, lp]:.3e} is below {DEGENERACY_TOL:g}; perturb E"
        )
    return den


def pair_propagator(es: Eigensystem, energy: float, support: PairSpace) -> np.ndarray:
    """Pi_0(E) = (E - H2)^-1 restricted to the support (rows and columns)."""
    den = _pair_denominators(es, energy)
    r, li = es.right, es.left
    x = r[support.first, :][:, :, None] * r[support.second, :][:, None, :]
    y = li[:, support.first][:, None, :] * li[:, support.second][None, :, :]
    n = es.values.size
    x = x.reshape(support.size, n * n) / den.reshape(1, n * n)
    return x @ y.reshape(n * n, support.size)


def pair_propagator_columns(es: Eigensystem, energy: float, support: PairSpace, rows: str = "full") -> np.ndarray:
    """Pi_0(E)[:, support] on the full product space, shape (n_orb^2, |support|)."""
    den = _pair_denominators(es, energy)
    r, li = es.right, es.left
    n = es.values.size
    y = li[:, support.first][:, None, :] * li[:, support.second][None, :, :]
    y = y / den[:, :, None]
    # contract eigen indices: R (x) R applied to Y
    out = np.einsum("al,lmk->amk", r, y)
    out = np.einsum("bm,amk->abk", r, out)
    return out.reshape(n * n, support.size)


def t_matrix(support: PairSpace, pi0: np.ndarray) -> np.ndarray:
    """T = (U^-1 - Pi_0)^-1; hardcore rows carry U^-1 = 0."""
    if support.size == 0:
        return np.zeros((0, 0), dtype=complex)
    a = np.diag(support.inv_u.astype(complex)) - pi0
    rc = np.linalg.cond(a)
    if not np.isfinite(rc) or rc > COND_LIMIT:
        raise SingularSolveError(f"U^-1 - Pi_0 is near singular (condition {rc:.3e}); E may sit on a bound-state resonance")
    return la.solve(a, np.eye(support.size, dtype=complex))


@dataclass(frozen=True, eq=False)
class TwoPhotonSolver:
    """Cached eigensystem and support for repeated two-photon queries."""

    model: SpinModel
    h1: SingleParticleHamiltonian
    es: Eigensystem
    support: PairSpace

    @classmethod
    def from_model(cls, model: SpinModel) -> "TwoPhotonSolver":
        h1 = single_particle_hamiltonian(model)
        return cls(model, h1, eigensystem(h1), pair_space(model))

    def response(self, omega: float, vec: np.ndarray | None = None) -> np.ndarray:
        """G0(omega) v via the eigensystem."""
        v = self.h1.in_vector() if vec is None else vec
        return self.es.right @ ((self.es.left @ v) / (omega - self.es.values))

    def transmission(self, omega: float) -> complex:
        return complex(1.0 + self.h1.emission_vector() @ self.response(omega))

    def t_matrix(self, energy: float) -> np.ndarray:
        return t_matrix(self.support, pair_propagator(self.es, energy, self.support))

    def connected_source(self, k1: float, k2: float) -> np.ndarray:
        """w(k1, k2) restricted to the support."""
        u1, u2 = self.response(k1), self.response(k2)
        return u1[self.support.first] * u2[self.support.second]

    def outgoing_source(self, p1: float, p2: float) -> np.ndarray:
        """Outgoing analogue of w, built from G0 acting on exp(-i k z)."""
        vo = self.h1.out_vector()
        u1, u2 = self.response(p1, vo), self.response(p2, vo)
        return u1[self.support.first] * u2[self.support.second]

    def equal_time_amplitude(self, delta: float) -> complex:
        """<0| b b |psi> / E^2 at zero delay for a weak coherent drive at detuning delta."""
        t = self.transmission(delta)
        if self.support.size == 0:
            return t * t
        beta = self.h1.emission_vector()
        y = self.t_matrix(2 * delta) @ self.connected_source(delta, delta)
        bl = beta @ self.es.right
        den = _pair_denominators(self.es, 2 * delta)
        lf = self.es.left[:, self.support.first]
        ls = self.es.left[:, self.support.second]
        proj = np.einsum("lk,mk,k->lm", lf, ls, y)
        return complex(t * t + np.sum(bl[:, None] * bl[None, :] * proj / den))

    def connected_amplitude(self, energy: float, x, k1: float, k2: float) -> np.ndarray:
        """Connected two-photon amplitude versus separation x (one ordering).

        A(x) = sum_{l,l'} (beta.chi_l)(beta.chi_l') exp(i (E/2 - eps_l') |x|)
               [chi~_l (x) chi~_l'] . y / (E - eps_l - eps_l'),  y = T w_sym.
        """
        x = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
        if self.support.size == 0:
            return np.zeros(x.shape, dtype=complex)
        w = 0.5 * (self.connected_source(k1, k2) + self.connected_source(k2, k1))
        y = self.t_matrix(energy) @ w
        bl = self.h1.emission_vector() @ self.es.right
        den = _pair_denominators(self.es, energy)
        lf = self.es.left[:, self.support.first]
        ls = self.es.left[:, self.support.second]
        proj = np.einsum("lk,mk,k->lm", lf, ls, y)
        coef = (bl[:, None] * bl[None, :] * proj / den).sum(axis=0)
        phase = np.exp(1j * np.outer(x, 0.5 * energy - self.es.values))
        return phase @ coef


def two_photon_smatrix(model: SpinModel, k1: float, k2: float, p1: float, p2: float,
                       solver: TwoPhotonSolver | None = None, grid_tol: float = 1e-12) -> complex:
    """Transmitted two-photon S-matrix element on a discrete frequency grid."""
    if abs((p1 + p2) - (k1 + k2)) > grid_tol * max(1.0, abs(k1) + abs(k2)):
        raise EnergyConservationError(f"p1 + p2 = {p1 + p2:g} differs from k1 + k2 = {k1 + k2:g}")
    s = solver or TwoPhotonSolver.from_model(model)

    def same(a, b):
        return abs(a - b) <= grid_tol * max(1.0, abs(a))

    lin = 0j
    kron = float(same(p1, k1) and same(p2, k2)) + float(same(p1, k2) and same(p2, k1))
    if kron:
        lin = s.transmission(k1) * s.transmission(k2) * kron
    if s.support.size == 0:
        return complex(lin)
    tm = s.t_matrix(k1 + k2)
    w_in = s.connected_source(k1, k2)
    g1d = model.levels.gamma_1d
    conn = s.outgoing_source(p1, p2) @ tm @ w_in + s.outgoing_source(p2, p1) @ tm @ w_in
    return complex(lin - 1j * g1d**2 / (8 * np.pi) * conn)


def two_photon_wavefunction(model: SpinModel, energy: float, k_rel: float, x_grid,
                            solver: TwoPhotonSolver | None = None) -> ScatteringResult:
    """Outgoing two-photon amplitude psi(x) versus relative coordinate x.

    Normalized so the non-interacting part is 2 T_+ T_- cos(k_rel x); the
    connected part is twice the single-ordering amplitude (both orderings agree).
    """
    x = np.asarray(x_grid, dtype=float)
    if not np.allclose(np.sort(x), np.sort(-x)):
        raise ValueError("x_grid must be symmetric about 0")
    s = solver or TwoPhotonSolver.from_model(model)
    kp, km = 0.5 * energy + k_rel, 0.5 * energy - k_rel
    lin = 2 * s.transmission(kp) * s.transmission(km) * np.cos(k_rel * x)
    conn = 2 * s.connected_amplitude(energy, x, kp, km)
    return ScatteringResult(
        "psi",
        {"x": x},
        lin + conn,
        {"energy": energy, "k_rel": k_rel, "T_plus": s.transmission(kp), "T_minus": s.transmission(km)},
    )


def g2_from_wavefunction(psi: ScatteringResult, t_half: complex | None = None):
    """g2(x) = |psi(x) / (2 T^2)|^2 for equal input momenta."""
    from .dynamics import ObservableSeries

    if psi.meta.get("k_rel", 0.0) != 0.0:
        raise ValueError("g2 requires equal input momenta (k_rel = 0)")
    t = psi.meta["T_plus"] if t_half is None else t_half
    if abs(t) < 1e-12:
        raise ZeroDivisionError("|T(E/2)| < 1e-12: medium is opaque, g2 undefined")
    vals = np.abs(psi.values / (2 * t * t)) ** 2
    return ObservableSeries("g2", psi.axes["x"], vals, {"source": "frequency", **{k: v for k, v in psi.meta.items() if k == "energy"}})


def two_photon_transmission(model: SpinModel, delta: float, solver: TwoPhotonSolver | None = None) -> float:
    """|<0|b b|psi>|^2 / E^4 from the scattering solution."""
    s = solver or TwoPhotonSolver.from_model(model)
    return float(abs(s.equal_time_amplitude(delta)) ** 2)


def g2_frequency(model: SpinModel, delta: float, x_grid, solver: TwoPhotonSolver | None = None) -> np.ndarray:
    s = solver or TwoPhotonSolver.from_model(model)
    psi = two_photon_wavefunction(model, 2 * delta, 0.0, x_grid, solver=s)
    return g2_from_wavefunction(psi).values


# ------------------------------------------------------- single-atom kernel

def single_atom_connected_kernel(n: int, k, p, gamma: float, omega_eg: float = 0.0, tol: float = 1e-12) -> complex:
    """Fully connected n-photon kernel of a two-level atom in a one-way waveguide.

    Returns the coefficient multiplying delta(sum k - sum p).
    """
    k = np.asarray(k, dtype=float)
    p = np.asarray(p, dtype=float)
    if not 1 <= n <= 3 or k.size != n or p.size != n:
        raise ValueError("need 1 <= n <= 3 momenta in and out")
    if abs(k.sum() - p.sum()) > 1e-9 * max(1.0, np.abs(k).sum()):
        raise EnergyConservationError("kernel is defined on shell only")
    alpha = omega_eg - 0.5j * gamma
    total = 0j
    for pk in permutations(range(n)):
        for pp in permutations(range(n)):
            kk, qq = k[list(pk)], p[list(pp)]
            d = kk - qq
            term = 1.0 + 0j
            for l in range(1, n):
                s = d[:l].sum()
                if abs(s) < tol:
                    raise ZeroDivisionError("a partial momentum transfer vanishes; perturb the momenta")
                term /= s
            for m in range(n):
                term /= kk[m] - alpha + d[:m].sum()
            total += term
    return complex(-2j * np.pi * (gamma / (2 * np.pi)) ** n * total)


def n_permutations(n: int) -> int:
    return factorial(n) ** 2
