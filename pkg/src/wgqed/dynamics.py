"""Time evolution, weak-drive steady states and field observables."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import DOP853

from .hilbert import EIT, FewExcitationBasis, Geometry, LevelScheme, SparseOperator, enumerate_basis, raising_operator
from .model import (
    MissingDriveError,
    SpinModel,
    drive_hamiltonian,
    effective_hamiltonian,
    liouvillian_matrix,
    output_field_operator,
)
from .pairspace import PairSystem, pair_to_basis, solve_pair_amplitude

log = logging.getLogger(__name__)


class StiffnessError(RuntimeError):
    """Adaptive integrator could not take a step."""


class SingularSectorError(ArithmeticError):
    """A sector block of H_eff is singular at the working detuning."""


class NonStationaryError(RuntimeError):
    """Output intensity still drifts at the settling time."""


class ExtractionError(ArithmeticError):
    """Polynomial extraction in the drive strength is not converged."""


@dataclass
class QuantumState:
    basis: FewExcitationBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(f"amplitude vector has shape {self.amplitudes.shape}, basis dim is {self.basis.dim}")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def sector(self, n: int) -> np.ndarray:
        return self.amplitudes[self.basis.sector_slice(n)]


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray | None
    observables: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


@dataclass
class ObservableSeries:
    name: str
    grid: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        self.values = np.asarray(self.values)
        if self.grid.shape[0] != self.values.shape[0]:
            raise ValueError("grid and values must have equal length")


# ------------------------------------------------------------------ evolution

_DENSE_CACHE: dict = {}


def _as_vector(psi0) -> np.ndarray:
    return np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex).copy()


def evolve(
    h_total: SparseOperator,
    psi0,
    t_grid: Sequence[float],
    rel_tol: float = 1e-8,
    method: str = "rk",
    observables: dict[str, Callable[[np.ndarray], complex]] | None = None,
    store_states: bool = True,
    atol: float | np.ndarray | None = None,
) -> Trajectory:
    """Solve i dpsi/dt = H psi and sample at ``t_grid``.

    ``rk`` is an adaptive DOP853 integration with error control at ``rel_tol``
    (``atol`` may be a per-component array when amplitudes span many scales);
    ``expm`` applies the exponential action between grid points; ``dense`` exponentiates a dense H once per distinct step.
    """
    if not 1e-12 <= rel_tol <= 1e-4:
        raise ValueError("rel_tol must lie in [1e-12, 1e-4]")
    t = np.asarray(t_grid, dtype=float)
    if t.size == 0 or (t.size > 1 and np.any(np.diff(t) <= 0)):
        raise ValueError("t_grid must be nonempty and strictly increasing")
    y0 = _as_vector(psi0)
    h = sp.csr_matrix(h_total, dtype=complex)
    if h.shape != (y0.size, y0.size):
        raise ValueError("operator and state dimensions differ")
    obs = observables or {}
    out = np.empty((t.size, y0.size), dtype=complex) if store_states else None
    rec = {k: np.empty(t.size, dtype=complex) for k in obs}
    meta = {"method": method, "rel_tol": rel_tol, "steps": 0, "norms": []}

    def record(i, y):
        if out is not None:
            out[i] = y
        for k, f in obs.items():
            rec[k][i] = f(y)

    record(0, y0)
    if method == "rk":
        if t.size == 1:
            return Trajectory(t, out, rec, meta)
        if atol is None:
            atol = rel_tol * max(np.linalg.norm(y0), 1e-300) * 1e-3

        def rhs(_, y):
            return -1j * (h @ y)

        solver = DOP853(rhs, t[0], y0, t[-1], rtol=rel_tol, atol=atol)
        i = 1
        while i < t.size:
            msg = solver.step()
            if solver.status == "failed":
                raise StiffnessError(f"integrator failed at t={solver.t:g} (step {solver.step_size}): {msg}")
            meta["steps"] += 1
            meta["norms"].append(float(np.linalg.norm(solver.y)))
            dense = solver.dense_output()
            while i < t.size and t[i] <= solver.t:
                record(i, solver.y if t[i] == solver.t else dense(t[i]))
                i += 1
            if solver.status == "finished" and i < t.size:
                record(i, solver.y)
                i += 1
    elif method == "expm":
        y = y0
        a = (-1j * h).tocsc()
        for i in range(1, t.size):
            y = spla.expm_multiply(a * (t[i] - t[i - 1]), y)
            meta["steps"] += 1
            record(i, y)
    elif method == "dense":
        hd = h.toarray()
        y = y0
        for i in range(1, t.size):
            dt = round(float(t[i] - t[i - 1]), 14)
            key = (id(h_total), hd.shape, dt, hash(hd.tobytes()))
            u = _DENSE_CACHE.get(key)
            if u is None:
                u = la.expm(-1j * hd * dt)
                if len(_DENSE_CACHE) > 64:
                    _DENSE_CACHE.clear()
                _DENSE_CACHE[key] = u
            y = u @ y
            meta["steps"] += 1
            record(i, y)
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(t, out, rec, meta)


def weak_drive_atol(basis: FewExcitationBasis, amplitude: float, rel_tol: float, scale: float = 1.0) -> np.ndarray:
    """Per-component absolute tolerance following the E^n size of sector n."""
    e = max(amplitude, 1e-300)
    return rel_tol * 1e-3 * scale * e ** basis.nexc.astype(float)


def total_hamiltonian(model: SpinModel, basis: FewExcitationBasis) -> SparseOperator:
    h = effective_hamiltonian(model, basis)
    if model.drive is not None and model.drive.amplitude != 0:
        h = h + drive_hamiltonian(model, basis)
    return h.tocsr()


# ---------------------------------------------------------------- steady state

def _sector_solve(a: sp.csr_matrix, rhs: np.ndarray, n: int, delta: float) -> np.ndarray:
    try:
        lu = spla.splu(a.tocsc())
        x = lu.solve(rhs)
    except RuntimeError:
        x = None
    ok = x is not None and np.all(np.isfinite(x))
    if ok:
        res = np.linalg.norm(a @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        ok = res < 1e-8
    if not ok:
        if a.shape[0] <= 2000:
            ev = la.eigvals(a.toarray())
        else:
            ev = spla.eigs(a, k=1, sigma=0, return_eigenvectors=False)
        worst = ev[np.argmin(np.abs(ev))]
        raise SingularSectorError(
            f"sector {n} of H_eff is singular at Delta={delta:g}: eigenvalue {worst:.3e} "
            "(undamped dark resonance)"
        )
    return x


def steady_state(
    model: SpinModel,
    basis: FewExcitationBasis,
    max_order: int = 2,
    method: str = "auto",
    pair_system: PairSystem | None = None,
) -> QuantumState:
    """Weak-drive steady state from the sector hierarchy -H_n psi_n = V psi_{n-1}."""
    if model.drive is None:
        raise MissingDriveError("steady_state needs a driven model")
    if max_order > basis.max_excitations:
        raise ValueError(f"max_order {max_order} exceeds basis truncation {basis.max_excitations}")
    if method == "auto":
        n2 = basis.sector(2).size if max_order == 2 else 0
        method = "pair" if max_order == 2 and n2 > 2000 else "direct"
    psi = np.zeros(basis.dim, dtype=complex)
    psi[0] = 1.0
    if method == "pair":
        if max_order != 2:
            raise ValueError("pair method solves exactly two orders")
        psi1, psi2, _ = solve_pair_amplitude(model, pair_system)
        psi[basis.sector_slice(1)] = psi1
        psi[basis.sector_slice(2)] = pair_to_basis(basis, psi2)
        return QuantumState(basis, psi)
    if method != "direct":
        raise ValueError(f"unknown steady-state method {method!r}")
    h = effective_hamiltonian(model, basis)
    v = drive_hamiltonian(model, basis)
    for n in range(1, max_order + 1):
        sl, prev = basis.sector_slice(n), basis.sector_slice(n - 1)
        rhs = -(v[sl, prev] @ psi[prev])
        psi[sl] = _sector_solve(h[sl, sl], rhs, n, model.detuning)
    return QuantumState(basis, psi)


def _apply_output(model, basis, psi, offset=None, op=None):
    if op is None:
        offset, op = output_field_operator(model, basis, "right")
    return offset * psi + op @ psi


def transmission_moments(state: QuantumState, model: SpinModel, weak_limit: bool = True) -> tuple[float, float]:
    """T1 = <b^dag b>/E^2 and T2 = <b^dag b^dag b b>/E^4 of the right-going output.

    With ``weak_limit`` only the lowest order in E is kept (the vacuum
    components of b|psi> and b b|psi>), i.e. the E -> 0 limit; otherwise the
    full expectation values in the truncated state are returned.
    """
    if model.drive is None or model.drive.amplitude == 0:
        raise MissingDriveError("transmission moments need a nonzero drive amplitude")
    e = model.drive.amplitude
    offset, op = output_field_operator(model, state.basis, "right")
    psi = state.amplitudes
    b1 = offset * psi + op @ psi
    b2 = offset * b1 + op @ b1
    if weak_limit:
        if psi[0] == 0:
            raise ValueError("state has no vacuum component; weak-drive limit undefined")
        return float(abs(b1[0] / psi[0]) ** 2 / e**2), float(abs(b2[0] / psi[0]) ** 2 / e**4)
    nrm = np.vdot(psi, psi).real
    t1 = np.vdot(b1, b1).real / nrm / e**2
    t2 = np.vdot(b2, b2).real / nrm / e**4
    return float(t1), float(t2)


def reflection_intensity(state: QuantumState, model: SpinModel) -> float:
    e = model.drive.amplitude
    _, op = output_field_operator(model, state.basis, "left")
    b = op @ state.amplitudes
    return float(np.vdot(b, b).real / np.vdot(state.amplitudes, state.amplitudes).real / e**2)


def peak_position(grid: Sequence[float], values: Sequence[float]) -> float:
    """Location of the maximum: vertex of the parabola through the three highest
    neighbouring points; ties resolve toward the smaller grid value."""
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size != y.size or x.size == 0:
        raise ValueError("grid and values must be nonempty and of equal length")
    i = int(np.argmax(y))
    if i == 0 or i == x.size - 1:
        return float(x[i])
    x0, x1, x2 = x[i - 1 : i + 2]
    y0, y1, y2 = y[i - 1 : i + 2]
    den = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / den
    if a >= 0:
        return float(x1)
    return float(np.clip(-b / (2 * a), x0, x2))


def g2_time(
    model: SpinModel,
    basis: FewExcitationBasis,
    tau_grid: Sequence[float],
    t_settle: float | None = None,
    rel_tol: float = 1e-8,
    method: str = "dense",
    drift_tol: float = 1e-6,
) -> ObservableSeries:
    """Detection-conditioned g2(tau) by Schrodinger-picture evolution.

    The state before the first detection is the weak-drive steady state, or
    the state evolved from vacuum for ``t_settle`` (checked for stationarity).
    """
    if model.drive is None or model.drive.amplitude == 0:
        raise MissingDriveError("g2 needs a nonzero drive")
    tau = np.asarray(tau_grid, dtype=float)
    h = total_hamiltonian(model, basis)
    offset, op = output_field_operator(model, basis, "right")

    def intensity(y):
        b = offset * y + op @ y
        return np.vdot(b, b).real / np.vdot(y, y).real

    if t_settle is None:
        psi = steady_state(model, basis, 2, method="direct").amplitudes
    else:
        times = np.array([0.0, 0.9 * t_settle, t_settle])
        atol = weak_drive_atol(basis, model.drive.amplitude, rel_tol)
        tr = evolve(h, basis.vacuum(), times, rel_tol, method="rk", atol=atol)
        i1, i2 = intensity(tr.states[1]), intensity(tr.states[2])
        drift = abs(i2 - i1) / max(i2, 1e-300)
        if drift > drift_tol:
            raise NonStationaryError(f"intensity drifts by {drift:.2e} (> {drift_tol:g}) near t_settle={t_settle:g}")
        psi = tr.states[-1]
    psi = psi / np.linalg.norm(psi)
    i0 = intensity(psi)
    phi = offset * psi + op @ psi
    grid = np.concatenate([[0.0], tau[tau > 0]]) if tau.size and tau[0] > 0 else tau
    if grid.size > 1:
        atol = weak_drive_atol(basis, model.drive.amplitude, rel_tol, scale=np.linalg.norm(phi))
        tr = evolve(h, phi, grid, rel_tol, method=method, atol=atol)
        states = tr.states
    else:
        states = phi[None, :]
    vals = np.array([np.vdot(b := offset * y + op @ y, b).real for y in states]) / i0**2
    if tau.size and tau[0] > 0:
        vals = vals[1:]
    return ObservableSeries("g2", tau, vals, {"source": "time", "intensity": i0, "rel_tol": rel_tol})


# ------------------------------------------------------------ spin waves

def gaussian_spin_wave(
    geometry: Geometry,
    sigma_p: float,
    mu: float,
    basis: FewExcitationBasis | None = None,
) -> QuantumState:
    """Single s-excitation with Gaussian envelope and carrier exp(i k z_j)."""
    if sigma_p <= 0:
        raise ValueError("sigma_p must be positive")
    z = geometry.z
    if mu - 3 * sigma_p < z[0] or mu + 3 * sigma_p > z[-1]:
        raise ValueError("Gaussian support (mu +/- 3 sigma_p) must lie inside the chain")
    if basis is None:
        basis = enumerate_basis(geometry.n_sites, LevelScheme(kind=EIT), 1)
    if basis.modes_per_site != 2:
        raise ValueError("spin waves live on the s mode; use an EIT basis")
    f = np.exp(1j * geometry.k_in * z) * np.exp(-((z - mu) ** 2) / (4 * sigma_p**2)) / (2 * np.pi * sigma_p**2) ** 0.25
    d = np.diff(z).mean() if z.size > 1 else 1.0
    lattice_norm = d * np.sum(np.abs(f) ** 2)
    if abs(lattice_norm - 1) > 0.05:
        warnings.warn(f"lattice normalization deviates from continuum by {abs(lattice_norm - 1):.1%}", stacklevel=2)
    f = f / np.linalg.norm(f)
    amp = np.zeros(basis.dim, dtype=complex)
    for j, fj in enumerate(f):
        amp[basis.index_of([basis.orbital(j, "s")])] = fj
    return QuantumState(basis, amp)


def polariton_populations(state: QuantumState | np.ndarray, basis: FewExcitationBasis | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-site (<sigma_ss>, <sigma_ee>) from squared amplitudes."""
    b = basis or state.basis
    amp = np.asarray(getattr(state, "amplitudes", state))
    p = np.abs(amp) ** 2
    m = b.modes_per_site
    n_orb = b.n_orbitals
    counts = np.zeros(n_orb + 1)
    for col in range(b.occ.shape[1]):
        np.add.at(counts, b.occ[:, col], p)
    counts = counts[:n_orb].reshape(b.site_count, m)
    ee = counts[:, 0]
    ss = counts[:, 1] if m == 2 else np.zeros(b.site_count)
    return ss, ee


# ---------------------------------------------------------------- Fock input

def fock_input_response(
    model: SpinModel,
    basis: FewExcitationBasis,
    n_photons: int,
    drive_momentum: float,
    t_final: float,
    radius_grid: Sequence[float] | None = None,
    phase_count: int | None = None,
    tol: float = 1e-4,
) -> np.ndarray:
    """Density matrix for an n-photon single-mode input from coherent-drive runs.

    rho_J(t) is computed on a polar grid of drive strengths J; the phase
    average isolates the |J|^(2m) terms of exp(|J|^2) rho_J and a polynomial
    fit in |J|^2 across radii returns the coefficient of order n, times n!.
    ``drive_momentum`` is the mode detuning from the atomic reference.
    """
    if not 0 <= n_photons <= 2:
        raise ValueError("n_photons must be 0, 1 or 2")
    if basis.max_excitations < n_photons:
        raise ValueError("basis must allow at least n_photons excitations")
    gamma = model.levels.gamma
    radii = np.asarray(radius_grid if radius_grid is not None else np.array([1e-4, 2e-4, 4e-4]) * gamma, dtype=float)
    if radii.size < n_photons + 1:
        raise ValueError("need at least n_photons + 1 radii")
    nph = phase_count or 4 * (n_photons + 1)
    base = model.with_drive(0.0, drive_momentum)
    l0 = liouvillian_matrix(base, basis, include_drive=False)
    w = np.zeros(basis.n_orbitals, dtype=complex)
    w[base.a_orbitals()] = np.exp(1j * base.geometry.k_in * base.geometry.z)
    up = raising_operator(basis, w)
    eye = sp.identity(basis.dim, dtype=complex, format="csr")

    def comm(a):
        return -1j * (sp.kron(a, eye) - sp.kron(eye, a.T))

    s_up, s_dn = comm(up), comm(up.conj().T.tocsr())
    rho0 = np.zeros((basis.dim, basis.dim), dtype=complex)
    rho0[0, 0] = 1.0
    if n_photons == 0:
        return spla.expm_multiply((l0 * t_final).tocsc(), rho0.ravel()).reshape(rho0.shape)
    thetas = 2 * np.pi * np.arange(nph) / nph
    samples = []
    for r in radii:
        acc = np.zeros(basis.dim**2, dtype=complex)
        for th in thetas:
            j = r * np.exp(1j * th)
            gen = (l0 + j * s_up + np.conj(j) * s_dn) * t_final
            acc += spla.expm_multiply(gen.tocsc(), rho0.ravel())
        samples.append(np.exp(r**2) * acc / nph)
    samples = np.array(samples)
    x = radii**2
    vander = np.vander(x, x.size, increasing=True)
    coef = la.solve(vander, samples)
    rho = factorial(n_photons) * coef[n_photons]
    if x.size > n_photons + 1:
        coef_b = la.lstsq(vander[:-1, :-1], samples[:-1])[0]
        alt = factorial(n_photons) * coef_b[n_photons]
        err = np.abs(alt - rho).max() / max(np.abs(rho).max(), 1e-300)
        if err > tol:
            raise ExtractionError(f"order-{n_photons} extraction not converged: relative residual {err:.1e} > {tol:g}")
    return rho.reshape(basis.dim, basis.dim)


# ---------------------------------------------------- regression-theorem check

def vacuum_correlator(
    model: SpinModel,
    basis: FewExcitationBasis,
    operators: Sequence[SparseOperator],
    gaps: Sequence[float],
    method: str = "effective",
) -> complex:
    """Time-ordered vacuum correlator <O_1 e(g_1) O_2 ... e(g_{n-1}) O_n> (latest first).

    ``effective`` propagates the pure state with exp(-i H_eff g);
    ``liouvillian`` left-multiplies the density matrix and propagates with the
    full master-equation generator, then takes the trace.
    """
    ops = list(operators)
    if len(gaps) != len(ops) - 1:
        raise ValueError("need one gap between consecutive operators")
    undriven = SpinModel(model.geometry, model.levels, model.interaction, None)
    if method == "effective":
        h = effective_hamiltonian(undriven, basis).toarray()
        y = basis.vacuum()
        y = ops[-1] @ y
        for op, g in zip(reversed(ops[:-1]), reversed(list(gaps))):
            y = la.expm(-1j * h * g) @ y
            y = op @ y
        return complex(y[0])
    if method == "liouvillian":
        lm = liouvillian_matrix(undriven, basis, include_drive=False).toarray()
        rho = np.zeros((basis.dim, basis.dim), dtype=complex)
        rho[0, 0] = 1.0
        rho = ops[-1] @ rho
        for op, g in zip(reversed(ops[:-1]), reversed(list(gaps))):
            rho = (la.expm(lm * g) @ rho.ravel()).reshape(rho.shape)
            rho = op @ rho
        return complex(np.trace(rho))
    raise ValueError(f"unknown method {method!r}")
