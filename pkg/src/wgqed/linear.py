"""Linear-optics oracles: transfer matrices, EIT parameters and simple T2 estimates."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .hilbert import EIT, LevelScheme
from .model import SpinModel, one_body_matrix, output_weights

log = logging.getLogger(__name__)


class RegimeWarning(UserWarning):
    """Estimate requested outside the detuning regime it is built for."""


@dataclass(frozen=True)
class EITParameters:
    optical_depth: float
    group_velocity: float
    bandwidth: float
    min_pulse_length: float


def susceptibility(levels: LevelScheme, delta: float) -> complex:
    """Linear susceptibility in arbitrary units; ``delta`` is the probe detuning."""
    g = levels.gamma
    if levels.kind == EIT:
        dd = delta - levels.delta_L
        return complex(dd / ((delta + 0.5j * g) * dd - levels.rabi**2))
    return complex(1.0 / (delta + 0.5j * g))


def effective_detuning(levels: LevelScheme, delta: float) -> complex:
    if levels.kind == EIT:
        return delta - levels.rabi**2 / (delta - levels.delta_L)
    return delta


def single_atom_reflection(levels: LevelScheme, delta: float) -> complex:
    """beta = -i (Gamma_1D/2) / (delta_eff + i Gamma/2)."""
    g1, g = levels.gamma_1d, levels.gamma
    if levels.kind == EIT and levels.rabi > 0:
        # multiplied through by (delta - delta_L): no overflow near two-photon resonance, beta = 0 on it
        dd = delta - levels.delta_L
        return complex(-0.5j * g1 * dd / ((delta + 0.5j * g) * dd - levels.rabi**2))
    return complex(-0.5j * g1 / (delta + 0.5j * g))


def atom_transfer_matrix(levels: LevelScheme, delta: float) -> np.ndarray:
    """Maps (right, left) amplitudes across one atom: t = 1 + beta, r = beta."""
    b = single_atom_reflection(levels, delta)
    t, r = 1 + b, b
    return np.array([[t * t - r * r, r], [-r, 1]], dtype=complex) / t


def free_transfer_matrix(k: float, d: float) -> np.ndarray:
    return np.diag([np.exp(1j * k * d), np.exp(-1j * k * d)])


def chain_transfer_matrix(model: SpinModel, detuning: float) -> np.ndarray:
    """Full-chain transfer matrix; singular (inf) when an atom reflects perfectly."""
    lv = model.levels
    delta = detuning + (lv.delta_L if lv.kind == EIT else 0.0)
    z = model.geometry.z
    k = model.geometry.k_in
    m = np.eye(2, dtype=complex)
    ma = atom_transfer_matrix(lv, delta)
    for j in range(z.size):
        if j:
            m = free_transfer_matrix(k, z[j] - z[j - 1]) @ m
        m = ma @ m
    return m


def _scaled_chain_product(model: SpinModel, detuning: float) -> tuple[np.ndarray, complex, float]:
    """Product of the per-atom matrices t*M (never singular) with running rescaling.

    Returns (P, t_atom, log_scale) with M_chain = P * exp(log_scale) / t_atom**N.
    """
    lv = model.levels
    delta = detuning + (lv.delta_L if lv.kind == EIT else 0.0)
    b = single_atom_reflection(lv, delta)
    t, r = 1 + b, b
    cell = np.array([[t * t - r * r, r], [-r, 1]], dtype=complex)
    z = model.geometry.z
    k = model.geometry.k_in
    p = np.eye(2, dtype=complex)
    log_scale = 0.0
    for j in range(z.size):
        if j:
            p = free_transfer_matrix(k, z[j] - z[j - 1]) @ p
        p = cell @ p
        s = np.abs(p).max()
        p /= s
        log_scale += np.log(s)
    return p, t, log_scale


def chain_spectrum(model: SpinModel, detuning_grid) -> tuple[np.ndarray, np.ndarray]:
    """(r, t) over a grid of drive-frame detunings Delta = delta - delta_L.

    r is referenced to the first atom; the free propagation phase across
    the chain is removed from t.
    """
    grid = np.atleast_1d(np.asarray(detuning_grid, dtype=float))
    z = model.geometry.z
    span = z[-1] - z[0] if z.size else 0.0
    rs, ts = [], []
    for w in grid:
        p, ta, log_scale = _scaled_chain_product(model, w)
        rs.append(-p[1, 0] / p[1, 1])
        # det(M) = 1, so t = 1/M22 = t_atom^N / P22 (a perfect mirror gives t = 0 exactly)
        if ta == 0 and z.size:
            ts.append(0j)
            continue
        mag = np.exp(z.size * np.log(abs(ta)) - log_scale) / abs(p[1, 1])
        phase = np.exp(1j * (z.size * np.angle(ta) - np.angle(p[1, 1]) - model.geometry.k_in * span))
        ts.append(mag * phase)
    return np.array(rs), np.array(ts)


def eit_parameters(model: SpinModel, total_linewidth: float | None = None) -> EITParameters:
    """Optical depth, group velocity, bandwidth and minimum pulse length.

    ``total_linewidth`` overrides Gamma in D and Delta_EIT only.
    """
    lv = model.levels
    if lv.kind != EIT:
        raise ValueError("EIT parameters need a three-level scheme")
    g = lv.gamma if total_linewidth is None else float(total_linewidth)
    z = model.geometry.z
    d = float(np.mean(np.diff(z))) if z.size > 1 else 1.0
    depth = model.n_sites * 2 * lv.gamma_1d / g
    bandwidth = 2 * lv.rabi**2 / (g * np.sqrt(depth))
    vg = 2 * lv.rabi**2 * d / lv.gamma_1d
    return EITParameters(depth, vg, bandwidth, vg / bandwidth)


# ------------------------------------------------------- Bloch-mode transport

def bloch_reflection(cos_qd, kd: float) -> np.ndarray:
    """Single-atom reflection beta that supports Bloch wavevector q.

    Inverts cos(qd) = cos(kd) + i beta sin(kd) / (1 + beta).
    """
    c = np.asarray(cos_qd, dtype=complex) - np.cos(kd)
    return c / (1j * np.sin(kd) - c)


def propagate_spin_wave(model: SpinModel, s0: np.ndarray, t: float) -> np.ndarray:
    """Predicted s amplitudes after time t from the lattice dispersion relation.

    Each Fourier component evolves under the 2x2 (a, s) problem whose a
    energy reproduces the Bloch condition of the transfer matrix.
    """
    lv = model.levels
    if lv.kind != EIT:
        raise ValueError("spin-wave transport needs a three-level scheme")
    z = model.geometry.z
    d = float(np.mean(np.diff(z)))
    n = z.size
    q = 2 * np.pi * np.fft.fftfreq(n, d)
    fq = np.fft.fft(np.asarray(s0, dtype=complex))
    beta = bloch_reflection(np.cos(q * d), model.geometry.k_in * d)
    om2 = lv.rabi**2
    out = np.empty(n, dtype=complex)
    for i in range(n):
        if abs(beta[i]) < 1e-14:
            out[i] = fq[i]
            continue
        e = -0.5j * lv.gamma_1d / beta[i] - lv.delta_L - 0.5j * lv.gamma
        root = np.sqrt(e * e + 4 * om2)
        wp = 0.5 * (e + root) if abs(e + root) >= abs(e - root) else 0.5 * (e - root)
        wm = -om2 / wp
        # s-s element of exp(-i M t) for M = [[e, Omega], [Omega, 0]]
        out[i] = fq[i] * (wp * np.exp(-1j * wm * t) - wm * np.exp(-1j * wp * t)) / (wp - wm)
    return np.fft.ifft(out)


# ----------------------------------------------- two-photon transmission estimates

def t2_estimate_small_detuning(t1: float) -> float:
    """Second photon crosses half the medium on average: T2 ~ sqrt(T1)."""
    if t1 < 0:
        raise ValueError("T1 must be nonnegative")
    return float(np.sqrt(t1))


def _single_excitation_profile(model: SpinModel, delta: float) -> np.ndarray:
    h = one_body_matrix(model, detuning=delta)
    v = np.zeros(model.n_orbitals, dtype=complex)
    v[model.a_orbitals()] = np.exp(1j * model.geometry.k_in * model.geometry.z)
    return la.solve(-h, v)


def localized_photon_output(model: SpinModel, delta: float, times: np.ndarray) -> np.ndarray:
    """Transmitted intensity of the unit-drive steady-state profile at ``delta``
    released into the medium tuned to transparency (Delta = 0)."""
    psi0 = _single_excitation_profile(model, delta)
    h0 = one_body_matrix(model, detuning=0.0)
    lam, r = la.eig(h0)
    c = la.solve(r, psi0)
    beta = output_weights(model, "right")
    amp = (beta @ r) * c
    return np.abs(np.exp(-1j * np.outer(times, lam)) @ amp) ** 2


def t2_estimate_large_detuning(model: SpinModel, delta: float, times: np.ndarray | None = None) -> float:
    """Twice the peak transmitted probability of the localized single excitation.

    The prompt transient near t = 0 rings for a few 1/Gamma, so the peak is
    searched only after half the group delay L / (2 v_g), i.e. at the
    arrival of the pulse (after 10/Gamma without EIT).
    """
    lv = model.levels
    eit = lv.kind == EIT and lv.rabi > 0
    if eit:
        bw = eit_parameters(model).bandwidth
        if delta < bw:
            warnings.warn(f"delta={delta:g} is below Delta_EIT={bw:.3g}; large-detuning estimate is outside its regime",
                          RegimeWarning, stacklevel=2)
    z = model.geometry.z
    span = z[-1] - z[0] + 1.0
    delay = span / eit_parameters(model).group_velocity if eit else 0.0
    if times is None:
        times = np.linspace(0, 4 * delay + 20 / lv.gamma, 4000)
    times = np.asarray(times, dtype=float)
    start = max(delay / 2, 0.0 if eit else 10 / lv.gamma)
    late = times >= start
    if not late.any():
        raise ValueError(f"time grid ends before t = {start:.3g}, where the pulse arrival is searched")
    out = localized_photon_output(model, delta, times[late])
    return float(2 * out.max())


def t2_estimates(model: SpinModel, delta: float, t1: float) -> dict:
    """Both estimates with a regime tag; warns when delta sits on the other side."""
    bw = eit_parameters(model).bandwidth
    regime = "small" if delta < bw else "large"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        large = t2_estimate_large_detuning(model, delta)
    return {"regime": regime, "bandwidth": bw, "small": t2_estimate_small_detuning(t1), "large": large,
            "estimate": t2_estimate_small_detuning(t1) if regime == "small" else large}
