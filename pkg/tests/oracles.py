"""Independent reference computations used by the test-suite.

Nothing here imports the package's solvers; each oracle rebuilds what it
needs from explicit tensor products or brute-force numerics.
"""
from __future__ import annotations

import itertools
from math import comb

import numpy as np
import scipy.linalg as la
from scipy.integrate import simpson


# ------------------------------------------------------------- closed forms

def single_atom_transmission(delta, gamma_1d, gamma_prime=0.0):
    """Bidirectional two-level atom: t = (delta + i G'/2) / (delta + i G/2)."""
    g = gamma_1d + gamma_prime
    return (delta + 0.5j * gamma_prime) / (delta + 0.5j * g)


def hardcore_dimension(n_sites, modes, n_max):
    return sum(comb(n_sites, i) * modes**i for i in range(min(n_max, n_sites) + 1))


# ---------------------------------------------------- explicit tensor products

def site_operators(n_sites, levels=2):
    """Lowering operators |g><x| for each excited level x on each site of a
    full (levels**N)-dimensional product space; level 0 is the ground state."""
    eye = np.eye(levels)
    ops = []
    for j in range(n_sites):
        per = []
        for x in range(1, levels):
            loc = np.zeros((levels, levels))
            loc[0, x] = 1.0
            mats = [eye] * n_sites
            mats[j] = loc
            m = mats[0]
            for q in mats[1:]:
                m = np.kron(m, q)
            per.append(m)
        ops.append(per)
    return ops


def embedding(states, n_sites, levels):
    """Isometry from configuration tuples (orbital = site*(levels-1) + mode)
    into the full product space, site 0 most significant."""
    emb = np.zeros((levels**n_sites, len(states)))
    for i, cfg in enumerate(states):
        digits = [0] * n_sites
        for o in cfg:
            digits[o // (levels - 1)] = o % (levels - 1) + 1
        emb[int("".join(map(str, digits)), levels) if n_sites else 0, i] = 1.0
    return emb


def excitation_number(n_sites, levels=2):
    occ = np.array([sum(1 for d in digits if d) for digits in itertools.product(range(levels), repeat=n_sites)])
    return occ


def full_space_heff(z, k, gamma_1d, gamma_prime=0.0, detuning=0.0, rabi=0.0, delta_l=0.0, u=None, eit=False):
    """Effective Hamiltonian on the full product space of N atoms."""
    n = len(z)
    levels = 3 if eit else 2
    ops = site_operators(n, levels)
    dim = levels**n
    h = np.zeros((dim, dim), dtype=complex)
    a = [o[0] for o in ops]
    for i in range(n):
        h += -(delta_l + detuning + 0.5j * gamma_prime) * a[i].T @ a[i]
        for j in range(n):
            h += -0.5j * gamma_1d * np.exp(1j * k * abs(z[i] - z[j])) * a[i].T @ a[j]
    if eit:
        s = [o[1] for o in ops]
        for i in range(n):
            h += -detuning * s[i].T @ s[i]
            h += -rabi * (a[i].T @ s[i] + s[i].T @ a[i])
        inter = s
    else:
        inter = a
    if u is not None:
        for i in range(n):
            for j in range(n):
                if i != j:
                    h += 0.5 * u[i, j] * inter[i].T @ inter[j].T @ inter[j] @ inter[i]
    return h, ops


# ------------------------------------------------------------- pair space

def brute_pair_propagator(h1, energy):
    """(E - H1 (x) 1 - 1 (x) H1)^-1 on the full product space."""
    m = h1.shape[0]
    h2 = np.kron(h1, np.eye(m)) + np.kron(np.eye(m), h1)
    return la.inv(energy * np.eye(m * m) - h2)


# ------------------------------------------------ time-domain kernel oracle

def _gap_integral(rate, eta, length=None, points=200_001):
    """int_0^inf exp(rate g - eta g) dg by Simpson quadrature on a fine grid."""
    decay = eta - rate.real
    if decay <= 0:
        raise ValueError("integrand does not decay")
    length = length or 40.0 / decay
    g = np.linspace(0.0, length, points)
    return simpson(np.exp((rate - eta) * g), x=g)


def time_domain_kernel(k, p, gamma, omega_eg=0.0, etas=(0.08, 0.04, 0.02, 0.01, 0.005)):
    """Connected two-photon kernel of a two-level atom in a one-way guide.

    Fourier transforms the time-ordered correlator
    <T s-(t2) s-(t1) s+(t2') s+(t1')> under H = (w_eg - i G/2) s_ee over
    the three relative times (the fourth gives 2 pi delta).  Every time
    ordering is enumerated, the correlator is evaluated from matrix
    exponentials, each gap is integrated numerically with a damping
    exp(-eta g), and eta -> 0 is reached by Richardson extrapolation.
    """
    k = np.asarray(k, float)
    p = np.asarray(p, float)
    h = np.diag([0.0, omega_eg - 0.5j * gamma])
    lam, vec = la.eig(h)
    vinv = la.inv(vec)
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    sp_ = sm.T.copy()
    # operator list: (matrix, frequency sign); exp(i p t) for s-, exp(-i k t) for s+
    ops = [(sm, p[0]), (sm, p[1]), (sp_, -k[0]), (sp_, -k[1])]

    def integral(eta):
        total = 0j
        for order in itertools.permutations(range(4)):
            mats = [ops[i][0] for i in order]
            freqs = np.array([ops[i][1] for i in order])
            # gap m sits after operator m (latest first); its phase collects the
            # frequencies of all operators earlier in time
            q = np.array([-freqs[m + 1 :].sum() for m in range(3)])
            # spectral resolution of exp(-i H g) between operators
            vac = np.array([1.0, 0.0])
            for path in itertools.product(range(2), repeat=3):
                amp = vac @ mats[0] @ vec[:, path[0]]
                for m in range(3):
                    nxt = vinv[path[m]] @ mats[m + 1]
                    if m < 2:
                        amp *= nxt @ vec[:, path[m + 1]]
                    else:
                        amp *= nxt @ vac
                if amp == 0:
                    continue
                fac = 1.0 + 0j
                for m in range(3):
                    fac *= _gap_integral(1j * q[m] - 1j * lam[path[m]], eta)
                total += amp * fac
        return total

    vals = np.array([integral(e) for e in etas])
    ex = np.array(etas, dtype=float)
    # Neville extrapolation to eta = 0
    table = vals.copy()
    for lvl in range(1, len(ex)):
        table[: len(ex) - lvl] = (ex[lvl:] * table[: len(ex) - lvl] - ex[: len(ex) - lvl] * table[1 : len(ex) - lvl + 1]) / (
            ex[lvl:] - ex[: len(ex) - lvl]
        )
    i0 = table[0]
    return (-gamma) ** 2 / (2 * np.pi) ** 2 * 2 * np.pi * i0
