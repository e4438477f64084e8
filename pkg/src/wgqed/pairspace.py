"""Two-excitation steady state as a symmetric pair amplitude.

For the weak-drive hierarchy the two-excitation sector solves

    h Psi + Psi h^T + U o Psi = -(v psi1^T + psi1 v^T)

on the pairs allowed by the hardcore constraint.  The operator is applied
matrix-free and GMRES is preconditioned by the exact non-interacting
inverse, which is diagonal in the eigenbasis of h.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .model import SpinModel, drive_vector, one_body_matrix

log = logging.getLogger(__name__)


class PairSolveError(ArithmeticError):
    """GMRES did not reach the requested residual."""


@dataclass(frozen=True, eq=False)
class PairSystem:
    """Detuning-independent data: h(Delta) = h0 - Delta * 1 shares eigenvectors with h0."""

    h0: np.ndarray
    evals0: np.ndarray
    vecs: np.ndarray
    vecs_inv: np.ndarray
    mask: np.ndarray
    u: np.ndarray

    @classmethod
    def from_model(cls, model: SpinModel) -> "PairSystem":
        h0 = one_body_matrix(model, detuning=0.0)
        evals, vecs = la.eig(h0)
        m = model.levels.modes_per_site
        n_orb = model.n_orbitals
        site = np.arange(n_orb) // m
        same = site[:, None] == site[None, :]
        inter = model.interaction
        mode = model.interacting_mode
        u = np.zeros((n_orb, n_orb))
        ic = np.arange(model.n_sites) * m + mode
        u[np.ix_(ic, ic)] = inter.u_ss
        if inter.hardcore:
            mask = (~same).astype(float)
        else:
            mask = np.ones((n_orb, n_orb))
            u = u + np.where(same, inter.u0, 0.0)
        return cls(h0, evals, vecs, la.inv(vecs), mask, u * mask)


def solve_pair_amplitude(model: SpinModel, system: PairSystem | None = None, rtol: float = 1e-12,
                         maxiter: int = 2000) -> tuple[np.ndarray, np.ndarray, dict]:
    """Return (psi1, Psi, info) for the model's drive; psi1 is the one-excitation amplitude."""
    ps = system or PairSystem.from_model(model)
    delta = model.detuning
    n = ps.h0.shape[0]
    h = ps.h0 - delta * np.eye(n)
    lam = ps.evals0 - delta
    v = drive_vector(model)
    psi1 = la.solve(-h, v)
    src = np.outer(v, psi1)
    b = -(ps.mask * (src + src.T))
    den = lam[:, None] + lam[None, :]
    vi, vv, mask, u = ps.vecs_inv, ps.vecs, ps.mask, ps.u

    def apply(x):
        p = x.reshape(n, n)
        return (mask * (h @ p + p @ h.T + u * p)).ravel()

    def precond(x):
        r = x.reshape(n, n)
        y = (vi @ r @ vi.T) / den
        return (mask * (vv @ y @ vv.T)).ravel()

    scale = np.linalg.norm(b)
    if scale == 0:
        return psi1, np.zeros((n, n), dtype=complex), {"iterations": 0, "residual": 0.0}
    op = spla.LinearOperator((n * n, n * n), apply, dtype=complex)
    pre = spla.LinearOperator((n * n, n * n), precond, dtype=complex)
    count = [0]

    def cb(_):
        count[0] += 1

    x, status = spla.gmres(op, (b / scale).ravel(), M=pre, rtol=rtol, atol=0.0, restart=200,
                           maxiter=maxiter, callback=cb, callback_type="pr_norm")
    x = x * scale
    res = np.linalg.norm(apply(x) - b.ravel()) / scale
    if status != 0 and res > 1e3 * rtol:
        raise PairSolveError(f"GMRES stopped with status {status}, relative residual {res:.2e}")
    psi2 = x.reshape(n, n)
    psi2 = 0.5 * (psi2 + psi2.T)
    log.debug("pair solve: %d iterations, residual %.2e", count[0], res)
    return psi1, psi2, {"iterations": count[0], "residual": float(res)}


def pair_to_basis(basis, psi2: np.ndarray) -> np.ndarray:
    """Basis amplitudes of the two-excitation sector from the symmetric pair amplitude."""
    sl = basis.sector_slice(2)
    occ = basis.occ[sl, :2]
    amp = psi2[occ[:, 0], occ[:, 1]].astype(complex)
    same = occ[:, 0] == occ[:, 1]
    amp[same] /= np.sqrt(2.0)
    return amp
