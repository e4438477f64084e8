"""Few-excitation Hilbert spaces over a chain of atoms and elementary operators on them.

Each site carries one bosonic mode (two-level atom, mode ``a``) or two
(three-level EIT atom, modes ``a`` and ``s``).  Orbital ``site * m + mode``
indexes the modes; a configuration is the sorted tuple of occupied orbitals.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels

log = logging.getLogger(__name__)

TWO_LEVEL = "two_level"
EIT = "eit"
DEFAULT_DIM_CAP = 500_000

SparseOperator = sp.csr_matrix


class BasisTooLargeError(ValueError):
    """Requested basis exceeds the configured dimension cap."""


class ModeError(ValueError):
    """Mode name not available for the level scheme."""


@dataclass(frozen=True)
class LevelScheme:
    kind: str = TWO_LEVEL
    gamma_1d: float = 1.0
    gamma_prime: float = 0.0
    rabi: float = 0.0
    delta_L: float = 0.0

    def __post_init__(self):
        if self.kind not in (TWO_LEVEL, EIT):
            raise ValueError(f"unknown level scheme kind {self.kind!r}; use {TWO_LEVEL!r} or {EIT!r}")
        if not self.gamma_1d > 0:
            raise ValueError("gamma_1d must be > 0")
        if self.gamma_prime < 0:
            raise ValueError("gamma_prime must be >= 0")
        if self.rabi < 0:
            raise ValueError("rabi must be >= 0")

    @property
    def gamma(self) -> float:
        return self.gamma_1d + self.gamma_prime

    @property
    def modes(self) -> tuple[str, ...]:
        return ("a",) if self.kind == TWO_LEVEL else ("a", "s")

    @property
    def modes_per_site(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class Geometry:
    positions: tuple[float, ...]
    k_in: float = np.pi / 2

    def __post_init__(self):
        z = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", tuple(float(x) for x in z))
        if z.size > 1 and np.any(np.diff(z) <= 0):
            raise ValueError("positions must be strictly increasing")

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def z(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)

    @classmethod
    def lattice(cls, n_sites: int, spacing: float = 1.0, phase: float = np.pi / 2) -> "Geometry":
        """Regular chain z_j = j*d with k_in*d = phase."""
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        return cls(tuple(np.arange(n_sites) * spacing), k_in=phase / spacing)


@dataclass(frozen=True, eq=False)
class FewExcitationBasis:
    """Ordered configurations with at most ``max_excitations`` quanta.

    ``occ[k]`` holds the sorted occupied orbitals of state k, padded with
    ``n_orbitals``; ``nexc[k]`` is its excitation number.
    """

    site_count: int
    modes_per_site: int
    max_excitations: int
    hardcore: bool
    occ: np.ndarray
    nexc: np.ndarray
    _skeys: np.ndarray = field(repr=False)
    _perm: np.ndarray = field(repr=False)

    @property
    def n_orbitals(self) -> int:
        return self.site_count * self.modes_per_site

    @property
    def dim(self) -> int:
        return self.occ.shape[0]

    @property
    def site_of(self) -> np.ndarray:
        return np.arange(self.n_orbitals, dtype=np.int64) // self.modes_per_site

    @property
    def states(self) -> list[tuple[int, ...]]:
        m = self.n_orbitals
        return [tuple(int(o) for o in row if o < m) for row in self.occ]

    def index_of(self, config: Sequence[int]) -> int:
        cfg = sorted(int(c) for c in config)
        if len(cfg) > self.max_excitations or any(c < 0 or c >= self.n_orbitals for c in cfg):
            raise KeyError(tuple(cfg))
        row = np.full((1, self.max_excitations), self.n_orbitals, dtype=np.int64)
        row[0, : len(cfg)] = cfg
        key = _kernels.config_keys(row, self.n_orbitals)[0]
        i = np.searchsorted(self._skeys, key)
        if i >= len(self._skeys) or self._skeys[i] != key:
            raise KeyError(tuple(cfg))
        return int(self._perm[i])

    def orbital(self, site: int, mode: str = "a") -> int:
        modes = ("a",) if self.modes_per_site == 1 else ("a", "s")
        if mode not in modes:
            raise ModeError(f"mode {mode!r} not available; valid modes are {modes}")
        if not 0 <= site < self.site_count:
            raise IndexError(f"site {site} out of range for {self.site_count} sites")
        return site * self.modes_per_site + modes.index(mode)

    def sector(self, n: int) -> np.ndarray:
        """Indices of the n-excitation states (contiguous by construction)."""
        return np.nonzero(self.nexc == n)[0]

    def sector_slice(self, n: int) -> slice:
        idx = self.sector(n)
        if idx.size == 0:
            return slice(0, 0)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v


def basis_dimension(n_sites: int, modes_per_site: int, max_excitations: int, hardcore: bool = True) -> int:
    """Closed-form dimension of the enumerated basis."""
    if hardcore:
        return sum(comb(n_sites, i) * modes_per_site**i for i in range(max_excitations + 1))
    m = n_sites * modes_per_site
    if m == 0:
        return 1
    return sum(comb(m + i - 1, i) for i in range(max_excitations + 1))


def enumerate_basis(
    n_sites: int,
    levels: LevelScheme,
    max_excitations: int,
    hardcore: bool = True,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> FewExcitationBasis:
    """Enumerate configurations ordered by excitation number, then lexicographically."""
    if n_sites < 0:
        raise ValueError("n_sites must be >= 0")
    if max_excitations < 0:
        raise ValueError("max_excitations must be >= 0")
    m = levels.modes_per_site
    if hardcore:
        max_excitations = min(max_excitations, n_sites)
    dim = basis_dimension(n_sites, m, max_excitations, hardcore)
    if dim > dim_cap:
        raise BasisTooLargeError(
            f"basis dimension {dim} exceeds cap {dim_cap} (N={n_sites}, n_max={max_excitations}); "
            "raise dim_cap to override"
        )
    n_orb = n_sites * m
    if (n_orb + 1) ** max(max_excitations, 1) >= 2**62:
        raise BasisTooLargeError("configuration keys would overflow int64")
    occ = np.full((dim, max_excitations), n_orb, dtype=np.int64)
    nexc = np.zeros(dim, dtype=np.int64)
    row = 1
    for n in range(1, max_excitations + 1):
        if hardcore:
            # distinct sites, one mode per occupied site; sorted lexicographically below
            block = [
                tuple(s * m + md for s, md in zip(sites, mds))
                for sites in itertools.combinations(range(n_sites), n)
                for mds in itertools.product(range(m), repeat=n)
            ]
        else:
            block = list(itertools.combinations_with_replacement(range(n_orb), n))
        arr = np.asarray(block, dtype=np.int64).reshape(len(block), n)
        if hardcore and n > 1:
            order = np.lexsort(arr.T[::-1])
            arr = arr[order]
        occ[row : row + len(arr), :n] = arr
        nexc[row : row + len(arr)] = n
        row += len(arr)
    keys = _kernels.config_keys(occ, n_orb)
    perm = np.argsort(keys, kind="stable")
    log.debug("enumerated basis N=%d m=%d n_max=%d dim=%d", n_sites, m, max_excitations, dim)
    return FewExcitationBasis(n_sites, m, max_excitations, hardcore, occ, nexc, keys[perm], perm)


def _csr(rows, cols, vals, dim) -> SparseOperator:
    op = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    op.sum_duplicates()
    op.eliminate_zeros()
    return op


def one_body_operator(basis: FewExcitationBasis, h: np.ndarray) -> SparseOperator:
    """Second-quantized sum_pq h[p, q] c_p^dag c_q restricted to the basis."""
    h = np.asarray(h, dtype=complex)
    if h.shape != (basis.n_orbitals, basis.n_orbitals):
        raise ValueError(f"one-body matrix must be {basis.n_orbitals}x{basis.n_orbitals}")
    csc = sp.csc_matrix(h)
    csc.eliminate_zeros()
    rows, cols, vals = _kernels.hop_coo(
        basis.occ,
        basis._skeys,
        basis._perm,
        csc.indptr.astype(np.int64),
        csc.indices.astype(np.int64),
        csc.data.astype(complex),
        basis.site_of,
        basis.hardcore,
        basis.n_orbitals,
    )
    return _csr(rows, cols, vals, basis.dim)


def lowering_operator(basis: FewExcitationBasis, weights: np.ndarray) -> SparseOperator:
    """sum_q w_q c_q; maps sector n to sector n-1."""
    w = np.asarray(weights, dtype=complex)
    if w.shape != (basis.n_orbitals,):
        raise ValueError("weights must have one entry per orbital")
    rows, cols, vals = _kernels.lower_coo(basis.occ, basis._skeys, basis._perm, w, basis.n_orbitals)
    return _csr(rows, cols, vals, basis.dim)


def raising_operator(basis: FewExcitationBasis, weights: np.ndarray) -> SparseOperator:
    """sum_p w_p c_p^dag, truncated at ``max_excitations`` and hardcore-projected."""
    return lowering_operator(basis, np.conj(weights)).conj().T.tocsr()


def _mode_orbital(basis: FewExcitationBasis, site: int, mode: str) -> int:
    return basis.orbital(site, mode)


def transition_operator(basis: FewExcitationBasis, site: int, from_mode: str, to_mode: str) -> SparseOperator:
    """Operator moving one quantum on ``site`` from ``from_mode`` to ``to_mode``.

    ``"vacuum"`` as ``from_mode`` gives the raising operator of ``to_mode`` and
    as ``to_mode`` the lowering operator of ``from_mode``.
    """
    n = basis.n_orbitals
    if from_mode == "vacuum" and to_mode == "vacuum":
        raise ModeError("from_mode and to_mode cannot both be 'vacuum'")
    if from_mode == "vacuum":
        w = np.zeros(n, dtype=complex)
        w[_mode_orbital(basis, site, to_mode)] = 1.0
        return raising_operator(basis, w)
    if to_mode == "vacuum":
        w = np.zeros(n, dtype=complex)
        w[_mode_orbital(basis, site, from_mode)] = 1.0
        return lowering_operator(basis, w)
    h = np.zeros((n, n), dtype=complex)
    h[_mode_orbital(basis, site, to_mode), _mode_orbital(basis, site, from_mode)] = 1.0
    return one_body_operator(basis, h)


def number_operator(basis: FewExcitationBasis, site: int | None = None, mode: str | None = None) -> SparseOperator:
    """Diagonal occupation count, optionally restricted to one site and/or mode."""
    n = basis.n_orbitals
    mask = np.ones(n, dtype=bool)
    if site is not None:
        mask &= basis.site_of == site
    if mode is not None:
        modes = ("a",) if basis.modes_per_site == 1 else ("a", "s")
        if mode not in modes:
            raise ModeError(f"mode {mode!r} not available; valid modes are {modes}")
        mask &= np.arange(n) % basis.modes_per_site == modes.index(mode)
    padded = np.append(mask, False)
    counts = padded[basis.occ].sum(axis=1)
    return sp.diags(counts.astype(complex)).tocsr()


def expectation_value(op: SparseOperator, state) -> complex:
    """<psi|O|psi> for a state object or a raw amplitude vector."""
    psi = np.asarray(getattr(state, "amplitudes", state), dtype=complex)
    if op.shape != (psi.size, psi.size):
        raise ValueError(f"dimension mismatch: operator {op.shape}, state {psi.size}")
    return complex(np.vdot(psi, op @ psi))
