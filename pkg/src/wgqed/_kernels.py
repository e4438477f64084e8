"""Hot loops for building second-quantized operators on a few-excitation basis.

Configurations are stored as rows of sorted orbital indices, padded with the
sentinel ``M`` (number of orbitals).  Two implementations of each kernel are
kept side by side: a numba version and a vectorized numpy version.  Setting
``WGQED_NO_NUMBA=1`` in the environment selects the numpy path.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("WGQED_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

__all__ = [
    "HAS_NUMBA",
    "USE_NUMBA",
    "config_keys",
    "hop_coo",
    "lower_coo",
    "hop_coo_numpy",
    "lower_coo_numpy",
    "hop_coo_numba",
    "lower_coo_numba",
]


def config_keys(occ: np.ndarray, n_orb: int) -> np.ndarray:
    """Integer key of each configuration row (base ``n_orb + 1`` digits)."""
    base = n_orb + 1
    nmax = occ.shape[1]
    digits = np.where(occ < n_orb, occ + 1, 0).astype(np.int64)
    weights = base ** np.arange(nmax - 1, -1, -1, dtype=np.int64)
    return digits @ weights if nmax else np.zeros(occ.shape[0], dtype=np.int64)


# ---------------------------------------------------------------- numpy path

def _lookup(keys_new, skeys, perm):
    idx = np.searchsorted(skeys, keys_new)
    idx = np.minimum(idx, len(skeys) - 1)
    found = skeys[idx] == keys_new
    return perm[idx], found


def hop_coo_numpy(occ, skeys, perm, colptr, rowind, hval, site_of, hardcore, n_orb):
    dim, nmax = occ.shape
    rows, cols, vals = [], [], []
    if nmax == 0:
        return (np.zeros(0, np.int64),) * 2 + (np.zeros(0, complex),)
    site_ext = np.append(site_of, -1 - np.arange(nmax))
    for q in range(n_orb):
        lo, hi = colptr[q], colptr[q + 1]
        if lo == hi:
            continue
        has = occ == q
        sel = np.nonzero(has.any(axis=1))[0]
        if sel.size == 0:
            continue
        first = np.argmax(has[sel], axis=1)
        nq = has[sel].sum(axis=1)
        base_rows = occ[sel]
        for e in range(lo, hi):
            p = rowind[e]
            new = base_rows.copy()
            new[np.arange(sel.size), first] = p
            new.sort(axis=1)
            ok = np.ones(sel.size, dtype=bool)
            if hardcore and nmax > 1:
                # pads map to distinct negative sites so they never collide
                st = np.where(new < n_orb, site_ext[np.minimum(new, n_orb)], -1 - np.arange(nmax))
                ok = ~(st[:, 1:] == st[:, :-1]).any(axis=1)
            npc = (new == p).sum(axis=1)
            tgt, found = _lookup(config_keys(new, n_orb), skeys, perm)
            ok &= found
            rows.append(tgt[ok])
            cols.append(sel[ok])
            vals.append(hval[e] * np.sqrt(nq[ok] * npc[ok]))
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals).astype(complex)


def lower_coo_numpy(occ, skeys, perm, weights, n_orb):
    dim, nmax = occ.shape
    rows, cols, vals = [], [], []
    for q in np.nonzero(weights)[0]:
        has = occ == q
        sel = np.nonzero(has.any(axis=1))[0]
        if sel.size == 0:
            continue
        first = np.argmax(has[sel], axis=1)
        nq = has[sel].sum(axis=1)
        new = occ[sel].copy()
        new[np.arange(sel.size), first] = n_orb
        new.sort(axis=1)
        tgt, found = _lookup(config_keys(new, n_orb), skeys, perm)
        rows.append(tgt[found])
        cols.append(sel[found])
        vals.append(weights[q] * np.sqrt(nq[found]))
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals).astype(complex)


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _search(skeys, key):
        lo, hi = 0, skeys.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if skeys[mid] < key:
                lo = mid + 1
            else:
                hi = mid
        if lo < skeys.shape[0] and skeys[lo] == key:
            return lo
        return -1

    @njit(cache=True)
    def _hop_nb(occ, skeys, perm, colptr, rowind, hval, site_of, hardcore, n_orb):
        dim, nmax = occ.shape
        base = n_orb + 1
        cap = 0
        for s in range(dim):
            for a in range(nmax):
                q = occ[s, a]
                if q >= n_orb:
                    break
                if a > 0 and occ[s, a - 1] == q:
                    continue
                cap += colptr[q + 1] - colptr[q]
        rows = np.empty(cap, np.int64)
        cols = np.empty(cap, np.int64)
        vals = np.empty(cap, np.complex128)
        buf = np.empty(nmax, np.int64)
        nnz = 0
        for s in range(dim):
            for a in range(nmax):
                q = occ[s, a]
                if q >= n_orb:
                    break
                if a > 0 and occ[s, a - 1] == q:
                    continue
                nq = 0
                for b in range(nmax):
                    if occ[s, b] == q:
                        nq += 1
                for e in range(colptr[q], colptr[q + 1]):
                    p = rowind[e]
                    m = 0
                    inserted = False
                    for b in range(nmax):
                        if b == a:
                            continue
                        o = occ[s, b]
                        if not inserted and p <= o:
                            buf[m] = p
                            m += 1
                            inserted = True
                        buf[m] = o
                        m += 1
                    if not inserted:
                        buf[m] = p
                    ok = True
                    if hardcore:
                        for b in range(1, nmax):
                            if buf[b] >= n_orb:
                                break
                            if site_of[buf[b]] == site_of[buf[b - 1]]:
                                ok = False
                                break
                    if not ok:
                        continue
                    npc = 0
                    key = 0
                    for b in range(nmax):
                        if buf[b] == p:
                            npc += 1
                        d = buf[b] + 1 if buf[b] < n_orb else 0
                        key = key * base + d
                    idx = _search(skeys, key)
                    if idx < 0:
                        continue
                    rows[nnz] = perm[idx]
                    cols[nnz] = s
                    vals[nnz] = hval[e] * np.sqrt(nq * npc)
                    nnz += 1
        return rows[:nnz], cols[:nnz], vals[:nnz]

    @njit(cache=True)
    def _lower_nb(occ, skeys, perm, weights, n_orb):
        dim, nmax = occ.shape
        base = n_orb + 1
        rows = np.empty(dim * nmax, np.int64)
        cols = np.empty(dim * nmax, np.int64)
        vals = np.empty(dim * nmax, np.complex128)
        nnz = 0
        for s in range(dim):
            for a in range(nmax):
                q = occ[s, a]
                if q >= n_orb:
                    break
                if (a > 0 and occ[s, a - 1] == q) or weights[q] == 0:
                    continue
                nq = 0
                key = 0
                for b in range(nmax):
                    if occ[s, b] == q:
                        nq += 1
                for b in range(nmax):
                    if b == a:
                        continue
                    o = occ[s, b]
                    d = o + 1 if o < n_orb else 0
                    key = key * base + d
                key = key * base
                idx = _search(skeys, key)
                if idx < 0:
                    continue
                rows[nnz] = perm[idx]
                cols[nnz] = s
                vals[nnz] = weights[q] * np.sqrt(nq)
                nnz += 1
        return rows[:nnz], cols[:nnz], vals[:nnz]

    def hop_coo_numba(occ, skeys, perm, colptr, rowind, hval, site_of, hardcore, n_orb):
        if occ.shape[1] == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
        return _hop_nb(occ, skeys, perm, colptr, rowind, hval.astype(np.complex128), site_of, bool(hardcore), n_orb)

    def lower_coo_numba(occ, skeys, perm, weights, n_orb):
        if occ.shape[1] == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0, complex)
        return _lower_nb(occ, skeys, perm, weights.astype(np.complex128), n_orb)

else:  # pragma: no cover
    hop_coo_numba = hop_coo_numpy
    lower_coo_numba = lower_coo_numpy


def hop_coo(*args):
    """COO triplets of sum_pq h_pq c_p^dag c_q; dispatches on ``USE_NUMBA``."""
    return hop_coo_numba(*args) if USE_NUMBA else hop_coo_numpy(*args)


def lower_coo(*args):
    """COO triplets of sum_q w_q c_q; dispatches on ``USE_NUMBA``."""
    return lower_coo_numba(*args) if USE_NUMBA else lower_coo_numpy(*args)
