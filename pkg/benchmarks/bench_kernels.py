"""Compare the numba and numpy backends of the sparse operator builders.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Prints wall time per call and the speedup for the hopping kernel (one-body
operator lifted to the truncated Fock basis) and the lowering kernel.
"""
import argparse
import time

import numpy as np

from wgqed import _kernels
from wgqed.hilbert import EIT, TWO_LEVEL, LevelScheme, enumerate_basis

CASES = [(60, TWO_LEVEL, 2), (40, EIT, 2), (16, EIT, 3), (12, TWO_LEVEL, 4)]


def best_of(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def hop_args(b, h):
    import scipy.sparse as sp

    csc = sp.csc_matrix(h)
    return (b.occ, b._skeys, b._perm, csc.indptr.astype(np.int64), csc.indices.astype(np.int64),
            csc.data.astype(complex), b.site_of, b.hardcore, b.n_orbitals)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'case':<22}{'dim':>8}  {'kernel':<7}{'numpy [s]':>11}{'numba [s]':>11}{'speedup':>9}")
    for n, kind, nmax in CASES:
        b = enumerate_basis(n, LevelScheme(kind), nmax)
        m = b.n_orbitals
        h = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
        w = rng.normal(size=m) + 1j * rng.normal(size=m)
        jobs = {
            "hop": (_kernels.hop_coo_numpy, _kernels.hop_coo_numba, hop_args(b, h)),
            "lower": (_kernels.lower_coo_numpy, _kernels.lower_coo_numba, (b.occ, b._skeys, b._perm, w, m)),
        }
        for name, (f_np, f_nb, a) in jobs.items():
            f_nb(*a)  # compile outside the timing
            t_np, t_nb = best_of(f_np, a, args.repeat), best_of(f_nb, a, args.repeat)
            label = f"N={n} {'eit' if kind == EIT else '2lvl'} nmax={nmax}"
            print(f"{label:<22}{b.dim:>8}  {name:<7}{t_np:>11.4f}{t_nb:>11.4f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
