"""Command-line experiment runner.

    wgqed <experiment> --config cfg.json --out results/ [--workers N] [--tol REL]

Each run writes ``<prefix>.csv`` (complex columns split into ``_re``/``_im``)
and a ``<prefix>.json`` sidecar echoing the config, versions and timings.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    build_model,
    config_to_dict,
    grid_values,
    parse_config,
)
from .dynamics import (
    evolve,
    fock_input_response,
    g2_time,
    gaussian_spin_wave,
    polariton_populations,
    steady_state,
    transmission_moments,
)
from .hilbert import BasisTooLargeError, enumerate_basis
from .linear import (
    RegimeWarning,
    chain_spectrum,
    eit_parameters,
    propagate_spin_wave,
    susceptibility,
    t2_estimate_large_detuning,
    t2_estimate_small_detuning,
)
from .model import effective_hamiltonian
from .scattering import TwoPhotonSolver, g2_frequency, two_photon_smatrix, two_photon_transmission

log = logging.getLogger("wgqed")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
DENSE_EVOLVE_LIMIT = 3000


@dataclass
class ResultBundle:
    columns: list[str]
    rows: list[list]
    meta: dict = field(default_factory=dict)


# ------------------------------------------------------------------ helpers

@lru_cache(maxsize=8)
def _basis(n_sites: int, kind: str, n_max: int, hardcore: bool, dim_cap: int):
    from .hilbert import LevelScheme

    return enumerate_basis(n_sites, LevelScheme(kind), n_max, hardcore, dim_cap)


def _cfg_basis(cfg: ExperimentConfig, n_max: int | None = None):
    m = cfg.model
    return _basis(m.n_sites, m.kind, n_max or cfg.numerics.n_max, m.hardcore, cfg.numerics.dim_cap)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def _interaction_grid(cfg: ExperimentConfig) -> np.ndarray:
    return grid_values(cfg.grids["interaction"]) if "interaction" in cfg.grids else np.zeros(1)


# -------------------------------------------------------------- experiments

def _spectrum_point(task):
    cfg, c, delta = task
    model = build_model(cfg, c, delta)
    if cfg.params.get("source", "steady") == "frequency":
        solver = _solver(cfg, c)
        return abs(solver.transmission(delta)) ** 2, two_photon_transmission(model, delta, solver)
    state = steady_state(model, _cfg_basis(cfg), 2, method=cfg.numerics.method)
    return transmission_moments(state, model)


_SOLVERS: dict = {}


def _solver(cfg: ExperimentConfig, c: float) -> TwoPhotonSolver:
    key = (cfg.model, c)
    if key not in _SOLVERS:
        _SOLVERS.clear()
        _SOLVERS[key] = TwoPhotonSolver.from_model(build_model(cfg, c))
    return _SOLVERS[key]


def run_spectrum(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    deltas = grid_values(cfg.grids["detuning"])
    tasks = [(cfg, float(c), float(d)) for c in _interaction_grid(cfg) for d in deltas]
    res = _map(_spectrum_point, tasks, workers)
    rows = [[d, c, t1, t2] for (_, c, d), (t1, t2) in zip(tasks, res)]
    return ResultBundle(["detuning", "C", "T1", "T2"], rows, {"source": cfg.params.get("source", "steady")})


def run_evolve(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    model = build_model(cfg, 0.0)
    model = replace(model, drive=None)
    basis = _cfg_basis(cfg, 1)
    times = grid_values(cfg.grids["time"])
    p = cfg.params
    psi0 = gaussian_spin_wave(model.geometry, p["sigma_p"], p["mu"], basis)
    grid = np.concatenate([[0.0], times[times > 0]]) if times[0] > 0 else times
    h = effective_hamiltonian(model, basis)
    method = "dense" if basis.dim <= DENSE_EVOLVE_LIMIT else "rk"
    tr = evolve(h, psi0, grid, rel_tol=cfg.numerics.tol, method=method)
    states = tr.states[1:] if times[0] > 0 else tr.states
    s_idx = np.array([basis.index_of([basis.orbital(j, "s")]) for j in range(model.n_sites)])
    s0 = psi0.amplitudes[s_idx]
    sites = np.arange(model.n_sites)
    rows, norms = [], []
    for t, y in zip(times, states):
        ss, ee = polariton_populations(y, basis)
        pred = np.abs(propagate_spin_wave(model, s0, t)) ** 2
        norms.append(float(ss.sum() + ee.sum()))
        rows += [[int(j), t, ss[j], ee[j], pred[j]] for j in sites]
    eit = eit_parameters(model, p.get("total_linewidth"))
    meta = {"method": method, "norms": norms, "eit": eit.__dict__}
    return ResultBundle(["site", "t", "pop_ss", "pop_ee", "pop_ss_predicted"], rows, meta)


def _g2_time_series(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    p = cfg.params
    model = build_model(cfg, p.get("interaction", 0.0), p.get("detuning", 0.0))
    tau = grid_values(cfg.grids["tau"])
    series = g2_time(model, _cfg_basis(cfg), tau, rel_tol=cfg.numerics.tol)
    return tau, series.values


def run_g2(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    tau, g2 = _g2_time_series(cfg)
    return ResultBundle(["tau", "g2"], [[t, g] for t, g in zip(tau, g2)], {"source": "time"})


def run_compare(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    p = cfg.params
    tau, g2t = _g2_time_series(cfg)
    model = build_model(cfg, p.get("interaction", 0.0), p.get("detuning", 0.0))
    x = np.concatenate([-tau[::-1], tau])
    g2f = g2_frequency(model, p.get("detuning", 0.0), x)[tau.size:]
    dev = np.abs(g2t - g2f) / np.maximum(np.abs(g2f), 1e-300)
    rows = [[t, a, b, d] for t, a, b, d in zip(tau, g2t, g2f, dev)]
    return ResultBundle(["tau", "g2_time", "g2_frequency", "rel_deviation"], rows,
                        {"max_rel_deviation": float(dev.max())})


def run_smatrix(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    p = cfg.params
    model = build_model(cfg, p.get("interaction", 0.0))
    solver = TwoPhotonSolver.from_model(model)
    k1, k2 = p["k1"], p["k2"]
    rows = []
    for p1 in grid_values(cfg.grids["momentum"]):
        p2 = k1 + k2 - p1
        rows.append([p1, p2, two_photon_smatrix(model, k1, k2, p1, p2, solver)])
    return ResultBundle(["p1", "p2", "S"], rows, {"k1": k1, "k2": k2})


def run_linear(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    model = build_model(cfg, 0.0)
    lv = model.levels
    deltas = grid_values(cfg.grids["detuning"])
    r, t = chain_spectrum(model, deltas - (lv.delta_L if lv.kind == "eit" else 0.0))
    rows = [[d, susceptibility(lv, d), ri, ti, abs(ri) ** 2, abs(ti) ** 2] for d, ri, ti in zip(deltas, r, t)]
    meta = {}
    if lv.kind == "eit" and lv.rabi > 0:
        meta["eit"] = eit_parameters(model, cfg.params.get("total_linewidth")).__dict__
    return ResultBundle(["delta", "chi", "r", "t", "R", "T"], rows, meta)


def run_fock(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    p = cfg.params
    n = p.get("n_photons", 1)
    model = build_model(cfg, 0.0)
    basis = _cfg_basis(cfg, max(n, cfg.numerics.n_max))
    rho = fock_input_response(model, basis, n, p.get("detuning", 0.0), p["t_final"], p.get("radii"))
    rows = [[i, j, rho[i, j]] for i in range(basis.dim) for j in range(basis.dim)]
    return ResultBundle(["row", "col", "rho"], rows, {"n_photons": n, "trace": float(np.trace(rho).real)})


def _appendix_point(task):
    cfg, delta = task
    model = build_model(cfg, 2 * delta, delta)
    state = steady_state(model, _cfg_basis(cfg), 2, method=cfg.numerics.method)
    t1, t2 = transmission_moments(state, model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        large = t2_estimate_large_detuning(model, delta)
    return t1, t2, t2_estimate_small_detuning(t1), large


def run_appendix_d(cfg: ExperimentConfig, workers: int) -> ResultBundle:
    deltas = grid_values(cfg.grids["detuning"])
    res = _map(_appendix_point, [(cfg, float(d)) for d in deltas], workers)
    split = cfg.params.get("regime_split")
    if split is None:
        split = eit_parameters(build_model(cfg, 0.0)).bandwidth
    rows = [[d, 2 * d, *vals, "small" if d < split else "large"] for d, vals in zip(deltas, res)]
    return ResultBundle(["delta", "C", "T1", "T2", "T2_small_estimate", "T2_large_estimate", "regime"], rows,
                        {"regime_split": float(split)})


RUNNERS = {
    "spectrum": run_spectrum,
    "evolve": run_evolve,
    "g2": run_g2,
    "smatrix": run_smatrix,
    "linear": run_linear,
    "compare": run_compare,
    "fock": run_fock,
    "appendixD": run_appendix_d,
}


def run(cfg: ExperimentConfig, workers: int = 1) -> ResultBundle:
    t0 = time.perf_counter()
    bundle = RUNNERS[cfg.experiment](cfg, workers)
    bundle.meta.update(
        config=config_to_dict(cfg),
        versions=_versions(),
        wall_time=time.perf_counter() - t0,
        tolerances={"tol": cfg.numerics.tol},
        workers=workers,
    )
    return bundle


def _versions() -> dict:
    import scipy

    v = {"wgqed": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
         "numba_kernels": _kernels.USE_NUMBA}
    if _kernels.HAS_NUMBA:
        import numba

        v["numba"] = numba.__version__
    return v


# ------------------------------------------------------------------ output

def _expand(columns, rows):
    header, out = [], []
    complex_cols = {i for i in range(len(columns)) if any(isinstance(r[i], (complex, np.complexfloating)) for r in rows)}
    for i, c in enumerate(columns):
        header += [f"{c}_re", f"{c}_im"] if i in complex_cols else [c]
    for r in rows:
        line = []
        for i, v in enumerate(r):
            if i in complex_cols:
                v = complex(v)
                line += [format(v.real, ".17g"), format(v.imag, ".17g")]
            elif isinstance(v, str):
                line.append(v)
            elif isinstance(v, (int, np.integer)):
                line.append(str(int(v)))
            else:
                line.append(format(float(v), ".17g"))
        out.append(line)
    return header, out


def write_bundle(bundle: ResultBundle, out_dir: Path, prefix: str) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    table, side = out_dir / f"{prefix}.csv", out_dir / f"{prefix}.json"
    header, rows = _expand(bundle.columns, bundle.rows)
    with table.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    side.write_text(json.dumps(bundle.meta, indent=2, sort_keys=True, default=float) + "\n")
    return table, side


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wgqed", description="Few-photon transport through atom chains coupled to a waveguide.")
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp_ = sub.add_parser(name, help=f"run a '{name}' experiment")
        sp_.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        sp_.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp_.add_argument("--workers", type=int, default=1, help="processes for grid-point parallelism")
        sp_.add_argument("--tol", type=float, default=None, help="override numerics.tol")
        sp_.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config describes experiment {cfg.experiment!r} but subcommand is {args.experiment!r}")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.tol is not None:
            if not 1e-12 <= args.tol <= 1e-4:
                raise ConfigError("--tol must lie in [1e-12, 1e-4]")
            cfg = replace(cfg, numerics=replace(cfg.numerics, tol=args.tol))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        bundle = run(cfg, args.workers)
    except (BasisTooLargeError, ConfigError) as exc:
        print(f"config error in {cfg.experiment}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure in {cfg.experiment}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid parameters for {cfg.experiment}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    table, side = write_bundle(bundle, args.out, cfg.output.get("prefix", cfg.experiment))
    log.info("wrote %s and %s", table, side)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
