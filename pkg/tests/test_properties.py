import json

import numpy as np
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from wgqed.config import config_from_dict, serialize_config
from wgqed.dynamics import peak_position
from wgqed.hilbert import EIT, TWO_LEVEL, Geometry, LevelScheme, basis_dimension, enumerate_basis
from wgqed.linear import chain_spectrum
from wgqed.model import InteractionSpec, SpinModel, effective_hamiltonian
from wgqed.scattering import reflection_coefficient, single_particle_hamiltonian, transmission_coefficient

SETTINGS = settings(max_examples=40, deadline=None)
rates = st.floats(0.1, 5.0)
phases = st.floats(0.05, 3.1)


def model(n, kind, g1d, gp, rabi, phase, c=0.0):
    lv = LevelScheme(kind, g1d, gp, rabi if kind == EIT else 0.0)
    return SpinModel(Geometry.lattice(n, 1.0, phase), lv, InteractionSpec.constant(n, c))


@SETTINGS
@given(st.integers(1, 30), st.sampled_from([TWO_LEVEL, EIT]), rates, rates, phases, st.floats(-4, 4))
def test_lossless_flux_conserved(n, kind, g1d, rabi, phase, delta):
    m = model(n, kind, g1d, 0.0, rabi, phase)
    r, t = chain_spectrum(m, [delta])
    assert abs(abs(r[0]) ** 2 + abs(t[0]) ** 2 - 1) < 1e-9


@SETTINGS
@given(st.integers(1, 12), st.sampled_from([TWO_LEVEL, EIT]), rates, rates, rates, phases, st.floats(-4, 4))
def test_lossy_chain_never_amplifies(n, kind, g1d, gp, rabi, phase, delta):
    m = model(n, kind, g1d, gp, rabi, phase)
    h1 = single_particle_hamiltonian(m)
    t, r = transmission_coefficient(h1, delta), reflection_coefficient(h1, delta)
    assert abs(t) ** 2 + abs(r) ** 2 <= 1 + 1e-12
    _, tt = chain_spectrum(m, [delta])
    assert abs(tt[0] - t) < 1e-8 * max(1.0, abs(t))


@SETTINGS
@given(st.integers(1, 5), st.sampled_from([TWO_LEVEL, EIT]), rates, rates, rates, phases, st.floats(-3, 3))
def test_effective_hamiltonian_is_dissipative(n, kind, g1d, gp, rabi, phase, c):
    m = model(n, kind, g1d, gp, rabi, phase, c)
    b = enumerate_basis(n, m.levels, 2)
    h = effective_hamiltonian(m, b).toarray()
    # anti-Hermitian part is negative semidefinite
    assert la.eigvalsh(0.5j * (h - h.conj().T)).min() > -1e-10


@SETTINGS
@given(st.integers(0, 7), st.integers(1, 2), st.integers(0, 4), st.booleans())
def test_basis_dimension_and_index(n, m, nmax, hard):
    lv = LevelScheme(TWO_LEVEL if m == 1 else EIT)
    b = enumerate_basis(n, lv, nmax, hardcore=hard)
    assert b.dim == basis_dimension(n, m, min(nmax, n) if hard else nmax, hard)
    for i in range(0, b.dim, max(1, b.dim // 17)):
        assert b.index_of(b.states[i]) == i


@SETTINGS
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=30))
def test_peak_position_brackets_argmax(vals):
    x = np.arange(len(vals), dtype=float)
    p = peak_position(x, vals)
    i = int(np.argmax(vals))
    assert max(0, i - 1) <= p <= min(len(vals) - 1, i + 1)


@SETTINGS
@given(
    st.integers(1, 300),
    st.sampled_from(["two_level", "eit"]),
    rates,
    st.floats(0, 5),
    st.floats(1e-9, 1e-3),
    st.lists(st.floats(-2, 2), min_size=1, max_size=5),
)
def test_config_round_trip(n, kind, g1d, gp, amp, grid):
    raw = {
        "experiment": "spectrum",
        "model": {"n_sites": n, "kind": kind, "gamma_1d": g1d, "gamma_prime": gp},
        "drive_amplitude": amp,
        "grids": {"detuning": grid},
    }
    cfg = config_from_dict(raw)
    assert config_from_dict(json.loads(serialize_config(cfg))) == cfg
