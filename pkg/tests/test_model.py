import numpy as np
import pytest
import scipy.linalg as la
from scipy.integrate import solve_ivp

from oracles import embedding, full_space_heff, single_atom_transmission
from wgqed.dynamics import steady_state, transmission_moments
from wgqed.hilbert import EIT, TWO_LEVEL, Geometry, LevelScheme, enumerate_basis, transition_operator
from wgqed.model import (
    DriveSpec,
    InteractionSpec,
    MissingDriveError,
    ModelMismatchError,
    SpinModel,
    drive_hamiltonian,
    effective_hamiltonian,
    interaction_diagonal,
    jump_operators,
    liouvillian_apply,
    liouvillian_matrix,
    one_body_matrix,
    output_field_operator,
    waveguide_matrix,
)


def chain(n, kind=TWO_LEVEL, g1d=1.0, gp=0.0, rabi=0.0, dl=0.0, c=0.0, amp=None, det=0.0, phase=np.pi / 2, **kw):
    geom = Geometry.lattice(n, 1.0, phase)
    inter = InteractionSpec.constant(n, c, **kw)
    drive = None if amp is None else DriveSpec(amp, det)
    return SpinModel(geom, LevelScheme(kind, g1d, gp, rabi, dl), inter, drive)


def test_single_atom_block():
    m = chain(1, gp=0.4, det=0.3, amp=1e-6)
    h = one_body_matrix(m)
    assert h.shape == (1, 1)
    assert h[0, 0] == pytest.approx(-(0.3 + 0.5j * 1.4))


def test_two_atom_off_diagonal():
    m = chain(2, g1d=0.8)
    h = one_body_matrix(m)
    # k d = pi/2: -i (G/2) exp(i pi/2) = G/2
    assert h[0, 1] == pytest.approx(0.4)
    assert abs(h[0, 1]) == pytest.approx(0.8 / 2)
    assert h[0, 1] == h[1, 0]


@pytest.mark.parametrize("phase", [0.3, np.pi / 2, 1.1])
def test_waveguide_dissipator_rank_two(phase):
    g = waveguide_matrix(Geometry.lattice(8, 1.0, phase), 1.0)
    anti = 0.5j * (g - g.conj().T)
    sv = la.svdvals(anti)
    assert np.sum(sv > 1e-10 * sv[0]) <= 2
    assert np.all(la.eigvalsh(anti) > -1e-12)


def test_heff_matches_product_space():
    rng = np.random.default_rng(11)
    n = 3
    u = rng.normal(size=(n, n))
    u = u + u.T
    np.fill_diagonal(u, 0)
    geom = Geometry((0.0, 0.7, 1.9), k_in=1.3)
    lv = LevelScheme(EIT, 1.2, 0.5, 0.8, 0.25)
    m = SpinModel(geom, lv, InteractionSpec(u), DriveSpec(1e-6, 0.17))
    b = enumerate_basis(n, lv, n)
    ref, _ = full_space_heff(geom.z, 1.3, 1.2, 0.5, 0.17, 0.8, 0.25, u, eit=True)
    emb = embedding(b.states, n, 3)
    assert np.allclose(effective_hamiltonian(m, b).toarray(), emb.T @ ref @ emb, atol=1e-12)


def test_two_level_interaction_acts_on_excited_mode():
    m = chain(3, c=0.7)
    b = enumerate_basis(3, m.levels, 2)
    ref, _ = full_space_heff(m.geometry.z, m.geometry.k_in, 1.0, u=m.interaction.u_ss, eit=False)
    emb = embedding(b.states, 3, 2)
    assert np.allclose(effective_hamiltonian(m, b).toarray(), emb.T @ ref @ emb, atol=1e-12)


def test_constant_interaction_shifts_each_pair_by_c():
    m = chain(4, EIT, rabi=1.0, c=0.3)
    b = enumerate_basis(4, m.levels, 2)
    diag = interaction_diagonal(m, b)
    ss = [i for i, cfg in enumerate(b.states) if len(cfg) == 2 and all(o % 2 == 1 for o in cfg)]
    assert np.allclose(diag[ss], 0.3)
    assert np.count_nonzero(diag) == len(ss)


def test_soft_on_site_penalty():
    m = chain(2, c=0.0, hardcore=False, u0=5.0)
    b = enumerate_basis(2, m.levels, 2, hardcore=False)
    diag = interaction_diagonal(m, b)
    assert diag[b.index_of([0, 0])] == pytest.approx(5.0)
    assert diag[b.index_of([0, 1])] == 0


def test_drive_hamiltonian():
    m = chain(3, amp=2e-3)
    b = enumerate_basis(3, m.levels, 2)
    v = drive_hamiltonian(m, b)
    assert abs(v - v.conj().T).max() < 1e-15
    for j in range(3):
        amp = v[b.index_of([j]), 0]
        assert abs(amp) == pytest.approx(2e-3)
        assert amp == pytest.approx(2e-3 * np.exp(1j * np.pi / 2 * j))
    assert v[b.index_of([1]), 0] == pytest.approx(2e-3j)


def test_jump_identity():
    m = chain(3, EIT, gp=0.6, rabi=0.9, c=0.4, amp=1e-6, det=0.2)
    b = enumerate_basis(3, m.levels, 2)
    h = effective_hamiltonian(m, b).toarray()
    s = sum((o.conj().T @ o).toarray() for o in jump_operators(m, b).all())
    assert np.allclose(2 * s, 1j * (h - h.conj().T), atol=1e-13)


def test_jumps_annihilate_vacuum():
    m = chain(3, gp=0.5)
    b = enumerate_basis(3, m.levels, 2)
    for o in jump_operators(m, b).all():
        assert np.all(o @ b.vacuum() == 0)


def test_liouvillian_vacuum_dark_and_trace_preserving():
    m = chain(2, EIT, gp=0.5, rabi=1.0, c=0.3)
    b = enumerate_basis(2, m.levels, 2)
    rho = np.zeros((b.dim, b.dim), dtype=complex)
    rho[0, 0] = 1
    assert np.abs(liouvillian_apply(m, b, rho)).max() < 1e-15
    rng = np.random.default_rng(2)
    x = rng.normal(size=(b.dim, b.dim)) + 1j * rng.normal(size=(b.dim, b.dim))
    rho = x @ x.conj().T
    assert abs(np.trace(liouvillian_apply(m, b, rho))) < 1e-12
    lm = liouvillian_matrix(m, b)
    assert np.allclose(lm @ rho.ravel(), liouvillian_apply(m, b, rho).ravel())


def test_single_atom_decay_rate():
    m = chain(1, g1d=0.7, gp=0.8)
    b = enumerate_basis(1, m.levels, 1)
    rho = np.diag([0.0, 1.0]).astype(complex)
    drho = liouvillian_apply(m, b, rho)
    assert drho[1, 1].real == pytest.approx(-1.5)
    assert drho[0, 0].real == pytest.approx(1.5)


def test_liouvillian_and_heff_agree_on_coherence():
    """Weak-drive <a_j> from the master-equation steady state equals the
    single-excitation amplitude of the H_eff steady state."""
    m = chain(2, gp=0.4, amp=1e-4, det=0.15)
    b = enumerate_basis(2, m.levels, 2)
    lm = liouvillian_matrix(m, b).toarray()
    w, v = la.eig(lm)
    rho = v[:, np.argmin(np.abs(w))].reshape(b.dim, b.dim)
    rho /= np.trace(rho)
    psi = steady_state(m, b, 2).amplitudes
    for j in range(2):
        a = transition_operator(b, j, "a", "vacuum").toarray()
        lio = np.trace(a @ rho)
        assert lio == pytest.approx(psi[b.index_of([j])], rel=1e-6)


def test_empty_medium_output():
    m = SpinModel(Geometry(()), LevelScheme(), InteractionSpec.none(0), DriveSpec(1e-6))
    b = enumerate_basis(0, m.levels, 2)
    off, op = output_field_operator(m, b)
    assert abs(off) == pytest.approx(1e-6)
    t1, t2 = transmission_moments(steady_state(m, b, 0), m)
    assert t1 == pytest.approx(1.0) and t2 == pytest.approx(1.0)


@pytest.mark.parametrize("delta", [-1.2, 0.0, 0.25, 0.5, 3.0])
def test_single_atom_transmission(delta):
    m = chain(1, g1d=1.0, gp=0.3, amp=1e-6, det=delta)
    b = enumerate_basis(1, m.levels, 2)
    t1, _ = transmission_moments(steady_state(m, b, 1), m)
    assert t1 == pytest.approx(abs(single_atom_transmission(delta, 1.0, 0.3)) ** 2, rel=1e-9, abs=1e-12)


def test_single_atom_extinction():
    m = chain(1, amp=1e-6)
    b = enumerate_basis(1, m.levels, 1)
    t1, _ = transmission_moments(steady_state(m, b, 1), m)
    assert t1 < 1e-10


def test_sector_block_structure():
    m = chain(3, EIT, gp=0.2, rabi=1.0, c=0.5)
    b = enumerate_basis(3, m.levels, 3)
    h = effective_hamiltonian(m, b).toarray()
    for i in range(b.dim):
        for j in np.nonzero(h[i])[0]:
            assert b.nexc[i] == b.nexc[j]


def test_decay_rates_nonnegative():
    m = chain(4, EIT, gp=0.3, rabi=1.2, c=0.6)
    b = enumerate_basis(4, m.levels, 2)
    ev = la.eigvals(effective_hamiltonian(m, b).toarray())
    assert np.all(ev.imag <= 1e-12)


def test_single_excitation_block_independent_of_interaction():
    base = chain(4, EIT, gp=0.3, rabi=1.0, c=0.0)
    b = enumerate_basis(4, base.levels, 2)
    sl = b.sector_slice(1)
    h0 = effective_hamiltonian(base, b)[sl, sl].toarray()
    for c in (0.2, 5.0):
        hc = effective_hamiltonian(chain(4, EIT, gp=0.3, rabi=1.0, c=c), b)[sl, sl].toarray()
        assert np.array_equal(h0, hc)


def test_co_rotating_frame_matches_atomic_frame():
    """Drive-frame evolution, rotated back by exp(-i Delta n t), equals the
    time-dependent atomic-frame evolution."""
    delta, amp, t_end = 0.7, 0.005, 6.0
    m = chain(2, gp=0.2, amp=amp, det=delta)
    b = enumerate_basis(2, m.levels, 2)
    hd = (effective_hamiltonian(m, b) + drive_hamiltonian(m, b)).toarray()
    h0 = effective_hamiltonian(m, b, detuning=0.0).toarray()
    v = drive_hamiltonian(m, b).toarray()
    up, dn = np.tril(v), np.triu(v)
    n = b.nexc.astype(float)

    def rhs(t, y):
        h = h0 + up * np.exp(-1j * delta * t) + dn * np.exp(1j * delta * t)
        return -1j * h @ y

    sol = solve_ivp(rhs, (0, t_end), b.vacuum(), method="DOP853", rtol=1e-11, atol=1e-14)
    lab = sol.y[:, -1]
    rot = np.exp(-1j * delta * n * t_end) * (la.expm(-1j * hd * t_end) @ b.vacuum())
    assert np.allclose(lab, rot, atol=1e-10)


def test_errors():
    m = chain(2, amp=1e-6)
    with pytest.raises(ModelMismatchError):
        effective_hamiltonian(m, enumerate_basis(3, m.levels, 1))
    with pytest.raises(ModelMismatchError):
        effective_hamiltonian(m, enumerate_basis(2, LevelScheme(EIT), 1))
    with pytest.raises(MissingDriveError):
        drive_hamiltonian(chain(2), enumerate_basis(2, LevelScheme(), 1))
    with pytest.raises(MissingDriveError):
        chain(2).with_detuning(0.3)
    with pytest.raises(ValueError, match="symmetric"):
        InteractionSpec(np.array([[0, 1.0], [2.0, 0]]))
    with pytest.raises(ValueError, match="expected"):
        SpinModel(Geometry.lattice(3), LevelScheme(), InteractionSpec.none(2))
    with pytest.raises(ValueError):
        DriveSpec(1e-6, direction="left")
    with pytest.warns(UserWarning, match="weak-drive"):
        chain(1, amp=0.5)
