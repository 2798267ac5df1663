import numpy as np
import pytest

from slq.errors import ValidationError
from slq.laser import (
    ASParams,
    DHLParams,
    HLParams,
    build_as_generator,
    build_dhl_generator,
    build_hl_generator,
    check_dhl_as_equivalence,
    counter_rotating_vanishes,
    dhl_closed_form,
    match_hl_to_as,
)
from slq.lindblad import (
    apply_heisenberg,
    apply_schrodinger,
    choi_min_eigenvalue,
    evolve,
    superoperator,
)
from slq.operators import OperatorMatrix, boson_ladder, embed_site_operator, fermion_site_pair, identity, pauli

SX, SY, SZ, SP, SM = pauli()
BP, BM = fermion_site_pair()


def single_atom(**kw):
    base = dict(N=0, n_modes=1, eps=0.6, gamma1=0.9, gamma2=1.2, eta=0.3,
                omega=(1.3,), kappa=(0.4,), lam=(0.0,), fock_cutoff=4)
    base.update(kw)
    return ASParams(**base)


def test_as_parameter_constraints():
    with pytest.raises(ValidationError):
        single_atom(gamma2=2.0, gamma1=0.9)
    with pytest.raises(ValidationError):
        single_atom(eta=1.5)
    with pytest.raises(ValidationError):
        single_atom(kappa=(0.0,))
    single_atom(gamma2=1.8)


def test_as_atom_equations():
    p = single_atom()
    gen = build_as_generator(p)
    sp = embed_site_operator(gen.space, 0, SP)
    sm = embed_site_operator(gen.space, 0, SM)
    sz = embed_site_operator(gen.space, 0, SZ)
    one = identity(gen.space)
    assert (apply_heisenberg(gen, sp) + sp * (p.gamma1 - 1j * p.eps)).norm() < 1e-13
    assert (apply_heisenberg(gen, sm) + sm * (p.gamma1 + 1j * p.eps)).norm() < 1e-13
    assert (apply_heisenberg(gen, sz) + (sz - one * p.eta) * p.gamma2).norm() < 1e-13
    assert apply_heisenberg(gen, one).norm() < 1e-12


def test_radiation_number_decay():
    p = single_atom(fock_cutoff=6)
    gen = build_as_generator(p)
    a, _ = boson_ladder(6)
    a = embed_site_operator(gen.space, 1, a)
    number = a.dag() @ a
    assert (apply_heisenberg(gen, number) + number * (2 * p.kappa[0])).norm() < 1e-13


@pytest.mark.parametrize("eta", [-1.0, 0.0, 0.5, 1.0])
def test_as_fixed_point(eta):
    p = single_atom(eta=eta, gamma2=1.0, gamma1=0.8, fock_cutoff=2)
    gen = build_as_generator(p)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[2, 2] = 1.0  # atom down, field empty
    dt = 0.01
    traj = evolve(gen, OperatorMatrix(gen.space, rho0), 20 / p.gamma2, dt, sample_every=100)
    sz = traj.expectation(embed_site_operator(gen.space, 0, SZ)).real
    assert abs(sz[-1] - eta) < 1e-6
    assert max(traj.trace_drift) < 1e-8


def test_hl_matching_examples():
    p = HLParams(gamma_h1=0.25, gamma_h2=0.25)
    as_params = match_hl_to_as(p)
    assert as_params.eta == 0.0
    assert as_params.gamma1 == 0.5 and as_params.gamma2 == 1.0
    single = match_hl_to_as(HLParams(gamma_h1=0.3, gamma_h2=0.0))
    assert single.eta == -1.0
    with pytest.raises(ValidationError):
        match_hl_to_as(HLParams(gamma_h1=0.3j, gamma_h2=-0.1j))


def test_hl_single_reservoir_only_gives_eta_minus_one():
    p = HLParams(gamma_h1=0.3 + 0.1j, gamma_h2=0.0, fock_cutoff=3)
    gen = build_hl_generator(p)
    sz = embed_site_operator(gen.space, 0, SZ)
    one = identity(gen.space)
    gamma2 = 2 * 0.3
    assert (apply_heisenberg(gen, sz) + (sz + one) * gamma2).norm() < 1e-13


@pytest.mark.parametrize("N,n_modes,cutoff", [(0, 1, 6), (1, 1, 3), (0, 2, 3)])
def test_hl_as_round_trip(N, n_modes, cutoff):
    rng = np.random.default_rng(N * 10 + n_modes)
    p = HLParams(
        N=N,
        n_modes=n_modes,
        gamma_g=tuple(complex(rng.uniform(0.1, 1), rng.uniform(0.1, 2)) for _ in range(n_modes)),
        gamma_h1=complex(rng.uniform(0.1, 1), rng.normal()),
        gamma_h2=complex(rng.uniform(0.1, 1), rng.normal()),
        lam=tuple(rng.uniform(0, 1, n_modes)),
        fock_cutoff=cutoff,
    )
    as_params = match_hl_to_as(p)
    assert as_params.gamma2 == pytest.approx(2 * as_params.gamma1, rel=1e-15)
    diff = superoperator(build_hl_generator(p)) - superoperator(build_as_generator(as_params))
    assert np.max(np.abs(diff)) < 1e-12


def test_counter_rotating_term_never_enters():
    p = HLParams(gamma_h1=0.2 + 0.1j, gamma_h2=0.1, lam=(0.5,), fock_cutoff=3, rwa=False, beta=0.8,
                 omega_r=2.0, mu=1.0)
    report = counter_rotating_vanishes(p)
    assert report["identical"]
    with pytest.raises(ValidationError, match="off-resonance"):
        build_hl_generator(HLParams(omega_r=2.0, mu=0.7))


def dhl_params(**kw):
    base = dict(gamma_g=(0.3 + 1.0j,), gamma_b_plus=0.3 + 0.1j, gamma_b_minus=0.2 - 0.05j,
                gamma_c_plus=0.1 + 0.2j, gamma_c_minus=0.2, lam=(0.0,), fock_cutoff=3)
    base.update(kw)
    return DHLParams(**base)


@pytest.mark.parametrize("seed", range(5))
def test_dhl_closed_form(seed):
    rng = np.random.default_rng(seed)
    rates = [complex(rng.uniform(0, 1), rng.normal()) for _ in range(4)]
    p = dhl_params(gamma_b_plus=rates[0], gamma_b_minus=rates[1], gamma_c_plus=rates[2], gamma_c_minus=rates[3])
    gen = build_dhl_generator(p)
    up = embed_site_operator(gen.space, 0, BP)
    dn = embed_site_operator(gen.space, 0, BM)
    raising = up.dag() @ dn
    n_plus, n_minus = up.dag() @ up, dn.dag() @ dn
    one = identity(gen.space)
    coefficient, (c_plus, c_minus, constant) = dhl_closed_form(p)
    assert (apply_heisenberg(gen, raising) - raising * coefficient).norm() < 1e-12
    z_like = apply_heisenberg(gen, n_plus - n_minus)
    assert (z_like - n_plus * c_plus - n_minus * c_minus - one * constant).norm() < 1e-12
    assert apply_heisenberg(gen, one).norm() < 1e-12


def test_dhl_equivalence_report():
    equal = check_dhl_as_equivalence(dhl_params(gamma_b_plus=0.2, gamma_b_minus=0.2, gamma_c_plus=0.2, gamma_c_minus=0.2))
    assert equal.holds and equal.eta == 0.0
    assert equal.gamma1 == equal.gamma2 == pytest.approx(0.8)
    delta = 0.05
    perturbed = check_dhl_as_equivalence(dhl_params(gamma_b_plus=0.2, gamma_b_minus=0.2,
                                                    gamma_c_plus=0.2 + delta, gamma_c_minus=0.2))
    assert not perturbed.holds
    assert perturbed.defect == pytest.approx(delta, abs=1e-15)
    wild = check_dhl_as_equivalence(dhl_params(gamma_b_plus=0.0, gamma_b_minus=0.5,
                                               gamma_c_plus=0.5, gamma_c_minus=0.0))
    assert wild.holds and wild.eta_out_of_range is False and wild.eta == pytest.approx(1.0)


def twin_trajectories(lam, cutoff=3):
    p = dhl_params(lam=(lam,), fock_cutoff=cutoff)
    report = check_dhl_as_equivalence(p)
    as_params = report.as_params(p)
    dhl = build_dhl_generator(p)
    atom = build_as_generator(as_params)
    psi_atom = np.array([0.6, 0.8])
    rho_as = np.kron(np.outer(psi_atom, psi_atom), np.diag([1.0] + [0.0] * (cutoff - 1)))
    psi_site = np.array([0.0, 0.6, 0.8, 0.0])  # |+> plays the excited level
    rho_dhl = np.kron(np.outer(psi_site, psi_site), np.diag([1.0] + [0.0] * (cutoff - 1)))
    t_final = 10 / as_params.gamma1
    dt = t_final / 2000
    ta = evolve(atom, OperatorMatrix(atom.space, rho_as), t_final, dt, sample_every=50)
    td = evolve(dhl, OperatorMatrix(dhl.space, rho_dhl), t_final, dt, sample_every=50)
    sz_as = ta.expectation(embed_site_operator(atom.space, 0, SZ))
    sp_as = ta.expectation(embed_site_operator(atom.space, 0, SP))
    up = embed_site_operator(dhl.space, 0, BP)
    dn = embed_site_operator(dhl.space, 0, BM)
    sz_dhl = td.expectation(up.dag() @ up - dn.dag() @ dn)
    sp_dhl = td.expectation(up.dag() @ dn)
    return np.max(np.abs(sz_as - sz_dhl)), np.max(np.abs(sp_as - sp_dhl))


def test_dhl_and_as_matter_dynamics_coincide():
    dz, dp = twin_trajectories(0.0)
    assert dz < 1e-8
    assert dp < 1e-8


def test_dhl_and_as_differ_once_the_field_couples():
    # the fermion site leaves its singly occupied sector, where the two
    # second-order hierarchies differ
    dz, _ = twin_trajectories(0.4, cutoff=7)
    assert dz > 1e-3


def test_generators_are_structurally_sound():
    rng = np.random.default_rng(11)
    gens = [
        build_as_generator(single_atom(lam=(0.5,), fock_cutoff=3)),
        build_hl_generator(HLParams(gamma_h1=0.2 + 0.3j, gamma_h2=0.1, lam=(0.5,), fock_cutoff=3)),
        build_dhl_generator(dhl_params(lam=(0.5,))),
    ]
    for gen in gens:
        d = gen.dim
        assert apply_heisenberg(gen, identity(gen.space)).norm() < 1e-12
        for _ in range(10):
            m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            rho = m @ m.conj().T
            rho /= np.trace(rho)
            x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            lhs = np.trace(rho @ apply_heisenberg(gen, OperatorMatrix(gen.space, x)).entries)
            rhs = np.trace(apply_schrodinger(gen, OperatorMatrix(gen.space, rho)).entries @ x)
            assert abs(lhs - rhs) < 1e-11
        assert choi_min_eigenvalue(gen, 1e-7) >= -1e-10
