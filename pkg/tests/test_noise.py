import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbqc_spt.errors import DimensionMismatch, GapClosed, InsufficientRange, NotInPhase
from mbqc_spt.experiments import ground_and_dual
from mbqc_spt.ground_state import cluster_tensor, free_fermion_gap
from mbqc_spt.linalg import random_unitary, rx, rz
from mbqc_spt.mbqc import build_couplings, chain_protocol
from mbqc_spt.models import cluster_chain_hamiltonian, transverse_field_perturbation, z_field_perturbation
from mbqc_spt.noise import (Channel, correlation_decay_fit, diamond_distance_bounds, effective_channel,
                            factorization_report, gap_path_scan, markov_chain_tensor, noise_part,
                            noisy_circuit_simulate, perturbation_continuity_sweep, theorem1_check)
from mbqc_spt.spt_dual import dual_state, extract_protected_decomposition
from mbqc_spt.tensors import PfcsSpec


def random_channel(seed, d=2, r=3):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(r * d, d)) + 1j * rng.normal(size=(r * d, d))
    Q, _ = np.linalg.qr(K)
    return Channel.from_kraus([Q[i * d:(i + 1) * d] for i in range(r)])


def test_unperturbed_gate_channel_is_unitary():
    P = chain_protocol(4, {1: ("z", 0.9)})
    G = build_couplings(P, extract_protected_decomposition(cluster_tensor()))[1]
    phi = np.zeros((4, 4))
    phi[0, 0] = 1
    A = effective_channel(G, phi)
    assert np.allclose(A.superop, Channel.unitary(P.actions[1].U).superop, atol=1e-12)
    assert np.allclose(noise_part(A, P.actions[1].U).superop, np.eye(4), atol=1e-12)


def test_identity_coupling_gives_identity_channel(rng):
    r = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = r @ r.conj().T
    rho /= np.trace(rho)
    assert np.allclose(effective_channel(np.eye(8), rho).superop, np.eye(4))


def test_effective_channel_dimension_check():
    with pytest.raises(DimensionMismatch):
        effective_channel(np.eye(6), np.eye(4) / 4)


def test_noise_part_recovers_depolarizing():
    U = rx(0.3)
    dep = Channel.depolarizing(0.2)
    E = noise_part(dep.compose(Channel.unitary(U)), U)
    assert np.allclose(E.superop, dep.superop)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_random_channels_cptp_and_bounds_ordered(seed):
    E, F = random_channel(seed), random_channel(seed + 1)
    assert E.is_cptp()
    lo, up = diamond_distance_bounds(E, F, seed=seed, refine=False)
    assert 0 <= lo <= up + 1e-12
    assert up <= 2 * 2 + 1e-9  # ||J_E - J_F||_1 <= 2 d


def test_diamond_identical():
    E = random_channel(3)
    assert diamond_distance_bounds(E, E) == (0.0, 0.0)


def test_depolarizing_oracle():
    lo, up = diamond_distance_bounds(Channel.depolarizing(0.1), Channel.identity(2))
    assert abs(lo - 0.15) < 1e-9 and abs(up - 0.3) < 1e-9


def test_unitary_diamond_distance_lower_bound_tight():
    # ||U - V||_diamond for commuting diagonal unitaries: 2 sqrt(1 - min_theta ...)
    th = 0.8
    lo, up = diamond_distance_bounds(Channel.unitary(rz(th)), Channel.identity(2), seed=1)
    exact = 2 * np.sin(th / 2)
    assert lo <= exact + 1e-9 <= up + 2e-9
    assert abs(lo - exact) < 1e-6


def test_extracted_channels_satisfy_inequality():
    rep = theorem1_check(6, 0.1, (1, 2, 3))
    for g in rep.per_gate:
        assert g.lower <= g.rhs + 1e-8
        assert g.tp_residual <= 1e-10 and g.min_choi_eig >= -1e-10


def test_theorem1_unperturbed_exact():
    rep = theorem1_check(6, 0.0, (1, 2, 3))
    assert max(rep.delta) <= 1e-10


def test_theorem1_symmetry_breaking_control():
    H, _ = cluster_chain_hamiltonian(5)
    ch = [q for s in H.sites for q in s]
    with pytest.raises(NotInPhase):
        theorem1_check(5, 0.1, (1, 2), extra=z_field_perturbation(0.2, ch, H.n_qubits))


def test_factorization_report_cases():
    _, psi, _, D = ground_and_dual(5)
    bulk, _ = dual_state(psi, D)
    assert factorization_report(bulk, [[1], [3]]).exact <= 1e-12
    assert factorization_report(bulk, [[1, 2]]).exact == 0
    _, psi, _, D = ground_and_dual(6, 0.1)
    bulk, _ = dual_state(psi, D)
    vals = [factorization_report(bulk, [[1], [1 + R]]).exact for R in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(vals[:-1], vals[1:]))


def test_correlation_fits():
    f = correlation_decay_fit(PfcsSpec(markov_chain_tensor(np.exp(-1))), [1, 2, 3, 4, 5])
    assert abs(f.xi - 1) <= 0.05
    f0 = correlation_decay_fit(PfcsSpec(cluster_tensor()), [1, 2, 3])
    assert f0.below_floor and f0.xi == 0
    prod = np.zeros((2,) * 5)
    prod[(0,) * 5] = 1
    assert np.allclose(correlation_decay_fit(prod, [1, 2, 3]).samples, 0)
    with pytest.raises(InsufficientRange):
        correlation_decay_fit(prod, [1, 2])


def test_noisy_circuit_identity_noise_is_ideal():
    U1, U2 = rx(0.4), np.kron(rz(0.3), rx(1.2))
    circ = [("gate", U1, [0]), ("gate", U2, [0, 1])]
    ident = {0: [(Channel.identity(2), [0])], 1: [(Channel.identity(4), [0, 1])]}
    rho = noisy_circuit_simulate(circ, ident, 2)
    psi = U2 @ np.kron(U1 @ [1, 0], [1, 0])
    assert np.allclose(rho, np.outer(psi, psi.conj()))


def test_restart_resets_qubit():
    circ = [("gate", rx(1.0), [1]), ("gate", rx(2.0), [0]), ("restart", [1])]
    rho = noisy_circuit_simulate(circ, None, 2)
    r1 = rho.reshape(2, 2, 2, 2)
    red = np.einsum("aiaj->ij", r1)
    assert np.allclose(red, np.diag([1, 0]))


def test_noisy_circuit_dimension_check():
    with pytest.raises(DimensionMismatch):
        noisy_circuit_simulate([("gate", np.eye(4), [0])], None, 2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_tensor_product_noise_matches_channel_tensor(seed):
    E1, E2 = random_channel(seed), random_channel(seed + 7)
    rng = np.random.default_rng(seed)
    U = random_unitary(4, rng)
    a = noisy_circuit_simulate([("gate", U, [0, 1])], {0: [(E1, [0]), (E2, [1])]}, 2)
    b = noisy_circuit_simulate([("gate", U, [0, 1])], {0: [(E1.tensor(E2), [0, 1])]}, 2)
    assert np.allclose(a, b)


def test_continuity_sweep_and_gap():
    H, _ = cluster_chain_hamiltonian(3)
    ch = [q for s in H.sites for q in s]
    H_of = lambda s: H + transverse_field_perturbation(s, ch, H.n_qubits)
    c = perturbation_continuity_sweep(H_of, list(H.sites[1]), 0.2, 10)
    assert c.distance[0] == 0 and c.max_ratio <= 1.1
    c0 = perturbation_continuity_sweep(H_of, list(H.sites[1]), 0.0, 1)
    assert np.allclose(c0.distance, 0)
    with pytest.raises(GapClosed) as exc:
        gap_path_scan(lambda s: free_fermion_gap(150, s), 1.3, 130)
    assert abs(exc.value.s_star - 1) <= 0.1
