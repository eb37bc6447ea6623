import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbqc_spt.errors import NonNormalizable, SizeOverflow
from mbqc_spt.ground_state import (cluster_tensor, exact_ground_state, free_fermion_gap, free_fermion_ground_energy,
                                   random_degeneracy_tensor, symmetry_condition_residual, synthesize_in_phase_tensor,
                                   terminated_state, variational_mps_ground_state, verify_condition1)
from mbqc_spt.models import cluster_chain_hamiltonian, transverse_field_perturbation, z_field_perturbation
from mbqc_spt.symmetry import cluster_onsite_rep, cluster_rep
from mbqc_spt.tensors import MpsTensor, transfer_channel


def perturbed(n, B):
    H, S = cluster_chain_hamiltonian(n)
    ch = [q for s in H.sites for q in s]
    return H + transverse_field_perturbation(B, ch, H.n_qubits), S


@pytest.mark.parametrize("n", [3, 4, 5])
def test_terminated_gap_two(n):
    H, _ = cluster_chain_hamiltonian(n)
    _, rep = exact_ground_state(H)
    assert abs(rep.gap - 2) < 1e-9
    assert rep.multiplicity == 1
    assert np.isclose(rep.energies[0], -len(H.terms))


def test_open_chain_fourfold():
    H, _ = cluster_chain_hamiltonian(4, "open")
    _, rep = exact_ground_state(H)
    assert rep.multiplicity == 4


def test_perturbed_stays_gapped():
    H, _ = perturbed(4, 0.1)
    _, rep = exact_ground_state(H)
    assert rep.multiplicity == 1 and rep.gap >= 1


def test_condition1():
    H, S = cluster_chain_hamiltonian(4)
    r = verify_condition1(H, S)
    assert r.passed and np.isclose(r.gap, 2)
    Ho, So = cluster_chain_hamiltonian(4, "open")
    assert not verify_condition1(Ho, So).passed
    ch = [q for s in H.sites for q in s]
    bad = verify_condition1(H + z_field_perturbation(0.1, ch, H.n_qubits), S)
    assert not bad.passed and bad.symmetry_residual > 0


@pytest.mark.parametrize("n, B", [(3, 0.0), (4, 0.3), (3, 1.0), (4, 1.4)])
def test_free_fermion_matches_ed(n, B):
    H, _ = perturbed(n, B)
    _, rep = exact_ground_state(H)
    assert np.isclose(free_fermion_ground_energy(n, B), rep.energies[0], atol=1e-8)
    assert np.isclose(free_fermion_gap(n, B), rep.gap, atol=1e-8)


def test_dmrg_exact_cluster():
    H, _ = cluster_chain_hamiltonian(4)
    res = variational_mps_ground_state(H, bond_dim=4, sweeps=4, seed=0)
    assert abs(res.energy + len(H.terms)) < 1e-9


def test_dmrg_perturbed():
    H, _ = perturbed(4, 0.2)
    _, rep = exact_ground_state(H)
    res = variational_mps_ground_state(H, bond_dim=8, sweeps=6, seed=1)
    assert abs(res.energy - rep.energies[0]) < 1e-8


def test_dmrg_product_ansatz_flagged():
    H, _ = cluster_chain_hamiltonian(3)
    _, rep = exact_ground_state(H)
    res = variational_mps_ground_state(H, bond_dim=1, sweeps=3, seed=0)
    assert res.energy > rep.energies[0] + 1e-3


def test_scalar_degeneracy_tensor_gives_cluster():
    At = MpsTensor(np.full((4, 1, 1), 0.5, dtype=complex))
    A = synthesize_in_phase_tensor(At)
    C = cluster_tensor()
    sa = np.sort_complex(transfer_channel(A).spectrum())
    sc = np.sort_complex(transfer_channel(C).spectrum())
    assert np.allclose(sa, sc)
    for n in (3, 4):
        psi_a, psi_c = terminated_state(A, n).reshape(-1), terminated_state(C, n).reshape(-1)
        assert np.isclose(abs(np.vdot(psi_a, psi_c)), 1)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_synthesized_tensor_symmetric(seed):
    A = synthesize_in_phase_tensor(random_degeneracy_tensor(2, seed=seed))
    assert symmetry_condition_residual(A, cluster_onsite_rep(1), cluster_rep(1), 2) <= 1e-10


def test_zero_degeneracy_tensor_rejected():
    with pytest.raises(NonNormalizable):
        synthesize_in_phase_tensor(MpsTensor(np.zeros((4, 1, 1))))


def test_terminated_state_is_ground_state():
    H, _ = cluster_chain_hamiltonian(4)
    v, _ = exact_ground_state(H)
    psi = terminated_state(cluster_tensor(), 4).reshape(-1)
    assert np.isclose(abs(np.vdot(v[:, 0], psi)), 1)


def test_size_overflow():
    H, _ = cluster_chain_hamiltonian(14)
    with pytest.raises(SizeOverflow):
        exact_ground_state(H)
