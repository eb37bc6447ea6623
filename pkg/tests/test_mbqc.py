import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbqc_spt.errors import NotAdjacent, NotInFamily, ZeroProbabilityBranch
from mbqc_spt.experiments import ground_and_dual
from mbqc_spt.ground_state import (cluster_tensor, exact_ground_state, random_degeneracy_tensor,
                                   synthesize_in_phase_tensor, terminated_state)
from mbqc_spt.linalg import rx, rz
from mbqc_spt.mbqc import (CZ2, Layout2D, build_couplings, chain_protocol, circuit_output, cluster_site_tensor,
                           column_tensor, correlation_space_process, dual_process_from_state, entangle_action,
                           gate_basis, identity_action, init_action, map_protocol_to_2d, process_fidelity,
                           quasi1d_protocol, readout_action, run_2d, run_adaptive, verify_action)
from mbqc_spt.models import cluster_chain_hamiltonian
from mbqc_spt.spt_dual import disentangler, dual_state, extract_protected_decomposition
from mbqc_spt.symmetry import cluster_rep
from mbqc_spt.tensors import trace_distance

A = cluster_site_tensor()
V = cluster_rep(1)


@pytest.mark.parametrize("axis, theta", [("z", 0.0), ("z", np.pi / 2), ("x", np.pi), ("x", 0.7), ("z", 1.3)])
def test_gate_bases_verify(axis, theta):
    act = gate_basis(axis, theta)
    assert verify_action(act, A, V)[0] <= 1e-12


def test_not_in_family():
    U = rx(0.4) @ rz(0.9)
    with pytest.raises(NotInFamily):
        gate_basis(U)


def test_init_tensor():
    act = init_action()
    for a in range(4):
        p, q = divmod(a, 2)
        M = A.contract(act.basis[:, a]) * np.sqrt(2)
        ref = np.linalg.matrix_power(np.array([[0, 1], [1, 0]]), q) @ np.outer([1, 0], np.eye(2)[p])
        assert np.allclose(np.abs(M), np.abs(ref), atol=1e-12)


def test_identity_action_coupling_trivial():
    dec = extract_protected_decomposition(cluster_tensor())
    P = chain_protocol(4, {})
    cps = build_couplings(P, dec)
    assert cps[1].is_identity() and cps[2].is_identity()


@settings(max_examples=6, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("xz"), st.floats(0, 2 * np.pi)), min_size=3, max_size=3))
def test_cluster_protocol_matches_circuit(gates):
    n = 6
    P = chain_protocol(n, {s + 1: g for s, g in enumerate(gates)})
    H, _ = cluster_chain_hamiltonian(n)
    v, _ = exact_ground_state(H)
    rho, _ = run_adaptive(v[:, 0], P)
    assert trace_distance(rho, circuit_output(P)) <= 1e-10


def test_identity_protocol_outputs_zero():
    n = 4
    H, _ = cluster_chain_hamiltonian(n)
    v, _ = exact_ground_state(H)
    rho, _ = run_adaptive(v[:, 0], chain_protocol(n, {}))
    assert np.allclose(rho, np.diag([1, 0]), atol=1e-12)


def test_sample_average_converges():
    n = 4
    P = chain_protocol(n, {1: ("x", 0.7), 2: ("z", 1.1)})
    H, _ = cluster_chain_hamiltonian(n)
    v, _ = exact_ground_state(H)
    exact, _ = run_adaptive(v[:, 0], P)
    avg = sum(run_adaptive(v[:, 0], P, "sample", seed=s)[0] for s in range(400)) / 400
    assert trace_distance(avg, exact) <= 0.05


def test_sampling_is_seeded():
    n = 4
    P = chain_protocol(n, {1: ("x", 0.7)})
    H, _ = cluster_chain_hamiltonian(n)
    v, _ = exact_ground_state(H)
    a = run_adaptive(v[:, 0], P, "sample", seed=5)
    b = run_adaptive(v[:, 0], P, "sample", seed=5)
    assert a[1] == b[1] and np.array_equal(a[0], b[0])


def test_postselect_zero_probability():
    n = 3
    P = chain_protocol(n, {})
    H, _ = cluster_chain_hamiltonian(n)
    v, _ = exact_ground_state(H)
    _, tr = run_adaptive(v[:, 0], P)
    probs = {}
    for site, a, p in tr:
        probs.setdefault(site, {})[a] = p
    zero = [(s, a) for s, d in probs.items() for a, p in d.items() if p < 1e-14]
    if zero:
        s, a = zero[0]
        outs = {t: 0 for t in probs}
        outs[s] = a
        with pytest.raises(ZeroProbabilityBranch):
            run_adaptive(v[:, 0], P, "postselect", outcomes=outs)


@pytest.mark.parametrize("B", [0.0, 0.1])
def test_dual_process_matches_adaptive(B):
    n = 5
    P = chain_protocol(n, {1: ("z", 0.7), 3: ("x", 1.9)})
    H, psi, _, D = ground_and_dual(n, B)
    rho, _ = run_adaptive(psi.reshape(-1), P)
    bulk, _ = dual_state(psi, D)
    rd = dual_process_from_state(bulk, P, extract_protected_decomposition(cluster_tensor()))
    assert trace_distance(rho, rd) <= 1e-10


def test_dual_process_synthesized_tensor():
    n = 5
    Pt = synthesize_in_phase_tensor(random_degeneracy_tensor(2, seed=11))
    psi = terminated_state(Pt, n)
    P = chain_protocol(n, {2: ("x", 0.4)})
    rho, _ = run_adaptive(psi.reshape(-1), P)
    bulk, _ = dual_state(psi, disentangler(n))
    rd = dual_process_from_state(bulk, P, extract_protected_decomposition(Pt))
    assert trace_distance(rho, rd) <= 1e-10


def test_entangling_column_is_cz():
    J = correlation_space_process(entangle_action(), column_tensor(2, True), cluster_rep(2))
    assert 1 - process_fidelity(J, CZ2) <= 1e-9


def test_entangle_needs_adjacent_chains():
    lay = Layout2D.horizontal(3, 6)
    with pytest.raises(NotAdjacent):
        quasi1d_protocol(lay, ["init", ("entangle", (0, 2)), "readout"])


def test_quasi1d_cz_protocol():
    lay = Layout2D.horizontal(2, 8)
    qp = quasi1d_protocol(lay, ["init", ("gates", [("x", 0.7), ("x", 1.1)]), ("entangle", (0, 1)), "readout"])
    rq, _ = run_adaptive(qp.state(), qp.protocol)
    psi = CZ2 @ np.kron(rx(0.7) @ [1, 0], rx(1.1) @ [1, 0])
    assert trace_distance(rq, np.outer(psi, psi.conj())) <= 1e-10


def test_2d_remap_small():
    lay = Layout2D.horizontal(2, 6)
    qp = quasi1d_protocol(lay, ["init", ("gates", [("z", 0.4), ("x", 0.9)]), "readout"])
    rq, _ = run_adaptive(qp.state(), qp.protocol)
    r2, loc = run_2d(map_protocol_to_2d(qp))
    assert trace_distance(r2, rq) <= 1e-10
    assert loc <= 1e-10
