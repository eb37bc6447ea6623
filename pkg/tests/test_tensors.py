import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbqc_spt.errors import DegenerateLeadingEigenvalue, InvalidCut, NotInjective
from mbqc_spt.ground_state import cluster_tensor, random_degeneracy_tensor, synthesize_in_phase_tensor
from mbqc_spt.noise import markov_chain_tensor
from mbqc_spt.tensors import (FiniteMps, MpsTensor, PfcsSpec, canonical_form, check_density, correlation_length,
                              entanglement_spectrum, injectivity_check, reduced_density, tensor_from_bytes,
                              tensor_from_text, tensor_to_bytes, tensor_to_text, trace_distance, transfer_channel)


def test_cluster_transfer_spectrum():
    spec = np.sort(np.abs(transfer_channel(cluster_tensor()).spectrum()))[::-1]
    assert np.allclose(spec, [1, 0, 0, 0], atol=1e-12)


def test_trivial_transfer_channel():
    T = transfer_channel(MpsTensor(np.ones((1, 1, 1))))
    assert np.allclose(T.spectrum(), [1])


def test_cluster_canonical_form():
    A2, Lam, a = canonical_form(cluster_tensor())
    assert np.allclose(Lam, np.eye(2) / 2, atol=1e-12)
    assert abs(a) < 1e-12
    assert correlation_length(cluster_tensor()) == 0


def test_random_tensor_canonical(rng):
    A = MpsTensor(rng.normal(size=(4, 2, 2)) + 1j * rng.normal(size=(4, 2, 2)))
    A2, Lam, a = canonical_form(A)
    unital = sum(m @ m.conj().T for m in A2.data)
    assert np.abs(unital - np.eye(2)).max() < 1e-10
    assert abs(a) < 1


def test_non_injective():
    blk = np.zeros((2, 2, 2))
    blk[0] = np.diag([1, 0])
    blk[1] = np.diag([1, 0])
    assert not injectivity_check(MpsTensor(blk))
    with pytest.raises((NotInjective, DegenerateLeadingEigenvalue)):
        canonical_form(MpsTensor(blk))


@pytest.mark.parametrize("A, expected", [
    (cluster_tensor(), True),
    (MpsTensor(np.zeros((2, 2, 2))), False),
    (MpsTensor(np.array([[[1.0]], [[0.5]]])), True),
])
def test_injectivity(A, expected):
    assert injectivity_check(A) is expected


def test_markov_embedding_correlation_length():
    assert abs(correlation_length(markov_chain_tensor(np.exp(-1))) - 1) < 1e-9


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_dual_correlation_length_not_larger(seed):
    At = random_degeneracy_tensor(2, seed=seed)
    A = synthesize_in_phase_tensor(At)
    assert correlation_length(At) <= correlation_length(A) + 1e-8


def test_pfcs_two_site_purity():
    rho = reduced_density(PfcsSpec(cluster_tensor()), [0, 1])
    assert np.isclose(np.trace(rho @ rho).real, 0.25)
    assert check_density(rho)


def test_product_mps_site_state():
    v = np.array([0.6, 0.8])
    A = MpsTensor(v.reshape(2, 1, 1))
    rho = reduced_density(FiniteMps([A] * 3, np.ones(1), np.ones(1)), [1])
    assert np.allclose(rho, np.outer(v, v))


@pytest.mark.parametrize("a, b, expected", [
    ([1, 0], [1, 0], 0.0),
    ([1, 0], [0, 1], 2.0),
    ([1, 0], [2 ** -0.5, 2 ** -0.5], np.sqrt(2)),
])
def test_trace_distance(a, b, expected):
    a, b = np.array(a, float), np.array(b, float)
    assert np.isclose(trace_distance(np.outer(a, a), np.outer(b, b)), expected)


def test_entanglement_spectra():
    prod = np.zeros((2, 2, 2))
    prod[0, 0, 0] = 1
    assert np.allclose(entanglement_spectrum(prod, 1)[:1], [1]) and np.allclose(entanglement_spectrum(prod, 1)[1:], 0)
    ghz = np.zeros((2, 2, 2))
    ghz[0, 0, 0] = ghz[1, 1, 1] = 2 ** -0.5
    assert np.allclose(entanglement_spectrum(ghz, 1)[:2], [0.5, 0.5])
    with pytest.raises(InvalidCut):
        entanglement_spectrum(ghz, 3)


def test_cluster_midchain_spectrum():
    psi = FiniteMps([cluster_tensor()] * 4, np.array([1.0, 0]), np.array([1.0, 0])).to_dense()
    spec = entanglement_spectrum(psi, 2)
    assert np.allclose(spec[:2], [0.5, 0.5]) and np.allclose(spec[2:], 0)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=20)
def test_serialization_roundtrip(seed):
    r = np.random.default_rng(seed)
    A = MpsTensor(r.normal(size=(3, 2, 2)) + 1j * r.normal(size=(3, 2, 2)))
    assert np.array_equal(tensor_from_bytes(tensor_to_bytes(A)).data, A.data)
    assert np.allclose(tensor_from_text(tensor_to_text(A)).data, A.data, atol=1e-12)
