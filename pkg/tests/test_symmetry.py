import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mbqc_spt.errors import NotMaximallyNoncommutative, NotProjectiveRep
from mbqc_spt.linalg import X, Y, Z
from mbqc_spt.symmetry import (FactorSystem, ProjectiveRep, cluster_onsite_rep, cluster_rep, cohomology_equivalent,
                               commutator_phase, eigenbasis_group_elements, factor_system_of,
                               irreducibility_sum, irreducible_projective_rep, is_maximally_noncommutative,
                               pauli_rep, rep_from_text, rep_to_text, trivial_rep, z2z2)

G = z2z2(1)
x, z, y = G.index((1, 0)), G.index((0, 1)), G.index((1, 1))


def test_group_indexing_first_generator_least_significant():
    assert (x, z, y) == (1, 2, 3)
    assert G.mul[x, z] == y
    assert all(G.element_order(g) <= 2 for g in range(4))


def test_pauli_factor_system():
    om = factor_system_of(pauli_rep())
    assert np.isclose(om(x, z), -1j)
    assert np.isclose(om(z, x), 1j)
    assert om.cocycle_residual() < 1e-12


def test_trivial_factor_system():
    om = factor_system_of(trivial_rep(G))
    assert np.allclose(om.table, 1)


def test_two_copy_factor_system_is_product():
    om2 = factor_system_of(pauli_rep(2))
    om1 = factor_system_of(pauli_rep(1))
    G2 = z2z2(2)
    for g in range(16):
        for h in range(16):
            g1, g2 = G2.split_index(g, 2)
            h1, h2 = G2.split_index(h, 2)
            assert np.isclose(om2(g, h), om1(g1, h1) * om1(g2, h2))


def test_not_projective():
    bad = ProjectiveRep(G, [np.eye(2), X, Z, np.diag([1, 2])])
    with pytest.raises(NotProjectiveRep):
        factor_system_of(bad)


@pytest.mark.parametrize("rep, expected", [(pauli_rep(), -1), (trivial_rep(G), 1)])
def test_commutator_phase_xz(rep, expected):
    assert np.isclose(commutator_phase(factor_system_of(rep), x, z), expected)


@given(st.integers(0, 15))
def test_commutator_of_element_with_itself_is_one(g):
    om = factor_system_of(pauli_rep(2))
    assert np.isclose(commutator_phase(om, g, g), 1)


@given(st.integers(0, 15), st.integers(0, 15))
def test_commutator_antisymmetric(g, h):
    om = factor_system_of(pauli_rep(2))
    assert np.isclose(commutator_phase(om, g, h) * commutator_phase(om, h, g), 1)


def test_maximal_noncommutativity():
    ok, centre = is_maximally_noncommutative(factor_system_of(pauli_rep()))
    assert ok and list(centre) == [0]
    ok, centre = is_maximally_noncommutative(factor_system_of(trivial_rep(G)))
    assert not ok and len(centre) == 4


def test_pauli_times_trivial_not_maximal():
    from mbqc_spt.symmetry import FiniteAbelianGroup
    H = FiniteAbelianGroup((2, 2, 2))
    mats = [pauli_rep()(g % 4) for g in range(8)]
    om = factor_system_of(ProjectiveRep(H, mats))
    ok, centre = is_maximally_noncommutative(om)
    assert not ok and H.index((0, 0, 1)) in centre


def test_cohomology():
    op = factor_system_of(pauli_rep())
    oc = factor_system_of(cluster_rep())
    assert cohomology_equivalent(op, oc)
    assert cohomology_equivalent(op, op)
    assert not cohomology_equivalent(op, factor_system_of(trivial_rep(G)))


@pytest.mark.parametrize("n", [1, 2])
def test_irreducible_rep(n):
    om = factor_system_of(pauli_rep(n))
    V = irreducible_projective_rep(om)
    assert V.dimension == 2 ** n
    assert cohomology_equivalent(factor_system_of(V), om)
    assert np.isclose(irreducibility_sum(V), 4 ** n)


def test_irreducible_rep_trivial_raises():
    with pytest.raises(NotMaximallyNoncommutative):
        irreducible_projective_rep(factor_system_of(trivial_rep(G)))


def test_cluster_eigenbasis_elements():
    # ++ -> 1, +- -> x, -+ -> z, -- -> y
    g = eigenbasis_group_elements(cluster_onsite_rep(1), factor_system_of(cluster_rep()))
    assert list(g) == [0, x, z, y]


def test_two_column_assignment_is_product():
    g1 = eigenbasis_group_elements(cluster_onsite_rep(1), factor_system_of(cluster_rep(1)))
    g2 = eigenbasis_group_elements(cluster_onsite_rep(2), factor_system_of(cluster_rep(2)))
    G2 = z2z2(2)
    for i in range(16):
        a, b = divmod(i, 4)
        # basis is kron(copy 1, copy 2): index = 4 a + b
        assert G2.split_index(g2[i], 2) == (g1[a], g1[b])


def test_rep_text_roundtrip():
    V = pauli_rep(2)
    W = rep_from_text(rep_to_text(V))
    assert all(np.allclose(V(g), W(g)) for g in range(16))


@settings(max_examples=25)
@given(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3))
def test_cocycle_condition(g, h, k):
    om = factor_system_of(pauli_rep())
    lhs = om(g, h) * om(G.mul[g, h], k)
    rhs = om(h, k) * om(g, G.mul[h, k])
    assert np.isclose(lhs, rhs)
