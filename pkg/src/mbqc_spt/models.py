"""Cluster Hamiltonians (1-D, quasi-1D, 2-D), symmetry actions and the CZ duality.

Qubits are integers; in dense vectors qubit 0 is the most significant bit.
For a terminated chain of n two-qubit sites the layout is

    0 = tL, 2j-1 = a_j, 2j = b_j (j = 1..n), 2n+1 = tR.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BadLayout, DimensionMismatch, SizeOverflow, TooSmall
from .linalg import PAULI, embed_sparse, kron_all, pauli_string_mul
from .symmetry import FiniteAbelianGroup, z2z2
from .tensors import DENSE_CAP


@dataclass
class Term:
    support: tuple
    matrix: np.ndarray
    pauli: tuple = None  # (coeff, {qubit: label}) when the term is a Pauli string

    @staticmethod
    def from_pauli(coeff: float, ops: dict) -> "Term":
        support = tuple(sorted(ops))
        mat = coeff * kron_all([PAULI[ops[q]] for q in support])
        return Term(support, mat, (complex(coeff), dict(ops)))


@dataclass
class LocalHamiltonian:
    n_qubits: int
    terms: list
    labels: list = None
    sites: list = None  # list of qubit tuples (two-qubit sites), in chain order
    tl: int = None
    tr: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels is None:
            self.labels = [f"q{i}" for i in range(self.n_qubits)]
        for t in self.terms:
            if any(q < 0 or q >= self.n_qubits for q in t.support):
                raise DimensionMismatch("term support outside lattice")
            if np.abs(t.matrix - t.matrix.conj().T).max() > 1e-12:
                raise ValueError("term is not Hermitian")

    @property
    def J(self) -> float:
        if not self.terms:
            return 0.0
        return float(max(np.linalg.norm(t.matrix, 2) for t in self.terms))

    @property
    def range(self) -> int:
        if not self.terms:
            return 0
        return int(max(max(t.support) - min(t.support) for t in self.terms))

    def __add__(self, other: "LocalHamiltonian") -> "LocalHamiltonian":
        if other.n_qubits != self.n_qubits:
            raise DimensionMismatch("lattices differ")
        return LocalHamiltonian(self.n_qubits, list(self.terms) + list(other.terms), self.labels,
                                self.sites, self.tl, self.tr, dict(self.meta))

    def scaled(self, c: float) -> "LocalHamiltonian":
        terms = []
        for t in self.terms:
            p = None if t.pauli is None else (t.pauli[0] * c, t.pauli[1])
            terms.append(Term(t.support, c * t.matrix, p))
        return LocalHamiltonian(self.n_qubits, terms, self.labels, self.sites, self.tl, self.tr, dict(self.meta))

    def with_terms(self, terms) -> "LocalHamiltonian":
        return LocalHamiltonian(self.n_qubits, list(terms), self.labels, self.sites, self.tl, self.tr, dict(self.meta))

    def to_sparse(self) -> sp.csr_matrix:
        dim = 2 ** self.n_qubits
        if dim > DENSE_CAP:
            raise SizeOverflow(f"{self.n_qubits} qubits exceed the dense cap (2^22); use <= 22 qubits")
        H = sp.csr_matrix((dim, dim), dtype=complex)
        for t in self.terms:
            H = H + embed_sparse(self.n_qubits, t.support, t.matrix)
        return H.tocsr()

    def norm_bound(self) -> float:
        return float(sum(np.linalg.norm(t.matrix, 2) for t in self.terms))

    def to_csv_rows(self):
        rows = []
        for k, t in enumerate(self.terms):
            sup = " ".join(str(q) for q in t.support)
            if t.pauli is not None:
                word = "".join(t.pauli[1][q] for q in t.support)
                rows.append((sup, word, f"{t.pauli[0].real:.12g}"))
            else:
                rows.append((sup, f"dense#{k}", "1"))
        return rows


@dataclass
class SymmetryAction:
    """g -> global unitary U(g) = phase * (tensor product of single-qubit Paulis)."""

    group: FiniteAbelianGroup
    patterns: dict  # g index -> (phase, {qubit: label})

    def restricted(self, g, support) -> np.ndarray:
        ph, ops = self.patterns[self.group.index(g)]
        return kron_all([PAULI[ops.get(q, "I")] for q in support])

    def full_sparse(self, g, n_qubits) -> sp.csr_matrix:
        ph, ops = self.patterns[self.group.index(g)]
        if not ops:
            return ph * sp.identity(2 ** n_qubits, dtype=complex, format="csr")
        sup = sorted(ops)
        return ph * embed_sparse(n_qubits, sup, kron_all([PAULI[ops[q]] for q in sup]))

    @staticmethod
    def from_generators(group: FiniteAbelianGroup, gens: list) -> "SymmetryAction":
        """Build all elements of a (Z2)^k group from generator patterns (phase, ops)."""
        patterns = {0: (1.0 + 0j, {})}
        for g in range(1, group.order):
            e = group.elements[g]
            ph, ops = 1.0 + 0j, {}
            for k, ek in enumerate(e):
                for _ in range(ek):
                    p2, ops = pauli_string_mul(ops, gens[k][1])
                    ph *= p2 * gens[k][0]
            patterns[g] = (ph, ops)
        return SymmetryAction(group, patterns)


# ----------------------------------------------------------------------------
# 1-D cluster chains


def _terminated_terms(n, tl, a, b, tr):
    T = []
    for j in range(2, n + 1):
        T.append({b(j - 1): "Z", a(j): "X", b(j): "Z"})
    for j in range(1, n):
        T.append({a(j): "Z", b(j): "X", a(j + 1): "Z"})
    T += [{tl: "Z", a(1): "Z"}, {tl: "X", a(1): "X", b(1): "Z"},
          {a(n): "Z", b(n): "X", tr: "Z"}, {b(n): "Z", tr: "X"}]
    return [Term.from_pauli(-1.0, t) for t in T]


def cluster_chain_hamiltonian(n_sites: int, boundary: str = "terminated"):
    """Cluster chain of two-qubit sites; returns (LocalHamiltonian, SymmetryAction)."""
    if n_sites < 2:
        raise TooSmall("need at least two sites")
    G = z2z2(1)
    if boundary == "terminated":
        n = n_sites
        tl, tr = 0, 2 * n + 1
        a = lambda j: 2 * j - 1
        b = lambda j: 2 * j
        terms = _terminated_terms(n, tl, a, b, tr)
        labels = ["tL"] + [f"{c}{j}" for j in range(1, n + 1) for c in "ab"] + ["tR"]
        sites = [(a(j), b(j)) for j in range(1, n + 1)]
        gx = {tl: "X", tr: "X", **{a(j): "X" for j in range(1, n + 1)}}
        gz = {tl: "Z", tr: "Z", **{b(j): "X" for j in range(1, n + 1)}}
        H = LocalHamiltonian(2 * n + 2, terms, labels, sites, tl, tr, {"family": "cluster", "boundary": boundary})
    elif boundary == "open":
        nq = 2 * n_sites
        terms = [Term.from_pauli(-1.0, {i - 1: "Z", i: "X", i + 1: "Z"}) for i in range(1, nq - 1)]
        labels = [f"{c}{j}" for j in range(1, n_sites + 1) for c in "ab"]
        sites = [(2 * j, 2 * j + 1) for j in range(n_sites)]
        gx = {2 * j: "X" for j in range(n_sites)}
        gz = {2 * j + 1: "X" for j in range(n_sites)}
        H = LocalHamiltonian(nq, terms, labels, sites, None, None, {"family": "cluster", "boundary": boundary})
    else:
        raise ValueError(f"unknown boundary {boundary!r} (expected 'open' or 'terminated')")
    S = SymmetryAction.from_generators(G, [(1.0, gx), (1.0, gz)])
    return H, S


def check_symmetry(H: LocalHamiltonian, S: SymmetryAction) -> float:
    """max over group elements and terms of ||[term, U(g)|_support]||."""
    res = 0.0
    for g in range(S.group.order):
        for t in H.terms:
            U = S.restricted(g, t.support)
            c = t.matrix @ U - U @ t.matrix
            res = max(res, float(np.linalg.norm(c, 2)) if c.size else 0.0)
    return res


def symmetrize_perturbation(V: LocalHamiltonian, S: SymmetryAction) -> LocalHamiltonian:
    terms = []
    for t in V.terms:
        acc = np.zeros_like(t.matrix)
        for g in range(S.group.order):
            U = S.restricted(g, t.support)
            acc = acc + U @ t.matrix @ U.conj().T
        acc = acc / S.group.order
        if np.abs(acc).max() > 1e-14:
            p = t.pauli if (t.pauli is not None and np.allclose(acc, t.matrix)) else None
            terms.append(Term(t.support, acc, p))
    return V.with_terms(terms)


def transverse_field_perturbation(B: float, qubits, n_qubits: int = None) -> LocalHamiltonian:
    """V = B * sum_i X_i over the given qubits (empty when B == 0)."""
    qubits = list(qubits)
    if n_qubits is None:
        n_qubits = max(qubits) + 1 if qubits else 0
    terms = [] if B == 0 else [Term.from_pauli(float(B), {q: "X"}) for q in qubits]
    return LocalHamiltonian(n_qubits, terms, meta={"family": "transverse_field", "B": B})


def z_field_perturbation(h: float, qubits, n_qubits: int) -> LocalHamiltonian:
    """Symmetry-breaking control: h * sum_i Z_i."""
    terms = [] if h == 0 else [Term.from_pauli(float(h), {q: "Z"}) for q in qubits]
    return LocalHamiltonian(n_qubits, terms, meta={"family": "z_field", "h": h})


def sublattice_zz_perturbation(J: float, H: LocalHamiltonian) -> LocalHamiltonian:
    """J * sum_j Z_{a_j} Z_{a_{j+1}} on the a-sublattice (symmetric: two sign flips cancel)."""
    sites = H.sites
    terms = [Term.from_pauli(float(J), {sites[j][0]: "Z", sites[j + 1][0]: "Z"}) for j in range(len(sites) - 1)]
    return LocalHamiltonian(H.n_qubits, terms, meta={"family": "zz", "J": J})


def random_symmetric_perturbation(J: float, H: LocalHamiltonian, S: SymmetryAction, r: int = 2, seed: int = 0):
    """Random Hermitian range-r terms on consecutive chain qubits, group-averaged, scaled to norm J."""
    rng = np.random.default_rng(seed)
    chain = [q for s in H.sites for q in s]
    terms = []
    for start in range(len(chain) - r + 1):
        sup = tuple(chain[start:start + r])
        a = rng.normal(size=(2 ** r, 2 ** r)) + 1j * rng.normal(size=(2 ** r, 2 ** r))
        terms.append(Term(sup, (a + a.conj().T) / 2))
    V = symmetrize_perturbation(LocalHamiltonian(H.n_qubits, terms), S)
    out = []
    for t in V.terms:
        nrm = np.linalg.norm(t.matrix, 2)
        if nrm > 1e-12:
            out.append(Term(t.support, J * t.matrix / nrm))
    return V.with_terms(out)


# ----------------------------------------------------------------------------
# 2-D layouts and quasi-1D models


@dataclass
class Layout2D:
    width: int
    height: int
    chains: list  # list of paths; each path a list of (row, col)
    L: set  # CZ edges as frozensets of qubit indices
    non_chain: set = field(default_factory=set)

    def q(self, r, c) -> int:
        return r * self.width + c

    @property
    def n_qubits(self) -> int:
        return self.width * self.height

    def edges(self):
        E = []
        for r in range(self.height):
            for c in range(self.width):
                if c + 1 < self.width:
                    E.append(frozenset((self.q(r, c), self.q(r, c + 1))))
                if r + 1 < self.height:
                    E.append(frozenset((self.q(r, c), self.q(r + 1, c))))
        return E

    def neighbours(self, q):
        return sorted(next(iter(e - {q})) for e in self.edges() if q in e)

    def chain_edges(self):
        out = set()
        for path in self.chains:
            for p1, p2 in zip(path[:-1], path[1:]):
                out.add(frozenset((self.q(*p1), self.q(*p2))))
        return out

    def chain_qubits(self):
        return [[self.q(*p) for p in path] for path in self.chains]

    @staticmethod
    def _complete(width, height, chains):
        lay = Layout2D(width, height, chains, set())
        ce = lay.chain_edges()
        lay.L = {e for e in lay.edges() if e not in ce}
        on_chain = {q for path in lay.chain_qubits() for q in path}
        lay.non_chain = set(range(lay.n_qubits)) - on_chain
        validate_layout(lay)
        return lay

    @staticmethod
    def horizontal(n_chains: int, length: int, spacing: int = 2) -> "Layout2D":
        """Chains along rows 0, spacing, 2*spacing, ...; rows in between are non-chain."""
        height = (n_chains - 1) * spacing + 1
        chains = [[(k * spacing, c) for c in range(length)] for k in range(n_chains)]
        return Layout2D._complete(length, height, chains)

    @staticmethod
    def diagonal(width: int, height: int) -> "Layout2D":
        """Staircase chains occupying diagonals col-row in {4k, 4k+1}."""
        chains = []
        for k0 in range(-height - 1, width + 1):
            if k0 % 4:
                continue
            cells = [(r, c) for r in range(height) for c in range(width) if (c - r) in (k0, k0 + 1)]
            if not cells:
                continue
            # order along the staircase: (r, r+k0) -> (r, r+k0+1) -> (r+1, r+k0+1) ...
            cells.sort(key=lambda rc: (rc[0] + rc[1], rc[0]))
            path = [cells[0]]
            for cell in cells[1:]:
                if abs(cell[0] - path[-1][0]) + abs(cell[1] - path[-1][1]) != 1:
                    if len(path) > 1:
                        chains.append(path)
                    path = [cell]
                else:
                    path.append(cell)
            if len(path) > 1:
                chains.append(path)
        return Layout2D._complete(width, height, chains)


def validate_layout(lay: Layout2D):
    seen = set()
    for path in lay.chain_qubits():
        if seen & set(path):
            raise BadLayout("chain paths overlap")
        seen |= set(path)
    E = set(lay.edges())
    if not lay.L <= E:
        raise BadLayout("L contains non-nearest-neighbour pairs")
    ce = lay.chain_edges()
    if not ce <= E:
        raise BadLayout("chain path is not nearest-neighbour")
    owner = {q: k for k, path in enumerate(lay.chain_qubits()) for q in path}
    for e in E - lay.L:
        i, j = tuple(e)
        if e not in ce:
            raise BadLayout(f"edge {sorted(e)} left coupled by the layout")
        if owner.get(i) != owner.get(j):
            raise BadLayout("L leaves two chains coupled")


def cluster_2d_hamiltonian(layout: Layout2D) -> LocalHamiltonian:
    """-sum_v X_v prod_{w ~ v} Z_w on the open rectangular lattice."""
    terms = []
    for v in range(layout.n_qubits):
        ops = {v: "X", **{w: "Z" for w in layout.neighbours(v)}}
        terms.append(Term.from_pauli(-1.0, ops))
    return LocalHamiltonian(layout.n_qubits, terms, meta={"family": "cluster2d"})


def cz_duality(layout: Layout2D):
    """Edge list of the global CZ circuit U = prod_{(i,j) in L} CZ_ij."""
    validate_layout(layout)
    return sorted(tuple(sorted(e)) for e in layout.L)


def conjugate_pauli_by_cz(coeff, ops: dict, edges):
    """CZ-circuit conjugation of a Pauli string: X_i -> X_i Z_j, Z unchanged (per edge)."""
    phase = complex(coeff)
    ops = dict(ops)
    for i, j in edges:
        xi = ops.get(i, "I") in "XY"
        xj = ops.get(j, "I") in "XY"
        for src, dst, flag in ((i, j, xi), (j, i, xj)):
            if flag:
                ph, ops = pauli_string_mul(ops, {dst: "Z"})
                phase *= ph
        if xi and xj:
            # CZ (X x X) CZ = (XZ) x (ZX) = - (Y x Y) ...; fix ordering phase
            phase *= -1
    return phase, ops


def conjugate_by_cz(H: LocalHamiltonian, edges) -> LocalHamiltonian:
    terms = []
    for t in H.terms:
        if t.pauli is None:
            raise ValueError("CZ conjugation is symbolic and needs Pauli terms")
        ph, ops = conjugate_pauli_by_cz(t.pauli[0], t.pauli[1], edges)
        terms.append(Term.from_pauli(ph.real, ops))
    return H.with_terms(terms)


def quasi1d_hamiltonian(n_chains: int, n_columns: int, terminated: bool = True, spacing: int = 2,
                        uncoupled_strength: float = 0.5):
    """Stack of cluster chains (2*n_columns qubits each) plus -c X on uncoupled qubits.

    Qubits follow the row-major order of the matching 2-D lattice
    (``row * 2*n_columns + col``); terminating particles, when present, are
    appended after the lattice qubits as (tL_k, tR_k) per chain.  Without
    terminators the chains carry graph-state end terms (the CZ-duality image of
    the open 2-D cluster model); that variant has no declared symmetry.
    """
    if n_chains < 1 or n_columns < 2:
        raise TooSmall("need n_chains >= 1 and n_columns >= 2")
    W = 2 * n_columns
    height = (n_chains - 1) * spacing + 1
    nq_lat = W * height
    chain_rows = [k * spacing for k in range(n_chains)]
    terms = []
    gens = []
    n_qubits = nq_lat + (2 * n_chains if terminated else 0)
    for k, r in enumerate(chain_rows):
        qs = [r * W + c for c in range(W)]
        if terminated:
            tl, tr = nq_lat + 2 * k, nq_lat + 2 * k + 1
            a = lambda j, qs=qs: qs[2 * (j - 1)]
            b = lambda j, qs=qs: qs[2 * (j - 1) + 1]
            terms += _terminated_terms(n_columns, tl, a, b, tr)
            gens.append((1.0, {tl: "X", tr: "X", **{a(j): "X" for j in range(1, n_columns + 1)}}))
            gens.append((1.0, {tl: "Z", tr: "Z", **{b(j): "X" for j in range(1, n_columns + 1)}}))
        else:
            for i in range(W):
                ops = {qs[i]: "X"}
                if i > 0:
                    ops[qs[i - 1]] = "Z"
                if i < W - 1:
                    ops[qs[i + 1]] = "Z"
                terms.append(Term.from_pauli(-1.0, ops))
    non_chain = [q for q in range(nq_lat) if q // W not in chain_rows]
    terms += [Term.from_pauli(-uncoupled_strength, {q: "X"}) for q in non_chain]
    sites = []
    for j in range(n_columns):
        sites.append(tuple(r * W + c for r in range(height) for c in (2 * j, 2 * j + 1)))
    H = LocalHamiltonian(n_qubits, terms, sites=sites,
                         meta={"family": "quasi1d", "n_chains": n_chains, "n_columns": n_columns,
                               "terminated": terminated, "spacing": spacing, "chain_rows": chain_rows})
    if terminated:
        S = SymmetryAction.from_generators(z2z2(n_chains), gens)
    else:
        S = SymmetryAction(FiniteAbelianGroup(()), {0: (1.0 + 0j, {})})
    return H, S


def layout_symmetry_generators(layout: Layout2D):
    """2-D symmetry generators: CZ-conjugated single-chain sublattice X strings."""
    edges = cz_duality(layout)
    gens = []
    for path in layout.chain_qubits():
        for parity in (0, 1):
            ops = {q: "X" for q in path[parity::2]}
            gens.append(conjugate_pauli_by_cz(1.0, ops, edges))
    return gens


def hamiltonians_equal(H1: LocalHamiltonian, H2: LocalHamiltonian, tol: float = 1e-12) -> bool:
    """Term-multiset equality of two Pauli Hamiltonians."""
    def key(t):
        c, ops = t.pauli
        return tuple(sorted(ops.items())), round(c.real, 10), round(c.imag, 10)
    if any(t.pauli is None for t in H1.terms + H2.terms):
        return False
    return sorted(map(key, H1.terms)) == sorted(map(key, H2.terms))
