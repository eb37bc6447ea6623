"""Finite abelian groups, factor systems and projective representations.

Group elements are addressed by integer index.  For a group with generator
orders ``(n_0, n_1, ...)`` the element with exponent vector ``e`` has index
``e_0 + n_0 * (e_1 + n_1 * (e_2 + ...))`` (first generator least significant).
For Z2 x Z2 this gives ``1 -> 0, x -> 1, z -> 2, y = xz -> 3``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NoSolution,
    NotMaximallyNoncommutative,
    NotProjectiveRep,
    UnsupportedGroup,
)
from .linalg import I2, X, Y, Z, HAD, kron_all

TOL = 1e-10
Z2Z2_LABELS = ("1", "x", "z", "y")


class FiniteAbelianGroup:
    """Direct product of cyclic groups with the given generator orders."""

    def __init__(self, orders):
        self.orders = tuple(int(o) for o in orders)
        if any(o < 1 for o in self.orders):
            raise ValueError("generator orders must be positive")
        self.elements = [tuple(e) for e in itertools.product(*[range(o) for o in self.orders[::-1]])]
        self.elements = [e[::-1] for e in self.elements]
        self.elements.sort(key=self._index_of)
        self.order = len(self.elements)
        n = self.order
        self.mul = np.empty((n, n), dtype=np.int64)
        for a, ea in enumerate(self.elements):
            for b, eb in enumerate(self.elements):
                self.mul[a, b] = self._index_of(tuple((x + y) % o for x, y, o in zip(ea, eb, self.orders)))
        self.inv = np.array([self._index_of(tuple((-x) % o for x, o in zip(e, self.orders))) for e in self.elements])
        self.identity = 0

    def _index_of(self, e):
        idx, scale = 0, 1
        for x, o in zip(e, self.orders):
            idx += x * scale
            scale *= o
        return idx

    def index(self, e) -> int:
        """Index of an element given as exponent vector, index, or Z2xZ2 label."""
        if isinstance(e, (int, np.integer)):
            if not 0 <= e < self.order:
                raise ValueError(f"element index {e} out of range")
            return int(e)
        if isinstance(e, str):
            if self.orders == (2, 2) and e in Z2Z2_LABELS:
                return Z2Z2_LABELS.index(e)
            raise ValueError(f"unknown element label {e!r}")
        e = tuple(int(x) % o for x, o in zip(e, self.orders))
        return self._index_of(e)

    def element_order(self, g: int) -> int:
        k, h = 1, g
        while h != self.identity:
            h = self.mul[h, g]
            k += 1
        return k

    @property
    def exponent(self) -> int:
        return int(np.lcm.reduce(self.orders)) if self.orders else 1

    def __eq__(self, other):
        return isinstance(other, FiniteAbelianGroup) and self.orders == other.orders

    def __hash__(self):
        return hash(self.orders)

    def __repr__(self):
        return f"FiniteAbelianGroup({list(self.orders)})"

    def product(self, other: "FiniteAbelianGroup") -> "FiniteAbelianGroup":
        return FiniteAbelianGroup(self.orders + other.orders)

    def split_index(self, g: int, n_first: int):
        """Split index of a product group element into (first part, second part)."""
        e = self.elements[g]
        a = FiniteAbelianGroup(self.orders[:n_first])
        b = FiniteAbelianGroup(self.orders[n_first:])
        return a.index(e[:n_first]), b.index(e[n_first:])


def z2z2(n_copies: int = 1) -> FiniteAbelianGroup:
    return FiniteAbelianGroup((2, 2) * n_copies)


@dataclass(frozen=True)
class FactorSystem:
    group: FiniteAbelianGroup
    table: np.ndarray  # omega[g, h]

    def __call__(self, g, h):
        return self.table[self.group.index(g), self.group.index(h)]

    def cocycle_residual(self) -> float:
        G, w = self.group, self.table
        m = G.mul
        n = G.order
        g = np.arange(n)[:, None, None]
        h = np.arange(n)[None, :, None]
        k = np.arange(n)[None, None, :]
        lhs = w[g, h] * w[m[g, h], k]
        rhs = w[h, k] * w[g, m[h, k]]
        return float(np.abs(lhs - rhs).max())


@dataclass(frozen=True)
class ProjectiveRep:
    group: FiniteAbelianGroup
    matrices: tuple

    @property
    def dimension(self) -> int:
        return self.matrices[0].shape[0]

    def __call__(self, g):
        return self.matrices[self.group.index(g)]

    def conj(self) -> "ProjectiveRep":
        return ProjectiveRep(self.group, tuple(m.conj() for m in self.matrices))

    def tensor(self, other: "ProjectiveRep") -> "ProjectiveRep":
        G = self.group.product(other.group)
        mats = []
        for g in range(G.order):
            a, b = G.split_index(g, len(self.group.orders))
            mats.append(np.kron(self.matrices[a], other.matrices[b]))
        return ProjectiveRep(G, tuple(mats))


@dataclass(frozen=True)
class OnSiteRep:
    """Linear on-site representation with a simultaneous eigenbasis (columns of `basis`)."""

    group: FiniteAbelianGroup
    matrices: tuple
    basis: np.ndarray
    characters: np.ndarray = field(default=None)  # chi[i, g]

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def __call__(self, g):
        return self.matrices[self.group.index(g)]

    @staticmethod
    def from_matrices(group: FiniteAbelianGroup, matrices, basis=None, seed: int = 7):
        mats = tuple(np.asarray(m, dtype=complex) for m in matrices)
        d = mats[0].shape[0]
        if basis is None:
            rng = np.random.default_rng(seed)
            h = np.zeros((d, d), dtype=complex)
            for m in mats:
                r, s = rng.normal(size=2)
                h += r * (m + m.conj().T) / 2 + s * (m - m.conj().T) / 2j
            _, basis = np.linalg.eigh(h)
        basis = np.asarray(basis, dtype=complex)
        chi = np.array([[np.vdot(basis[:, i], m @ basis[:, i]) for m in mats] for i in range(d)])
        for i in range(d):
            for k, m in enumerate(mats):
                if np.linalg.norm(m @ basis[:, i] - chi[i, k] * basis[:, i]) > 1e-9:
                    raise NoSolution("basis does not diagonalize the on-site representation")
        return OnSiteRep(group, mats, basis, chi)

    def tensor(self, other: "OnSiteRep") -> "OnSiteRep":
        G = self.group.product(other.group)
        mats = []
        for g in range(G.order):
            a, b = G.split_index(g, len(self.group.orders))
            mats.append(np.kron(self.matrices[a], other.matrices[b]))
        return OnSiteRep.from_matrices(G, mats, basis=np.kron(self.basis, other.basis))

    def linear_residual(self) -> float:
        G = self.group
        res = 0.0
        for g in range(G.order):
            for h in range(G.order):
                res = max(res, np.abs(self.matrices[g] @ self.matrices[h] - self.matrices[G.mul[g, h]]).max())
        return float(res)


# ----------------------------------------------------------------------------
# standard representations


def pauli_rep(n_copies: int = 1) -> ProjectiveRep:
    """Pauli representation 1 -> I, x -> X, z -> Z, y -> Y, tensored n_copies times."""
    single = ProjectiveRep(z2z2(1), (I2, X, Z, Y))
    rep = single
    for _ in range(n_copies - 1):
        rep = rep.tensor(single)
    return rep


def cluster_rep(n_copies: int = 1) -> ProjectiveRep:
    """Rephased Pauli representation g = x^m z^n -> X^m Z^n (so y -> XZ = -iY).

    This is the representative read off from the cluster tensor, for which the
    degeneracy tensor of the cluster state is the constant 1/2.
    """
    single = ProjectiveRep(z2z2(1), (I2, X, Z, X @ Z))
    rep = single
    for _ in range(n_copies - 1):
        rep = rep.tensor(single)
    return rep


def cluster_onsite_rep(n_copies: int = 1) -> OnSiteRep:
    """u(x) = X (x) I, u(z) = I (x) X on a two-qubit site, eigenbasis |+-> ordered (a, b)."""
    G = z2z2(1)
    mats = (np.eye(4, dtype=complex), np.kron(X, I2), np.kron(I2, X), np.kron(X, X))
    single = OnSiteRep.from_matrices(G, mats, basis=np.kron(HAD, HAD))
    rep = single
    for _ in range(n_copies - 1):
        rep = rep.tensor(single)
    return rep


def trivial_rep(group: FiniteAbelianGroup) -> ProjectiveRep:
    return ProjectiveRep(group, tuple(np.eye(1, dtype=complex) for _ in range(group.order)))


# ----------------------------------------------------------------------------
# operations


def factor_system_of(rep: ProjectiveRep, tol: float = TOL) -> FactorSystem:
    """omega(g, h) defined by W(g) W(h) = omega(g, h) W(gh)."""
    G, W = rep.group, rep.matrices
    D = rep.dimension
    for m in W:
        if np.abs(m @ m.conj().T - np.eye(D)).max() > tol:
            raise NotProjectiveRep("representation matrix is not unitary")
    table = np.empty((G.order, G.order), dtype=complex)
    for g in range(G.order):
        for h in range(G.order):
            lhs = W[g] @ W[h]
            target = W[G.mul[g, h]]
            w = np.trace(target.conj().T @ lhs) / D
            if abs(abs(w) - 1) > 1e-8 or np.abs(lhs - w * target).max() > tol:
                raise NotProjectiveRep(f"no consistent phase for pair ({g}, {h})")
            table[g, h] = w / abs(w)
    return FactorSystem(G, table)


def commutator_phase(omega: FactorSystem, g, h) -> complex:
    g, h = omega.group.index(g), omega.group.index(h)
    return complex(omega.table[g, h] / omega.table[h, g])


def commutator_table(omega: FactorSystem) -> np.ndarray:
    return omega.table / omega.table.T


def is_maximally_noncommutative(omega: FactorSystem):
    """Return (flag, Z_W) where Z_W is the list of element indices commuting with all."""
    c = commutator_table(omega)
    zw = [g for g in range(omega.group.order) if np.all(np.abs(c[g] - 1) < 1e-9)]
    return zw == [omega.group.identity], zw


def cohomology_equivalent(omega1: FactorSystem, omega2: FactorSystem) -> bool:
    """Abelian case: classes agree iff the commutator bicharacters agree."""
    if omega1.group != omega2.group:
        return False
    return bool(np.abs(commutator_table(omega1) - commutator_table(omega2)).max() < 1e-9)


def _is_z2z2_power(G: FiniteAbelianGroup):
    return len(G.orders) % 2 == 0 and all(o == 2 for o in G.orders) and len(G.orders) // 2 <= 4


def irreducible_projective_rep(omega: FactorSystem) -> ProjectiveRep:
    """The unique irreducible projective representation in the class of omega."""
    G = omega.group
    flag, _ = is_maximally_noncommutative(omega)
    if not flag:
        raise NotMaximallyNoncommutative("factor system has a nontrivial projective centre")
    root = int(round(np.sqrt(G.order)))
    if root * root != G.order:
        raise UnsupportedGroup("group order is not a perfect square")
    if _is_z2z2_power(G):
        cand = pauli_rep(len(G.orders) // 2)
        if cohomology_equivalent(factor_system_of(cand), omega):
            return cand
    if G.order > 64:
        raise UnsupportedGroup("generic construction limited to |G| <= 64")
    return _irrep_from_regular(omega, root)


def _irrep_from_regular(omega: FactorSystem, root: int) -> ProjectiveRep:
    """Extract an irreducible block of the twisted regular representation."""
    G, w = omega.group, omega.table
    n = G.order
    L = []
    R = []
    for g in range(n):
        l = np.zeros((n, n), dtype=complex)
        r = np.zeros((n, n), dtype=complex)
        for h in range(n):
            l[G.mul[g, h], h] = w[g, h]
            r[G.mul[h, g], h] = w[h, g]
        L.append(l)
        R.append(r)
    # the twisted right action commutes with the left one; a generic hermitian
    # element of its span splits the space into irreducible blocks of size root
    rng = np.random.default_rng(12345)
    m = sum((rng.normal() + 1j * rng.normal()) * r for r in R)
    m = m + m.conj().T
    evals, evecs = np.linalg.eigh(m)
    P = evecs[:, :root]
    if np.abs(evals[root - 1] - evals[0]) > 1e-6 or (root < n and abs(evals[root] - evals[0]) < 1e-6):
        raise UnsupportedGroup("could not isolate an irreducible block")
    mats = tuple(P.conj().T @ l @ P for l in L)
    for l in L:
        if np.linalg.norm(l @ P - P @ (P.conj().T @ l @ P)) > 1e-8:
            raise UnsupportedGroup("block is not invariant")
    return ProjectiveRep(G, mats)


def eigenbasis_group_elements(u: OnSiteRep, omega: FactorSystem):
    """For each eigenbasis vector i, the unique g_i with chi_i(g) = commutator_phase(g_i, g)."""
    G = omega.group
    if u.group != G:
        raise DimensionMismatch("on-site representation and factor system use different groups")
    flag, _ = is_maximally_noncommutative(omega)
    if not flag:
        raise NotMaximallyNoncommutative("g_i is not unique without maximal non-commutativity")
    c = commutator_table(omega)
    out = []
    for i in range(u.d):
        chi = u.characters[i]
        hits = [g for g in range(G.order) if np.all(np.abs(c[g] - chi) < 1e-8)]
        if not hits:
            raise NoSolution(f"character of basis vector {i} is not realized by conjugation")
        out.append(hits[0])
    return tuple(out)


def irreducibility_sum(rep: ProjectiveRep) -> float:
    """sum_g |tr V(g)|^2, equal to |G| for an irreducible projective representation."""
    return float(sum(abs(np.trace(m)) ** 2 for m in rep.matrices))


# ----------------------------------------------------------------------------
# text serialization


def rep_to_text(rep: ProjectiveRep) -> str:
    lines = ["generators = " + ",".join(str(o) for o in rep.group.orders), f"dimension = {rep.dimension}"]
    for g, m in enumerate(rep.matrices):
        vals = ",".join(f"{z.real:.17g}:{z.imag:.17g}" for z in m.ravel())
        lines.append(f"matrix.{g} = {vals}")
    return "\n".join(lines) + "\n"


def rep_from_text(text: str) -> ProjectiveRep:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        kv[k] = v
    G = FiniteAbelianGroup([int(x) for x in kv["generators"].split(",")])
    D = int(kv["dimension"])
    mats = []
    for g in range(G.order):
        vals = [complex(float(a), float(b)) for a, b in (p.split(":") for p in kv[f"matrix.{g}"].split(","))]
        mats.append(np.array(vals, dtype=complex).reshape(D, D))
    return ProjectiveRep(G, tuple(mats))
