"""Protected/junk decomposition, topological disentangler, dual state and dual Hamiltonian,
Kennedy-Tasaki transform and entanglement-spectrum diagnostics.

Dense chain states with terminating particles are arrays with legs
``[tL, site_1, ..., site_n, tR]``; each site leg has the on-site dimension d
(4 for the two-qubit cluster site, ordered (a, b) in the computational basis).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    NonlocalResult,
    NotFactorized,
    NotInPhase,
    UnsupportedGroup,
    WrongCohomology,
)
from .linalg import PAULI, embed_sparse, kron_all
from .models import LocalHamiltonian, Term
from .symmetry import (
    FactorSystem,
    OnSiteRep,
    ProjectiveRep,
    cluster_onsite_rep,
    cluster_rep,
    cohomology_equivalent,
    eigenbasis_group_elements,
    factor_system_of,
    pauli_rep,
)
from .tensors import MpsTensor, canonical_form

FACTOR_TOL = 1e-6


def rep_for_convention(convention: str = "cluster", n_copies: int = 1) -> ProjectiveRep:
    """Representative of the Pauli class used for V: 'cluster' (X^m Z^n) or 'pauli' (Y for y)."""
    if convention in ("cluster", "kt"):
        return cluster_rep(n_copies)
    if convention == "pauli":
        return pauli_rep(n_copies)
    raise ValueError(f"unknown convention {convention!r}")


# ----------------------------------------------------------------------------
# protected decomposition


@dataclass
class ProtectedDecomposition:
    V: ProjectiveRep
    g_map: tuple
    At: MpsTensor  # degeneracy tensor, indexed by the eigenbasis of u
    residual: float
    gauge: np.ndarray  # U with U^dag A' U = sum V(g_i) (x) At[i]
    basis: np.ndarray  # eigenbasis of the on-site representation (columns)


def _leading_twisted(A: MpsTensor, ug: np.ndarray):
    D = A.D
    Ag = np.array([A.contract(ug.conj().T @ e) for e in np.eye(A.d)])
    T = sum(np.kron(Ag[s], A[s].conj()) for s in range(A.d))
    w, v = np.linalg.eig(T)
    k = int(np.argmax(np.abs(w)))
    return w[k], v[:, k].reshape(D, D)


def _intertwiners(W, V, gens, phis):
    """Solve T V(g) = phi_g^{-1} W(g) T for all generators g (T: C^k -> C^D)."""
    k = V.dimension
    D = W[0].shape[0]
    rows = []
    for g, ph in zip(gens, phis):
        # vec(T V) - vec(W T)/ph = 0 ; row-major vec: vec(A T B) = (A kron B^T) vec(T)
        rows.append(np.kron(np.eye(D), V(g).T) - np.kron(W[g], np.eye(k)) / ph)
    M = np.vstack(rows)
    _, s, vh = np.linalg.svd(M)
    null = vh[np.sum(s > 1e-8):].conj()
    return [x.reshape(D, k) for x in null]


def extract_protected_decomposition(A: MpsTensor, u: OnSiteRep = None, omega: FactorSystem = None,
                                    convention: str = "cluster") -> ProtectedDecomposition:
    """Recover W(g), the V (x) I gauge, the eigenbasis assignment g_i and the degeneracy tensor."""
    u = u or cluster_onsite_rep(1)
    V = rep_for_convention(convention, int(round(np.log(u.group.order) / np.log(4)))) \
        if omega is None else None
    if V is None:
        from .symmetry import irreducible_projective_rep
        V = irreducible_projective_rep(omega)
        if cohomology_equivalent(factor_system_of(V), factor_system_of(rep_for_convention(convention))) \
                if V.group.order == 4 else False:
            V = rep_for_convention(convention)
    omega = omega or factor_system_of(V)
    Ap, Lam, _ = canonical_form(A)
    G = u.group
    W = []
    for g in range(G.order):
        lam, sig = _leading_twisted(Ap, u(g))
        if abs(lam) < 1 - 1e-6:
            raise NotInPhase(f"twisted transfer map for g={g} has leading modulus {abs(lam):.6f} < 1")
        if abs(lam - 1) > 1e-6:
            raise NotInPhase(f"symmetry acts with a nontrivial character beta={lam:.6f}; block sites first")
        Wg = sig.conj().T
        Wg = Wg / np.sqrt(np.trace(Wg @ Wg.conj().T).real / Ap.D)
        if g == 0:
            Wg = np.eye(Ap.D, dtype=complex)
        W.append(Wg)
    Wrep = ProjectiveRep(G, tuple(W))
    omegaW = factor_system_of(Wrep, tol=1e-6)
    if not cohomology_equivalent(omegaW, omega):
        raise WrongCohomology("bond representation is not in the expected cohomology class")
    k = V.dimension
    if Ap.D % k:
        raise WrongCohomology("bond dimension not divisible by the irrep dimension")
    J = Ap.D // k
    gens = [G.index(tuple(1 if j == i else 0 for j in range(len(G.orders)))) for i in range(len(G.orders))]
    choices = []
    for g in gens:
        n = G.element_order(g)
        Wn = np.linalg.matrix_power(W[g], n)[0, 0]
        Vn = np.linalg.matrix_power(V(g), n)[0, 0]
        base = (Wn / Vn) ** (1.0 / n)
        choices.append([base * np.exp(2j * np.pi * m / n) for m in range(n)])
    Ts = None
    for phis in itertools.product(*choices):
        Ts = _intertwiners(W, V, gens, phis)
        if len(Ts) == J:
            break
    if Ts is None or len(Ts) != J:
        raise WrongCohomology("could not intertwine the bond representation with V (x) I")
    # orthonormalize intertwiners (Schur: T_a^dag T_b proportional to identity)
    Gm = np.array([[np.trace(a.conj().T @ b) / k for b in Ts] for a in Ts])
    w, v = np.linalg.eigh(Gm)
    Ts = [sum(v[a, j] * Ts[a] for a in range(J)) / np.sqrt(w[j]) for j in range(J)]
    U = np.zeros((Ap.D, Ap.D), dtype=complex)
    for j, T in enumerate(Ts):
        for vv in range(k):
            U[:, vv * J + j] = T[:, vv]
    g_map = eigenbasis_group_elements(u, factor_system_of(V))
    basis = u.basis
    Ae = [U.conj().T @ Ap.contract(basis[:, i]) @ U for i in range(Ap.d)]
    At = []
    res = 0.0
    for i, M in enumerate(Ae):
        Vg = V(g_map[i])
        blk = np.einsum("ab,aibj->ij", Vg.conj(), M.reshape(k, J, k, J)) / k
        At.append(blk)
        res = max(res, float(np.abs(M - np.kron(Vg, blk)).max()))
    if res > 1e-8:
        raise NotInPhase(f"tensor does not factor as V(g_i) (x) At[i] (residual {res:.3e})")
    return ProtectedDecomposition(V, tuple(g_map), MpsTensor(np.array(At)), res, U, basis)


# ----------------------------------------------------------------------------
# disentangler


@dataclass
class Disentangler:
    n_sites: int
    g_map: tuple
    V: ProjectiveRep
    basis: np.ndarray  # columns |i> of the on-site eigenbasis

    @property
    def k(self) -> int:
        return self.V.dimension

    @property
    def d(self) -> int:
        return self.basis.shape[0]

    def coupling(self, inverse: bool = False) -> np.ndarray:
        """Single-site coupling sum_i |i><i| (x) V(g_i)^dag (or its inverse) on (site, tR)."""
        out = np.zeros((self.d * self.k, self.d * self.k), dtype=complex)
        for i, g in enumerate(self.g_map):
            P = np.outer(self.basis[:, i], self.basis[:, i].conj())
            Vg = self.V(g)
            out += np.kron(P, Vg if inverse else Vg.conj().T)
        return out

    def _apply_site(self, psi, site, inverse=False):
        n = self.n_sites
        C = self.coupling(inverse).reshape(self.d, self.k, self.d, self.k)
        # legs: 0 = tL, 1..n sites, n+1 = tR
        return np.moveaxis(np.tensordot(C, psi, axes=([2, 3], [site, n + 1])), [0, 1], [site, n + 1])

    def apply(self, psi: np.ndarray, inverse: bool = False) -> np.ndarray:
        """D psi (sites n, n-1, ..., 1 in turn) or D^dag psi."""
        n = self.n_sites
        psi = np.asarray(psi, dtype=complex).reshape([self.k] + [self.d] * n + [self.k])
        order = range(n, 0, -1) if not inverse else range(1, n + 1)
        for s in order:
            psi = self._apply_site(psi, s, inverse)
        return psi

    def dual_symmetry_residual(self, u: OnSiteRep, seed: int = 0) -> float:
        """max_g || D U(g) D^dag - V*(g) (x) I (x) V(g) || tested on a random state."""
        n = self.n_sites
        rng = np.random.default_rng(seed)
        shape = [self.k] + [self.d] * n + [self.k]
        phi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
        phi /= np.linalg.norm(phi)
        res = 0.0
        for g in range(u.group.order):
            x = self.apply(phi, inverse=True)
            x = _apply_global(x, self.V(g).conj(), u(g), self.V(g), n)
            x = self.apply(x)
            y = np.tensordot(self.V(g).conj(), phi, axes=(1, 0))
            y = np.moveaxis(np.tensordot(self.V(g), y, axes=(1, n + 1)), 0, n + 1)
            res = max(res, float(np.linalg.norm(x - y)))
        return res


def _apply_global(psi, left, site_op, right, n):
    psi = np.tensordot(left, psi, axes=(1, 0))
    for s in range(1, n + 1):
        psi = np.moveaxis(np.tensordot(site_op, psi, axes=(1, s)), 0, s)
    return np.moveaxis(np.tensordot(right, psi, axes=(1, n + 1)), 0, n + 1)


def disentangler(chain_length: int, g_map=None, V: ProjectiveRep = None, basis=None) -> Disentangler:
    V = V or cluster_rep(1)
    g_map = tuple(range(V.group.order)) if g_map is None else tuple(g_map)
    if basis is None:
        basis = cluster_onsite_rep(1).basis if len(g_map) == 4 else np.eye(len(g_map))
    return Disentangler(chain_length, g_map, V, np.asarray(basis))


def maximally_entangled(k: int) -> np.ndarray:
    return np.eye(k, dtype=complex) / np.sqrt(k)


def dual_state(psi: np.ndarray, D: Disentangler, tol: float = FACTOR_TOL):
    """Apply D and split off the terminating pair; returns (dual state with n site legs, residual)."""
    out = D.apply(psi)
    n = D.n_sites
    nrm = np.linalg.norm(out)
    out = out / nrm
    bulk = np.tensordot(maximally_entangled(D.k).conj(), out, axes=([0, 1], [0, n + 1]))
    residual = float(max(0.0, 1.0 - np.vdot(bulk, bulk).real))
    if residual > tol:
        raise NotFactorized(f"terminating pair does not factor into |I> (residual {residual:.3e})")
    bulk = bulk / np.linalg.norm(bulk)
    return bulk, residual


def reconstruct_from_dual(bulk: np.ndarray, D: Disentangler) -> np.ndarray:
    """D^dag (dual (x) |I>) with legs [tL, sites..., tR]."""
    n = D.n_sites
    full = np.multiply.outer(maximally_entangled(D.k), bulk)  # (tL, tR, sites...)
    full = np.moveaxis(full, 1, n + 1)
    return D.apply(full, inverse=True)


# ----------------------------------------------------------------------------
# dual Hamiltonian


def _site_of(H: LocalHamiltonian):
    owner = {}
    for s, qs in enumerate(H.sites):
        for j, q in enumerate(qs):
            owner[q] = (s, j)
    return owner


def dual_hamiltonian(H: LocalHamiltonian, D: Disentangler, tol: float = 1e-10) -> LocalHamiltonian:
    """Term-wise <I| D h D^dag |I>, expressed on the 2n qubits of the bulk sites.

    Bulk terms (not touching the terminators) must map to operators acting
    trivially on the right terminator; otherwise NonlocalResult is raised.
    """
    if H.tl is None or H.tr is None:
        raise ValueError("dual Hamiltonian needs a terminated chain")
    owner = _site_of(H)
    qps = len(H.sites[0])
    k = D.k
    Iv = maximally_entangled(k).reshape(-1)
    out_terms = []
    for t in H.terms:
        sites = sorted({owner[q][0] for q in t.support if q in owner})
        touches_end = H.tl in t.support or H.tr in t.support
        local = [H.tl] + [q for s in sites for q in H.sites[s]] + [H.tr]
        pos = {q: i for i, q in enumerate(local)}
        M = embed_sparse(len(local), [pos[q] for q in t.support], t.matrix).toarray()
        # disentangler on (tL, sites, tR): sites in decreasing order
        nloc = len(local)
        Dm = np.eye(2 ** nloc, dtype=complex)
        C = D.coupling()
        for j in range(len(sites) - 1, -1, -1):
            sub = [1 + qps * j + r for r in range(qps)] + [nloc - 1]
            Dm = embed_sparse(nloc, sub, C).toarray() @ Dm
        Mp = Dm @ M @ Dm.conj().T
        dim_sites = 2 ** (nloc - 2)
        T4 = Mp.reshape(k, dim_sites, k, k, dim_sites, k)
        if not touches_end:
            core = np.einsum("aibajb->ij", T4) / (k * k)
            test = np.einsum("ac,ij,bd->aibcjd", np.eye(k), core, np.eye(k))
            if np.abs(test - T4).max() > 1e-8:
                raise NonlocalResult(f"term on {t.support} acts nontrivially on the terminator after disentangling")
        ht = _project_I(T4, Iv)
        if np.abs(ht).max() < tol:
            continue
        ht = 0.5 * (ht + ht.conj().T)
        support = tuple(qps * s + r for s in sites for r in range(qps))
        out_terms.append(Term(support, ht))
    n_sites = len(H.sites)
    labels = [f"s{s + 1}.{r}" for s in range(n_sites) for r in range(qps)]
    sites = [tuple(qps * s + r for r in range(qps)) for s in range(n_sites)]
    return LocalHamiltonian(qps * n_sites, out_terms, labels, sites, None, None, {"family": "dual"})


def _project_I(T4, Iv):
    """<I|_{tL tR} M |I>_{tL tR} for M with legs (tL, S, tR ; tL', S', tR')."""
    k = T4.shape[0]
    I2 = Iv.reshape(k, k)
    return np.einsum("ab,aibcjd,cd->ij", I2.conj(), T4, I2)


# ----------------------------------------------------------------------------
# Kennedy-Tasaki transform


def kt_transform(psi: np.ndarray, u: OnSiteRep = None, g_map=None) -> np.ndarray:
    """prod_{k<l} D_kl with D_kl = sum_i |i><i|_k (x) u(x^{m(g_i)})_l on an open chain.

    ``psi`` has one leg per site.  Every factor is diagonal in the product
    eigenbasis of u, so the transform is a phase  prod_{k<l} chi_{i_l}(x^{m(g_{i_k})}).
    """
    u = u or cluster_onsite_rep(1)
    G = u.group
    if G.orders != (2, 2):
        raise UnsupportedGroup("the Kennedy-Tasaki transform is implemented for Z2 x Z2")
    if g_map is None:
        g_map = eigenbasis_group_elements(u, factor_system_of(cluster_rep(1)))
    psi = np.asarray(psi, dtype=complex)
    n = psi.ndim
    if n <= 1:
        return psi.copy()
    d = psi.shape[0]
    B = u.basis
    x = G.index((1, 0))
    m = np.array([G.elements[g][0] for g in g_map])  # x-exponent of g_i
    chi_x = np.array([u.characters[i][x] for i in range(d)])  # eigenvalue of u(x) on |i>
    # to eigenbasis
    for s in range(n):
        psi = np.moveaxis(np.tensordot(B.conj().T, psi, axes=(1, s)), 0, s)
    phase = np.ones([d] * n, dtype=complex)
    for k in range(n):
        for l in range(k + 1, n):
            f = np.where(m[:, None] == 1, chi_x[None, :], 1.0)  # (i_k, i_l)
            shape = [1] * n
            shape[k] = d
            shape[l] = d
            phase = phase * f.reshape(shape)
    psi = psi * phase
    for s in range(n):
        psi = np.moveaxis(np.tensordot(B, psi, axes=(1, s)), 0, s)
    return psi


def boundary_state(A: MpsTensor, n_sites: int, left, right) -> np.ndarray:
    """Open-chain state R . A ... A . L (normalized), one leg per site."""
    from .tensors import FiniteMps
    return FiniteMps([A] * n_sites, left, right).to_dense()


# ----------------------------------------------------------------------------
# entanglement spectrum diagnostics


@dataclass
class CutReport:
    cut: int
    spectrum: np.ndarray
    multiplets: list
    splitting: float


def _multiplets(spec, size, floor):
    levels = [p for p in spec if p > floor]
    groups = [levels[i:i + size] for i in range(0, len(levels), size)]
    split = 0.0
    for grp in groups:
        if len(grp) < size:
            split = max(split, 1.0)
        else:
            split = max(split, (max(grp) - min(grp)) / max(grp))
    return groups, split


def entanglement_degeneracy_report(psi: np.ndarray, cuts, multiplet: int = 2, floor: float = 1e-9):
    """Schmidt spectra at the given cuts (number of legs on the left) grouped into multiplets."""
    from .tensors import entanglement_spectrum
    out = []
    for c in cuts:
        spec = entanglement_spectrum(psi, c)
        groups, split = _multiplets(spec, multiplet, floor)
        out.append(CutReport(c, spec, groups, split))
    return out


def dual_spectrum_mismatch(parent: CutReport, dual_spec: np.ndarray, floor: float = 1e-9) -> float:
    """Max level difference between multiplet sums of the parent and the dual spectrum."""
    sums = np.array(sorted((sum(g) for g in parent.multiplets), reverse=True))
    dual = np.array([p for p in dual_spec if p > floor])
    n = max(len(sums), len(dual))
    sums = np.pad(sums, (0, n - len(sums)))
    dual = np.pad(dual, (0, n - len(dual)))
    return float(np.abs(sums - dual).max()) if n else 0.0
