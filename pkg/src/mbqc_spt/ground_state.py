"""Ground-state solvers, gap estimation, Condition-1 checks and in-phase tensor synthesis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, NoConvergence, NonNormalizable, SizeOverflow
from .linalg import HAD, embed_sparse
from .models import LocalHamiltonian, SymmetryAction, check_symmetry
from .symmetry import ProjectiveRep, cluster_onsite_rep, cluster_rep
from .tensors import DENSE_CAP, FiniteMps, MpsTensor, canonical_form

DEGENERACY_TOL = 1e-7
DENSE_SOLVE_DIM = 512


@dataclass
class SpectrumReport:
    energies: np.ndarray
    multiplicity: int
    gap: float
    residuals: np.ndarray

    def to_csv_rows(self):
        return [(i, f"{e:.12g}", f"{r:.12g}") for i, (e, r) in enumerate(zip(self.energies, self.residuals))]


def exact_ground_state(H: LocalHamiltonian, k: int = 4, seed: int = 0, tol: float = 1e-12):
    """Lowest-k eigenpairs; returns (states[:, j], SpectrumReport).

    The number of requested levels is increased automatically until a level
    above the ground multiplet is found, so the gap is always defined.
    """
    if 2 ** H.n_qubits > DENSE_CAP:
        raise SizeOverflow(f"{H.n_qubits} qubits exceed the dense cap (2^22)")
    M = H.to_sparse()
    dim = M.shape[0]
    k = min(k, dim)
    while True:
        if dim <= DENSE_SOLVE_DIM:
            w, v = np.linalg.eigh(M.toarray())
            w, v = w[:k], v[:, :k]
        else:
            v0 = np.random.default_rng(seed).normal(size=dim).astype(complex)
            try:
                w, v = spla.eigsh(M, k=min(k, dim - 2), which="SA", v0=v0, tol=tol, maxiter=20000)
            except spla.ArpackNoConvergence as exc:
                raise NoConvergence(f"eigensolver did not converge: {exc}") from exc
            order = np.argsort(w)
            w, v = w[order], v[:, order]
        mult = int(np.sum(w - w[0] < DEGENERACY_TOL))
        if mult < len(w) or len(w) >= dim - 2 or dim <= DENSE_SOLVE_DIM and k >= dim:
            break
        k = min(2 * k, dim)
    gap = float(w[mult] - w[0]) if mult < len(w) else float("nan")
    res = np.array([np.linalg.norm(M @ v[:, j] - w[j] * v[:, j]) for j in range(v.shape[1])])
    scale = max(1.0, H.norm_bound())
    if res.max() > 1e-9 * scale * 10:
        raise NoConvergence(f"eigen-residual {res.max():.3e} above tolerance")
    return v, SpectrumReport(np.asarray(w), mult, gap, res)


# ----------------------------------------------------------------------------
# Condition 1


@dataclass
class Condition1Report:
    passed: bool
    multiplicity: int
    gap: float
    symmetry_residual: float
    phases: dict
    notes: list = field(default_factory=list)


def verify_condition1(H: LocalHamiltonian, S: SymmetryAction) -> Condition1Report:
    """Unique gapped ground state that is invariant (up to phases) under the symmetry."""
    sym = check_symmetry(H, S)
    states, rep = exact_ground_state(H, k=6)
    notes = []
    phases = {}
    psi = states[:, 0]
    for g in range(S.group.order):
        U = S.full_sparse(g, H.n_qubits)
        phases[g] = complex(np.vdot(psi, U @ psi))
    ok = True
    if sym > 1e-12:
        ok = False
        notes.append(f"Hamiltonian not symmetric (residual {sym:.3e})")
    if rep.multiplicity != 1:
        ok = False
        notes.append(f"ground multiplicity {rep.multiplicity}")
    if not (rep.gap > DEGENERACY_TOL):
        ok = False
        notes.append("no gap")
    if rep.multiplicity == 1 and any(abs(abs(p) - 1) > 1e-8 for p in phases.values()):
        ok = False
        notes.append("ground state not a symmetry eigenstate")
    return Condition1Report(ok, rep.multiplicity, rep.gap, sym, phases, notes)


# ----------------------------------------------------------------------------
# in-phase tensors


def cluster_site_basis() -> np.ndarray:
    """Columns |i> of the +/- product basis of a two-qubit site (a, b)."""
    return np.kron(HAD, HAD)


def synthesize_in_phase_tensor(At: MpsTensor, V: ProjectiveRep = None, g_map=None,
                               basis: np.ndarray = None) -> MpsTensor:
    """A[i] = V(g_i) (x) At[i] in the eigenbasis |i>, re-expressed in the computational basis.

    ``basis`` holds the eigenbasis vectors as columns (default: +/- basis of a
    two-qubit cluster site); the returned tensor is indexed by the computational
    basis of the site.
    """
    V = V or cluster_rep(1)
    g_map = tuple(range(V.group.order)) if g_map is None else tuple(g_map)
    if At.d != len(g_map):
        raise DimensionMismatch("degeneracy tensor physical dimension must equal |g_map|")
    if np.abs(At.data).max() == 0:
        raise NonNormalizable("degeneracy tensor vanishes")
    basis = cluster_site_basis() if basis is None else basis
    ops_eig = [np.kron(V(g_map[i]), At[i]) for i in range(At.d)]
    # A[|s>] with |s> = sum_i conj(<i|s>)... : A_c[s] = sum_i <s|i> A[i]
    ops = [sum(basis[s, i] * ops_eig[i] for i in range(At.d)) for s in range(basis.shape[0])]
    return MpsTensor(np.array(ops))


def random_degeneracy_tensor(Dt: int, d: int = 4, seed: int = 0, unital: bool = True) -> MpsTensor:
    """Seeded complex-Gaussian degeneracy tensor, optionally brought to unital gauge."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, Dt, Dt)) + 1j * rng.normal(size=(d, Dt, Dt))
    A = MpsTensor(a)
    if unital:
        A, _, _ = canonical_form(A)
    return A


def symmetry_condition_residual(A: MpsTensor, u, V: ProjectiveRep, Dt: int) -> float:
    """max_g || A[u(g)^dag psi] - W(g)^dag A[psi] W(g) || over basis states, W = V (x) I."""
    res = 0.0
    for g in range(u.group.order):
        W = np.kron(V(g), np.eye(Dt))
        ug = u(g)
        for s in range(A.d):
            e = np.zeros(A.d)
            e[s] = 1
            lhs = A.contract(ug.conj().T @ e)
            rhs = W.conj().T @ A.contract(e) @ W
            # allow a global character beta(g); here beta == 1 by convention
            res = max(res, float(np.abs(lhs - rhs).max()))
    return res


def terminated_state(A: MpsTensor, n_sites: int, left_junk=None, right_junk=None, k: int = 2) -> np.ndarray:
    """Dense state sum_{l,r} <r|...|l> |l>_tL |...> |r>_tR with terminators of dimension k."""
    Dt = A.D // k
    lj = np.ones(Dt) / np.sqrt(Dt) if left_junk is None else np.asarray(left_junk)
    rj = np.ones(Dt) / np.sqrt(Dt) if right_junk is None else np.asarray(right_junk)
    mps = FiniteMps([A] * n_sites, lj, rj, boundary_dim=k)
    return mps.to_dense()


def open_boundary_state(A: MpsTensor, n_sites: int, left, right) -> np.ndarray:
    return FiniteMps([A] * n_sites, left, right).to_dense()


def cluster_tensor() -> MpsTensor:
    """Cluster-state site tensor: X^b Z^a / 2 for the +/- basis state |a b>."""
    from .tensors import MpsTensor as _M
    At = _M(np.full((4, 1, 1), 0.5, dtype=complex))
    return synthesize_in_phase_tensor(At)


# ----------------------------------------------------------------------------
# variational MPS (two-site DMRG)


def _term_mpo(term, n):
    s, e = min(term.support), max(term.support)
    m = e - s + 1
    full = embed_sparse(m, [q - s for q in term.support], term.matrix).toarray()
    T = full.reshape([2] * (2 * m))
    perm = [x for k in range(m) for x in (k, m + k)]
    T = T.transpose(perm)
    Ws = []
    left = 1
    rest = T.reshape(1, -1)
    for k in range(m - 1):
        rest = rest.reshape(left * 4, -1)
        U, S, Vh = np.linalg.svd(rest, full_matrices=False)
        keep = max(1, int(np.sum(S > 1e-14 * S[0])))
        U, S, Vh = U[:, :keep], S[:keep], Vh[:keep]
        Ws.append(U.reshape(left, 2, 2, keep).transpose(0, 3, 1, 2))
        rest = S[:, None] * Vh
        left = keep
    Ws.append(rest.reshape(left, 2, 2, 1).transpose(0, 3, 1, 2))
    out = []
    eye = np.eye(2).reshape(1, 1, 2, 2)
    for q in range(n):
        out.append(Ws[q - s] if s <= q <= e else eye)
    return out


def hamiltonian_mpo(H: LocalHamiltonian, tol: float = 1e-12):
    """Sum of per-term MPOs, compressed by SVD; W[k] has shape (wl, wr, out, in)."""
    n = H.n_qubits
    mpos = [_term_mpo(t, n) for t in H.terms]
    W = []
    for q in range(n):
        blocks = [m[q] for m in mpos]
        if q == 0:
            W.append(np.concatenate(blocks, axis=1))
        elif q == n - 1:
            W.append(np.concatenate(blocks, axis=0))
        else:
            wl = sum(b.shape[0] for b in blocks)
            wr = sum(b.shape[1] for b in blocks)
            T = np.zeros((wl, wr, 2, 2), dtype=complex)
            i = j = 0
            for b in blocks:
                T[i:i + b.shape[0], j:j + b.shape[1]] = b
                i += b.shape[0]
                j += b.shape[1]
            W.append(T)
    if n == 1:
        W = [sum(m[0] for m in mpos)]
    # left-to-right QR then right-to-left SVD truncation
    for q in range(n - 1):
        wl, wr = W[q].shape[:2]
        M = W[q].transpose(0, 2, 3, 1).reshape(wl * 4, wr)
        Q, R = np.linalg.qr(M)
        W[q] = Q.reshape(wl, 2, 2, -1).transpose(0, 3, 1, 2)
        W[q + 1] = np.einsum("ab,bcij->acij", R, W[q + 1])
    for q in range(n - 1, 0, -1):
        wl, wr = W[q].shape[:2]
        M = W[q].reshape(wl, wr * 4)
        U, S, Vh = np.linalg.svd(M, full_matrices=False)
        keep = max(1, int(np.sum(S > tol * S[0]))) if S.size and S[0] > 0 else 1
        W[q] = Vh[:keep].reshape(keep, wr, 2, 2)
        W[q - 1] = np.einsum("abij,bc->acij", W[q - 1], U[:, :keep] * S[:keep])
    return W


@dataclass
class VariationalResult:
    mps: FiniteMps
    energy: float
    energies: list
    converged: bool
    monotone: bool


def _mps_to_finite(M):
    D = max(max(m.shape[0], m.shape[2]) for m in M)
    tensors = []
    for m in M:
        T = np.zeros((m.shape[1], D, D), dtype=complex)
        # A[i] maps left bond -> right bond: A[i] = m[:, i, :].T
        T[:, : m.shape[2], : m.shape[0]] = m.transpose(1, 2, 0)
        tensors.append(T)
    left = np.zeros(D, dtype=complex)
    left[0] = 1
    right = np.zeros(D, dtype=complex)
    right[0] = 1
    return FiniteMps(tensors, left, right)


def variational_mps_ground_state(H: LocalHamiltonian, bond_dim: int, sweeps: int = 10, seed: int = 0,
                                 tol: float = 1e-10) -> VariationalResult:
    """Two-site DMRG with exact local eigensolves and fixed maximum bond dimension."""
    if bond_dim < 1:
        raise ValueError("bond_dim must be positive")
    n = H.n_qubits
    W = hamiltonian_mpo(H)
    rng = np.random.default_rng(seed)
    dims = [1]
    for q in range(1, n):
        dims.append(min(bond_dim, 2 ** q, 2 ** (n - q)))
    dims.append(1)
    M = [rng.normal(size=(dims[q], 2, dims[q + 1])) + 1j * rng.normal(size=(dims[q], 2, dims[q + 1]))
         for q in range(n)]
    # right-canonicalize
    for q in range(n - 1, 0, -1):
        a, d, b = M[q].shape
        Q, R = np.linalg.qr(M[q].reshape(a, d * b).T)
        M[q] = Q.T.reshape(-1, d, b)
        M[q - 1] = np.einsum("xdb,cb->xdc", M[q - 1], R)
    M[0] /= np.linalg.norm(M[0])

    def grow_left(L, m, w):
        return np.einsum("awx,asb,wvts,xtc->bvc", L, m, w, m.conj(), optimize=True)

    def grow_right(R, m, w):
        return np.einsum("bvc,asb,wvts,xtc->awx", R, m, w, m.conj(), optimize=True)

    Ls = [None] * (n + 1)
    Rs = [None] * (n + 1)
    Ls[0] = np.ones((1, 1, 1), dtype=complex)
    Rs[n] = np.ones((1, 1, 1), dtype=complex)
    for q in range(n - 1, -1, -1):
        Rs[q] = grow_right(Rs[q + 1], M[q], W[q])

    def solve(q, theta):
        L, R, W1, W2 = Ls[q], Rs[q + 2], W[q], W[q + 1]
        shape = theta.shape

        dim = int(np.prod(shape))
        if dim <= 256:
            a, s_, u, b = shape
            Heff = np.einsum("awx,wvts,vyru,byc->xtrcasub", L, W1, W2, R, optimize=True).reshape(dim, dim)
            Heff = 0.5 * (Heff + Heff.conj().T)
            w, v = np.linalg.eigh(Heff)
            return w[0], v[:, 0].reshape(shape)

        def mv(x):
            t = np.tensordot(L, x.reshape(shape), axes=([0], [0]))  # w x s u b
            t = np.tensordot(t, W1, axes=([0, 2], [0, 3]))  # x u b v t
            t = np.tensordot(t, W2, axes=([3, 1], [0, 3]))  # x b t y r
            t = np.tensordot(t, R, axes=([1, 3], [0, 1]))  # x t r c
            return t.reshape(-1)

        op = spla.LinearOperator((dim, dim), matvec=mv, dtype=complex)
        w, v = spla.eigsh(op, k=1, which="SA", v0=theta.reshape(-1), tol=1e-13, maxiter=5000)
        return w[0], v[:, 0].reshape(shape)

    energies = []
    converged = False
    E = np.inf
    for sweep in range(sweeps):
        for q in range(n - 1):  # left -> right
            theta = np.einsum("asb,buc->asuc", M[q], M[q + 1])
            E, theta = solve(q, theta)
            a, s, u, c = theta.shape
            U, S, Vh = np.linalg.svd(theta.reshape(a * s, u * c), full_matrices=False)
            keep = min(bond_dim, int(np.sum(S > 1e-14 * S[0])) or 1)
            M[q] = U[:, :keep].reshape(a, s, keep)
            M[q + 1] = (S[:keep, None] * Vh[:keep]).reshape(keep, u, c)
            M[q + 1] /= np.linalg.norm(M[q + 1])
            Ls[q + 1] = grow_left(Ls[q], M[q], W[q])
        for q in range(n - 2, -1, -1):  # right -> left
            theta = np.einsum("asb,buc->asuc", M[q], M[q + 1])
            E, theta = solve(q, theta)
            a, s, u, c = theta.shape
            U, S, Vh = np.linalg.svd(theta.reshape(a * s, u * c), full_matrices=False)
            keep = min(bond_dim, int(np.sum(S > 1e-14 * S[0])) or 1)
            M[q + 1] = Vh[:keep].reshape(keep, u, c)
            M[q] = (U[:, :keep] * S[:keep]).reshape(a, s, keep)
            M[q] /= np.linalg.norm(M[q])
            Rs[q + 1] = grow_right(Rs[q + 2], M[q + 1], W[q + 1])
        energies.append(float(np.real(E)))
        if len(energies) > 1 and abs(energies[-1] - energies[-2]) < tol:
            converged = True
            break
    monotone = all(b <= a + 1e-9 for a, b in zip(energies[:-1], energies[1:]))
    return VariationalResult(_mps_to_finite(M), energies[-1], energies, converged, monotone)


# ----------------------------------------------------------------------------
# free-fermion solver for the terminated cluster chain in a transverse field


def free_fermion_cluster_spectrum(n_sites: int, B: float) -> np.ndarray:
    """Single-particle energies of H_C + B sum X on a terminated chain of n_sites.

    A Hadamard on the left terminator followed by CZ on every bond maps the
    Hamiltonian to -sum_i X_i + B sum_i Z_{i-1} X_i Z_{i+1} on N = 2n+2 qubits
    (field on the chain qubits only), which the Jordan-Wigner transformation
    turns into a quadratic Majorana form.
    """
    N = 2 * n_sites + 2
    A = np.zeros((2 * N, 2 * N))

    def add(a, b, c):  # c * i g_a g_b
        A[a, b] += 2 * c
        A[b, a] -= 2 * c

    for i in range(N):
        add(2 * i, 2 * i + 1, -1.0)
    for i in range(1, N - 1):
        add(2 * i - 1, 2 * i + 2, float(B))
    e = np.linalg.eigvalsh(1j * A)
    return np.sort(e[e > 0])


def free_fermion_gap(n_sites: int, B: float) -> float:
    return float(free_fermion_cluster_spectrum(n_sites, B)[0])


def free_fermion_ground_energy(n_sites: int, B: float) -> float:
    return float(-free_fermion_cluster_spectrum(n_sites, B).sum() / 2)
