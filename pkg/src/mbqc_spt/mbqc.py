"""Measurement protocols on cluster-phase chains: site actions, adaptive simulation,
the non-adaptive dual process, quasi-1D entangling columns and the 2-D remapping.

States are dense qubit vectors (qubit 0 most significant).  A protocol assigns
to each site a tuple of qubit indices of the state and a ``SiteAction``.
Outcomes are labelled by the column index ``alpha`` of the site basis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    BadLayout,
    DimensionMismatch,
    NonPauliByproduct,
    NotAdjacent,
    NotInFamily,
    ZeroProbabilityBranch,
)
from .ground_state import cluster_tensor
from .linalg import HAD, PAULI, X, Z, equatorial_basis, kron_all, rx, rz
from .models import Layout2D, conjugate_pauli_by_cz
from .symmetry import OnSiteRep, ProjectiveRep, cluster_onsite_rep, cluster_rep
from .tensors import MpsTensor

VERIFY_TOL = 1e-12
PRUNE_TOL = 1e-14
CZ2 = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


# ----------------------------------------------------------------------------
# site actions


@dataclass
class SiteAction:
    """Measurement on one site.

    ``basis`` columns are the measured states |alpha>; ``g_alpha`` the group
    element of each byproduct (B_alpha proportional to V(g_alpha)); corrections
    u(g_alpha)^dag are applied to later sites.  For a readout, ``basis`` is the
    coherent unitary whose inverse is applied before the non-output qubits are
    discarded and ``outputs`` lists the local output qubits.
    ``steps`` describes the same basis as a sequence of single-qubit
    measurements: (local qubit, {earlier reinterpreted bits -> angle or 'Z'}).
    """

    kind: str
    basis: np.ndarray
    g_alpha: tuple
    byproducts: list = None
    U: np.ndarray = None
    outputs: tuple = ()
    steps: list = None
    pre_cz: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def n_local(self) -> int:
        return int(round(np.log2(self.dim)))

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=complex)
        if np.abs(B.conj().T @ B - np.eye(B.shape[0])).max() > 1e-12:
            raise ValueError("site basis is not orthonormal")
        self.basis = B

    def is_trivial(self) -> bool:
        return self.kind == "identity"


def _single_qubit_vec(spec, bit):
    if spec == "Z":
        return np.eye(2)[:, bit]
    return equatorial_basis(spec)[:, bit]


def basis_from_steps(steps, n_local: int, flips=None) -> np.ndarray:
    """Product (possibly outcome-conditioned) basis; optional outcome flips per local qubit.

    Column alpha has bits (b_0, ..., b_{n-1}) (qubit 0 most significant) in
    reinterpreted form; the physical state of qubit q is the eigenvector for the
    physical outcome b_q XOR flip_q, with the angle chosen by the reinterpreted
    bits of the qubits it is conditioned on.
    """
    flips = flips or {}
    order = {s[0]: s for s in steps}
    if sorted(order) != list(range(n_local)):
        raise ValueError("steps must cover every local qubit once")
    dim = 2 ** n_local
    B = np.zeros((dim, dim), dtype=complex)
    for alpha in range(dim):
        bits = [(alpha >> (n_local - 1 - q)) & 1 for q in range(n_local)]
        vecs = []
        for q in range(n_local):
            _, table = order[q][:2]
            cond = order[q][2] if len(order[q]) > 2 else ()
            key = tuple(bits[c] for c in cond)
            spec = table[key]
            phys = bits[q] ^ (flips.get(q, 0) if spec != "Z" else 0)
            vecs.append(_single_qubit_vec(spec, phys))
        B[:, alpha] = kron_all(vecs)
    return B


_A_C = None


def cluster_site_tensor() -> MpsTensor:
    global _A_C
    if _A_C is None:
        _A_C = cluster_tensor()
    return _A_C


def _pauli_fit(K, V: ProjectiveRep):
    nrm = np.linalg.norm(K)
    if nrm < 1e-14:
        return None, 0.0, np.inf
    best = None
    for g in range(V.group.order):
        Vg = V(g)
        c = np.trace(Vg.conj().T @ K) / Vg.shape[0]
        r = np.linalg.norm(K - c * Vg) / nrm
        if best is None or r < best[2]:
            best = (g, c, r)
    return best


def verify_action(action: SiteAction, A: MpsTensor, V: ProjectiveRep, U=None):
    """max_alpha residual of A[alpha] = beta_alpha V(g_alpha) U, plus the betas."""
    U = action.U if U is None else U
    res = 0.0
    betas = []
    for a in range(action.dim):
        M = A.contract(action.basis[:, a])
        K = M @ U.conj().T
        g, c, r = _pauli_fit(K, V)
        if g != action.g_alpha[a]:
            r = max(r, 1.0)
        res = max(res, r)
        betas.append(c)
    return res, np.array(betas)


def _gate_candidate_basis(phi1, phi2_0, phi2_1):
    steps = [(0, {(): phi1}), (1, {(0,): phi2_0, (1,): phi2_1}, (0,))]
    return basis_from_steps(steps, 2), steps


def _fit_basis(B, U, A, V):
    gl = []
    res = 0.0
    for a in range(4):
        K = A.contract(B[:, a]) @ U.conj().T
        g, c, r = _pauli_fit(K, V)
        if g is None:
            return np.inf, None
        gl.append(g)
        res = max(res, r)
    return res, tuple(gl)


def _rotation_axis(U):
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2) or np.abs(U.conj().T @ U - np.eye(2)).max() > 1e-10:
        raise NotInFamily("gate must be a 2x2 unitary")
    ph = np.sqrt(np.linalg.det(U))
    W = U / ph
    for axis, P in (("z", Z), ("x", X)):
        c = np.trace(W).real / 2
        s = np.trace(P @ W) / 2  # = -i sin(theta/2)
        if np.abs(W - (c * np.eye(2) + s * P)).max() < 1e-10 and abs(s.real) < 1e-10:
            theta = 2 * np.arctan2(-s.imag, c)
            return axis, theta
    raise NotInFamily("gate is not a rotation about the x or z axis")


def gate_basis(axis, theta: float = None, A: MpsTensor = None, V: ProjectiveRep = None) -> SiteAction:
    """Product basis realizing a rotation about x or z in correlation space.

    ``axis`` is 'x' or 'z' (with ``theta``), or a 2x2 unitary.  Bases are found
    by a grid search over single-qubit equatorial measurements (the angle of
    the second qubit may depend on the first outcome), refined by local
    optimization, and accepted only if A[alpha] = beta_alpha V(g_alpha) U holds
    to 1e-12 for every outcome.
    """
    if not isinstance(axis, str):
        U = np.asarray(axis, dtype=complex)
        axis, theta = _rotation_axis(U)
    if axis not in ("x", "z"):
        raise NotInFamily(f"unsupported rotation axis {axis!r}")
    theta = float(theta)
    U = rz(theta) if axis == "z" else rx(theta)
    A = A or cluster_site_tensor()
    V = V or cluster_rep(1)
    cands = sorted({round(float(v), 15) for v in
                    [0.0, np.pi / 2, np.pi, -np.pi / 2, theta, -theta, np.pi - theta, np.pi + theta]})
    best = (np.inf, None)
    for p1, p20, p21 in itertools.product(cands, repeat=3):
        B, steps = _gate_candidate_basis(p1, p20, p21)
        r, gl = _fit_basis(B, U, A, V)
        if r < best[0]:
            best = (r, (p1, p20, p21))
        if r < VERIFY_TOL:
            return _make_gate_action(axis, theta, U, B, steps, gl, A, V)
    if best[1] is not None:
        f = lambda p: _fit_basis(_gate_candidate_basis(*p)[0], U, A, V)[0]
        opt = minimize(f, np.array(best[1]), method="Nelder-Mead",
                       options={"xatol": 1e-14, "fatol": 1e-15, "maxiter": 4000})
        B, steps = _gate_candidate_basis(*opt.x)
        r, gl = _fit_basis(B, U, A, V)
        if r < VERIFY_TOL:
            return _make_gate_action(axis, theta, U, B, steps, gl, A, V)
    raise NotInFamily(f"no product basis found for the {axis}-rotation by {theta}")


def _make_gate_action(axis, theta, U, B, steps, gl, A, V):
    byp = []
    for a in range(4):
        K = A.contract(B[:, a]) @ U.conj().T
        byp.append(K / np.sqrt(abs(np.linalg.det(K))))
    kind = "identity" if abs(np.angle(np.exp(0.5j * theta))) < 1e-15 and axis == "z" else "gate"
    return SiteAction(kind, B, gl, byp, U, steps=steps, params={"axis": axis, "theta": theta})


def identity_action() -> SiteAction:
    """Measurement in the symmetry eigenbasis (+/- on both qubits)."""
    B = np.kron(HAD, HAD)
    steps = [(0, {(): 0.0}), (1, {(): 0.0})]
    V = cluster_rep(1)
    return SiteAction("identity", B, (0, 1, 2, 3), [V(g) for g in range(4)], np.eye(2, dtype=complex),
                      steps=steps, params={"axis": "z", "theta": 0.0})


def init_action() -> SiteAction:
    """Computational-basis measurement of qubit a, then qubit b in +/- relative to a.

    Outcome (p, q) leaves A[(p,q)] = X^q |0><p| / sqrt(2): the correlation
    system is reset to |0> up to the byproduct X^q.
    """
    steps = [(0, {(): "Z"}), (1, {(0,): 0.0, (1,): np.pi}, (0,))]
    B = basis_from_steps(steps, 2)
    g = (0, 1, 0, 1)
    V = cluster_rep(1)
    return SiteAction("init", B, g, [V(x) for x in g], None, steps=steps)


def readout_action() -> SiteAction:
    """Keep qubit a as output after the coherent correction CZ(a, b); discard b."""
    return SiteAction("readout", CZ2.copy(), (0, 0, 0, 0), None, None, outputs=(0,),
                      steps=[(1, {(): "Z"})])


def combine_actions(actions, n_group_copies=None) -> SiteAction:
    """Tensor product of single-chain actions on a column (chain 1 first)."""
    basis = kron_all([a.basis for a in actions])
    dims = [a.dim for a in actions]
    orders = [4] * len(actions)
    g = []
    for idx in itertools.product(*[range(d) for d in dims]):
        gi, scale = 0, 1
        for a, i, o in zip(actions, idx, orders):
            gi += a.g_alpha[i] * scale
            scale *= o
        g.append(gi)
    byp = None
    if all(a.byproducts is not None for a in actions):
        byp = [kron_all([a.byproducts[i] for a, i in zip(actions, idx)])
               for idx in itertools.product(*[range(d) for d in dims])]
    U = None
    if all(a.U is not None for a in actions):
        U = kron_all([a.U for a in actions])
    outputs = []
    off = 0
    for a in actions:
        outputs += [off + o for o in a.outputs]
        off += a.n_local
    steps = []
    off = 0
    for a in actions:
        if a.steps is None:
            steps = None
            break
        for st in a.steps:
            cond = tuple(c + off for c in (st[2] if len(st) > 2 else ()))
            steps.append((st[0] + off, st[1], cond))
        off += a.n_local
    kinds = {a.kind for a in actions}
    kind = kinds.pop() if len(kinds) == 1 else "gate"
    return SiteAction(kind, basis, tuple(g), byp, U, outputs=tuple(outputs), steps=steps,
                      params={"parts": [a.params for a in actions]})


# ----------------------------------------------------------------------------
# quasi-1D entangling column


def column_tensor(n_chains: int = 2, with_bridge: bool = True) -> MpsTensor:
    """Columnar site tensor: chains' cluster tensors, times <r|+> for an uncoupled bridge qubit."""
    A = cluster_site_tensor()
    ops = []
    dims = [4] * n_chains
    for idx in itertools.product(*[range(d) for d in dims]):
        ops.append(kron_all([A[i] for i in idx]))
    ops = np.array(ops)
    if with_bridge:
        ops = np.array([o / np.sqrt(2) for o in ops for _ in range(2)])
    return MpsTensor(ops)


def _cz_unitary(n, pairs):
    d = np.ones(2 ** n, dtype=complex)
    for s in range(2 ** n):
        for i, j in pairs:
            if (s >> (n - 1 - i)) & 1 and (s >> (n - 1 - j)) & 1:
                d[s] *= -1
    return np.diag(d)


def entangle_action(chain_pair=(0, 1), signs=(1, 1)) -> SiteAction:
    """Columnar site (a1, b1, a2, b2, r) realizing a correlation-space CZ.

    The bridge r is coupled to a1 and a2 by u = CZ(a1, r) CZ(r, a2); the site
    basis is u^dag applied to the product basis  a1: equatorial(+-pi/2),
    b1: +/-, a2: equatorial(+-pi/2), b2: +/-, r: Y eigenbasis.
    """
    c1, c2 = chain_pair
    if abs(c1 - c2) != 1:
        raise NotAdjacent(f"chains {c1} and {c2} are not adjacent")
    p1, p2 = signs[0] * np.pi / 2, signs[1] * np.pi / 2
    steps = [(0, {(): p1}), (1, {(): 0.0}), (2, {(): p2}), (3, {(): 0.0}), (4, {(): np.pi / 2})]
    P = basis_from_steps(steps, 5)
    pre = ((0, 4), (4, 2))
    u = _cz_unitary(5, pre)
    B = u.conj().T @ P
    A = column_tensor(2, True)
    V = cluster_rep(2)
    gl, byp = [], []
    for a in range(32):
        K = A.contract(B[:, a]) @ CZ2.conj().T
        g, c, r = _pauli_fit(K, V)
        if r > VERIFY_TOL:
            raise NotInFamily("entangling basis verification failed")
        gl.append(g)
        byp.append(K / abs(c) if abs(c) > 0 else K)
    return SiteAction("entangle", B, tuple(gl), byp, np.diag([1, 1, 1, -1.0]).astype(complex),
                      steps=steps, pre_cz=pre, params={"pair": chain_pair, "signs": signs})


# ----------------------------------------------------------------------------
# protocols


@dataclass
class Protocol:
    actions: list
    site_qubits: list  # per site, tuple of state-qubit indices (local order)
    site_reps: list  # per site, callable g -> unitary on the site qubits (u(g))
    n_qubits: int
    V: ProjectiveRep = None

    def __post_init__(self):
        if not (len(self.actions) == len(self.site_qubits) == len(self.site_reps)):
            raise DimensionMismatch("actions, site_qubits and site_reps differ in length")
        for a, q in zip(self.actions, self.site_qubits):
            if a.dim != 2 ** len(q):
                raise DimensionMismatch("action dimension does not match site qubits")
        kinds = [a.kind for a in self.actions]
        if kinds.count("init") and kinds.index("init") > min(
                (i for i, k in enumerate(kinds) if k in ("gate", "entangle")), default=len(kinds)):
            raise ValueError("init must precede the gates")
        if "readout" not in kinds:
            raise ValueError("protocol needs a readout site")
        if self.V is None:
            self.V = cluster_rep(1)

    @property
    def readout_site(self) -> int:
        return [a.kind for a in self.actions].index("readout")

    @property
    def nontrivial_sites(self):
        return [i for i, a in enumerate(self.actions) if not a.is_trivial()]

    @property
    def separation(self) -> int:
        nt = self.nontrivial_sites
        return min((b - a for a, b in zip(nt[:-1], nt[1:])), default=0)

    def ideal_unitaries(self):
        return [(i, a.U) for i, a in enumerate(self.actions) if a.kind in ("gate", "entangle")]


def chain_protocol(n_sites: int, gates: dict, init_site: int = 0, readout_site: int = None,
                   terminated: bool = True) -> Protocol:
    """Single chain: init, gates {site: (axis, theta) or SiteAction}, identity elsewhere, readout."""
    readout_site = n_sites - 1 if readout_site is None else readout_site
    u = cluster_onsite_rep(1)
    acts = []
    for s in range(n_sites):
        if s == init_site:
            acts.append(init_action())
        elif s == readout_site:
            acts.append(readout_action())
        elif s in gates:
            g = gates[s]
            acts.append(g if isinstance(g, SiteAction) else gate_basis(*g))
        else:
            acts.append(identity_action())
    off = 1 if terminated else 0
    qubits = [(off + 2 * s, off + 2 * s + 1) for s in range(n_sites)]
    n_q = 2 * n_sites + 2 * off
    return Protocol(acts, qubits, [u] * n_sites, n_q)


# ----------------------------------------------------------------------------
# adaptive simulation engine


@dataclass
class _Step:
    axes: tuple
    basis: np.ndarray
    corrections: dict  # alpha -> list of (axes, matrix)
    outputs: tuple = ()
    label: int = 0


def _apply(psi, mat, axes):
    k = len(axes)
    t = np.tensordot(mat.reshape([2] * (2 * k)), psi, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(t, list(range(k)), list(axes))


def _run_steps(psi, steps, n_qubits, mode, rng=None, postselect=None):
    psi = np.asarray(psi, dtype=complex).reshape([2] * n_qubits)
    psi = psi / np.linalg.norm(psi)
    transcript = []
    outputs = []
    for st in steps:
        psi = _apply(psi, st.basis.conj().T, st.axes)
        outputs += [st.axes[o] for o in st.outputs]
        if st.outputs:
            continue
        m = len(st.axes)
        front = np.moveaxis(psi, list(st.axes), list(range(m)))
        shp = front.shape
        flat = front.reshape(2 ** m, -1)
        probs = np.einsum("ai,ai->a", flat, flat.conj()).real
        if mode == "enumerate":
            for a in range(2 ** m):
                transcript.append((st.label, a, float(probs[a])))
            for a, ops in st.corrections.items():
                if probs[a] < PRUNE_TOL:
                    flat[a] = 0
                    continue
                if not ops:
                    continue
                sl = flat[a].reshape(shp[m:])
                for axes, mat in ops:
                    sl = _apply(sl, mat, [_shift(x, st.axes) for x in axes])
                flat[a] = sl.reshape(-1)
        else:
            if mode == "sample":
                p = np.clip(probs, 0, None)
                a = int(rng.choice(2 ** m, p=p / p.sum()))
            else:
                a = int(postselect[st.label])
                if probs[a] < PRUNE_TOL:
                    raise ZeroProbabilityBranch(f"outcome {a} at site {st.label} has probability {probs[a]:.2e}")
            keep = flat[a] / np.sqrt(probs[a])
            flat = np.zeros_like(flat)
            sl = keep.reshape(shp[m:])
            for axes, mat in st.corrections.get(a, []):
                sl = _apply(sl, mat, [_shift(x, st.axes) for x in axes])
            flat[a] = sl.reshape(-1)
            transcript.append((st.label, a, float(probs[a])))
        psi = np.moveaxis(flat.reshape(shp), list(range(m)), list(st.axes))
    from .linalg import reduced_density_dense
    rho = reduced_density_dense(psi, outputs) if outputs else np.ones((1, 1))
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real, transcript


def _shift(x, front_axes):
    """Index of qubit axis x after moving ``front_axes`` to the front and dropping them."""
    return x - sum(1 for f in front_axes if f < x)


def protocol_steps(protocol: Protocol):
    steps = []
    n = len(protocol.actions)
    for s, (act, axes) in enumerate(zip(protocol.actions, protocol.site_qubits)):
        corr = {}
        if not act.outputs:
            for a, g in enumerate(act.g_alpha):
                ops = []
                if g != 0:
                    for t in range(s + 1, n):
                        ug = protocol.site_reps[t](g)
                        ops.append((tuple(protocol.site_qubits[t]), ug.conj().T))
                corr[a] = ops
        steps.append(_Step(tuple(axes), act.basis, corr, tuple(act.outputs), s))
    return steps


def run_adaptive(state, protocol: Protocol, mode: str = "enumerate", seed: int = None, outcomes=None):
    """Site-by-site measurement with corrections u(g_alpha)^dag on all later sites.

    ``enumerate`` defers every measurement coherently (exact Born mixture over
    all branches); ``sample`` draws one trajectory from ``seed``; ``postselect``
    follows the given outcomes.  Returns (output density operator, transcript
    rows (site, outcome, probability)).
    """
    psi = np.asarray(state, dtype=complex).reshape(-1)
    if psi.size != 2 ** protocol.n_qubits:
        raise DimensionMismatch(f"state has {psi.size} amplitudes, protocol expects 2^{protocol.n_qubits}")
    steps = protocol_steps(protocol)
    if mode == "sample":
        rng = np.random.default_rng(seed)
        return _run_steps(psi, steps, protocol.n_qubits, "sample", rng=rng)
    if mode == "postselect":
        return _run_steps(psi, steps, protocol.n_qubits, "postselect", postselect=outcomes)
    if mode != "enumerate":
        raise ValueError(f"unknown mode {mode!r}")
    return _run_steps(psi, steps, protocol.n_qubits, "enumerate")


def circuit_output(protocol: Protocol, n_out: int = 1) -> np.ndarray:
    """Ideal circuit: gates in site order applied to |0...0> on the correlation register."""
    psi = np.zeros(2 ** n_out, dtype=complex)
    psi[0] = 1
    for _, U in protocol.ideal_unitaries():
        psi = U @ psi
    return np.outer(psi, psi.conj())


# ----------------------------------------------------------------------------
# dual process


@dataclass
class DualCoupling:
    site: int
    G: np.ndarray  # unitary on (site (x) ancilla)
    outputs: tuple = ()

    def is_identity(self, tol=1e-12) -> bool:
        return np.abs(self.G - np.eye(self.G.shape[0])).max() < tol


def build_couplings(protocol: Protocol, decomp) -> list:
    """G_k = (sum_alpha |alpha><alpha| (x) V(g_alpha)^dag)(sum_i |i><i| (x) V(g_i)); readout: CZ after the latter."""
    V, g_map, E = decomp.V, decomp.g_map, decomp.basis
    d = E.shape[0]
    k = V.dimension
    G1 = sum(np.kron(np.outer(E[:, i], E[:, i].conj()), V(g)) for i, g in enumerate(g_map))
    out = []
    for s, act in enumerate(protocol.actions):
        if act.dim != d:
            raise DimensionMismatch("site dimension differs from the decomposition")
        if act.kind == "readout":
            G = np.kron(act.basis.conj().T, np.eye(k)) @ G1
            out.append(DualCoupling(s, G, act.outputs))
            continue
        if act.byproducts is not None:
            for a, (B, g) in enumerate(zip(act.byproducts, act.g_alpha)):
                _, c, r = _pauli_fit(B, V)
                if r > 1e-8 or _pauli_fit(B, V)[0] != g:
                    raise NonPauliByproduct(f"byproduct {a} at site {s} is not proportional to V(g_alpha)")
        G2 = sum(np.kron(np.outer(act.basis[:, a], act.basis[:, a].conj()), V(g).conj().T)
                 for a, g in enumerate(act.g_alpha))
        out.append(DualCoupling(s, G2 @ G1))
    return out


def dual_process(dual, couplings, k: int = 2, d: int = 4) -> np.ndarray:
    """Apply the couplings in site order to (dual state (x) ancilla), ancilla maximally
    entangled with a reference; return the state of the readout output qubits."""
    dual = np.asarray(dual, dtype=complex)
    n = dual.ndim
    if len(couplings) != n:
        raise DimensionMismatch("one coupling per dual site required")
    if any(s != d for s in dual.shape):
        raise DimensionMismatch("dual site dimension mismatch")
    ref = np.eye(k, dtype=complex) / np.sqrt(k)  # (ref, anc)
    psi = np.multiply.outer(dual, ref)  # legs: sites..., ref, anc
    anc = n + 1
    outputs = []
    for c in couplings:
        if c.is_identity():
            continue
        G = c.G.reshape(d, k, d, k)
        psi = np.tensordot(G, psi, axes=([2, 3], [c.site, anc]))
        psi = np.moveaxis(psi, [0, 1], [c.site, anc])
        if c.outputs:
            outputs.append((c.site, c.outputs))
            break
    if not outputs:
        raise ValueError("no readout coupling")
    site, outs = outputs[0]
    nq = int(round(np.log2(d)))
    # expand the readout site into qubits and keep the output qubits
    shp = list(psi.shape)
    psi = psi.reshape(shp[:site] + [2] * nq + shp[site + 1:])
    keep = [site + o for o in outs]
    rest = [i for i in range(psi.ndim) if i not in keep]
    m = np.transpose(psi, keep + rest).reshape(2 ** len(keep), -1)
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def dual_process_from_state(psi_dual, protocol: Protocol, decomp) -> np.ndarray:
    return dual_process(psi_dual, build_couplings(protocol, decomp), decomp.V.dimension, decomp.basis.shape[0])


# ----------------------------------------------------------------------------
# quasi-1D protocols and the 2-D remapping


def graph_state(n: int, edges) -> np.ndarray:
    """prod_{(i,j)} CZ_ij |+>^n as a dense vector."""
    idx = np.arange(2 ** n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    par = np.zeros(2 ** n, dtype=np.int64)
    for i, j in edges:
        par ^= bits[:, i] & bits[:, j]
    return (1 - 2 * par).astype(complex) / np.sqrt(2 ** n)


def _chain_u(n_chains: int, with_bridge: bool):
    base = cluster_onsite_rep(1)

    def u(g):
        parts = []
        for c in range(n_chains):
            parts.append(base((g >> (2 * c)) & 3))
        if with_bridge:
            parts.append(np.eye(2))
        return kron_all(parts)
    return u


@dataclass
class QuasiProtocol:
    protocol: Protocol
    layout: Layout2D
    kept: list  # lattice qubits simulated (chain qubits + bridges), state-axis order
    bridges: list

    @property
    def axis_of(self):
        return {q: i for i, q in enumerate(self.kept)}

    def state(self) -> np.ndarray:
        """Chains as open graph states (path graphs), bridges in |+>."""
        ax = self.axis_of
        edges = [tuple(sorted((ax[i], ax[j]))) for e in self.layout.chain_edges() for i, j in [tuple(e)]]
        return graph_state(len(self.kept), edges)


def quasi1d_protocol(layout: Layout2D, columns) -> QuasiProtocol:
    """Columnar protocol on horizontally laid-out chains.

    ``columns[j]`` is one of 'init', 'readout', 'identity', ('gates', [(axis, theta) | None, ...])
    or ('entangle', (c1, c2)); site j spans lattice columns 2j, 2j+1.
    """
    paths = layout.chain_qubits()
    n_chains = len(paths)
    rows = [layout.chains[c][0][0] for c in range(n_chains)]
    if any(len({p[0] for p in path}) != 1 for path in layout.chains):
        raise BadLayout("quasi-1D protocols need horizontal chains")
    n_cols = len(columns)
    if 2 * n_cols > layout.width:
        raise DimensionMismatch("more columns than the lattice provides")
    bridges = []
    site_lat = []
    actions = []
    for j, col in enumerate(columns):
        kind = col if isinstance(col, str) else col[0]
        lat = [layout.q(rows[c], 2 * j + t) for c in range(n_chains) for t in (0, 1)]
        if kind == "entangle":
            c1, c2 = col[1]
            if abs(c1 - c2) != 1 or n_chains != 2:
                raise NotAdjacent("entangling column needs two adjacent chains")
            if rows[1] - rows[0] != 2:
                raise BadLayout("entangling column needs a single non-chain row between the chains")
            r = layout.q(rows[0] + 1, 2 * j)
            bridges.append(r)
            lat = lat + [r]
            signs = col[2] if len(col) > 2 else (1, 1)
            actions.append(entangle_action((c1, c2), signs))
        elif kind == "init":
            actions.append(combine_actions([init_action()] * n_chains))
        elif kind == "readout":
            actions.append(combine_actions([readout_action()] * n_chains))
        elif kind == "identity":
            actions.append(combine_actions([identity_action()] * n_chains))
        elif kind == "gates":
            parts = [identity_action() if g is None else gate_basis(*g) for g in col[1]]
            act = combine_actions(parts)
            act.kind = "gate"
            actions.append(act)
        else:
            raise ValueError(f"unknown column kind {kind!r}")
        site_lat.append(lat)
    kept = sorted({q for path in paths for q in path[: 2 * n_cols]} | set(bridges))
    ax = {q: i for i, q in enumerate(kept)}
    site_qubits = [tuple(ax[q] for q in lat) for lat in site_lat]
    reps = [_chain_u(n_chains, len(lat) > 2 * n_chains) for lat in site_lat]
    proto = Protocol(actions, site_qubits, reps, len(kept), cluster_rep(n_chains))
    return QuasiProtocol(proto, layout, kept, bridges)


def _pauli_string_of(mat: np.ndarray, nq: int):
    """Decompose a tensor product of single-qubit Paulis (up to phase) into labels."""
    labels = {}
    M = mat
    for q in range(nq):
        found = None
        for lab in "IXYZ":
            V = np.kron(np.kron(np.eye(2 ** q), PAULI[lab]), np.eye(2 ** (nq - q - 1)))
            C = V @ M
            # C must act as identity on qubit q
            T = C.reshape(2 ** q, 2, 2 ** (nq - q - 1), 2 ** q, 2, 2 ** (nq - q - 1))
            if np.abs(T[:, 0, :, :, 1, :]).max() < 1e-12 and np.abs(T[:, 1, :, :, 0, :]).max() < 1e-12 \
                    and np.abs(T[:, 0, :, :, 0, :] - T[:, 1, :, :, 1, :]).max() < 1e-12:
                found = lab
                break
        if found is None:
            raise NonPauliByproduct("correction is not a Pauli product")
        if found != "I":
            labels[q] = found
    return labels


@dataclass
class Protocol2D:
    """Single-qubit adaptive protocol on the 2-D lattice.

    ``redundant`` qubits are measured in z first; ``sites[k]`` lists, for the
    k-th site, (lattice qubit, step table, condition, flip set) records: the
    outcome of that qubit is XOR-ed with the z outcomes of its flip set.
    ``corrections[k][alpha]`` are Pauli strings on lattice qubits (phases on
    already-measured redundant qubits dropped).
    """

    layout: Layout2D
    redundant: list
    kept: list
    sites: list
    site_lattice: list
    actions: list
    corrections: list
    output_flips: list
    outputs: list


def map_protocol_to_2d(qp: QuasiProtocol) -> Protocol2D:
    lay = qp.layout
    edges = [tuple(sorted(e)) for e in lay.L]
    kept = qp.kept
    keptset = set(kept)
    redundant = sorted(set(range(lay.n_qubits)) - keptset)
    Lnbr = {q: set() for q in range(lay.n_qubits)}
    for i, j in edges:
        Lnbr[i].add(j)
        Lnbr[j].add(i)
    proto = qp.protocol
    site_lat = [[kept[a] for a in axes] for axes in proto.site_qubits]
    owner = {q: s for s, lat in enumerate(site_lat) for q in lat}
    for i, j in edges:
        if i in keptset and j in keptset:
            si, sj = owner.get(i), owner.get(j)
            if si is None or si != sj:
                raise BadLayout("CZ edge between simulated qubits of different sites; measurements would not be local")
            act = proto.actions[si]
            loc = {q: t for t, q in enumerate(site_lat[si])}
            if tuple(sorted((loc[i], loc[j]))) not in {tuple(sorted(p)) for p in act.pre_cz}:
                raise BadLayout("CZ edge inside a site that the site action does not absorb")
    sites = []
    for s, (act, lat) in enumerate(zip(proto.actions, site_lat)):
        recs = []
        if act.steps is None:
            raise BadLayout(f"site {s} has no single-qubit step description")
        for st in act.steps:
            q = lat[st[0]]
            cond = st[2] if len(st) > 2 else ()
            flips = sorted(Lnbr[q] & set(redundant))
            recs.append((q, st[1], cond, flips))
        sites.append(recs)
    corrections = []
    for s, act in enumerate(proto.actions):
        corr = {}
        if not act.outputs:
            for a, g in enumerate(act.g_alpha):
                ops = {}
                if g != 0:
                    for t in range(s + 1, len(proto.actions)):
                        m = proto.site_reps[t](g).conj().T
                        labs = _pauli_string_of(m, len(site_lat[t]))
                        for lq, lab in labs.items():
                            ops[site_lat[t][lq]] = lab
                ph, conj = conjugate_pauli_by_cz(1.0, ops, edges)
                corr[a] = {q: lab for q, lab in conj.items() if q in keptset}
        corrections.append(corr)
    outputs, output_flips = [], []
    for act, lat in zip(proto.actions, site_lat):
        for o in act.outputs:
            q = lat[o]
            if Lnbr[q] & keptset:
                raise BadLayout("output qubit has a CZ edge to a simulated qubit")
            outputs.append(q)
            output_flips.append(sorted(Lnbr[q] & set(redundant)))
    return Protocol2D(lay, redundant, kept, sites, site_lat, proto.actions, corrections, output_flips, outputs)


def _branch_state_graph(lay: Layout2D, kept, redundant, z):
    """2-D cluster state projected onto |z> on the redundant qubits (kept-qubit vector, norm^2 = prob)."""
    ax = {q: i for i, q in enumerate(kept)}
    zmap = dict(zip(redundant, z))
    edges = []
    flips = np.zeros(len(kept), dtype=int)
    for e in lay.edges():
        i, j = tuple(e)
        if i in ax and j in ax:
            edges.append((ax[i], ax[j]))
        elif i in ax and j in zmap:
            flips[ax[i]] ^= zmap[j]
        elif j in ax and i in zmap:
            flips[ax[j]] ^= zmap[i]
    psi = graph_state(len(kept), edges)
    n = len(kept)
    idx = np.arange(2 ** n)
    for q in np.nonzero(flips)[0]:
        psi = psi * np.where((idx >> (n - 1 - q)) & 1, -1.0, 1.0)
    # the redundant qubits' own edges only contribute a phase; amplitude 2^{-|red|/2}
    return psi / np.sqrt(2 ** len(redundant))


def run_2d(p2: Protocol2D, branch_states=None, check_local: bool = True):
    """Run the remapped protocol: z on redundant qubits, then single-qubit steps with
    reinterpreted outcomes.  Returns (output density operator, max locality residual)."""
    lay, kept = p2.layout, p2.kept
    ax = {q: i for i, q in enumerate(kept)}
    nred = len(p2.redundant)
    rho_tot = 0
    loc_res = 0.0
    Lset = {tuple(sorted(e)) for e in lay.L}
    for z in itertools.product((0, 1), repeat=nred):
        zmap = dict(zip(p2.redundant, z))
        psi = branch_states[z] if branch_states is not None else _branch_state_graph(lay, kept, p2.redundant, z)
        w = np.vdot(psi, psi).real
        if w < PRUNE_TOL:
            continue
        steps = []
        for s, (act, lat, recs) in enumerate(zip(p2.actions, p2.site_lattice, p2.sites)):
            m = len(lat)
            fl = {lat.index(r[0]): sum(zmap[k] for k in r[3]) % 2 for r in recs}
            if act.outputs:
                B = act.basis
            else:
                # U_z restricted to the site: CZ on absorbed edges, then Z^flip
                zdiag = kron_all([Z if fl.get(t, 0) else np.eye(2) for t in range(m)])
                czs = [(lat.index(i), lat.index(j)) for i, j in Lset if i in lat and j in lat]
                B = zdiag @ _cz_unitary(m, czs) @ act.basis
                if check_local:
                    Bs = basis_from_steps([(lat.index(r[0]), r[1], r[2])
                                           for r in recs], m, fl)
                    ov = np.abs(np.sum(Bs.conj() * B, axis=0))
                    loc_res = max(loc_res, float(np.abs(ov - 1).max()))
            corr = {}
            for a, ops in p2.corrections[s].items():
                corr[a] = [((ax[q],), PAULI[lab]) for q, lab in ops.items()]
            steps.append(_Step(tuple(ax[q] for q in lat), B, corr, tuple(act.outputs), s))
        rho, _ = _run_steps(psi / np.sqrt(w), steps, len(kept), "enumerate")
        fix = kron_all([Z if sum(zmap[k] for k in f) % 2 else np.eye(2) for f in p2.output_flips])
        rho_tot = rho_tot + w * (fix @ rho @ fix.conj().T)
    return rho_tot / np.trace(rho_tot).real, loc_res


def branch_states_from_dense(psi2d: np.ndarray, lay: Layout2D, kept, redundant):
    """Project a dense 2-D state onto every z pattern of the redundant qubits."""
    n = lay.n_qubits
    psi = np.asarray(psi2d, dtype=complex).reshape([2] * n)
    out = {}
    for z in itertools.product((0, 1), repeat=len(redundant)):
        idx = [slice(None)] * n
        for q, b in zip(redundant, z):
            idx[q] = b
        sub = psi[tuple(idx)]
        # remaining axes are the kept qubits in increasing order
        out[z] = sub.reshape(-1)
    return out


def correlation_space_process(action: SiteAction, A: MpsTensor, V: ProjectiveRep) -> np.ndarray:
    """Choi state (normalized) of rho -> sum_alpha V(g_alpha)^dag A[alpha] rho A[alpha]^dag V(g_alpha), trace-normalized."""
    D = A.D
    J = np.zeros((D * D, D * D), dtype=complex)
    for a in range(action.dim):
        K = V(action.g_alpha[a]).conj().T @ A.contract(action.basis[:, a])
        vecK = K.reshape(-1)  # row-major: |K>> = sum_ij K_ij |i>|j>
        J += np.outer(vecK, vecK.conj())
    return J / np.trace(J).real


def process_fidelity(J: np.ndarray, U: np.ndarray) -> float:
    u = U.reshape(-1) / np.sqrt(U.shape[0])
    return float(np.vdot(u, J @ u).real)
