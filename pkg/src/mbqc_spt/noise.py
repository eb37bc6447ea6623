"""Effective per-gate noise channels, diamond-norm bounds, factorization bounds,
correlation-decay fits, noisy-circuit simulation and the continuity sweep."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DimensionMismatch, GapClosed, InsufficientRange, NotFactorized, NotInPhase, SizeOverflow
from .linalg import partial_trace, schatten1
from .tensors import PfcsSpec, reduced_density

CPTP_TOL = 1e-10


# ----------------------------------------------------------------------------
# channels


@dataclass
class Channel:
    """Linear map on d_in x d_in matrices, stored as a superoperator acting on row-major vec."""

    superop: np.ndarray
    d_in: int
    d_out: int

    @staticmethod
    def from_function(f, d_in: int, d_out: int = None) -> "Channel":
        d_out = d_in if d_out is None else d_out
        S = np.zeros((d_out * d_out, d_in * d_in), dtype=complex)
        for i in range(d_in):
            for j in range(d_in):
                E = np.zeros((d_in, d_in), dtype=complex)
                E[i, j] = 1
                S[:, i * d_in + j] = np.asarray(f(E)).reshape(-1)
        return Channel(S, d_in, d_out)

    @staticmethod
    def from_kraus(kraus) -> "Channel":
        K = [np.asarray(k, dtype=complex) for k in kraus]
        S = sum(np.kron(k, k.conj()) for k in K)
        return Channel(S, K[0].shape[1], K[0].shape[0])

    @staticmethod
    def unitary(U) -> "Channel":
        return Channel.from_kraus([U])

    @staticmethod
    def identity(d: int) -> "Channel":
        return Channel(np.eye(d * d, dtype=complex), d, d)

    @staticmethod
    def depolarizing(p: float, d: int = 2) -> "Channel":
        return Channel.from_function(lambda r: (1 - p) * r + p * np.trace(r) * np.eye(d) / d, d)

    @staticmethod
    def restart(d: int = 2) -> "Channel":
        """Reset to |0><0| regardless of input."""
        P0 = np.zeros((d, d), dtype=complex)
        P0[0, 0] = 1
        return Channel.from_function(lambda r: np.trace(r) * P0, d)

    def __call__(self, rho):
        rho = np.asarray(rho)
        if rho.shape != (self.d_in, self.d_in):
            raise DimensionMismatch(f"channel expects {self.d_in}x{self.d_in} input")
        return (self.superop @ rho.reshape(-1)).reshape(self.d_out, self.d_out)

    def choi(self) -> np.ndarray:
        """Unnormalized Choi matrix sum_ij |i><j| (x) E(|i><j|) (trace d_in for a CPTP map)."""
        d = self.d_in
        J = np.zeros((d * self.d_out, d * self.d_out), dtype=complex)
        for i in range(d):
            for j in range(d):
                E = np.zeros((d, d), dtype=complex)
                E[i, j] = 1
                J += np.kron(E, self(E))
        return J

    def compose(self, other: "Channel") -> "Channel":
        """self o other (other applied first)."""
        if other.d_out != self.d_in:
            raise DimensionMismatch("channel dimensions do not chain")
        return Channel(self.superop @ other.superop, other.d_in, self.d_out)

    def tensor(self, other: "Channel") -> "Channel":
        a, b = self.d_in, other.d_in
        ao, bo = self.d_out, other.d_out
        S = np.einsum("ijkl,mnpq->imjnkplq", self.superop.reshape(ao, ao, a, a),
                      other.superop.reshape(bo, bo, b, b))
        return Channel(S.reshape(ao * bo * ao * bo, a * b * a * b), a * b, ao * bo)

    def cptp_residual(self) -> tuple:
        """(trace-preservation residual, most negative Choi eigenvalue)."""
        J = self.choi()
        tp = partial_trace(J, [self.d_in, self.d_out], [0])
        tp_res = float(np.abs(tp - np.eye(self.d_in)).max())
        ev = np.linalg.eigvalsh(0.5 * (J + J.conj().T))
        return tp_res, float(ev.min())

    def is_cptp(self, tol: float = CPTP_TOL) -> bool:
        tp, neg = self.cptp_residual()
        return tp <= tol and neg >= -tol


def effective_channel(G, rho_k, k: int = None) -> Channel:
    """sigma -> Tr_site[ G (rho_k (x) sigma) G^dag ] for a coupling on (site (x) ancilla)."""
    G = G.G if hasattr(G, "G") else np.asarray(G)
    rho_k = np.asarray(rho_k)
    d = rho_k.shape[0]
    k = G.shape[0] // d if k is None else k
    if G.shape[0] != d * k:
        raise DimensionMismatch("coupling does not match site and ancilla dimensions")

    def f(sig):
        big = G @ np.kron(rho_k, sig) @ G.conj().T
        return np.einsum("iaib->ab", big.reshape(d, k, d, k))
    return Channel.from_function(f, k)


def noise_part(A: Channel, U) -> Channel:
    """E = A o U^{-1} (so that A = E o U)."""
    return A.compose(Channel.unitary(np.asarray(U).conj().T))


def diamond_distance_bounds(E: Channel, F: Channel, seed: int = 0, n_random: int = 24,
                            refine: bool = True) -> tuple:
    """(lower, upper) bounds on ||E - F||_diamond.

    upper = ||J_E - J_F||_1 (unnormalized Choi); lower = largest output trace
    distance found over the maximally entangled input, seeded random pure
    inputs on system (x) ancilla, and a local search from the best of them.
    """
    if (E.d_in, E.d_out) != (F.d_in, F.d_out):
        raise DimensionMismatch("channels differ in dimension")
    d = E.d_in
    Dm = Channel(E.superop - F.superop, d, E.d_out)
    upper = schatten1(Dm.choi())

    def val(psi):
        psi = psi / np.linalg.norm(psi)
        M = psi.reshape(d, d)  # (system, ancilla)
        out = np.zeros((E.d_out * d, E.d_out * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                Eij = np.zeros((d, d), dtype=complex)
                Eij[i, j] = 1
                anc = np.outer(M[i], M[j].conj())
                out += np.kron(Dm(Eij), anc)
        return schatten1(out)

    rng = np.random.default_rng(seed)
    cands = [np.eye(d, dtype=complex).reshape(-1)]
    for _ in range(n_random):
        cands.append(rng.normal(size=d * d) + 1j * rng.normal(size=d * d))
    vals = [val(c) for c in cands]
    best = int(np.argmax(vals))
    lower = vals[best]
    if refine and upper > 1e-14:
        x0 = np.concatenate([cands[best].real, cands[best].imag])
        f = lambda x: -val(x[: d * d] + 1j * x[d * d:])
        res = minimize(f, x0, method="Nelder-Mead", options={"maxiter": 400 * d, "xatol": 1e-10, "fatol": 1e-13})
        lower = max(lower, -res.fun)
    lower = min(lower, upper)
    return float(lower), float(upper)


# ----------------------------------------------------------------------------
# factorization and correlation decay


def _site_rdm(psi, sites):
    psi = np.asarray(psi)
    sites = list(sites)
    rest = [a for a in range(psi.ndim) if a not in sites]
    m = np.transpose(psi, sites + rest).reshape(int(np.prod([psi.shape[s] for s in sites])), -1)
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


@dataclass
class FactorizationReport:
    exact: float
    R: int
    m: int
    N: int
    d: int
    f_R: float
    pfcs_bound: float
    general_bound: float


def factorization_distance(psi, partition) -> float:
    parts = [sorted(p) for p in partition]
    allsites = [s for p in parts for s in p]
    if len(set(allsites)) != len(allsites):
        raise ValueError("site sets must be disjoint")
    rho = _site_rdm(psi, allsites)
    prod = np.ones((1, 1))
    for p in parts:
        prod = np.kron(prod, _site_rdm(psi, p))
    return schatten1(rho - prod)


def factorization_report(psi, partition, f=None) -> FactorizationReport:
    """Exact ||rho - (x)_k rho_k||_1 for the site sets, with the m f(R) and N f(R) d^{2N} bounds.

    ``f`` is a callable R -> f(R) (e.g. from correlation_decay_fit); N is the
    number of sites in the union and d the site dimension.
    """
    psi = np.asarray(psi)
    parts = [sorted(p) for p in partition]
    dims = int(np.prod([psi.shape[s] for p in parts for s in p]))
    if dims ** 2 > 2 ** 26:
        raise SizeOverflow("reduced density too large")
    exact = factorization_distance(psi, parts) if len(parts) > 1 else 0.0
    R = min((abs(a - b) for i, p in enumerate(parts) for q in parts[i + 1:] for a in p for b in q), default=0)
    N = sum(len(p) for p in parts)
    d = psi.shape[parts[0][0]]
    fR = float(f(R)) if f is not None else float("nan")
    return FactorizationReport(exact, R, len(parts), N, d, fR, len(parts) * fR, N * fR * d ** (2 * N))


@dataclass
class DecayFit:
    xi: float
    slope: float
    intercept: float
    distances: np.ndarray
    samples: np.ndarray
    residual: float
    below_floor: bool

    def f(self, R):
        if self.below_floor:
            return 0.0
        return float(np.exp(self.intercept + self.slope * R))


def connected_correlation(rho12, d1, d2) -> float:
    """max over matrix-unit operators E_a (x) E_b of |<E_a E_b> - <E_a><E_b>| (each ||E||_1 ||E|| = 1)."""
    r1 = partial_trace(rho12, [d1, d2], [0])
    r2 = partial_trace(rho12, [d1, d2], [1])
    return float(np.abs(rho12 - np.kron(r1, r2)).max())


def correlation_decay_fit(state, distances=None, start: int = 0, floor: float = 1e-13) -> DecayFit:
    """Fit log of the maximal connected correlator against distance: slope = -1/xi."""
    if distances is None:
        distances = list(range(1, 6))
    distances = list(distances)
    if len(distances) < 3:
        raise InsufficientRange("need at least three distances")
    samples = []
    for R in distances:
        if isinstance(state, PfcsSpec):
            rho = reduced_density(state, [start, start + R])
            d = state.tensor.d
        else:
            psi = np.asarray(state)
            if start + R >= psi.ndim:
                raise InsufficientRange(f"distance {R} exceeds the chain")
            rho = _site_rdm(psi, [start, start + R])
            d = psi.shape[start]
        samples.append(connected_correlation(rho, d, d))
    samples = np.array(samples)
    good = samples > floor
    if good.sum() < 2:
        return DecayFit(0.0, -np.inf, -np.inf, np.array(distances), samples, 0.0, True)
    x = np.array(distances)[good]
    y = np.log(samples[good])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.abs(np.exp(intercept + slope * x) - samples[good]).max() / samples[good].max())
    xi = -1.0 / slope if slope < 0 else np.inf
    return DecayFit(float(xi), float(slope), float(intercept), np.array(distances), samples, resid, False)


def markov_chain_tensor(a: float):
    """Two-state classical Markov chain as an MPS tensor whose subleading transfer eigenvalue is a."""
    from .tensors import MpsTensor
    p = (1 - a) / 2
    T = np.array([[1 - p, p], [p, 1 - p]])  # T[s, j]: probability j -> s
    # physical index (s, j) records the transition, so the reduced states are diagonal
    A = np.zeros((4, 2, 2), dtype=complex)
    for s in range(2):
        for j in range(2):
            A[2 * s + j, s, j] = np.sqrt(T[s, j])
    return MpsTensor(A)


# ----------------------------------------------------------------------------
# noisy circuits


def _embed_channel_on(rho, ch: Channel, qubits, n):
    """Apply a channel acting on the given qubits of an n-qubit density matrix."""
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    perm = list(qubits) + rest
    t = rho.reshape([2] * (2 * n))
    t = np.transpose(t, perm + [n + p for p in perm])
    dk, dr = 2 ** k, 2 ** (n - k)
    t = t.reshape(dk, dr, dk, dr).transpose(0, 2, 1, 3).reshape(dk * dk, dr * dr)
    t = ch.superop @ t
    t = t.reshape(dk, dk, dr, dr).transpose(0, 2, 1, 3).reshape([2] * (2 * n))
    inv = np.argsort(perm)
    t = np.transpose(t, list(inv) + [n + i for i in inv])
    return t.reshape(2 ** n, 2 ** n)


def noisy_circuit_simulate(circuit, noise=None, n_qubits: int = 1, rho0=None) -> np.ndarray:
    """Density-matrix evolution of a gate list with per-gate noise.

    ``circuit`` items: ('gate', U, qubits) or ('restart', qubits).  ``noise[t]``
    (optional) is a list of (Channel, qubits) applied after gate t, i.e. a
    tensor product of local noise maps.
    """
    n = n_qubits
    if rho0 is None:
        rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
        rho[0, 0] = 1
    else:
        rho = np.asarray(rho0, dtype=complex)
        if rho.shape != (2 ** n, 2 ** n):
            raise DimensionMismatch("initial state does not match qubit count")
    noise = noise or {}
    for t, item in enumerate(circuit):
        kind = item[0]
        if kind == "gate":
            U, qs = np.asarray(item[1]), list(item[2])
            if U.shape[0] != 2 ** len(qs):
                raise DimensionMismatch("gate size does not match its qubits")
            rho = _embed_channel_on(rho, Channel.unitary(U), qs, n)
        elif kind == "restart":
            for q in item[1]:
                rho = _embed_channel_on(rho, Channel.restart(2), [q], n)
        else:
            raise ValueError(f"unknown circuit element {kind!r}")
        for ch, qs in (noise.get(t, []) if isinstance(noise, dict) else noise[t]):
            if ch.d_in != 2 ** len(qs):
                raise DimensionMismatch("noise channel size does not match its qubits")
            rho = _embed_channel_on(rho, ch, list(qs), n)
    return rho


# ----------------------------------------------------------------------------
# Theorem-1 pipeline


@dataclass
class GateNoise:
    R: int
    site: int
    lower: float  # diamond lower bound of E_k - I
    upper: float  # diamond upper bound of E_k - I
    rhs: float  # ||rho_k - phi phi||_1
    tp_residual: float
    min_choi_eig: float


@dataclass
class NoiseReport:
    R: list
    delta: list
    factorization: list
    fit_slope: float = float("nan")
    fit_residual: float = float("nan")
    monotone: bool = False
    per_gate: list = field(default_factory=list)  # GateNoise records

    def to_csv_rows(self):
        return [(r, f"{d:.12g}", f"{b:.12g}") for r, d, b in zip(self.R, self.delta, self.factorization)]


def _choi_state(ch: Channel) -> np.ndarray:
    return ch.choi() / ch.d_in


def log_linear_fit(R, values):
    R = np.asarray(R, dtype=float)
    y = np.log(np.asarray(values))
    slope, intercept = np.polyfit(R, y, 1)
    pred = np.exp(intercept + slope * R)
    resid = float(np.max(np.abs(pred - values) / np.asarray(values)))
    return float(slope), float(intercept), resid


def theorem1_check(n_sites: int = 7, B: float = 0.1, R_values=(1, 2, 3, 4), gates=(("z", 0.7), ("z", 1.1)),
                   first: int = 1, extra=None) -> NoiseReport:
    """Markovian effective noise: joint two-gate process on the ancilla vs the composition
    of single-gate channels extracted from single-site reduced dual states.

    Delta(R) is the trace distance between the Choi states (outputs for a
    maximally entangled input) of the exact MBQC process and of the noisy
    circuit U2, E2, U1, E1.  The contractivity bound is ||rho12 - rho1 (x) rho2||_1.
    """
    from .ground_state import exact_ground_state
    from .mbqc import Protocol, build_couplings, gate_basis, identity_action, readout_action
    from .symmetry import cluster_onsite_rep
    from .models import cluster_chain_hamiltonian, transverse_field_perturbation
    from .spt_dual import disentangler, dual_state, extract_protected_decomposition
    from .ground_state import cluster_tensor

    H, S = cluster_chain_hamiltonian(n_sites)
    chain = [q for s in H.sites for q in s]
    Hb = H + transverse_field_perturbation(B, chain, H.n_qubits)
    if extra is not None:
        Hb = Hb + extra
    v, _ = exact_ground_state(Hb)
    D = disentangler(n_sites)
    try:
        bulk, _ = dual_state(v[:, 0].reshape([2] + [4] * n_sites + [2]), D)
    except NotFactorized as exc:
        raise NotInPhase(f"ground state is not in the protected phase: {exc}") from exc
    dec = extract_protected_decomposition(cluster_tensor())
    rep = NoiseReport([], [], [])
    for R in R_values:
        k1, k2 = first, first + R
        if k2 >= n_sites - 1:
            raise InsufficientRange(f"R={R} does not fit on {n_sites} sites")
        acts = [identity_action() for _ in range(n_sites)]
        acts[k1] = gate_basis(*gates[0])
        acts[k2] = gate_basis(*gates[1])
        acts[-1] = readout_action()
        P = Protocol(acts, [(2 * s + 1, 2 * s + 2) for s in range(n_sites)], [cluster_onsite_rep(1)] * n_sites,
                     2 * n_sites + 2)
        cps = build_couplings(P, dec)
        G1, G2 = cps[k1].G, cps[k2].G
        r12 = _site_rdm(bulk, [k1, k2])
        r1 = _site_rdm(bulk, [k1])
        r2 = _site_rdm(bulk, [k2])
        kdim = 2

        def joint(sig):
            big = np.kron(r12, sig)
            T1 = np.einsum("aibj,ck->acibkj", G1.reshape(4, kdim, 4, kdim), np.eye(4)).reshape(16 * kdim, 16 * kdim)
            T2 = np.kron(np.eye(4), G2)
            big = T2 @ T1 @ big @ T1.conj().T @ T2.conj().T
            return np.einsum("xyaxyb->ab", big.reshape(4, 4, kdim, 4, 4, kdim))

        Jt = Channel.from_function(joint, kdim)
        A1 = effective_channel(G1, r1)
        A2 = effective_channel(G2, r2)
        U1, U2 = acts[k1].U, acts[k2].U
        E1, E2 = noise_part(A1, U1), noise_part(A2, U2)
        # noisy circuit on (reference, ancilla) starting from |I>
        Iv = np.eye(kdim).reshape(-1) / np.sqrt(kdim)
        rho0 = np.outer(Iv, Iv.conj())
        circ = [("gate", U1, [1]), ("gate", U2, [1])]
        pred = noisy_circuit_simulate(circ, {0: [(E1, [1])], 1: [(E2, [1])]}, 2, rho0)
        exact = partial_choi_output(Jt, rho0)
        delta = schatten1(exact - pred)
        fb = schatten1(r12 - np.kron(r1, r2))
        rep.R.append(R)
        rep.delta.append(float(delta))
        rep.factorization.append(float(fb))
        phi = np.zeros((4, 4))
        phi[0, 0] = 1
        for kk, (E, r) in ((k1, (E1, r1)), (k2, (E2, r2))):
            lo, up = diamond_distance_bounds(E, Channel.identity(kdim), refine=False)
            tp, neg = E.cptp_residual()
            rep.per_gate.append(GateNoise(R, kk, lo, up, schatten1(r - phi), tp, neg))
    rep.monotone = all(b < a for a, b in zip(rep.delta[:-1], rep.delta[1:]))
    if all(d > 0 for d in rep.delta):
        rep.fit_slope, _, rep.fit_residual = log_linear_fit(rep.R, rep.delta)
    return rep


def partial_choi_output(ch: Channel, rho0) -> np.ndarray:
    """(I_ref (x) ch)(rho0) for rho0 on (reference, system)."""
    d = ch.d_in
    t = np.asarray(rho0).reshape(d, d, d, d)  # (r, s, r', s')
    out = np.zeros((d, ch.d_out, d, ch.d_out), dtype=complex)
    for r in range(d):
        for rp in range(d):
            out[r, :, rp, :] = ch(t[r, :, rp, :])
    return out.reshape(d * ch.d_out, d * ch.d_out)


# ----------------------------------------------------------------------------
# continuity sweep


@dataclass
class ContinuityCurve:
    s: np.ndarray
    distance: np.ndarray
    gap: np.ndarray
    slope: float
    J_prime: float
    c_fit: float
    max_ratio: float  # max over 0 < s <= s_check of distance / (slope * s)


def _term_derivative_norm(H_of_s, s, h=1e-6):
    Ha, Hb = H_of_s(s + h), H_of_s(max(s - h, 0.0))
    step = (s + h) - max(s - h, 0.0)
    if len(Ha.terms) != len(Hb.terms):
        # the perturbation switches on at s = 0: compare against the larger term list
        Hb = H_of_s(s + 2 * h)
        Ha, Hb = Hb, Ha
        step = h
    norms = [np.linalg.norm(ta.matrix - tb.matrix, 2) / step for ta, tb in zip(Ha.terms, Hb.terms)]
    return float(max(norms)) if norms else 0.0


def perturbation_continuity_sweep(H_of_s, X, S: float, steps: int, gap_fn=None, gap_threshold: float = 1e-3,
                                  s_check: float = 0.1) -> ContinuityCurve:
    """||rho_X(s) - rho_X(0)||_1 along a path, with gap monitoring.

    ``X`` lists the qubits of the region; ``gap_fn(s)`` optionally replaces the
    ED gap for monitoring (e.g. a free-fermion gap on a much longer chain).
    Raises GapClosed with the first s where the gap drops below the threshold.
    """
    from .ground_state import exact_ground_state
    from .linalg import reduced_density_dense

    grid = np.linspace(0.0, S, steps + 1)
    dists, gaps = [], []
    rho0 = None
    for s in grid:
        Hs = H_of_s(float(s))
        gap = gap_fn(float(s)) if gap_fn is not None else None
        if gap is not None and gap < gap_threshold:
            raise GapClosed(f"gap {gap:.3e} below {gap_threshold} at s={s:.6f}", s_star=float(s), gap=float(gap))
        v, rep = exact_ground_state(Hs)
        if gap_fn is None:
            gap = rep.gap
            if rep.multiplicity > 1 or gap < gap_threshold:
                raise GapClosed(f"gap {gap:.3e} below {gap_threshold} at s={s:.6f}", s_star=float(s), gap=float(gap))
        rho = reduced_density_dense(v[:, 0].reshape([2] * Hs.n_qubits), list(X))
        if rho0 is None:
            rho0 = rho
        dists.append(schatten1(rho - rho0))
        gaps.append(gap)
    dists, gaps = np.array(dists), np.array(gaps)
    slope = float(dists[1] / grid[1]) if steps >= 1 and grid[1] > 0 else 0.0
    Jp = max(_term_derivative_norm(H_of_s, float(s)) for s in grid[1:2]) if steps >= 1 else 0.0
    c_fit = slope / (len(X) * Jp) if Jp > 0 else float("nan")
    mask = (grid > 0) & (grid <= s_check + 1e-12)
    ratio = float(np.max(dists[mask] / (slope * grid[mask]))) if mask.any() and slope > 0 else 0.0
    return ContinuityCurve(grid, dists, gaps, slope, Jp, c_fit, ratio)


def gap_path_scan(gap_fn, s_max: float, steps: int, threshold: float = 1e-3):
    """Scan a gap function along [0, s_max]; raise GapClosed at the first crossing."""
    grid = np.linspace(0.0, s_max, steps + 1)
    gaps = []
    for s in grid:
        g = gap_fn(float(s))
        gaps.append(g)
        if g < threshold:
            raise GapClosed(f"gap {g:.3e} below {threshold} at s={s:.6f}", s_star=float(s), gap=float(g))
    return grid, np.array(gaps)
