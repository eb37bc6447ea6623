"""Matrix product state tensors, transfer channels, finite chains, and norms.

Convention: an ``MpsTensor`` stores, for each physical index ``i``, the
correlation-space operator ``A[i]`` (shape ``D x D``).  A finite chain with
end vectors ``L`` and ``R`` has amplitudes

    psi(i_1, ..., i_n) = R . A[i_n] ... A[i_1] . L

so the correlation state flows from the left end to the right end, and a
measured site with outcome ``|a>`` acts as ``A[a] = sum_i conj(<i|a>) A[i]``.
The transfer channel is ``sigma -> sum_i A[i] sigma A[i]^dagger``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateLeadingEigenvalue,
    DimensionMismatch,
    InvalidCut,
    NotInjective,
    OutOfRange,
    SizeOverflow,
)
from .linalg import schatten1

DENSE_CAP = 2 ** 22


@dataclass(frozen=True)
class MpsTensor:
    data: np.ndarray  # (d, D, D)

    def __post_init__(self):
        a = np.asarray(self.data, dtype=complex)
        if a.ndim != 3 or a.shape[1] != a.shape[2]:
            raise DimensionMismatch("MPS tensor must have shape (d, D, D)")
        if not np.all(np.isfinite(a)):
            raise ValueError("MPS tensor has non-finite entries")
        object.__setattr__(self, "data", a)

    @property
    def d(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    def __getitem__(self, i):
        return self.data[i]

    def contract(self, vec) -> np.ndarray:
        """A[psi] = sum_i conj(psi_i) A[i] for a physical vector psi."""
        return np.tensordot(np.conj(np.asarray(vec)), self.data, axes=(0, 0))

    def rotated(self, U) -> "MpsTensor":
        """Tensor expressed in the physical basis given by the columns of U."""
        return MpsTensor(np.tensordot(np.conj(U).T, self.data, axes=(1, 0)))


@dataclass
class TransferChannel:
    matrix: np.ndarray  # D^2 x D^2 acting on row-major vec(sigma)
    D: int
    _spectrum: np.ndarray = None

    def apply(self, sigma):
        return (self.matrix @ np.asarray(sigma).reshape(-1)).reshape(self.D, self.D)

    def apply_adjoint(self, sigma):
        return (self.matrix.conj().T @ np.asarray(sigma).reshape(-1)).reshape(self.D, self.D)

    def spectrum(self) -> np.ndarray:
        if self._spectrum is None:
            ev = np.linalg.eigvals(self.matrix)
            self._spectrum = ev[np.argsort(-np.abs(ev), kind="stable")]
        return self._spectrum

    def choi(self) -> np.ndarray:
        """Unnormalized Choi matrix sum_{ij} |i><j| (x) E(|i><j|)."""
        D = self.D
        c = self.matrix.reshape(D, D, D, D)  # (a, b, i, j): E(|i><j|)_{ab}
        return np.transpose(c, (2, 0, 3, 1)).reshape(D * D, D * D)


def transfer_channel(A: MpsTensor) -> TransferChannel:
    m = sum(np.kron(a, a.conj()) for a in A.data)
    return TransferChannel(m, A.D)


def injectivity_check(A: MpsTensor, max_block: int = None) -> bool:
    """True iff products of some length L <= D^4 span all D x D matrices."""
    D = A.D
    if not np.any(np.abs(A.data) > 1e-14):
        return False
    if max_block is None:
        max_block = D ** 4
    target = D * D
    flat = A.data.reshape(A.d, -1)

    def basis_of(mats):
        q, r = np.linalg.qr(mats.T)
        keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, np.abs(r).max()) if r.size else []
        return q[:, keep].T if r.size else mats[:0]

    span = basis_of(flat)
    if span.shape[0] == target:
        return True
    for _ in range(1, max_block):
        prods = np.array([(a @ s.reshape(D, D)).ravel() for a in A.data for s in span])
        u, sv, vh = np.linalg.svd(prods, full_matrices=False)
        keep = sv > 1e-10 * sv[0]
        span = vh[keep]
        if span.shape[0] == target:
            return True
        if span.shape[0] == 0:
            return False
    return False


def unital_gauge(A: MpsTensor):
    """Return (X, lam) with A' = X^{-1/2} A X^{1/2} / sqrt(lam) unital."""
    T = transfer_channel(A)
    ev, vecs = np.linalg.eig(T.matrix)
    k = int(np.argmax(np.abs(ev)))
    lam = ev[k]
    Xf = vecs[:, k].reshape(A.D, A.D)
    Xf = Xf / np.trace(Xf)
    Xf = 0.5 * (Xf + Xf.conj().T)
    return Xf, lam


def canonical_form(A: MpsTensor):
    """Gauge to a unital transfer channel.

    Returns ``(A', Lambda, a)`` with ``sum_i A'[i] A'[i]^dagger = I``,
    ``Lambda`` the trace-one fixed point of the adjoint channel, and ``a`` the
    largest-modulus subleading eigenvalue.
    """
    if not injectivity_check(A):
        raise NotInjective("tensor is not injective")
    Xf, lam = unital_gauge(A)
    w, U = np.linalg.eigh(Xf)
    if w.min() <= 1e-14:
        raise NotInjective("fixed point is not positive definite")
    sq = (U * np.sqrt(w)) @ U.conj().T
    isq = (U / np.sqrt(w)) @ U.conj().T
    data = np.array([isq @ a @ sq for a in A.data]) / np.sqrt(lam.real)
    Ap = MpsTensor(data)
    T = transfer_channel(Ap)
    ev, vl = np.linalg.eig(T.matrix.conj().T)
    k = int(np.argmin(np.abs(ev - 1)))
    Lam = vl[:, k].reshape(A.D, A.D)
    Lam = Lam / np.trace(Lam)
    Lam = 0.5 * (Lam + Lam.conj().T)
    spec = T.spectrum()
    a = spec[1] if len(spec) > 1 else 0.0
    if abs(a) > 1 - 1e-10:
        raise DegenerateLeadingEigenvalue("transfer channel has a degenerate leading eigenvalue")
    if abs(a) < 1e-12:
        a = 0.0
    return Ap, Lam, complex(a)


def correlation_length(A: MpsTensor) -> float:
    _, _, a = canonical_form(A)
    if abs(a) == 0:
        return 0.0
    return float(-1.0 / np.log(abs(a)))


# ----------------------------------------------------------------------------
# finite chains


@dataclass
class FiniteMps:
    """Open chain with end vectors.

    If ``boundary_dim`` is set, the bond space is C^k (x) C^J (k = boundary_dim)
    and the chain carries terminating particles: ``left``/``right`` are then
    fixed junk end vectors of dimension J, and the terminating particles hold
    the C^k part of the bond at both ends.
    """

    tensors: list
    left: np.ndarray
    right: np.ndarray
    boundary_dim: int = None

    def __post_init__(self):
        self.tensors = [t if isinstance(t, MpsTensor) else MpsTensor(t) for t in self.tensors]
        self.left = np.asarray(self.left, dtype=complex)
        self.right = np.asarray(self.right, dtype=complex)
        for a, b in zip(self.tensors[:-1], self.tensors[1:]):
            if a.D != b.D:
                raise DimensionMismatch("neighbouring bond dimensions differ")

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def dims(self):
        d = [t.d for t in self.tensors]
        if self.boundary_dim:
            return [self.boundary_dim] + d + [self.boundary_dim]
        return d

    def _ends(self):
        if self.boundary_dim:
            k = self.boundary_dim
            eye = np.eye(k)
            L = np.stack([np.kron(eye[l], self.left) for l in range(k)], axis=1)  # D x k
            R = np.stack([np.kron(eye[r], self.right) for r in range(k)], axis=0)  # k x D
            return L, R
        return self.left.reshape(-1, 1), self.right.reshape(1, -1)

    def to_dense(self, normalize: bool = True) -> np.ndarray:
        """Dense amplitude tensor with one leg per site (plus terminators)."""
        if int(np.prod(self.dims)) > DENSE_CAP:
            raise SizeOverflow("state exceeds the dense cap of 2^22 amplitudes")
        L, R = self._ends()
        # cur[(phys...), bond, l]
        cur = L[None, :, :]  # (1, D, kL)
        for t in self.tensors:
            cur = np.einsum("iab,pbl->pial", t.data, cur).reshape(-1, t.D, L.shape[1])
        amp = np.einsum("rb,pbl->lpr", R, cur)  # (kL, phys, kR)
        shape = [t.d for t in self.tensors]
        if self.boundary_dim:
            psi = amp.reshape([L.shape[1]] + shape + [R.shape[0]])
        else:
            psi = amp.reshape(shape)
        if normalize:
            nrm = np.linalg.norm(psi)
            if nrm == 0:
                raise ValueError("state has zero norm")
            psi = psi / nrm
        return psi


def _env_from_left(mps: FiniteMps, keep):
    """Left-to-right contraction keeping open physical legs for sites in `keep`."""
    L, R = mps._ends()
    env = L @ L.conj().T  # D x D (terminator legs traced)
    env = env[None, None]  # (ket_open, bra_open, D, D)
    for k, t in enumerate(mps.tensors):
        if k in keep:
            env = np.einsum("iab,pqbc,jdc->piqjad", t.data, env, t.data.conj())
            s = env.shape
            env = env.reshape(s[0] * s[1], s[2] * s[3], s[4], s[5])
        else:
            env = np.einsum("iab,pqbc,idc->pqad", t.data, env, t.data.conj())
    return np.einsum("rb,pqbc,rc->pq", R, env, R.conj())


@dataclass(frozen=True)
class PfcsSpec:
    """Translation-invariant infinite chain generated by a single tensor."""

    tensor: MpsTensor


def reduced_density(state, sites) -> np.ndarray:
    """Reduced density operator on the given site indices (sorted order)."""
    sites = sorted(int(s) for s in sites)
    if isinstance(state, PfcsSpec):
        if sites and sites[0] < 0:
            raise OutOfRange("negative site index")
        Ap, Lam, _ = canonical_form(state.tensor)
        span = range(sites[0], sites[-1] + 1) if sites else []
        env = np.eye(Ap.D, dtype=complex)[None, None]
        for k in span:
            if k in sites:
                env = np.einsum("iab,pqbc,jdc->piqjad", Ap.data, env, Ap.data.conj())
                s = env.shape
                env = env.reshape(s[0] * s[1], s[2] * s[3], s[4], s[5])
            else:
                env = np.einsum("iab,pqbc,idc->pqad", Ap.data, env, Ap.data.conj())
        rho = np.einsum("pqbc,cb->pq", env, Lam)
    elif isinstance(state, FiniteMps):
        if any(s < 0 or s >= state.n for s in sites):
            raise OutOfRange("site index outside chain")
        rho = _env_from_left(state, set(sites))
    else:
        raise TypeError("state must be FiniteMps or PfcsSpec")
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def trace_distance(rho, sigma) -> float:
    """Unhalved trace norm ||rho - sigma||_1."""
    rho, sigma = np.asarray(rho), np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise DimensionMismatch(f"{rho.shape} vs {sigma.shape}")
    return schatten1(rho - sigma)


def check_density(rho, tol: float = 1e-10) -> bool:
    rho = np.asarray(rho)
    if np.abs(rho - rho.conj().T).max() > tol:
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -tol)


def entanglement_spectrum(state, cut: int, dims=None) -> np.ndarray:
    """Schmidt coefficients squared across the bond after `cut` legs.

    ``state`` is a FiniteMps (legs = its dims, terminators included) or a dense
    amplitude array whose legs are given by its shape.
    """
    if isinstance(state, FiniteMps):
        psi = state.to_dense()
    else:
        psi = np.asarray(state)
        if dims is not None:
            psi = psi.reshape(dims)
    if not 0 < cut < psi.ndim:
        raise InvalidCut(f"cut {cut} outside 1..{psi.ndim - 1}")
    dl = int(np.prod(psi.shape[:cut]))
    s = np.linalg.svd(psi.reshape(dl, -1), compute_uv=False)
    p = s ** 2
    p = p / p.sum()
    return np.sort(p)[::-1]


# ----------------------------------------------------------------------------
# serialization

_MAGIC = b"MPST"
_VERSION = 1


def tensor_to_bytes(A: MpsTensor) -> bytes:
    header = _MAGIC + np.array([_VERSION, A.d, A.D, A.D], dtype="<u4").tobytes()
    return header + np.ascontiguousarray(A.data, dtype="<c16").tobytes()


def tensor_from_bytes(buf: bytes) -> MpsTensor:
    if buf[:4] != _MAGIC:
        raise ValueError("not a tensor file")
    ver, d, dl, dr = np.frombuffer(buf[4:20], dtype="<u4")
    if ver != _VERSION:
        raise ValueError(f"unsupported tensor format version {ver}")
    data = np.frombuffer(buf[20:], dtype="<c16").reshape(int(d), int(dl), int(dr))
    return MpsTensor(data.copy())


def tensor_to_text(A: MpsTensor) -> str:
    lines = [f"version = {_VERSION}", f"d = {A.d}", f"D = {A.D}"]
    for i in range(A.d):
        vals = ",".join(f"{z.real:.17g}:{z.imag:.17g}" for z in A.data[i].ravel())
        lines.append(f"A.{i} = {vals}")
    return "\n".join(lines) + "\n"


def tensor_from_text(text: str) -> MpsTensor:
    kv = dict((s.strip() for s in line.split("=", 1)) for line in text.splitlines() if "=" in line)
    d, D = int(kv["d"]), int(kv["D"])
    data = np.empty((d, D, D), dtype=complex)
    for i in range(d):
        vals = [complex(float(a), float(b)) for a, b in (p.split(":") for p in kv[f"A.{i}"].split(","))]
        data[i] = np.array(vals).reshape(D, D)
    return MpsTensor(data)
