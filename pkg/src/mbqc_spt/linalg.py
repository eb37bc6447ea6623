"""Small dense/sparse linear-algebra helpers: Paulis, embeddings, partial traces."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
HAD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}

# single-qubit Pauli products: (a, b) -> (phase, a*b)
_PMUL = {}
for _a in "IXYZ":
    for _b in "IXYZ":
        _m = PAULI[_a] @ PAULI[_b]
        for _c in "IXYZ":
            _ph = np.trace(PAULI[_c].conj().T @ _m) / 2
            if abs(abs(_ph) - 1) < 1e-12:
                _PMUL[(_a, _b)] = (complex(np.round(_ph.real) + 1j * np.round(_ph.imag)), _c)


def pauli_mul(a: str, b: str):
    """Product of two single-qubit Pauli labels -> (phase, label)."""
    return _PMUL[(a, b)]


def pauli_string_mul(p: dict, q: dict):
    """Multiply Pauli strings given as {qubit: label}; returns (phase, string)."""
    out = dict(p)
    phase = 1.0 + 0j
    for k, b in q.items():
        a = out.get(k, "I")
        ph, c = pauli_mul(a, b)
        phase *= ph
        if c == "I":
            out.pop(k, None)
        else:
            out[k] = c
    return phase, out


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def pauli_matrix(labels: str) -> np.ndarray:
    """Dense matrix of a Pauli word such as 'ZXZ' (first letter = most significant)."""
    return kron_all([PAULI[c] for c in labels])


def equatorial_basis(phi: float) -> np.ndarray:
    """Columns (|0> + e^{i phi}|1>)/sqrt2 and (|0> - e^{i phi}|1>)/sqrt2."""
    e = np.exp(1j * phi)
    return np.array([[1, 1], [e, -e]], dtype=complex) / np.sqrt(2)


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def rx(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def cz_diag(n: int, i: int, j: int) -> np.ndarray:
    """Diagonal of CZ on qubits i, j of an n-qubit register (qubit 0 most significant)."""
    idx = np.arange(2 ** n)
    bi = (idx >> (n - 1 - i)) & 1
    bj = (idx >> (n - 1 - j)) & 1
    return 1.0 - 2.0 * (bi & bj)


def embed_sparse(n_qubits: int, support, mat) -> sp.csr_matrix:
    """Embed a 2^k x 2^k matrix acting on qubits `support` into n qubits (sparse)."""
    support = list(support)
    k = len(support)
    mat = sp.coo_matrix(mat)
    if mat.shape != (2 ** k, 2 ** k):
        raise DimensionMismatch("matrix does not match support size")
    rest = [q for q in range(n_qubits) if q not in support]
    nr = len(rest)
    rest_idx = np.arange(2 ** nr)
    # bits of the rest configuration placed into full index
    base = np.zeros(2 ** nr, dtype=np.int64)
    for pos, q in enumerate(rest):
        base |= ((rest_idx >> (nr - 1 - pos)) & 1) << (n_qubits - 1 - q)

    def spread(local):
        out = np.zeros_like(local, dtype=np.int64)
        for pos, q in enumerate(support):
            out |= ((local >> (k - 1 - pos)) & 1) << (n_qubits - 1 - q)
        return out

    r_loc = spread(mat.row.astype(np.int64))
    c_loc = spread(mat.col.astype(np.int64))
    rows = (r_loc[:, None] | base[None, :]).ravel()
    cols = (c_loc[:, None] | base[None, :]).ravel()
    vals = np.repeat(mat.data, 2 ** nr)
    dim = 2 ** n_qubits
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


def apply_on_axes(psi: np.ndarray, mat: np.ndarray, axes) -> np.ndarray:
    """Apply `mat` to the tensor legs `axes` of `psi` (legs combined in order)."""
    axes = list(axes)
    dims = [psi.shape[a] for a in axes]
    dtot = int(np.prod(dims))
    if mat.shape != (dtot, dtot):
        raise DimensionMismatch(f"operator {mat.shape} vs legs {dims}")
    moved = np.moveaxis(psi, axes, list(range(len(axes))))
    shp = moved.shape
    out = (mat @ moved.reshape(dtot, -1)).reshape(shp)
    return np.moveaxis(out, list(range(len(axes))), axes)


def reduced_density_dense(psi: np.ndarray, keep) -> np.ndarray:
    """Reduced density matrix of a pure state tensor on legs `keep` (in given order)."""
    keep = list(keep)
    rest = [a for a in range(psi.ndim) if a not in keep]
    m = np.transpose(psi, keep + rest)
    dk = int(np.prod([psi.shape[a] for a in keep])) if keep else 1
    m = m.reshape(dk, -1)
    rho = m @ m.conj().T
    return rho / np.trace(rho).real


def partial_trace(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Partial trace of a density matrix over subsystems not in `keep`."""
    dims = list(dims)
    n = len(dims)
    keep = list(keep)
    t = rho.reshape(dims + dims)
    trace_out = [a for a in range(n) if a not in keep]
    # contract traced subsystems pairwise
    letters = "abcdefghijklmnopqrstuvwxyz"
    upper = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    ket = [letters[a] for a in range(n)]
    bra = [upper[a] for a in range(n)]
    for a in trace_out:
        bra[a] = ket[a]
    out = "".join(ket[a] for a in keep) + "".join(bra[a] for a in keep)
    r = np.einsum("".join(ket) + "".join(bra) + "->" + out, t)
    dk = int(np.prod([dims[a] for a in keep])) if keep else 1
    return r.reshape(dk, dk)


def schatten1(m: np.ndarray) -> float:
    """Trace norm (sum of singular values)."""
    m = np.asarray(m)
    if np.allclose(m, m.conj().T, atol=1e-13):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (m + m.conj().T))).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def random_unitary(d: int, rng) -> np.ndarray:
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def proportionality(a: np.ndarray, b: np.ndarray):
    """Return (c, residual) with a ~ c b in the least-squares sense."""
    nb = np.vdot(b, b)
    c = np.vdot(b, a) / nb
    return c, float(np.linalg.norm(a - c * b))
