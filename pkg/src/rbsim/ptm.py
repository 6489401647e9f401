"""Channel algebra in the Pauli transfer matrix (PTM) representation.

Basis conventions
-----------------
Qubits (d=2) use the ordered basis (I, X, Y, Z); qutrits (d=3) use the nine
operators P1..P9 (identity, the three qubit Paulis padded with a zero third
level, the population-inversion operator diag(1, 1, -2), and the four
qubit/third-level coherences).  Every basis operator is stored divided by
sqrt(d) so that the set is orthonormal under the Hilbert-Schmidt inner
product, and a channel's PTM is simply ``R[i, j] = tr(B_i Phi(B_j))``.

State and effect vectors follow the unnormalized Pauli convention: a density
matrix is ``rho = sum_i p_i P_i / d`` (so ``p_0 = 1``) and a measurement effect
is ``E = sum_i e_i P_i``.  The survival probability of ``rho`` through a
channel ``R`` is then ``e @ R @ p``.

Choi matrices use ``J = sum_ab |a><b| (x) Phi(|a><b|)`` with the *input*
factor first.  Reshaping ``J`` to ``J[a, k, b, l]`` gives ``Phi(|a><b|)[k, l]``;
this is the reshuffled form of the column-stacking superoperator.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

CPTP_TOL = 1e-8
UNITARY_TOL = 1e-10
KRAUS_TOL = 1e-10

_SIGMA_I = np.eye(2, dtype=complex)
_SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (_SIGMA_I, _SIGMA_X, _SIGMA_Y, _SIGMA_Z)


class ChannelError(ValueError):
    """Raised when an operator or channel fails validation."""


def _pad3(m: np.ndarray) -> np.ndarray:
    out = np.zeros((3, 3), dtype=complex)
    out[:2, :2] = m
    return out


def _qutrit_operators() -> np.ndarray:
    """The nine unnormalized qutrit operators P1..P9 (each has tr(P^2) = 3)."""
    s = np.sqrt(1.5)
    ops = [np.eye(3, dtype=complex)]
    ops += [s * _pad3(p) for p in (_SIGMA_X, _SIGMA_Y, _SIGMA_Z)]
    ops.append(np.sqrt(0.5) * np.diag([1.0, 1.0, -2.0]).astype(complex))
    e13 = np.zeros((3, 3), dtype=complex)
    e13[0, 2] = 1
    e23 = np.zeros((3, 3), dtype=complex)
    e23[1, 2] = 1
    ops.append(s * (e13 + e13.T))
    ops.append(s * (-1j * e13 + 1j * e13.T))
    ops.append(s * (e23 + e23.T))
    ops.append(s * (-1j * e23 + 1j * e23.T))
    return np.array(ops)


_BASES = {
    2: np.array(PAULIS) / np.sqrt(2),
    3: _qutrit_operators() / np.sqrt(3),
}
for _b in _BASES.values():
    _b.setflags(write=False)


def basis(dim: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis of shape (dim**2, dim, dim)."""
    try:
        return _BASES[dim]
    except KeyError:
        raise ChannelError(f"unsupported dimension {dim}; expected 2 or 3") from None


def _dim_from_size(n: int) -> int:
    d = int(round(np.sqrt(n)))
    if d * d != n or d not in _BASES:
        raise ChannelError(f"matrix of size {n} is not a qubit or qutrit PTM")
    return d


@dataclass(frozen=True, eq=False)
class PauliTransferMatrix:
    """Real d^2 x d^2 matrix of a channel; index 0 is the identity element."""

    dim: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        basis(self.dim)
        arr = np.array(self.entries, dtype=float)
        n = self.dim**2
        if arr.shape != (n, n):
            raise ChannelError(f"expected shape {(n, n)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ChannelError("PTM entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_matrix(cls, m) -> "PauliTransferMatrix":
        m = np.asarray(m, dtype=float)
        return cls(_dim_from_size(m.shape[0]), m)

    def __matmul__(self, other: "PauliTransferMatrix") -> "PauliTransferMatrix":
        return compose(self, other)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def allclose(self, other, atol: float = 1e-12) -> bool:
        other = other.entries if isinstance(other, PauliTransferMatrix) else np.asarray(other)
        return self.entries.shape == other.shape and np.allclose(self.entries, other, rtol=0, atol=atol)

    def is_trace_preserving(self, atol: float = 1e-12) -> bool:
        row = np.zeros(self.dim**2)
        row[0] = 1.0
        return bool(np.allclose(self.entries[0], row, rtol=0, atol=atol))

    def choi(self) -> np.ndarray:
        return choi_matrix(self)

    def is_cptp(self, tol: float = CPTP_TOL) -> bool:
        if not self.is_trace_preserving(atol=tol):
            return False
        return bool(np.linalg.eigvalsh(self.choi()).min() >= -tol)

    def transpose(self) -> "PauliTransferMatrix":
        return PauliTransferMatrix(self.dim, self.entries.T)

    # serialization -------------------------------------------------------

    def to_json(self) -> str:
        # repr(float) round-trips exactly for finite doubles
        return json.dumps({"dim": self.dim, "entries": self.entries.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PauliTransferMatrix":
        obj = json.loads(text)
        return cls(int(obj["dim"]), np.array(obj["entries"], dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for row in self.entries:
            writer.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PauliTransferMatrix":
        rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
        return cls.from_matrix(np.array(rows))


@dataclass(frozen=True, eq=False)
class KrausSet:
    dim: int
    operators: tuple

    def __post_init__(self):
        ops = tuple(np.array(k, dtype=complex) for k in self.operators)
        if not ops:
            raise ChannelError("empty Kraus set")
        for k in ops:
            if k.shape != (self.dim, self.dim):
                raise ChannelError(f"Kraus operator shape {k.shape} != {(self.dim, self.dim)}")
            k.setflags(write=False)
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, np.eye(self.dim), rtol=0, atol=KRAUS_TOL):
            raise ChannelError("Kraus operators are not complete (sum K^dag K != I)")
        object.__setattr__(self, "operators", ops)


def identity(dim: int) -> PauliTransferMatrix:
    return PauliTransferMatrix(dim, np.eye(dim**2))


def ptm_from_unitary(u) -> PauliTransferMatrix:
    """PTM of the unitary channel rho -> U rho U^dag."""
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    if u.shape != (d, d) or not np.allclose(u.conj().T @ u, np.eye(d), rtol=0, atol=UNITARY_TOL):
        raise ChannelError("input is not a unitary matrix")
    return PauliTransferMatrix(d, ptm_from_unitaries(u[None])[0])


def ptm_from_unitaries(us: np.ndarray) -> np.ndarray:
    """Batched PTMs (n, d^2, d^2) of unitaries (n, d, d); no validation."""
    us = np.asarray(us, dtype=complex)
    b = basis(us.shape[-1])
    conj = np.einsum("nab,jbc,ndc->njad", us, b, us.conj())
    return np.einsum("iba,njab->nij", b, conj).real


def ptm_from_kraus(ks) -> PauliTransferMatrix:
    """PTM of a Kraus set; accepts a :class:`KrausSet` or a list of matrices."""
    if not isinstance(ks, KrausSet):
        ops = [np.asarray(k, dtype=complex) for k in ks]
        ks = KrausSet(ops[0].shape[0], tuple(ops))
    b = basis(ks.dim)
    ops = np.array(ks.operators)
    conj = np.einsum("kab,jbc,kdc->jad", ops, b, ops.conj())
    r = np.einsum("iba,jab->ij", b, conj).real
    return PauliTransferMatrix(ks.dim, r)


def compose(a: PauliTransferMatrix, b: PauliTransferMatrix) -> PauliTransferMatrix:
    """Channel ``a`` after ``b`` (matrix product a @ b)."""
    if a.dim != b.dim:
        raise ChannelError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return PauliTransferMatrix(a.dim, a.entries @ b.entries)


def compose_all(channels: Sequence[PauliTransferMatrix]) -> PauliTransferMatrix:
    """Compose channels listed in time order (first element applied first)."""
    if not channels:
        raise ChannelError("nothing to compose")
    out = channels[0]
    for ch in channels[1:]:
        out = compose(ch, out)
    return out


def average_gate_fidelity(e: PauliTransferMatrix) -> float:
    if not e.is_trace_preserving(atol=1e-9):
        raise ChannelError("average gate fidelity requires a trace-preserving PTM")
    d = e.dim
    return float((np.trace(e.entries) + d) / (d * d + d))


def error_rate(e: PauliTransferMatrix) -> float:
    """Average error rate r = 1 - f_g = (d^2 - tr E) / (d^2 + d)."""
    d = e.dim
    if not e.is_trace_preserving(atol=1e-9):
        raise ChannelError("error rate requires a trace-preserving PTM")
    return float((d * d - np.trace(e.entries)) / (d * d + d))


def depolarizing(dim: int, alpha: float) -> PauliTransferMatrix:
    lo = -1.0 / (dim * dim - 1)
    if not (lo - 1e-15 <= alpha <= 1.0 + 1e-15):
        raise ChannelError(f"depolarizing parameter {alpha} outside [{lo}, 1]")
    diag = np.full(dim * dim, float(alpha))
    diag[0] = 1.0
    return PauliTransferMatrix(dim, np.diag(diag))


def alpha_from_error_rate(r: float, dim: int = 2) -> float:
    return 1.0 - r * dim / (dim - 1)


def error_rate_from_alpha(alpha: float, dim: int = 2) -> float:
    return (1.0 - alpha) * (dim - 1) / dim


def state_vector(rho) -> np.ndarray:
    """Unnormalized Pauli coefficients p_i = tr(P_i rho), with p_0 = 1 for states."""
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    return np.sqrt(d) * np.einsum("iab,ba->i", basis(d), rho).real


def effect_vector(effect) -> np.ndarray:
    """Coefficients e_i with E = sum_i e_i P_i, so survival = e @ R @ p."""
    effect = np.asarray(effect, dtype=complex)
    d = effect.shape[0]
    return np.einsum("iab,ba->i", basis(d), effect).real / np.sqrt(d)


def ground_state(dim: int) -> np.ndarray:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


def apply_to_state(e: PauliTransferMatrix, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (e.dim**2,):
        raise ChannelError(f"state vector of length {p.shape} does not match dim {e.dim}")
    return e.entries @ p


def survival_probability(e: PauliTransferMatrix, p, effect) -> float:
    return float(np.asarray(effect, dtype=float) @ apply_to_state(e, p))


def density_from_vector(p, dim: int) -> np.ndarray:
    b = basis(dim)
    return np.einsum("i,iab->ab", np.asarray(p, dtype=float) / np.sqrt(dim), b)


def choi_matrix(e: PauliTransferMatrix) -> np.ndarray:
    d = e.dim
    b = basis(d)
    j = np.einsum("ij,ikl,jba->akbl", e.entries, b, b)
    return j.reshape(d * d, d * d)


def ptm_from_choi(j) -> PauliTransferMatrix:
    j = np.asarray(j, dtype=complex)
    d = _dim_from_size(j.shape[0])
    b = basis(d)
    j4 = j.reshape(d, d, d, d)
    # Phi(B_j) = sum_ab B_j[a, b] J[a, :, b, :]
    r = np.einsum("ilk,jab,akbl->ij", b, b, j4).real
    return PauliTransferMatrix(d, r)


def kraus_from_ptm(e: PauliTransferMatrix, tol: float = 1e-12) -> list[np.ndarray]:
    """Canonical Kraus operators from the Choi eigendecomposition."""
    d = e.dim
    w, v = np.linalg.eigh(choi_matrix(e))
    if w.min() < -CPTP_TOL:
        raise ChannelError("channel is not completely positive")
    out = []
    for lam, vec in zip(w, v.T):
        if lam > tol:
            # vec[(a, k)] -> K[k, a]
            out.append(np.sqrt(lam) * vec.reshape(d, d).T)
    return out


def as_ptm(x, dim: int | None = None) -> PauliTransferMatrix:
    if isinstance(x, PauliTransferMatrix):
        return x
    m = np.asarray(x, dtype=float)
    return PauliTransferMatrix(dim or _dim_from_size(m.shape[0]), m)


def mean_channel(channels: Iterable[PauliTransferMatrix]) -> PauliTransferMatrix:
    chans = list(channels)
    if not chans:
        raise ChannelError("empty channel list")
    return PauliTransferMatrix(chans[0].dim, np.mean([c.entries for c in chans], axis=0))
