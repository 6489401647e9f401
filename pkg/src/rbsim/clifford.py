"""Single-qubit Clifford group, its decompositions, and the 48-element qutrit extension.

Each Clifford is labelled by a Pauli / Hadamard / exchange triple and by a
list of physical generators in time order.  Group arithmetic runs on the
integer (signed permutation) PTMs, so products and inverses are exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .ptm import PAULIS, PauliTransferMatrix, ptm_from_unitaries

GENERATORS = ("I", "X90", "Xm90", "Y90", "Ym90", "X", "Y")
GENERATOR_ANGLES = {
    "I": (None, 0.0),
    "X90": ("X", np.pi / 2),
    "Xm90": ("X", -np.pi / 2),
    "Y90": ("Y", np.pi / 2),
    "Ym90": ("Y", -np.pi / 2),
    "X": ("X", np.pi),
    "Y": ("Y", np.pi),
}

# (pauli, hadamard, exchange) -> physical generators, first applied first.
# The identity is realised as one idle slot so the mean list length is 45/24.
DECOMPOSITIONS = (
    (("I", "I", "I"), ("I",)),
    (("I", "I", "S"), ("Y90", "X90")),
    (("I", "I", "S2"), ("Xm90", "Ym90")),
    (("X", "I", "I"), ("X",)),
    (("X", "I", "S"), ("Ym90", "Xm90")),
    (("X", "I", "S2"), ("X90", "Ym90")),
    (("Y", "I", "I"), ("Y",)),
    (("Y", "I", "S"), ("Ym90", "X90")),
    (("Y", "I", "S2"), ("X90", "Y90")),
    (("Z", "I", "I"), ("X", "Y")),
    (("Z", "I", "S"), ("Y90", "Xm90")),
    (("Z", "I", "S2"), ("Xm90", "Y90")),
    (("I", "H", "I"), ("Y90", "X")),
    (("I", "H", "S"), ("Xm90",)),
    (("I", "H", "S2"), ("X90", "Ym90", "Xm90")),
    (("X", "H", "I"), ("Ym90",)),
    (("X", "H", "S"), ("X90",)),
    (("X", "H", "S2"), ("X90", "Y90", "X90")),
    (("Y", "H", "I"), ("Ym90", "X")),
    (("Y", "H", "S"), ("X90", "Y")),
    (("Y", "H", "S2"), ("X90", "Ym90", "X90")),
    (("Z", "H", "I"), ("Y90",)),
    (("Z", "H", "S"), ("Xm90", "Y")),
    (("Z", "H", "S2"), ("X90", "Y90", "Xm90")),
)

_PAULI_PTM = {
    "I": np.diag([1, 1, 1, 1]),
    "X": np.diag([1, 1, -1, -1]),
    "Y": np.diag([1, -1, 1, -1]),
    "Z": np.diag([1, -1, -1, 1]),
}
_S = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 1, 0, 0], [0, 0, 1, 0]])
_EXCHANGE_PTM = {"I": np.eye(4, dtype=int), "S": _S, "S2": _S @ _S}
_HADAMARD_PTM = {
    "I": np.eye(4, dtype=int),
    "H": np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0], [0, 1, 0, 0]]),
}


def generator_unitary(name: str) -> np.ndarray:
    """SU(2) unitary exp(-i theta G / 2) of a physical generator."""
    axis, theta = GENERATOR_ANGLES[name]
    if axis is None:
        return np.eye(2, dtype=complex)
    g = PAULIS[1] if axis == "X" else PAULIS[2]
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * g


@lru_cache(maxsize=None)
def generator_ptms() -> dict:
    us = np.array([generator_unitary(g) for g in GENERATORS])
    return {g: m for g, m in zip(GENERATORS, ptm_from_unitaries(us))}


def phs_ptm(pauli: str, hadamard: str, exchange: str) -> np.ndarray:
    """Integer PTM of the P-H-S product (P applied first)."""
    return _EXCHANGE_PTM[exchange] @ _HADAMARD_PTM[hadamard] @ _PAULI_PTM[pauli]


def _time_ordered(mats: Sequence[np.ndarray], dim: int) -> np.ndarray:
    out = np.eye(dim, dtype=np.result_type(*mats) if mats else float)
    for m in mats:
        out = m @ out
    return out


@dataclass(frozen=True)
class CliffordElement:
    index: int
    phs: tuple
    generators: tuple
    ptm: PauliTransferMatrix = field(repr=False, compare=False)

    @property
    def in_ps_subgroup(self) -> bool:
        return self.phs[1] == "I"

    def unitary(self) -> np.ndarray:
        """SU(2) lift obtained by multiplying the generator unitaries."""
        return _time_ordered([generator_unitary(g) for g in self.generators], 2)


@dataclass(frozen=True, eq=False)
class CliffordGroup:
    elements: tuple
    product: np.ndarray  # product[a, b] = index of C_a C_b (b applied first)
    inverse: np.ndarray
    integer_ptms: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.elements)

    @property
    def ptms(self) -> np.ndarray:
        return self.integer_ptms.astype(float)

    @property
    def identity_index(self) -> int:
        return 0

    @property
    def ps_subgroup(self) -> tuple:
        return tuple(e.index for e in self.elements if e.in_ps_subgroup)

    def compose_sequence(self, seq: Sequence[int]) -> int:
        """Index of the product of ``seq`` applied in time order."""
        acc = 0
        for g in seq:
            acc = int(self.product[g, acc])
        return acc

    def to_json(self) -> str:
        return json.dumps({
            "elements": [
                {"index": e.index, "phs": list(e.phs), "generators": list(e.generators),
                 "ptm": self.integer_ptms[e.index].tolist()}
                for e in self.elements
            ],
            "product": self.product.tolist(),
            "inverse": self.inverse.tolist(),
        })


def _key(m: np.ndarray) -> bytes:
    return np.ascontiguousarray(m, dtype=np.int64).tobytes()


@lru_cache(maxsize=None)
def build_group() -> CliffordGroup:
    gptm = generator_ptms()
    mats = []
    elements = []
    for idx, (phs, gens) in enumerate(DECOMPOSITIONS):
        exact = phs_ptm(*phs)
        from_gens = _time_ordered([gptm[g] for g in gens], 4)
        if not np.allclose(exact, from_gens, atol=1e-12):
            raise AssertionError(f"Table entry {phs} disagrees with its generator list")
        mats.append(exact)
        elements.append(CliffordElement(idx, phs, gens, PauliTransferMatrix(2, exact)))
    mats = np.array(mats, dtype=np.int64)
    lookup = {_key(m): i for i, m in enumerate(mats)}
    if len(lookup) != 24:
        raise AssertionError("Clifford PTMs are not distinct")
    n = len(mats)
    product = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            product[a, b] = lookup[_key(mats[a] @ mats[b])]
    inverse = np.array([int(np.flatnonzero(product[a] == 0)[0]) for a in range(n)])
    for arr in (mats, product, inverse):
        arr.setflags(write=False)
    return CliffordGroup(tuple(elements), product, inverse, mats)


def invert_sequence(seq: Sequence[int], group: CliffordGroup | None = None) -> int:
    """Index of the Clifford that undoes ``seq`` (applied in time order)."""
    group = group or build_group()
    if len(seq) == 0:
        raise ValueError("cannot invert an empty sequence")
    seq = np.asarray(seq)
    if seq.min() < 0 or seq.max() >= len(group):
        raise IndexError("Clifford index out of range")
    return int(group.inverse[group.compose_sequence(seq)])


def twirl(e, group_ptms) -> PauliTransferMatrix:
    """Group average (1/|G|) sum_U U^T E U over a list/array of PTMs."""
    mats = np.asarray([np.asarray(g, dtype=float) for g in group_ptms])
    if mats.size == 0:
        raise ValueError("cannot twirl over an empty group")
    ent = e.entries if isinstance(e, PauliTransferMatrix) else np.asarray(e, dtype=float)
    if mats.shape[1:] != ent.shape:
        raise ValueError("group element and channel dimensions differ")
    avg = np.einsum("gji,jk,gkl->il", mats, ent, mats) / len(mats)
    return PauliTransferMatrix.from_matrix(avg)


def random_sequence(rng: np.random.Generator, m: int, order: int = 24) -> np.ndarray:
    return rng.integers(0, order, size=m)


# --- qutrit extension --------------------------------------------------------

def embed_qutrit(u2: np.ndarray, third_phase: complex = 1.0) -> np.ndarray:
    """U (+) phase: qubit unitary in the upper block, ``third_phase`` on level 2."""
    out = np.zeros((3, 3), dtype=complex)
    out[:2, :2] = u2
    out[2, 2] = third_phase
    return out


@dataclass(frozen=True, eq=False)
class ExtendedQutritGroup:
    """The 48 maps (U (+) 1)(+/- U_L): element ``c + 24*s`` carries sign (-1)**s."""

    unitaries: np.ndarray
    ptms: np.ndarray
    product: np.ndarray
    inverse: np.ndarray

    def __len__(self):
        return len(self.ptms)

    def clifford_index(self, idx) -> np.ndarray:
        return np.asarray(idx) % 24

    def compose_sequence(self, seq: Sequence[int]) -> int:
        acc = 0
        for g in seq:
            acc = int(self.product[g, acc])
        return acc

    def invert_sequence(self, seq: Sequence[int]) -> int:
        return int(self.inverse[self.compose_sequence(seq)])


def _lift_signs(lifts: np.ndarray, product: np.ndarray) -> np.ndarray:
    """sign[a, b] with lift_a @ lift_b = sign * lift_(ab), exactly +/-1."""
    n = len(lifts)
    signs = np.empty((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(n):
            ratio = lifts[a] @ lifts[b]
            target = lifts[product[a, b]]
            if np.allclose(ratio, target, atol=1e-12):
                signs[a, b] = 1
            elif np.allclose(ratio, -target, atol=1e-12):
                signs[a, b] = -1
            else:
                raise AssertionError("Clifford lifts are not closed up to sign")
    return signs


@lru_cache(maxsize=None)
def build_extended_qutrit_group() -> ExtendedQutritGroup:
    group = build_group()
    lifts = np.array([e.unitary() for e in group.elements])
    signs = _lift_signs(lifts, group.product)
    unitaries = np.array(
        [embed_qutrit(u, 1.0) for u in lifts] + [embed_qutrit(u, -1.0) for u in lifts]
    )
    ptms = ptm_from_unitaries(unitaries)
    product = np.empty((48, 48), dtype=np.int64)
    for x in range(48):
        a, sa = x % 24, 1 - 2 * (x // 24)
        for y in range(48):
            b, sb = y % 24, 1 - 2 * (y // 24)
            # (L_a (+) sa)(L_b (+) sb) = sign*L_ab (+) sa*sb ~ L_ab (+) sign*sa*sb
            s = signs[a, b] * sa * sb
            product[x, y] = group.product[a, b] + (0 if s == 1 else 24)
    inverse = np.array([int(np.flatnonzero(product[x] == 0)[0]) for x in range(48)])
    for arr in (unitaries, ptms, product, inverse):
        arr.setflags(write=False)
    return ExtendedQutritGroup(unitaries, ptms, product, inverse)


def embedded_qutrit_cliffords() -> np.ndarray:
    """PTMs of the 24 Cliffords embedded as U (+) 1 only (not a group)."""
    return build_extended_qutrit_group().ptms[:24]
