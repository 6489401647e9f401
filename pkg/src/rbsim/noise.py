"""Error-channel factories calibrated to a target average error rate.

Covers the Markovian models (gate-dependent, fixed and generator-dependent
random unitaries, amplitude damping, fast Gaussian fluctuations, slow drift)
and the two qutrit leakage models.  Every model hands the simulation engine a
batch of error PTMs per time step; see :meth:`NoiseModel.batch`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import clifford
from .ptm import (
    ChannelError,
    KrausSet,
    PauliTransferMatrix,
    error_rate,
    ptm_from_kraus,
    ptm_from_unitaries,
)

MARKOVIAN_KINDS = (
    "gate_dependent_unitary",
    "fixed_unitary",
    "generator_dependent",
    "amplitude_damping",
    "gaussian_fast",
    "slow_drift",
)
LEAKAGE_KINDS = ("leakage_fixed", "leakage_random")
KINDS = MARKOVIAN_KINDS + LEAKAGE_KINDS

CALIBRATION_RTOL = 1e-12
DEFAULT_DAMPING_STEPS = 2_000_000


@dataclass(frozen=True)
class GinibreDraw:
    s: np.ndarray
    t: np.ndarray

    @property
    def g(self) -> np.ndarray:
        return self.s + 1j * self.t


def ginibre(n: int, rng: np.random.Generator) -> GinibreDraw:
    return GinibreDraw(rng.standard_normal((n, n)), rng.standard_normal((n, n)))


def random_hermitian(n: int, rng: np.random.Generator, normalized: bool = True) -> np.ndarray:
    """H = G + G^dag from a Ginibre draw, optionally scaled to tr(H^2) = 1."""
    g = ginibre(n, rng).g
    h = g + g.conj().T
    if normalized:
        h = h / np.sqrt(np.trace(h @ h).real)
    return h


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class UnitaryErrorGenerator:
    """Family U(eps) = exp(-i eps H) for a fixed Hermitian H."""

    def __init__(self, hermitian: np.ndarray):
        self.hermitian = np.asarray(hermitian, dtype=complex)
        self.dim = self.hermitian.shape[0]
        self.eigvals, self.eigvecs = np.linalg.eigh(self.hermitian)

    def unitaries(self, eps) -> np.ndarray:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        phases = np.exp(-1j * eps[:, None] * self.eigvals[None, :])
        return np.einsum("ab,nb,cb->nac", self.eigvecs, phases, self.eigvecs.conj())

    def unitary(self, eps: float) -> np.ndarray:
        return self.unitaries(eps)[0]

    def ptms(self, eps) -> np.ndarray:
        return ptm_from_unitaries(self.unitaries(eps))

    def ptm(self, eps: float) -> PauliTransferMatrix:
        return PauliTransferMatrix(self.dim, self.ptms(eps)[0])

    def error_rate(self, eps) -> np.ndarray:
        """Average error rate of U(eps): (d^2 - |tr U|^2) / (d^2 + d)."""
        eps = np.asarray(eps, dtype=float)
        tr = np.exp(-1j * np.multiply.outer(eps, self.eigvals)).sum(axis=-1)
        d = self.dim
        return (d * d - np.abs(tr) ** 2) / (d * d + d)

    def epsilon_for(self, r) -> np.ndarray:
        """Smallest eps >= 0 reaching error rate ``r`` (vectorized)."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ChannelError("negative error rate")
        if self.dim == 2:
            gap = self.eigvals[-1] - self.eigvals[0]
            if np.any(r > 2 / 3):
                raise ChannelError("qubit unitary error rates cannot exceed 2/3")
            return np.arccos(np.clip(1.0 - 3.0 * r, -1.0, 1.0)) / gap
        return np.vectorize(lambda x: _calibrate(self.error_rate, x))(r)


def _calibrate(rate_fn: Callable[[float], float], target: float, hi: float = 1e-3,
               max_doublings: int = 80) -> float:
    """Bisection for rate_fn(eps) = target on the first rising branch from eps = 0."""
    if target == 0:
        return 0.0
    lo = 0.0
    for _ in range(max_doublings):
        if rate_fn(hi) >= target:
            break
        lo, hi = hi, 2 * hi
    else:
        raise ChannelError(f"error rate {target} unreachable by this generator")
    return brentq(lambda e: rate_fn(e) - target, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def random_unitary_generator(rng, dim: int = 2) -> UnitaryErrorGenerator:
    return UnitaryErrorGenerator(random_hermitian(dim, as_rng(rng)))


def random_unitary_error(r: float, seed=None, dim: int = 2) -> PauliTransferMatrix:
    """Random unitary error exp(-i eps H) with eps solved so its error rate is ``r``."""
    if not 0 <= r < 0.5:
        raise ChannelError(f"unitary error rate {r} outside [0, 1/2)")
    gen = random_unitary_generator(seed, dim)
    return gen.ptm(float(gen.epsilon_for(r)))


# --- random CPTP maps -------------------------------------------------------

def stinespring_kraus(u: np.ndarray, dim: int) -> list[np.ndarray]:
    """Carve d^2 Kraus operators from the first d columns of a d^3 unitary.

    Row ``dim * i + j`` of the leading columns becomes row ``j`` of K_i, i.e.
    consecutive d-row blocks.
    """
    cols = u[:, :dim]
    return [cols[dim * i: dim * (i + 1), :] for i in range(dim * dim)]


def random_cptp(r: float, seed=None, dim: int = 2, method: str = "generator") -> PauliTransferMatrix:
    """Random CPTP map of average error rate ``r``.

    ``method="interpolate"`` draws a generic channel from a random d^3
    unitary exp(-i H) (unnormalized H) and mixes it with the identity,
    ``(1 - lam) Id + lam Phi``; the error rate is linear in ``lam``.
    ``method="generator"`` instead shrinks the dilation itself,
    exp(-i eps H), solving for ``eps``.
    """
    if not 0 < r < 0.5:
        raise ChannelError(f"error rate {r} outside (0, 1/2)")
    rng = as_rng(seed)
    h = random_hermitian(dim**3, rng, normalized=False)
    gen = UnitaryErrorGenerator(h)
    if method == "interpolate":
        kraus = stinespring_kraus(gen.unitary(1.0), dim)
        phi = ptm_from_kraus(KrausSet(dim, tuple(kraus)))
        lam = r / error_rate(phi)
        if not 0 < lam <= 1:
            raise ChannelError("random channel too weak to reach the target error rate")
        ident = np.eye(dim * dim)
        return PauliTransferMatrix(dim, (1 - lam) * ident + lam * phi.entries)
    if method == "generator":
        def rate(eps):
            ks = stinespring_kraus(gen.unitary(eps), dim)
            return error_rate(ptm_from_kraus(KrausSet(dim, tuple(ks))))
        eps = _calibrate(rate, r)
        return ptm_from_kraus(KrausSet(dim, tuple(stinespring_kraus(gen.unitary(eps), dim))))
    raise ValueError(f"unknown random_cptp method {method!r}")


# --- amplitude damping ------------------------------------------------------

def amplitude_damping_kraus(gamma: float) -> KrausSet:
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    return KrausSet(2, (k0, k1))


def amplitude_damping_channel(r: float) -> PauliTransferMatrix:
    """Plain T1 channel whose average error rate is ``r``."""
    if not 0 <= r < 0.5:
        raise ChannelError(f"amplitude damping error rate {r} outside [0, 1/2)")
    # r = (1 - s)(3 + s) / 6 with s = sqrt(1 - gamma)
    s = np.sqrt(4.0 - 6.0 * r) - 1.0
    gamma = 1.0 - s * s
    return ptm_from_kraus(amplitude_damping_kraus(gamma))


def _damping_step(eta: float, axis: str | None, sign: float, n_steps: int) -> np.ndarray:
    c, s = np.cos(np.pi / (2 * n_steps)), sign * np.sin(np.pi / (2 * n_steps))
    e2 = eta * eta
    m = np.zeros((4, 4))
    m[0, 0] = 1.0
    m[3, 0] = 1 - e2
    if axis == "X":
        m[1, 1] = eta
        m[2, 2], m[2, 3] = eta * c, -eta * s
        m[3, 2], m[3, 3] = e2 * s, e2 * c
    elif axis == "Y":
        m[1, 1], m[1, 3] = eta * c, eta * s
        m[2, 2] = eta
        m[3, 1], m[3, 3] = -e2 * s, e2 * c
    else:
        m[1, 1] = m[2, 2] = eta
        m[3, 3] = e2
    return m


def damping_eta(r: float, n_steps: int) -> float:
    if not 0 <= r < 0.5:
        raise ChannelError(f"amplitude damping rate {r} outside the formula's domain")
    return float((np.sqrt(4 - 6 * r) - 1) ** (1.0 / n_steps))


def amplitude_damping_generators(r: float, n_steps: int = DEFAULT_DAMPING_STEPS) -> dict:
    """Noisy generator PTMs under continuous damping during a Rabi pulse.

    Each pi/2 pulse is the ``n_steps``-th power of a damped small rotation;
    pi pulses are the square of the matching pi/2 pulse and the idle slot
    damps for one gate time without rotating.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 <= r < 0.25:
        raise ChannelError(f"amplitude damping rate {r} outside [0, 1/4)")
    eta = damping_eta(r, n_steps)
    out = {}
    for name, (axis, theta) in clifford.GENERATOR_ANGLES.items():
        if axis is None:
            out[name] = np.linalg.matrix_power(_damping_step(eta, None, 1.0, n_steps), n_steps)
            continue
        half = np.linalg.matrix_power(_damping_step(eta, axis, np.sign(theta), n_steps), n_steps)
        out[name] = half @ half if abs(theta) > np.pi / 2 + 1e-9 else half
    return out


def generator_clifford_errors(noisy: dict) -> np.ndarray:
    """Clifford error maps E_C = noisy(C) ideal(C)^T from per-generator noisy PTMs."""
    group = clifford.build_group()
    out = []
    for el in group.elements:
        m = np.eye(4)
        for g in el.generators:
            m = noisy[g] @ m
        out.append(m @ group.ptms[el.index].T)
    return np.array(out)


def amplitude_damping_clifford_errors(r: float, n_steps: int = DEFAULT_DAMPING_STEPS) -> np.ndarray:
    return generator_clifford_errors(amplitude_damping_generators(r, n_steps))


def _mean_rate(ptms: np.ndarray) -> float:
    d2 = ptms.shape[-1]
    d = int(round(np.sqrt(d2)))
    return float(np.mean((d2 - np.trace(ptms, axis1=1, axis2=2)) / (d2 + d)))


def calibrated_damping_rate(r: float, n_steps: int = DEFAULT_DAMPING_STEPS) -> float:
    """Per-generator damping parameter whose Clifford-averaged error rate is ``r``."""
    return brentq(lambda x: _mean_rate(amplitude_damping_clifford_errors(x, n_steps)) - r,
                  0.0, 0.249, xtol=1e-16, rtol=1e-13)


# --- leakage -----------------------------------------------------------------

def leakage_error_rate(e) -> float:
    """Qubit-subspace error rate of a qutrit map.

    The qubit block (rows/columns P1..P4) is read through the qubit formula
    r = (4 - tr) / 6; for trace-preserving maps this is (1 - mean diag) / 2
    over the three embedded Paulis.
    """
    ent = e.entries if isinstance(e, PauliTransferMatrix) else np.asarray(e)
    return float((4.0 - np.trace(ent[..., :4, :4], axis1=-2, axis2=-1)) / 6.0) if ent.ndim == 2 else \
        (4.0 - np.trace(ent[..., :4, :4], axis1=-2, axis2=-1)) / 6.0


def leakage_unitary(r: float, seed=None) -> PauliTransferMatrix:
    return _leakage_unitary(r, as_rng(seed))[0]


def _leakage_unitary(r: float, rng):
    if not 0 <= r < 0.5:
        raise ChannelError(f"leakage error rate {r} outside [0, 1/2)")
    gen = UnitaryErrorGenerator(random_hermitian(3, rng))
    eps = _calibrate(lambda x: leakage_error_rate(gen.ptms(x)[0]), r)
    return gen.ptm(eps), gen, eps


# --- models ---------------------------------------------------------------------

@dataclass
class NoiseModel:
    """Tagged per-gate, per-time-step error generator.

    ``table`` holds cached per-element error PTMs where the model has them
    (24 Clifford errors, 48 extended-group errors, or one fixed error).
    Time-dependent models keep their base Hermitian in ``generator``.
    """

    kind: str
    target_r: float
    seed: int
    options: dict = field(default_factory=dict)
    table: np.ndarray | None = field(default=None, repr=False)
    generator: UnitaryErrorGenerator | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 3 if self.kind in LEAKAGE_KINDS else 2

    @property
    def group_order(self) -> int:
        return 48 if self.kind in LEAKAGE_KINDS else 24

    def true_error_rate(self) -> float:
        """Ground-truth average error rate over the gate set."""
        if self.kind in ("gaussian_fast", "slow_drift"):
            return self.target_r
        if self.kind in LEAKAGE_KINDS:
            return float(np.mean(leakage_error_rate(self.table)))
        return _mean_rate(self.table)

    def draws(self, rng: np.random.Generator, length: int) -> np.ndarray | None:
        """Per-sequence random draws consumed by time-dependent models."""
        if self.kind == "gaussian_fast":
            r = self.target_r
            return np.clip(rng.normal(r, r / 4, size=length), 0.0, None)
        return None

    def rate_for_sequence(self, k: int, n_sequences: int) -> float:
        """Slow-drift schedule: r/2 at the first sequence, 3r/2 at the last."""
        if n_sequences <= 1:
            return self.target_r
        return self.target_r * (0.5 + k / (n_sequences - 1))

    def batch(self, gates: np.ndarray, seq_idx: np.ndarray, n_sequences: int,
              draws: np.ndarray | None = None) -> Callable[[int], np.ndarray]:
        """Return ``at(j)`` giving error PTMs for step ``j`` of a batch.

        ``gates`` has shape (K, L) of group indices; the result of ``at(j)``
        is (K, d^2, d^2) or a single broadcastable (d^2, d^2) matrix.
        """
        kind = self.kind
        if kind in ("fixed_unitary", "leakage_fixed"):
            fixed = self.table[0]
            return lambda j: fixed
        if kind in ("gate_dependent_unitary", "generator_dependent", "amplitude_damping",
                    "leakage_random"):
            table = self.table
            return lambda j: table[gates[:, j]]
        if kind == "gaussian_fast":
            eps = self.generator.epsilon_for(draws)
            return lambda j: self.generator.ptms(eps[:, j])
        if kind == "slow_drift":
            rates = np.array([self.rate_for_sequence(int(k), n_sequences) for k in seq_idx])
            per_seq = self.generator.ptms(self.generator.epsilon_for(rates))
            return lambda j: per_seq
        raise ValueError(f"unknown noise kind {kind!r}")

    def error_for(self, gate_index: int, j: int = 0, k: int = 0, n_sequences: int = 1,
                  draw: float | None = None) -> PauliTransferMatrix:
        """Error PTM for one (gate, time step, sequence) draw."""
        if not 0 <= gate_index < self.group_order:
            raise IndexError(f"gate index {gate_index} out of range")
        if j < 0 or not 0 <= k < max(n_sequences, 1):
            raise IndexError("invalid time step or sequence index")
        if self.kind == "gaussian_fast":
            if draw is None:
                draw = float(self.draws(np.random.default_rng([self.seed, k, j]), 1)[0])
            return self.generator.ptm(float(self.generator.epsilon_for(draw)))
        draws = None
        at = self.batch(np.array([[gate_index]]), np.array([k]), n_sequences, draws)
        m = np.asarray(at(0))
        return PauliTransferMatrix(self.dim, m if m.ndim == 2 else m[0])


def build_model(kind: str, r: float, seed: int, **options) -> NoiseModel:
    """Construct and calibrate a noise model; deterministic in ``seed``."""
    if kind not in KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {KINDS}")
    if not 0 <= r < 0.25:
        raise ChannelError(f"target error rate {r} outside [0, 1/4)")
    rng = np.random.default_rng(seed)
    model = NoiseModel(kind, float(r), int(seed), dict(options))
    if kind == "gate_dependent_unitary":
        model.table = np.array([random_unitary_error(r, rng).entries for _ in range(24)])
    elif kind == "fixed_unitary":
        model.table = random_unitary_error(r, rng).entries[None]
    elif kind == "generator_dependent":
        per_gen = r / 1.875
        gptm = clifford.generator_ptms()
        noisy = {g: random_unitary_error(per_gen, rng).entries @ gptm[g] for g in clifford.GENERATORS}
        model.table = generator_clifford_errors(noisy)
    elif kind == "amplitude_damping":
        n_steps = int(options.get("n_steps", DEFAULT_DAMPING_STEPS))
        if options.get("calibrate", True):
            r_gen = calibrated_damping_rate(r, n_steps)
        else:
            r_gen = r
        model.options["generator_rate"] = r_gen
        model.table = amplitude_damping_clifford_errors(r_gen, n_steps)
    elif kind in ("gaussian_fast", "slow_drift"):
        model.generator = random_unitary_generator(rng)
    elif kind == "leakage_fixed":
        model.table = leakage_unitary(r, rng).entries[None]
    elif kind == "leakage_random":
        model.table = np.array([leakage_unitary(r, rng).entries for _ in range(48)])
    return model


def model_error_for(model: NoiseModel, gate_index: int, j: int = 0, k: int = 0,
                    n_sequences: int = 1, draw: float | None = None) -> PauliTransferMatrix:
    return model.error_for(gate_index, j, k, n_sequences, draw)
