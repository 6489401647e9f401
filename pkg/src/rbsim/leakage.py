"""Leakage randomized benchmarking on a qutrit.

Twirling a qutrit error over the 48-element extended group leaves a
block-diagonal map whose qubit block is depolarizing with parameter alpha and
whose leakage population row carries A55 (decay) and A51 (feed from the
identity component).  With ground-state preparation and measurement the
sequence fidelity is

    F(m) = alpha^m / 2 + 1/3 + A55^m / 6 + A51/(3 sqrt 2) * sum_{j<m} A55^j
         = C1 alpha^m + C2 A55^m + C3.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import clifford
from .engine import ExperimentPlan, _run_grid, default_m_grid, qutrit_gate_set, resolve_model
from .estimate import FitResult, fit
from .noise import LEAKAGE_KINDS, NoiseModel
from .ptm import PauliTransferMatrix, effect_vector, ground_state, state_vector
from .series import DecaySeries

OFF_BLOCK_TOL = 1e-8
_SQRT2 = math.sqrt(2.0)


class TwirlConventionError(RuntimeError):
    """The 48-element twirl did not come out block diagonal."""


@dataclass(frozen=True)
class LeakageFdmParams:
    alpha: float
    a55: float
    a51: float = 0.0

    @property
    def C1(self) -> float:
        return 0.5

    @property
    def D(self) -> float:
        if self.a55 == 1.0:
            return math.inf if self.a51 > 0 else (-math.inf if self.a51 < 0 else 0.0)
        return self.a51 / (3 * _SQRT2 * (1.0 - self.a55))

    @property
    def C2(self) -> float:
        return 1.0 / 6.0 - self.D

    @property
    def C3(self) -> float:
        return 1.0 / 3.0 + self.D


def _geometric_sum(q: float, m: np.ndarray) -> np.ndarray:
    """sum_{j=0}^{m-1} q^j, continuous through q = 1."""
    m = np.asarray(m, dtype=float)
    if q == 1.0:
        return m
    if q > 0:
        lq = math.log(q)
        return np.expm1(m * lq) / math.expm1(lq)
    return (1.0 - q ** m) / (1.0 - q)


def leakage_fdm(m, p: LeakageFdmParams) -> np.ndarray:
    """Ground-state fidelity after m twirled steps."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("sequence length must be non-negative")
    return (0.5 * p.alpha ** m + 1.0 / 3.0 + p.a55 ** m / 6.0
            + p.a51 / (3 * _SQRT2) * _geometric_sum(p.a55, m))


def twirl48(e) -> np.ndarray:
    """Average of U^T E U over the 48-element extended group."""
    ent = np.asarray(e.entries if isinstance(e, PauliTransferMatrix) else e, dtype=float)
    g = clifford.build_extended_qutrit_group().ptms
    return np.einsum("gji,jk,gkl->il", g, ent, g) / len(g)


def off_block_mass(t: np.ndarray) -> float:
    """Frobenius norm of everything the block structure says must vanish."""
    mask = np.ones((9, 9), dtype=bool)
    mask[:5, :5] = False
    mask[5:, 5:] = False
    inner = np.zeros((5, 5), dtype=bool)
    inner[1:4, 1:4] = ~np.eye(3, dtype=bool)
    inner[0, 1:] = True
    inner[1:4, 0] = True
    inner[1:4, 4] = True
    inner[4, 1:4] = True
    full = mask.copy()
    full[:5, :5] = inner
    return float(np.linalg.norm(t[full]))


def extract_block_params(e, check: bool = True) -> LeakageFdmParams:
    """alpha, A55 and A51 of the 48-element twirl of a trace-preserving qutrit error."""
    ent = np.asarray(e.entries if isinstance(e, PauliTransferMatrix) else e, dtype=float)
    if ent.shape != (9, 9):
        raise ValueError("expected a 9x9 qutrit PTM")
    if not np.allclose(ent[0], np.eye(9)[0], atol=1e-9):
        raise ValueError("error map is not trace preserving")
    t = twirl48(ent)
    if check and off_block_mass(t) > OFF_BLOCK_TOL:
        raise TwirlConventionError(f"twirl leaves off-block mass {off_block_mass(t):.3e}")
    return LeakageFdmParams(float(np.mean(np.diag(t)[1:4])), float(t[4, 4]), float(t[4, 0]))


def matrix_power_survival(e, m) -> np.ndarray:
    """e^T (twirl E)^m p with ground-state p and e, evaluated by explicit matrix powers."""
    t = twirl48(e)
    p = state_vector(ground_state(3))
    eff = effect_vector(ground_state(3))
    return np.array([eff @ np.linalg.matrix_power(t, int(k)) @ p for k in np.atleast_1d(m)])


def repeated_error_survival(e, n_max: int, level: int = 1) -> np.ndarray:
    """Population left in ``level`` after n = 0..n_max applications of one error map."""
    ent = np.asarray(e.entries if isinstance(e, PauliTransferMatrix) else e, dtype=float)
    rho = np.zeros((3, 3), dtype=complex)
    rho[level, level] = 1.0
    p = state_vector(rho)
    eff = effect_vector(rho)
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = eff @ p
        p = ent @ p
    return out


def run_leakage_rb(model, K: int = 10000, m_grid=None, seed: int = 0, shots: int | None = None,
                   threads: int = 1, prep=None, effect=None) -> DecaySeries:
    """Survival decay over random sequences from the 48-element group.

    ``prep``/``effect`` are optional qutrit Pauli vectors replacing the ground
    state, e.g. to model state-preparation errors inside the qubit subspace.
    """
    model = model if isinstance(model, NoiseModel) else resolve_model(model)
    if model.kind not in LEAKAGE_KINDS:
        raise ValueError(f"leakage RB needs a leakage noise model, got {model.kind!r}")
    plan = ExperimentPlan(protocol="srb", K=K, m_grid=tuple(m_grid or default_m_grid()),
                          shots=shots, noise={"kind": model.kind, "r": model.target_r,
                                              "seed": model.seed}, seed=seed, threads=threads)
    return _run_grid(model, qutrit_gate_set(), plan, prep=prep, effect=effect)


def fit_leakage(series: DecaySeries, true_r: float | None = None) -> FitResult:
    """Two-exponential fit; error rate read from the qubit-block parameter with d = 2."""
    return fit(series, "dual_exponential", d=2, true_r=true_r)


def predicted_params(model: NoiseModel) -> LeakageFdmParams:
    """Block parameters of the model's average error."""
    return extract_block_params(np.mean(model.table, axis=0))
