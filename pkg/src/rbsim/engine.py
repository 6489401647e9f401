"""Standard and interleaved randomized-benchmarking drivers.

Each sequence of length m is m uniformly drawn group elements followed by
the element that inverts their product.  Every gate, the inversion gate
included, is followed by its error channel, so a sequence acts as

    E_{m+1} U_{m+1} ... E_1 U_1

on the Pauli vector of the ground state.  All K sequences of one length are
propagated together as a (K, d^2) array of state vectors.

Sequence k at length m is drawn from ``numpy.random.default_rng([seed, m, k])``
(with an extra stream tag for the interleaved run), so a run is reproducible
regardless of thread count or evaluation order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, clifford
from .estimate import FitResult, fit
from .noise import NoiseModel, build_model
from .ptm import PauliTransferMatrix, effect_vector, ground_state, state_vector
from .series import DecaySeries

DEFAULT_K = 10000
DEFAULT_M_MAX = 4096
PROTOCOLS = ("srb", "irb")


def default_m_grid(m_max: int = DEFAULT_M_MAX) -> tuple:
    """Powers of two 1, 2, 4, ..., up to and including ``m_max`` if it is one."""
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    return tuple(2 ** i for i in range(int(math.log2(m_max)) + 1))


@dataclass
class ExperimentPlan:
    protocol: str = "srb"
    K: int = DEFAULT_K
    m_grid: tuple = field(default_factory=default_m_grid)
    shots: int | None = None
    noise: dict = field(default_factory=lambda: {"kind": "fixed_unitary", "r": 1e-3, "seed": 0})
    interleaved_gate: int | None = None
    interleaved_noise: dict | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.m_grid = tuple(int(m) for m in self.m_grid)
        self.validate()

    def validate(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if int(self.K) < 1:
            raise ValueError("K must be >= 1")
        if not self.m_grid or any(m < 1 for m in self.m_grid):
            raise ValueError("m_grid must hold positive lengths")
        if any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ValueError("m_grid must be strictly increasing")
        if self.shots is not None and int(self.shots) < 1:
            raise ValueError("shots must be a positive count or None")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.protocol == "irb":
            if self.interleaved_gate is None or not 0 <= self.interleaved_gate < 24:
                raise ValueError("irb needs an interleaved Clifford index in [0, 24)")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["m_grid"] = list(self.m_grid)
        return out


@dataclass(frozen=True)
class GateSet:
    """What the simulator needs from a group: PTMs, product table and inverses."""

    ptms: np.ndarray
    product: np.ndarray
    inverse: np.ndarray
    dim: int

    @property
    def order(self) -> int:
        return len(self.ptms)


def qubit_gate_set() -> GateSet:
    g = clifford.build_group()
    return GateSet(g.ptms, g.product, g.inverse, 2)


def qutrit_gate_set() -> GateSet:
    g = clifford.build_extended_qutrit_group()
    return GateSet(np.asarray(g.ptms), g.product, g.inverse, 3)


def resolve_model(noise) -> NoiseModel:
    if isinstance(noise, NoiseModel):
        return noise
    spec = dict(noise)
    return build_model(spec.pop("kind"), spec.pop("r"), spec.pop("seed", 0),
                       **spec.pop("options", {}), **spec)


def _inversion(gates: np.ndarray, product: np.ndarray, inverse: np.ndarray,
               interleave: int | None = None) -> np.ndarray:
    acc = np.zeros(len(gates), dtype=np.int64)
    for j in range(gates.shape[1]):
        acc = product[gates[:, j], acc]
        if interleave is not None:
            acc = product[interleave, acc]
    return inverse[acc]


def _apply(mats: np.ndarray, p: np.ndarray) -> np.ndarray:
    if mats.ndim == 2:
        return p @ mats.T
    return np.einsum("kab,kb->ka", mats, p)


def simulate_length(model: NoiseModel, gates_set: GateSet, m: int, K: int, seed: int,
                    shots: int | None = None, interleave: np.ndarray | None = None,
                    interleave_index: int | None = None, stream: int = 0,
                    prep=None, effect=None) -> np.ndarray:
    """Survival probabilities of K random sequences of length ``m``.

    ``interleave`` is the (noisy) PTM inserted after every random gate and
    ``interleave_index`` its group index, used when computing the inversion.
    ``prep``/``effect`` override the ground-state Pauli vectors.
    """
    d2 = gates_set.dim ** 2
    rngs = [np.random.default_rng([seed, m, k, stream]) for k in range(K)]
    gates = np.empty((K, m + 1), dtype=np.int64)
    for k, rng in enumerate(rngs):
        gates[k, :m] = rng.integers(0, gates_set.order, size=m)
    gates[:, m] = _inversion(gates[:, :m], gates_set.product, gates_set.inverse, interleave_index)

    draws = None
    if model.kind == "gaussian_fast":
        draws = np.array([model.draws(rng, m + 1) for rng in rngs])
    at = model.batch(gates, np.arange(K), K, draws)

    # for gate-indexed and fixed errors the noisy gate E_g U_g can be tabulated once
    table_kinds = {"fixed_unitary", "leakage_fixed", "gate_dependent_unitary",
                   "generator_dependent", "amplitude_damping", "leakage_random"}
    noisy = None
    if model.kind in table_kinds:
        tab = model.table
        noisy = (tab[0] @ gates_set.ptms) if len(tab) == 1 else tab @ gates_set.ptms

    p0 = state_vector(ground_state(gates_set.dim)) if prep is None else np.asarray(prep, float)
    e = effect_vector(ground_state(gates_set.dim)) if effect is None else np.asarray(effect, float)
    p = np.broadcast_to(p0, (K, d2)).copy()
    for j in range(m + 1):
        g = gates[:, j]
        if noisy is not None:
            p = _apply(noisy[g], p)
        else:
            p = _apply(at(j), _apply(gates_set.ptms[g], p))
        if interleave is not None and j < m:
            p = _apply(interleave, p)
    f = p @ e
    if shots is not None:
        f = np.array([rng.binomial(int(shots), min(max(x, 0.0), 1.0)) / shots
                      for rng, x in zip(rngs, f)])
    return f


def _run_grid(model, gates_set, plan: ExperimentPlan, stream=0, interleave=None,
              interleave_index=None, prep=None, effect=None) -> DecaySeries:
    def cell(m):
        return simulate_length(model, gates_set, m, plan.K, plan.seed, plan.shots, interleave,
                               interleave_index, stream, prep, effect)

    if plan.threads > 1:
        with ThreadPoolExecutor(plan.threads) as pool:
            samples = list(pool.map(cell, plan.m_grid))
    else:
        samples = [cell(m) for m in plan.m_grid]
    meta = {"plan": plan.to_dict(), "version": __version__, "stream": stream,
            "true_r": model.true_error_rate()}
    return DecaySeries.from_samples(plan.m_grid, samples, meta)


def run_srb(plan: ExperimentPlan, model: NoiseModel | None = None) -> DecaySeries:
    """Standard RB over the qubit Clifford group."""
    model = model or resolve_model(plan.noise)
    if model.dim != 2:
        raise ValueError("run_srb needs a qubit noise model; use leakage.run_leakage_rb")
    return _run_grid(model, qubit_gate_set(), plan)


def interleaved_channel(plan: ExperimentPlan) -> PauliTransferMatrix:
    """Error channel E_int on the interleaved gate (identity if none is given)."""
    if plan.interleaved_noise is None:
        return PauliTransferMatrix(2, np.eye(4))
    m = resolve_model(plan.interleaved_noise)
    return PauliTransferMatrix(2, m.table[0] if m.table is not None and len(m.table) == 1
                               else m.error_for(plan.interleaved_gate).entries)


def run_irb(plan: ExperimentPlan, model: NoiseModel | None = None,
            interleaved_error: PauliTransferMatrix | None = None):
    """Reference and interleaved decays; returns (reference, interleaved) series."""
    if plan.interleaved_gate is None:
        raise ValueError("run_irb needs plan.interleaved_gate")
    model = model or resolve_model(plan.noise)
    gs = qubit_gate_set()
    e_int = interleaved_error if interleaved_error is not None else interleaved_channel(plan)
    u_int = gs.ptms[plan.interleaved_gate]
    ref = _run_grid(model, gs, plan, stream=0)
    inter = _run_grid(model, gs, plan, stream=1, interleave=u_int @ np.asarray(e_int.entries),
                      interleave_index=plan.interleaved_gate)
    return ref, inter


def irb_estimate(alpha_ref: float, alpha_interleaved: float, d: int = 2) -> float:
    """(1 - alpha_int / alpha)(d - 1)/d; negative values are returned as is."""
    if alpha_ref == 0:
        raise ValueError("reference depolarizing parameter is zero")
    return (1.0 - alpha_interleaved / alpha_ref) * (d - 1) / d


@dataclass
class IrbResult:
    reference: FitResult
    interleaved: FitResult
    r_int_hat: float
    r_int_stderr: float
    r_int_true: float | None
    reliable: bool
    reasons: tuple

    @property
    def mu(self) -> float | None:
        if self.r_int_true is None or not self.r_int_hat > 0:
            return None
        return math.log10(self.r_int_hat / self.r_int_true)

    def to_dict(self) -> dict:
        return {"r_int_hat": self.r_int_hat, "r_int_stderr": self.r_int_stderr,
                "r_int_true": self.r_int_true, "mu": self.mu, "reliable": self.reliable,
                "reasons": list(self.reasons), "r_hat_reference": self.reference.r_hat}


def analyze_irb(reference: DecaySeries, interleaved: DecaySeries, r_int_true: float | None = None,
                d: int = 2) -> IrbResult:
    """Fit both decays and form the interleaved estimate with a reliability verdict.

    The estimate is flagged unreliable when it is not positive, when its 90%
    interval reaches zero, or when it is below a tenth of the reference error
    rate (the regime where the product-twirl approximation breaks down).
    """
    fr, fi = fit(reference, d=d), fit(interleaved, d=d)
    a, ai = fr.alpha, fi.alpha
    est = irb_estimate(a, ai, d)
    ia, ii = fr.names.index("alpha"), fi.names.index("alpha")
    var_ratio = (ai / a) ** 2 * (fr.covariance[ia, ia] / a ** 2 + fi.covariance[ii, ii] / ai ** 2)
    se = math.sqrt(max(var_ratio, 0.0)) * (d - 1) / d
    reasons = []
    if not est > 0:
        reasons.append("non_positive_estimate")
    elif est - 1.645 * se <= 0:
        reasons.append("interval_includes_zero")
    if fr.r_hat is not None and est < 0.1 * fr.r_hat:
        reasons.append("below_tenth_of_reference")
    if not (fr.converged and fi.converged):
        reasons.append("fit_not_converged")
    return IrbResult(fr, fi, est, se, r_int_true, not reasons, tuple(reasons))


def predicted_survival(error: PauliTransferMatrix, m, gates_set: GateSet | None = None) -> np.ndarray:
    """Sequence-averaged survival for a gate-independent error E: e^T E (twirl E)^m p."""
    gates_set = gates_set or qubit_gate_set()
    ent = np.asarray(error.entries if isinstance(error, PauliTransferMatrix) else error, float)
    tw = np.einsum("gji,jk,gkl->il", gates_set.ptms, ent, gates_set.ptms) / gates_set.order
    p = state_vector(ground_state(gates_set.dim))
    e = effect_vector(ground_state(gates_set.dim))
    return np.array([e @ ent @ np.linalg.matrix_power(tw, int(k)) @ p for k in np.atleast_1d(m)])


def repeated_srb(noise: dict, K: int, m_grid, n_repeats: int, seed: int, shots: int | None = None,
                 threads: int = 1) -> dict:
    """Run ``n_repeats`` independent SRB experiments and summarize mu and C.

    Repeat i draws its noise model with seed ``noise["seed"] + i`` and its
    sequences with seed ``seed + i``.
    """
    from .estimate import summarize

    mus, cs, runs = [], [], []
    base = dict(noise)
    for i in range(n_repeats):
        spec = {**base, "seed": int(base.get("seed", 0)) + i}
        model = resolve_model(spec)
        plan = ExperimentPlan("srb", K, tuple(m_grid), shots, spec, seed=seed + i, threads=threads)
        res = fit(run_srb(plan, model), true_r=model.true_error_rate())
        mus.append(res.mu)
        cs.append(res.C)
        runs.append({"noise_seed": spec["seed"], "seed": seed + i, "r_true": res.true_r,
                     "r_hat": res.r_hat, "mu": res.mu, "C": res.C, "converged": res.converged})
    return {**summarize(mus, cs), "runs": runs}
