"""1/f phase noise from summed random telegraph signals, and pulse-level RB under it.

Units: time is measured in simulation steps of length ``dt`` (default 1) and
frequencies in cycles per unit time.  The qubit Hamiltonian is

    H(t) = Omega_X(t) X / 2 + Omega_Y(t) Y / 2 + xi(t) Z

and one step evolves by exp(-i 2 pi H dt).  A pi/2 generator is a Gaussian
pulse sampled on ``PULSE_STEPS`` points; pi rotations are two pi/2 pulses and
the idle slot lasts one pulse length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import periodogram

from . import clifford
from .estimate import FitResult, fit_arrays
from .series import DecaySeries

N_SIGNALS = 50
PULSE_STEPS = 20
RAMSEY_ENSEMBLE = 2000
FIT_WINDOW = 2.5  # Ramsey fits use t <= FIT_WINDOW * (1/e crossing time)

_SLOTS = {"I": 1, "X90": 1, "Xm90": 1, "Y90": 1, "Ym90": 1, "X": 2, "Y": 2}


# --- telegraph noise ------------------------------------------------------------------

@dataclass(frozen=True)
class RtnSignal:
    rate: float
    switch_times: np.ndarray
    initial_state: int

    def value(self, t) -> np.ndarray:
        flips = np.searchsorted(self.switch_times, np.asarray(t, dtype=float), side="right")
        return self.initial_state * (1 - 2 * (flips % 2))


def _switch_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    """Event times on [0, duration) with exponential gaps of mean 1/rate."""
    if rate <= 0 or duration <= 0:
        return np.empty(0)
    chunk = int(rate * duration + 6 * math.sqrt(rate * duration) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, size=chunk))
    while times[-1] < duration:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / rate, size=chunk))
        times = np.concatenate([times, more])
    return times[: np.searchsorted(times, duration)]


def sample_rtn(rate: float, duration: float, seed=None) -> RtnSignal:
    rng = np.random.default_rng(seed)
    s0 = int(rng.choice((-1, 1)))
    return RtnSignal(float(rate), _switch_times(rate, duration, rng), s0)


def cutoffs(n_steps: int, dt: float = 1.0) -> tuple[float, float]:
    """(f_min, f_max) = (1/(10 N dt), 1/(2 dt))."""
    return 1.0 / (10.0 * n_steps * dt), 1.0 / (2.0 * dt)


@dataclass(frozen=True)
class FlickerProcess:
    amplitude: float
    signals: tuple
    f_min: float
    f_max: float
    n_steps: int
    dt: float = 1.0

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def rates(self) -> np.ndarray:
        return np.array([s.rate for s in self.signals])

    def xi(self) -> np.ndarray:
        """xi on each step, taken at the step midpoint; shape (n_steps,)."""
        out = np.zeros(self.n_steps)
        if self.amplitude == 0:
            return out
        for s in self.signals:
            # an event at time t flips every midpoint (i + 1/2) dt that lies after it
            first = np.floor(s.switch_times / self.dt - 0.5).astype(np.int64) + 1
            first = first[first < self.n_steps]
            counts = np.bincount(first, minlength=self.n_steps)
            parity = np.cumsum(counts) % 2
            out += s.initial_state * (1 - 2 * parity)
        return self.amplitude * out


def sample_flicker(amplitude: float, dt: float = 1.0, n_steps: int = 1000,
                   n_signals: int = N_SIGNALS, seed=None, cutoff_steps: int | None = None
                   ) -> FlickerProcess:
    """Sum of ``n_signals`` telegraph signals with log-uniform switching rates.

    ``cutoff_steps`` sets the N in f_min = 1/(10 N dt) when the realization
    should share the spectrum of a longer experiment.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    f_min, f_max = cutoffs(cutoff_steps or n_steps, dt)
    rates = np.exp(rng.uniform(math.log(f_min), math.log(f_max), size=n_signals))
    states = rng.choice((-1, 1), size=n_signals)
    duration = n_steps * dt
    signals = tuple(RtnSignal(float(f), _switch_times(f, duration, rng), int(s0))
                    for f, s0 in zip(rates, states))
    return FlickerProcess(float(amplitude), signals, f_min, f_max, int(n_steps), float(dt))


def estimate_psd(samples, dt: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """One-sided periodogram averaged over realizations (rows of ``samples``)."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    f, s = periodogram(x, fs=1.0 / dt, axis=-1, detrend="constant")
    return f[1:], s.mean(axis=0)[1:]


def psd_to_csv(f, s) -> str:
    rows = ["f,S"] + [f"{a!r},{b!r}" for a, b in zip(np.asarray(f).tolist(), np.asarray(s).tolist())]
    return "\n".join(rows) + "\n"


def rtn_psd(f, rate: float) -> np.ndarray:
    """One-sided PSD of a unit telegraph signal; Lorentzian with corner rate/pi."""
    f = np.asarray(f, dtype=float)
    return 2.0 * rate / (rate ** 2 + (math.pi * f) ** 2)


def flicker_psd_shape(f, f_min: float, f_max: float) -> np.ndarray:
    """(1/(pi f)) [atan(f_max/(pi f)) - atan(f_min/(pi f))], up to a constant."""
    f = np.asarray(f, dtype=float)
    return (np.arctan(f_max / (math.pi * f)) - np.arctan(f_min / (math.pi * f))) / (math.pi * f)


# --- Ramsey ---------------------------------------------------------------------------

@dataclass
class RamseyCurve:
    times: np.ndarray
    sigma: np.ndarray
    ensemble: int
    t2_crossing: float
    t2_gaussian: float
    crossing_is_lower_bound: bool
    rms_gaussian: float
    rms_exponential: float
    t2_exponential: float

    def gate_fidelity(self, t_gate: float = PULSE_STEPS) -> float:
        """(2 + sigma(t_g)) / 3 with sigma interpolated at t_g."""
        return (2.0 + float(np.interp(t_gate, self.times, self.sigma))) / 3.0

    def to_csv(self) -> str:
        rows = ["t,sigma"] + [f"{t!r},{s!r}" for t, s in zip(self.times.tolist(), self.sigma.tolist())]
        return "\n".join(rows) + "\n"


def _one_param_fit(t, y, shape, t0):
    res = least_squares(lambda p: shape(t / p[0]) - y, [t0], bounds=([1e-12], [np.inf]))
    return float(res.x[0]), float(np.sqrt(np.mean(res.fun ** 2)))


def ramsey(amplitude: float, n_steps: int, ensemble: int = RAMSEY_ENSEMBLE, seed=0,
           dt: float = 1.0, cutoff_steps: int | None = None, n_signals: int = N_SIGNALS
           ) -> RamseyCurve:
    """Free evolution of |+> under the noise; sigma(t) = |<exp(-i 4 pi Phi(t))>|."""
    acc = np.zeros(n_steps + 1, dtype=complex)
    for i in range(ensemble):
        proc = sample_flicker(amplitude, dt, n_steps, n_signals, seed=[*np.atleast_1d(seed), i],
                              cutoff_steps=cutoff_steps)
        phase = np.concatenate([[0.0], np.cumsum(proc.xi() * dt)])
        acc += np.exp(-4j * math.pi * phase)
    sigma = np.abs(acc) / ensemble
    times = np.arange(n_steps + 1) * dt
    below = np.flatnonzero(sigma < math.exp(-1))
    if below.size:
        i = below[0]
        t_cross = float(np.interp(math.exp(-1), [sigma[i], sigma[i - 1]], [times[i], times[i - 1]]))
        lower = False
    else:
        t_cross, lower = float(times[-1]), True
    # compare shapes over the decay itself, not the noise floor that follows it
    win = times <= FIT_WINDOW * t_cross
    t2g, rms_g = _one_param_fit(times[win], sigma[win], lambda x: np.exp(-x * x), t_cross)
    t2e, rms_e = _one_param_fit(times[win], sigma[win], lambda x: np.exp(-x), t_cross)
    return RamseyCurve(times, sigma, ensemble, t_cross, t2g, lower, rms_g, rms_e, t2e)


# --- pulses and step propagators -----------------------------------------------------------

def gaussian_envelope(n: int = PULSE_STEPS) -> np.ndarray:
    """Unit-area Gaussian sampled at step midpoints, sigma = t_g / 4, cut at +/- 2 sigma."""
    t = (np.arange(n) + 0.5) / n - 0.5  # in units of t_g, spans (-1/2, 1/2) = (-2 sigma, 2 sigma)
    g = np.exp(-0.5 * (t / 0.25) ** 2)
    return g / g.sum()


def generator_waveform(name: str, n: int = PULSE_STEPS, dt: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """(Omega_X, Omega_Y) samples realizing one generator; pi pulses use two pi/2 pulses."""
    axis, theta = clifford.GENERATOR_ANGLES[name]
    slots = _SLOTS[name]
    ox = np.zeros(n * slots)
    oy = np.zeros(n * slots)
    if axis is not None:
        half = math.copysign(math.pi / 2, theta)
        pulse = np.tile(gaussian_envelope(n) * half / (2 * math.pi * dt), slots)
        (ox if axis == "X" else oy)[:] = pulse
    return ox, oy


def clifford_waveforms(n: int = PULSE_STEPS, dt: float = 1.0):
    """Per Clifford index: (Omega_X, Omega_Y) arrays concatenated over its generators."""
    out = []
    for el in clifford.build_group().elements:
        parts = [generator_waveform(g, n, dt) for g in el.generators]
        out.append((np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])))
    return out


def step_unitaries(ox, oy, xi, dt: float = 1.0) -> np.ndarray:
    """exp(-i 2 pi dt (ox X/2 + oy Y/2 + xi Z)) for every step; shape (n, 2, 2)."""
    hx, hy, hz = 0.5 * np.asarray(ox), 0.5 * np.asarray(oy), np.asarray(xi)
    norm = np.sqrt(hx * hx + hy * hy + hz * hz)
    theta = 2 * math.pi * dt * norm
    c = np.cos(theta)
    s = np.where(norm > 0, np.sin(theta) / np.where(norm > 0, norm, 1.0), 2 * math.pi * dt)
    u = np.empty((len(theta), 2, 2), dtype=complex)
    u[:, 0, 0] = c - 1j * s * hz
    u[:, 1, 1] = c + 1j * s * hz
    u[:, 0, 1] = -1j * s * hx - s * hy
    u[:, 1, 0] = -1j * s * hx + s * hy
    return u


def _ordered_product(blocks: np.ndarray) -> np.ndarray:
    """Time-ordered products U_n ... U_1 of (B, L, 2, 2) blocks by pairwise reduction."""
    b = blocks
    while b.shape[1] > 1:
        if b.shape[1] % 2:
            pad = np.broadcast_to(np.eye(2, dtype=complex), (b.shape[0], 1, 2, 2))
            b = np.concatenate([b, pad], axis=1)
        b = b[:, 1::2] @ b[:, 0::2]
    return b[:, 0]


def expected_experiment_steps(m_grid, dt: float = 1.0) -> int:
    """Mean step count of one concatenated RB experiment over ``m_grid``."""
    mean_len = np.mean([len(w[0]) for w in clifford_waveforms(PULSE_STEPS, dt)])
    return int(round(mean_len * sum(int(m) + 1 for m in m_grid)))


# --- RB under flicker noise ------------------------------------------------------------

def rb_layout(cliffords: np.ndarray, m_grid) -> list[tuple[int, np.ndarray]]:
    """Concatenated subsequences C_1..C_m, Y_m for each m, in ``m_grid`` order."""
    group = clifford.build_group()
    out = []
    for m in m_grid:
        seq = np.asarray(cliffords[:m])
        out.append((int(m), np.concatenate([seq, [clifford.invert_sequence(seq, group)]])))
    return out


def identity_layout(m_grid) -> list[tuple[int, np.ndarray]]:
    """m idle Cliffords per subsequence (the identity is its own inverse)."""
    return [(int(m), np.zeros(int(m), dtype=np.int64)) for m in m_grid]


@dataclass
class PulsedRun:
    survival: dict  # m -> survival probability
    clifford_error_rates: np.ndarray  # error rate of each executed Clifford
    n_steps: int


def evolve_pulsed_sequence(layout, amplitude: float, seed=None, dt: float = 1.0,
                           n_signals: int = N_SIGNALS, prep: str = "0",
                           process: FlickerProcess | None = None) -> PulsedRun:
    """Run the concatenated subsequences on one continuous noise realization.

    The state is re-prepared at the start of each subsequence while the noise
    keeps running.  ``prep`` is ``"0"`` (measure |0>) or ``"+"`` (measure |+>).
    """
    waves = clifford_waveforms(PULSE_STEPS, dt)
    flat = np.concatenate([seq for _, seq in layout])
    lengths = np.array([len(waves[c][0]) for c in flat])
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    n_total = int(lengths.sum())
    if process is None:
        process = sample_flicker(amplitude, dt, n_total, n_signals, seed)
    elif process.n_steps < n_total:
        raise ValueError("noise realization is shorter than the experiment")
    elif not math.isclose(process.dt, dt):
        raise ValueError(f"noise step {process.dt} does not match pulse step {dt}")
    xi = process.xi()[:n_total]
    ox = np.concatenate([waves[c][0] for c in flat])
    oy = np.concatenate([waves[c][1] for c in flat])
    steps = step_unitaries(ox, oy, xi, dt)

    width = int(lengths.max())
    padded = np.broadcast_to(np.eye(2, dtype=complex), (len(flat), width, 2, 2)).copy()
    offs = np.arange(width)
    valid = offs[None, :] < lengths[:, None]
    idx = (starts[:, None] + offs[None, :])[valid]
    padded[valid] = steps[idx]
    unitaries = _ordered_product(padded)

    ideal = np.array([c.unitary() for c in clifford.build_group().elements])[flat]
    overlap = np.einsum("nab,nab->n", ideal.conj(), unitaries)
    rates = (4.0 - np.abs(overlap) ** 2) / 6.0

    psi0 = np.array([1, 0], dtype=complex) if prep == "0" else np.array([1, 1], dtype=complex) / math.sqrt(2)
    survival = {}
    pos = 0
    for m, seq in layout:
        u = np.eye(2, dtype=complex)
        for v in unitaries[pos: pos + len(seq)]:
            u = v @ u
        pos += len(seq)
        survival[m] = float(abs(psi0.conj() @ u @ psi0) ** 2)
    return PulsedRun(survival, rates, n_total)


@dataclass
class FlickerRbResult:
    series: DecaySeries
    true_r: float
    fit: FitResult | None = field(default=None)


def run_flicker_rb(amplitude: float, K: int, m_grid, seed: int = 0, dt: float = 1.0,
                   identity: bool = False, n_signals: int = N_SIGNALS,
                   order=None) -> FlickerRbResult:
    """K experiments, each one continuous noise stream over the concatenated layout.

    With ``identity=True`` the subsequences are idle gates acting on |+>.
    ``order`` optionally permutes the subsequence order within each experiment.
    """
    m_grid = [int(m) for m in m_grid]
    layout_grid = m_grid if order is None else [m_grid[i] for i in order]
    samples = {m: [] for m in m_grid}
    rates = []
    for k in range(K):
        if identity:
            layout = identity_layout(layout_grid)
        else:
            rng = np.random.default_rng([seed, k, 0])
            layout = rb_layout(rng.integers(0, 24, size=max(m_grid)), layout_grid)
        run = evolve_pulsed_sequence(layout, amplitude, seed=[seed, k, 1], dt=dt,
                                     n_signals=n_signals, prep="+" if identity else "0")
        for m, f in run.survival.items():
            samples[m].append(f)
        rates.append(run.clifford_error_rates)
    series = DecaySeries.from_samples(m_grid, [np.array(samples[m]) for m in m_grid],
                                      {"amplitude": amplitude, "K": K, "seed": seed,
                                       "identity": identity})
    true_r = float(np.mean(np.concatenate(rates)))
    return FlickerRbResult(series, true_r)


def fit_flicker(result: FlickerRbResult, kind: str = "exponential") -> FitResult:
    result.fit = fit_arrays(result.series.m, result.series.mean, kind, true_r=result.true_r)
    return result.fit


def clifford_error_rate(amplitude: float, n_cliffords: int = 2000, seed=0, dt: float = 1.0,
                        cutoff_steps: int | None = None) -> float:
    """Mean error rate of random pulsed Cliffords under one noise realization."""
    rng = np.random.default_rng([*np.atleast_1d(seed), 0])
    seq = rng.integers(0, 24, size=n_cliffords)
    waves = clifford_waveforms(PULSE_STEPS, dt)
    n_total = int(sum(len(waves[c][0]) for c in seq))
    proc = sample_flicker(amplitude, dt, n_total, seed=[*np.atleast_1d(seed), 1],
                          cutoff_steps=cutoff_steps or n_total)
    return float(np.mean(evolve_pulsed_sequence([(n_cliffords, seq)], amplitude, dt=dt,
                                                process=proc).clifford_error_rates))


def amplitude_for_error_rate(target_r: float, cutoff_steps: int, n_cliffords: int = 2000,
                             n_real: int = 8, seed=0, dt: float = 1.0, a0: float = 1e-3) -> float:
    """A' giving mean Clifford error ``target_r`` for noise with the given cutoffs.

    The error rate is quadratic in A' for weak noise, so a few rescalings of
    a trial amplitude converge quickly.
    """
    a = a0
    for it in range(4):
        r = np.mean([clifford_error_rate(a, n_cliffords, [*np.atleast_1d(seed), it, i], dt,
                                         cutoff_steps) for i in range(n_real)])
        a *= math.sqrt(target_r / r)
    return a


# --- correlated depolarizing picture ------------------------------------------------------

def correlated_depolarizing_alpha(phi) -> np.ndarray:
    """Depolarizing parameter (1 + 2 cos(4 pi phi)) / 3 of a twirled Z rotation by phase phi."""
    return (1.0 + 2.0 * np.cos(4.0 * math.pi * np.asarray(phi, dtype=float))) / 3.0


def product_model_survival(phis) -> float:
    """1/2 + prod(alpha_j)/2 over the phases that follow the m random gates.

    A phase picked up after the inverting gate is a Z rotation acting on the
    ground state and leaves the survival unchanged, so it is not passed here.
    """
    return 0.5 + 0.5 * float(np.prod(correlated_depolarizing_alpha(phis)))


def instantaneous_gate_average(phis, n_sequences: int, seed=0) -> float:
    """Average survival over random Clifford sequences with instantaneous gates.

    Gate j is followed by exp(-i 2 pi phi_j Z); the last phase follows the
    inverting gate.  This is the direct-simulation counterpart of
    :func:`product_model_survival`.
    """
    phis = np.asarray(phis, dtype=float)
    m = len(phis) - 1
    group = clifford.build_group()
    lifts = np.array([c.unitary() for c in group.elements])
    rng = np.random.default_rng(seed)
    zrot = np.array([np.diag([np.exp(-2j * math.pi * p), np.exp(2j * math.pi * p)]) for p in phis])
    seqs = rng.integers(0, 24, size=(n_sequences, m))
    inv = np.array([clifford.invert_sequence(s, group) if m else 0 for s in seqs])
    psi = np.zeros((n_sequences, 2), dtype=complex)
    psi[:, 0] = 1
    for j in range(m + 1):
        g = seqs[:, j] if j < m else inv
        psi = np.einsum("kab,kb->ka", lifts[g], psi)
        psi = psi @ zrot[j].T
    return float(np.mean(np.abs(psi[:, 0]) ** 2))
