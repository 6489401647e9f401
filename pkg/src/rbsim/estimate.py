"""Decay-model fitting and the statistics built on it.

Three fidelity decay models are supported:

* ``exponential``       F = A alpha^m + e0,                    theta = (alpha, A, e0)
* ``dual_exponential``  F = C1 alpha^m + C2 beta^m + C3,       theta = (alpha, beta, C1, C2, C3)
* ``gaussian``          F = A beta^(m^2) + e0,                 theta = (beta, A, e0)

Fits minimise the unweighted (optionally inverse-variance weighted) sum of
squares with a Levenberg-Marquardt iteration.  Decay bases are optimised
through a logistic transform so they stay inside (0, 1); covariances and
confidence intervals are reported in the original parameters, using the
Jacobian at the solution.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .series import DecaySeries

MODEL_PARAMS = {
    "exponential": ("alpha", "A", "e0"),
    "dual_exponential": ("alpha", "beta", "C1", "C2", "C3"),
    "gaussian": ("beta", "A", "e0"),
}
# indices of the parameters that are decay bases, per model
_BASES = {"exponential": (0,), "dual_exponential": (0, 1), "gaussian": (0,)}

MAX_ITER = 200
XTOL = 1e-12
COALESCE_TOL = 1e-4
SINGULAR_COND = 1e14


class FitError(RuntimeError):
    """Raised when a fit cannot be attempted (too few points, bad input)."""


# --- Student t quantile --------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 20000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def betainc_inv(a: float, b: float, y: float) -> float:
    """x in [0, 1] with I_x(a, b) = y, by safeguarded Newton on a bisection bracket."""
    if not 0.0 <= y <= 1.0:
        raise ValueError("y must lie in [0, 1]")
    if y in (0.0, 1.0):
        return y
    log_norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    lo, hi = 0.0, 1.0
    x = 0.5
    for _ in range(400):
        f = betainc(a, b, x) - y
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        dens = math.exp(log_norm + (a - 1) * math.log(x) + (b - 1) * math.log1p(-x))
        step = f / dens if dens > 0 else 0.0
        cand = x - step
        x_new = cand if lo < cand < hi else 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-17 + 4e-16 * abs(x):
            return x_new
        x = x_new
    return x


def student_t_cdf(t: float, dof: float) -> float:
    if math.isinf(dof):
        return NormalDist().cdf(t)
    x = dof / (dof + t * t)
    tail = 0.5 * betainc(0.5 * dof, 0.5, x)
    return 1.0 - tail if t > 0 else tail


def student_t_pdf(t: float, dof: float) -> float:
    if math.isinf(dof):
        return NormalDist().pdf(t)
    log_c = (math.lgamma(0.5 * (dof + 1)) - math.lgamma(0.5 * dof)
             - 0.5 * math.log(dof * math.pi))
    return math.exp(log_c - 0.5 * (dof + 1) * math.log1p(t * t / dof))


def student_t_quantile(p: float, dof: float) -> float:
    """Inverse CDF of Student's t with ``dof`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    if not dof >= 1:
        raise ValueError("dof must be >= 1")
    if p == 0.5:
        return 0.0
    if math.isinf(dof):
        return NormalDist().inv_cdf(p)
    upper = p > 0.5
    q = p if upper else 1.0 - p
    # upper tail 1 - q = I_x(dof/2, 1/2) / 2 with x = dof / (dof + t^2)
    x = betainc_inv(0.5 * dof, 0.5, 2.0 * (1.0 - q))
    t = math.sqrt(dof * (1.0 - x) / x) if x > 0 else math.inf
    for _ in range(4):
        dens = student_t_pdf(t, dof)
        if dens <= 0 or not math.isfinite(t):
            break
        step = (student_t_cdf(t, dof) - q) / dens
        t -= step
        if abs(step) <= 1e-15 * max(1.0, abs(t)):
            break
    return t if upper else -t


# --- models ---------------------------------------------------------------------

def _check_kind(kind: str):
    if kind not in MODEL_PARAMS:
        raise ValueError(f"unknown decay model {kind!r}; expected one of {tuple(MODEL_PARAMS)}")


def _pow(base, expo):
    base = np.asarray(base, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(base > 0, np.exp(expo * np.log(np.where(base > 0, base, 1.0))),
                        np.where(expo == 0, 1.0, 0.0))


def predict(kind: str, m, theta) -> np.ndarray:
    """Model value at lengths ``m`` for parameters ``theta``."""
    _check_kind(kind)
    m = np.asarray(m, dtype=float)
    th = np.asarray(theta, dtype=float)
    if kind == "exponential":
        return th[1] * _pow(th[0], m) + th[2]
    if kind == "gaussian":
        return th[1] * _pow(th[0], m * m) + th[2]
    return th[2] * _pow(th[0], m) + th[3] * _pow(th[1], m) + th[4]


def jacobian(kind: str, m, theta) -> np.ndarray:
    """Analytic dF/dtheta, shape (len(m), D)."""
    _check_kind(kind)
    m = np.asarray(m, dtype=float)
    th = np.asarray(theta, dtype=float)
    if kind == "exponential":
        a, amp = th[0], th[1]
        return np.column_stack([amp * m * _pow(a, m - 1), _pow(a, m), np.ones_like(m)])
    if kind == "gaussian":
        b, amp = th[0], th[1]
        e = m * m
        return np.column_stack([amp * e * _pow(b, e - 1), _pow(b, e), np.ones_like(m)])
    a, b, c1, c2 = th[:4]
    return np.column_stack([c1 * m * _pow(a, m - 1), c2 * m * _pow(b, m - 1),
                            _pow(a, m), _pow(b, m), np.ones_like(m)])


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def _logit(p):
    p = np.clip(np.asarray(p, dtype=float), 1e-300, 1 - 1e-16)
    return np.log(p) - np.log1p(-p)


def _to_theta(kind, u):
    th = np.array(u, dtype=float)
    for i in _BASES[kind]:
        th[i] = _sigmoid(u[i])
    return th


def _to_u(kind, theta):
    u = np.array(theta, dtype=float)
    for i in _BASES[kind]:
        u[i] = _logit(theta[i])
    return u


# --- fit result --------------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    theta: np.ndarray
    covariance: np.ndarray
    s2: float
    residuals: np.ndarray
    dof: int
    converged: bool
    iterations: int
    grad_norm: float
    d: int = 2
    flags: tuple = ()
    true_r: float | None = None
    m: np.ndarray = field(default=None, repr=False)

    @property
    def names(self) -> tuple:
        return MODEL_PARAMS[self.model]

    def param(self, name: str) -> float:
        return float(self.theta[self.names.index(name)])

    @property
    def params(self) -> dict:
        return {n: float(v) for n, v in zip(self.names, self.theta)}

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def confidence_interval(self, level: float = 0.9) -> np.ndarray:
        return confidence_interval(self, 1.0 - level)

    @property
    def ci90(self) -> np.ndarray:
        return self.confidence_interval(0.9)

    @property
    def asymptote(self) -> float:
        return float(self.theta[-1])

    @property
    def alpha(self) -> float | None:
        return self.param("alpha") if "alpha" in self.names else None

    @property
    def r_hat(self) -> float | None:
        """(1 - alpha)(d - 1)/d; not defined for the Gaussian model."""
        if self.alpha is None:
            return None
        return (1.0 - self.alpha) * (self.d - 1) / self.d

    @property
    def C(self) -> float | None:
        """Full width of the 90% interval on alpha."""
        if self.alpha is None or self.dof < 1:
            return None
        lo, hi = self.ci90[self.names.index("alpha")]
        return float(hi - lo)

    @property
    def mu(self) -> float | None:
        if self.true_r is None:
            return None
        return accuracy(self.r_hat, self.true_r)

    def to_dict(self) -> dict:
        ci = self.ci90 if self.dof >= 1 else np.full((len(self.theta), 2), np.nan)
        return {
            "model": self.model,
            "theta": self.params,
            "ci90": {n: [float(a), float(b)] for n, (a, b) in zip(self.names, ci)},
            "r_hat": self.r_hat,
            "mu": self.mu,
            "C": self.C,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "s2": float(self.s2),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2, sort_keys=True)


def _finite(o):
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_finite(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


# --- fitting ---------------------------------------------------------------------

def _linear_profile(basis: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Best linear coefficients and SSE for each candidate basis set.

    ``basis`` has shape (P, N, k); returns coefficients (P, k) and SSE (P,).
    """
    sw = np.sqrt(w)
    a = basis * sw[None, :, None]
    b = y * sw
    pinv = np.linalg.pinv(a, rcond=1e-13)
    coef = np.einsum("pkn,n->pk", pinv, b)
    res = np.einsum("pnk,pk->pn", a, coef) - b[None]
    return coef, np.einsum("pn,pn->p", res, res)


def _grid_starts(kind, m, y, w, n_best=None):
    m = np.asarray(m, dtype=float)
    if n_best is None:
        n_best = 2 if kind == "dual_exponential" else 1
    if kind == "dual_exponential":
        ug = np.linspace(-3.0, 18.0, 70)
        ia, ib = np.triu_indices(len(ug), k=1)
        a, b = _sigmoid(ug[ib]), _sigmoid(ug[ia])  # a > b
        basis = np.stack([_pow(a[:, None], m[None]), _pow(b[:, None], m[None]),
                          np.ones((len(a), len(m)))], axis=-1)
        coef, sse = _linear_profile(basis, y, w)
        order = np.argsort(sse)[:n_best]
        return [np.array([a[i], b[i], *coef[i]]) for i in order]
    expo = m * m if kind == "gaussian" else m
    ug = np.linspace(-3.0, 32.0 if kind == "gaussian" else 20.0, 700)
    base = _sigmoid(ug)
    basis = np.stack([_pow(base[:, None], expo[None]), np.ones((len(base), len(m)))], axis=-1)
    coef, sse = _linear_profile(basis, y, w)
    order = np.argsort(sse)[:n_best]
    return [np.array([base[i], *coef[i]]) for i in order]


def _heuristic_start(kind, m, y):
    """Spec'd initial guess: e0 from the last point, A from the first, base from the first two."""
    m = np.asarray(m, dtype=float)
    e0 = y[-1]
    amp = y[0] - e0
    expo = m * m if kind == "gaussian" else m
    ratio = (y[1] - e0) / (y[0] - e0) if y[0] != e0 else 1.0
    base = ratio ** (1.0 / (expo[1] - expo[0])) if ratio > 0 else 0.5
    base = float(np.clip(base, 1e-3, 1 - 1e-9))
    if kind == "dual_exponential":
        b2 = float(np.clip(base ** 4, 1e-3, 1 - 1e-9))
        return np.array([base, b2, 0.75 * amp, 0.25 * amp, e0])
    return np.array([base, amp, e0])


def _levenberg_marquardt(kind, m, y, w, theta0, max_iter=MAX_ITER, xtol=XTOL):
    sw = np.sqrt(w)
    u = _to_u(kind, theta0)
    bases = _BASES[kind]

    def evaluate(u):
        th = _to_theta(kind, u)
        r = (predict(kind, m, th) - y) * sw
        j = jacobian(kind, m, th) * sw[:, None]
        for i in bases:
            j[:, i] *= th[i] * (1.0 - th[i])
        return r, j

    r, j = evaluate(u)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = j.T @ r
        jtj = j.T @ j
        scale = np.sqrt(np.maximum(np.diag(jtj), 1e-300))
        aug = np.vstack([j, np.sqrt(lam) * np.diag(scale)])
        rhs = np.concatenate([-r, np.zeros(len(u))])
        step = np.linalg.lstsq(aug, rhs, rcond=None)[0]
        u_new = u + step
        r_new, j_new = evaluate(u_new)
        cost_new = float(r_new @ r_new)
        if np.isfinite(cost_new) and cost_new <= cost:
            small = np.all(np.abs(step) <= xtol * (np.abs(u) + xtol))
            stalled = cost - cost_new <= 1e-15 * cost
            u, r, j, cost = u_new, r_new, j_new, cost_new
            lam = max(lam / 5.0, 1e-15)
            if small or cost == 0.0 or (stalled and lam <= 1e-12):
                converged = True
                break
        else:
            lam *= 4.0
            if lam > 1e16:
                # no descent direction left: stationary to working precision
                converged = bool(np.linalg.norm(g) <= 1e-8 * max(1.0, np.sqrt(cost)))
                break
    grad = float(np.linalg.norm(j.T @ r))
    return _to_theta(kind, u), cost, converged, it, grad


def fit_arrays(m, y, kind: str = "exponential", weights=None, d: int = 2,
               true_r: float | None = None, initial=None) -> FitResult:
    """Least-squares fit of one decay model to (m, y)."""
    _check_kind(kind)
    m = np.asarray(m, dtype=float)
    y = np.asarray(y, dtype=float)
    n_par = len(MODEL_PARAMS[kind])
    if m.shape != y.shape or m.ndim != 1:
        raise FitError("m and y must be 1-d arrays of equal length")
    if len(m) < n_par + 1:
        raise FitError(f"{kind} fit needs at least {n_par + 1} points, got {len(m)}")
    if not np.all(np.isfinite(y)):
        raise FitError("data contain non-finite values")
    flags = []
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            flags.append("invalid_weights_ignored")
            w = np.ones_like(y)

    if np.ptp(y) <= 1e-14 * max(1.0, abs(y).max()):
        # flat data: no decay is visible; report alpha = 1 and the level as asymptote
        theta = np.zeros(n_par)
        for i in _BASES[kind]:
            theta[i] = 1.0
        theta[-1] = float(np.mean(y))
        res = y - predict(kind, m, theta)
        return FitResult(kind, theta, np.zeros((n_par, n_par)), 0.0, res, len(m) - n_par,
                         True, 0, 0.0, d, ("flat_data",), true_r, m)

    starts = [np.asarray(initial, dtype=float)] if initial is not None else []
    starts += [_heuristic_start(kind, m, y)] + _grid_starts(kind, m, y, w)
    best = None
    for th0 in starts:
        out = _levenberg_marquardt(kind, m, y, w, th0)
        if best is None or out[1] < best[1] - 1e-15 * max(best[1], 1e-300):
            best = out
    theta, cost, converged, iters, grad = best
    if not converged:
        flags.append("not_converged")

    if kind == "dual_exponential":
        if theta[3] > theta[2] or (theta[3] == theta[2] and theta[1] > theta[0]):
            # label the component with the larger weight as alpha
            theta = theta[[1, 0, 3, 2, 4]]
        if abs(theta[0] - theta[1]) < COALESCE_TOL:
            single = fit_arrays(m, y, "exponential", weights=weights, d=d, true_r=true_r)
            single.flags = tuple(single.flags) + ("coalesced_dual_exponential",)
            return single

    dof = len(m) - n_par
    res = predict(kind, m, theta) - y
    s2 = float(np.sum(w * res * res) / dof)
    jw = jacobian(kind, m, theta) * np.sqrt(w)[:, None]
    jtj = jw.T @ jw
    if not np.all(np.isfinite(jtj)) or np.linalg.cond(jtj) > SINGULAR_COND:
        flags.append("singular_jacobian")
        q = np.linalg.pinv(jtj, rcond=1e-14)
    else:
        q = np.linalg.inv(jtj)
    cov = s2 * q
    return FitResult(kind, theta, cov, s2, res, dof, converged, iters, grad, d, tuple(flags),
                     true_r, m)


def fit(series: DecaySeries, kind: str = "exponential", weighted: bool = False, d: int = 2,
        true_r: float | None = None) -> FitResult:
    """Fit a :class:`DecaySeries`; ``weighted`` uses 1/stderr^2 weights."""
    weights = None
    if weighted:
        with np.errstate(divide="ignore"):
            weights = 1.0 / np.asarray(series.stderr) ** 2
    return fit_arrays(series.m, series.mean, kind, weights=weights, d=d, true_r=true_r)


# --- intervals and summary statistics ---------------------------------------------

def confidence_interval(result: FitResult, delta: float = 0.1) -> np.ndarray:
    """Per-parameter intervals theta_j +/- sqrt(V_jj) t_{N-D, 1-delta/2}; shape (D, 2)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if result.dof < 1:
        raise FitError("confidence intervals need more points than parameters")
    half = result.stderr * student_t_quantile(1.0 - delta / 2.0, result.dof)
    return np.column_stack([result.theta - half, result.theta + half])


def ci_halfwidth_coefficient(m_grid, theta, delta: float = 0.1, kind: str = "exponential"):
    """Coefficient c with alpha half-width = c * sigma / sqrt(K).

    Uses s^2 ~ N sigma^2 / ((N - D) K), so c = t_{N-D,1-delta/2} sqrt(N Q11 / (N - D))
    with Q = (J^T J)^-1 at ``theta``.  Returns (c, sqrt(Q11), t).
    """
    m = np.asarray(m_grid, dtype=float)
    n, n_par = len(m), len(MODEL_PARAMS[kind])
    if n <= n_par:
        raise FitError("need more lengths than parameters")
    j = jacobian(kind, m, theta)
    q11 = float(np.linalg.inv(j.T @ j)[0, 0])
    t = student_t_quantile(1.0 - delta / 2.0, n - n_par)
    return t * math.sqrt(n * q11 / (n - n_par)), math.sqrt(q11), t


def hoeffding_k(delta: float, epsilon: float, value_range: float = 1.0) -> int:
    """Per-point sample count ln(2/delta) (b-a)^2 / (2 eps^2), rounded up."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not value_range > 0:
        raise ValueError("range must be positive")
    raw = math.log(2.0 / delta) * value_range ** 2 / (2.0 * epsilon ** 2)
    # shave off round-off so exact-integer cases are not bumped up by one
    return max(1, math.ceil(raw * (1.0 - 1e-12)))


def accuracy(r_hat: float | None, r: float) -> float | None:
    """log10(r_hat / r); None when r_hat is not positive."""
    if not r > 0:
        raise ValueError("true error rate must be positive")
    if r_hat is None or not r_hat > 0:
        return None
    return math.log10(r_hat / r)


def accuracy_and_confidence(result: FitResult, r: float):
    """(mu, C): accuracy against ``r`` and the full 90% interval width on alpha."""
    return accuracy(result.r_hat, r), result.C


def summarize(mus, cs) -> dict:
    """Aggregate repeated experiments: mean accuracy, its standard error, mean confidence."""
    mus = np.asarray([x for x in mus if x is not None], dtype=float)
    cs = np.asarray([x for x in cs if x is not None], dtype=float)
    n = len(mus)
    if n == 0:
        return {"n": 0, "mu_bar": None, "s": None, "C_bar": None}
    s = math.sqrt(max(float(np.mean(mus ** 2) - np.mean(mus) ** 2), 0.0)) / math.sqrt(n)
    return {"n": n, "mu_bar": float(np.mean(mus)), "s": s,
            "C_bar": float(np.mean(cs)) if len(cs) else None}
