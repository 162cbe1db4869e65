"""Fitting fidelity-decay data: exponential plateaus, per-CNOT error, the
two-rate (nu1, nu2) models, physical-time conversion and algebraic decay.

Nonlinear fits use ``scipy.optimize.least_squares``; parameter uncertainties
come from the Jacobian at the optimum, ``cov = (J^T J)^-1 * SSR / (m - p)``.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import closedform
from .krausgate import CNOT_DURATION, GateNoiseConfig, echo_kraus
from .lindblad import NoiseRates, echo_lindblad
from .sawtooth import QsmParams

MODELS = ("gate-based-serial", "lindblad-sim", "kraus-sim")
DEFAULT_WINDOW = (0.0, 5.0)
GATES_PER_STEP = 33
GRID = np.geomspace(1e-3, 10.0, 5)
REFINE_STARTS = 3
MAX_NFEV = 400
_TIGHT = dict(xtol=1e-15, ftol=1e-15, gtol=1e-15)


class FitError(RuntimeError):
    """Fit failed; ``best`` holds the best parameters reached, if any."""

    def __init__(self, message, best=None):
        super().__init__(message if best is None else f"{message}; best point {best}")
        self.best = best


@dataclass(frozen=True)
class FitResult:
    params: dict
    stderr: dict
    residual: float
    model: str
    window: tuple
    seed: int = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(not (v >= 0) for v in self.stderr.values()):
            raise ValueError("stderr values must be non-negative")
        if not self.residual >= 0:
            raise ValueError("residual must be non-negative")

    def to_dict(self):
        return {
            "model": self.model,
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "residual": self.residual,
            "window": list(self.window),
            "seed": self.seed,
            **({"extra": self.extra} if self.extra else {}),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _stderr(res, n_params):
    m = res.fun.size
    if m <= n_params:
        return np.zeros(n_params)
    s2 = float(res.fun @ res.fun) / (m - n_params)
    J = res.jac
    try:
        cov = np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return np.full(n_params, np.inf)
    return np.sqrt(np.clip(np.diag(cov), 0.0, None))


def _rms(res):
    return float(np.sqrt(np.mean(res.fun**2)))


def _series_n(series, n):
    n = series.meta.get("n") if n is None else n
    if n is None:
        raise ValueError("qubit count not given and not present in series metadata")
    return int(n)


def fit_exp_plateau(series, n=None, window=None):
    """Fit ``f = exp(-gamma t) (f0 - 2**-n) + 2**-n`` with ``gamma >= 0``."""
    n = _series_n(series, n)
    sub = series if window is None else series.window(*window)
    t, y = sub.times, sub.values
    if t.size < 3:
        raise ValueError("need at least 3 points for an exponential-plateau fit")
    floor = 0.5**n
    if np.max(np.abs(y - floor)) < 1e-12:
        raise FitError("degenerate series: constant at the 1/2**n floor")

    def resid(x):
        g, f0 = x
        return np.exp(-g * t) * (f0 - floor) + floor - y

    # log-linear start
    pos = y - floor > 1e-9
    g0 = 0.1
    if pos.sum() >= 2:
        g0 = max(-np.polyfit(t[pos], np.log(y[pos] - floor), 1)[0], 1e-6)
    res = least_squares(resid, [g0, y[0]], bounds=([0.0, -np.inf], [np.inf, np.inf]), **_TIGHT)
    se = _stderr(res, 2)
    return FitResult(
        {"gamma": float(res.x[0]), "f0": float(res.x[1])},
        {"gamma": float(se[0]), "f0": float(se[1])},
        _rms(res),
        "exp-plateau",
        (float(t[0]), float(t[-1])),
        extra={"n": n},
    )


def cnot_fidelity_after(eps, f0, n, M_cnot):
    """Forward relation ``f1 = (f0 - 2**-n) (1 - eps)**M + 2**-n``."""
    floor = 0.5**n
    return (f0 - floor) * (1 - eps) ** M_cnot + floor


def extract_cnot_error(f0, f1, n, M_cnot):
    """Average error per CNOT from one map-step echo: inverse of :func:`cnot_fidelity_after`."""
    floor = 0.5**n
    if not (floor < f1 <= f0 <= 1):
        raise ValueError(f"need 2**-n < f1 <= f0 <= 1, got f0={f0}, f1={f1}, n={n}")
    return 1 - ((f1 - floor) / (f0 - floor)) ** (1.0 / M_cnot)


def rates_to_physical(nu1, nu2, T_step):
    """``T1 = T_step / nu1`` and ``T2 = 2 T_step / (nu1 + nu2)`` (seconds)."""
    if not nu1 + nu2 > 0:
        raise ValueError("nu1 + nu2 must be positive")
    T1 = math.inf if nu1 == 0 else T_step / nu1
    return T1, 2 * T_step / (nu1 + nu2)


def physical_to_rates(T1, T2, T_step):
    nu1 = 0.0 if math.isinf(T1) else T_step / T1
    return nu1, 2 * T_step / T2 - nu1


# -- two-regime rate fits -------------------------------------------------------


def gate_based_echo(t_fb, rates, regime, n=3, M=GATES_PER_STEP):
    """Serial gate-based forward-and-back echo ``f(2 t_fb)``."""
    return closedform.f_gate_based(2 * np.asarray(t_fb, float), n, M, rates, regime, "serial")


class _Forward:
    """Model curves for the localized and diffusive series at candidate rates."""

    def __init__(self, model, loc, dif, n, M, L, t_max, sim_method):
        self.model, self.n, self.M, self.L = model, n, M, L
        self.t_loc, self.t_dif = loc.times, dif.times
        self.k_loc = loc.meta.get("k", 0.1)
        self.k_dif = dif.meta.get("k", 4.55)
        self.t_max = t_max
        self.sim_method = sim_method

    def _sim(self, k, rates):
        p = QsmParams(self.n, self.L, k)
        if self.model == "lindblad-sim":
            s = echo_lindblad(p, rates, self.t_max, mode="alternating-pairs", method=self.sim_method, richardson=False)
        else:
            T_step = self.M * CNOT_DURATION
            if rates.zero:
                cfg = GateNoiseConfig.noiseless()
            else:
                T1, T2 = rates_to_physical(rates.nu1, rates.nu2, T_step)
                cfg = GateNoiseConfig(T1, T2)
            s = echo_kraus(p, cfg, self.t_max)
        return s.values

    def __call__(self, nu1, nu2):
        rates = NoiseRates(max(nu1, 0.0), max(nu2, 0.0))
        if self.model == "gate-based-serial":
            return (
                gate_based_echo(self.t_loc, rates, "semi-localized", self.n, self.M),
                gate_based_echo(self.t_dif, rates, "diffusive", self.n, self.M),
            )
        loc = self._sim(self.k_loc, rates)
        dif = self._sim(self.k_dif, rates)
        return loc[self.t_loc.astype(int)], dif[self.t_dif.astype(int)]


def fit_rates(
    localized,
    diffusive,
    model="gate-based-serial",
    n=None,
    M=GATES_PER_STEP,
    L=1,
    window=DEFAULT_WINDOW,
    spam=False,
    sim_method="exact",
    seed=None,
):
    """Joint fit of shared ``(nu1, nu2)`` to a localized and a diffusive echo.

    The localized series is modelled with the semi-localized rate and the
    diffusive one with the diffusive rate. ``gate-based-serial`` uses the
    closed form with ``M`` two-qubit gates per map step; ``lindblad-sim`` and
    ``kraus-sim`` rerun the corresponding engine (n-qubit QSM at the series'
    ``meta["k"]``) at every candidate. With ``spam`` a shared amplitude ``A``
    scales the decaying part, ``f -> A (f - 2**-n) + 2**-n``.

    A coarse 5x5 log grid over ``[1e-3, 10]**2`` seeds bounded least-squares
    refinements from the best few grid points.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    n = _series_n(localized, n)
    loc, dif = localized.window(*window), diffusive.window(*window)
    if len(loc) < 2 or len(dif) < 2:
        raise ValueError("each series needs at least two points inside the window")
    t_max = int(max(loc.times.max(), dif.times.max()))
    if model != "gate-based-serial" and (
        np.any(loc.times != np.round(loc.times)) or np.any(dif.times != np.round(dif.times))
    ):
        raise ValueError("simulator-backed models need integer t_fb grids")
    fwd = _Forward(model, loc, dif, n, M, L, max(t_max, 1), sim_method)
    floor = 0.5**n
    y = np.concatenate([loc.values, dif.values])

    def resid(x):
        ml, md = fwd(x[0], x[1])
        m = np.concatenate([ml, md])
        if spam:
            m = x[2] * (m - floor) + floor
        return m - y

    screen = []
    for a in GRID:
        for b in GRID:
            x = [a, b] + ([1.0] if spam else [])
            r = resid(x)
            screen.append((float(r @ r), a, b))
    screen.sort()
    lo = [0.0, 0.0] + ([0.0] if spam else [])
    hi = [np.inf, np.inf] + ([2.0] if spam else [])
    best = None
    for _, a, b in screen[:REFINE_STARTS]:
        x0 = [a, b] + ([1.0] if spam else [])
        opts = dict(_TIGHT) if model == "gate-based-serial" else dict(xtol=1e-10, ftol=1e-12, gtol=1e-12, diff_step=1e-6)
        res = least_squares(resid, x0, bounds=(lo, hi), max_nfev=MAX_NFEV, **opts)
        if best is None or res.cost < best.cost:
            best = res
    if best.status == 0:
        raise FitError("rate fit did not converge within the evaluation budget", best.x.tolist())
    se = _stderr(best, best.x.size)
    names = ["nu1", "nu2"] + (["spam"] if spam else [])
    return FitResult(
        {k: float(v) for k, v in zip(names, best.x)},
        {k: float(v) for k, v in zip(names, se)},
        _rms(best),
        model,
        tuple(float(w) for w in window),
        seed=seed,
        extra={"n": n, "M": M, "k_localized": fwd.k_loc, "k_diffusive": fwd.k_dif},
    )


# -- algebraic decay ------------------------------------------------------------


def fit_algebraic(series, window, n=None):
    """Power law ``f - 2**-n = c t**a`` by least squares in log-log space.

    ``extra`` carries a curvature diagnostic: the quadratic coefficient of a
    second-order log-log fit and the local exponents at both window ends.
    """
    n = _series_n(series, n)
    lo, hi = window
    if not (0 < lo < hi):
        raise ValueError(f"invalid window {window}: need 0 < t_lo < t_hi")
    sub = series.window(lo, hi)
    if len(sub) < 2:
        raise ValueError(f"window {window} holds fewer than two points")
    y = sub.values - 0.5**n
    if np.any(y <= 0):
        raise ValueError("fidelity at or below the 1/2**n floor inside the window")
    x, ly = np.log(sub.times), np.log(y)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    r = ly - A @ coef
    m = x.size
    if m > 2:
        s2 = float(r @ r) / (m - 2)
        se = np.sqrt(np.diag(np.linalg.inv(A.T @ A)) * s2)
    else:
        se = np.zeros(2)
    extra = {"n": n}
    if m >= 3:
        q = np.polyfit(x, ly, 2)
        extra.update(
            curvature=float(q[0]),
            exponent_start=float(2 * q[0] * x[0] + q[1]),
            exponent_end=float(2 * q[0] * x[-1] + q[1]),
        )
    return FitResult(
        {"exponent": float(coef[0]), "prefactor": float(np.exp(coef[1]))},
        {"exponent": float(se[0]), "prefactor": float(np.exp(coef[1]) * se[1])},
        float(np.sqrt(np.mean(r**2))),
        "algebraic",
        (float(lo), float(hi)),
        extra=extra,
    )


# -- synthetic data -------------------------------------------------------------


def shot_noise(values, rng, shots=8192, ics=8):
    """Binomial sampling of fidelities: ``shots`` per initial condition, ``ics`` ICs pooled."""
    p = np.clip(np.asarray(values, float), 0.0, 1.0)
    total = shots * ics
    return rng.binomial(total, p) / total
