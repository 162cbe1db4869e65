"""Stochastic kick-strength noise: ``k -> k + dk`` with a fresh Gaussian ``dk``
at every map step, alone or together with Lindblad decay.

Random draws are keyed by ``(seed, realization, direction, step)`` through
``numpy.random.SeedSequence`` spawn keys, so every draw is fixed by its label
and never by the order in which work is scheduled.
"""

import math
from dataclasses import dataclass

import numpy as np

from .lindblad import StepChannel, basis_projectors, run_chunked, trace_overlap
from .qstate import momentum_index, resolve_ics, series_from_samples
from .sawtooth import BACKWARD, FORWARD, kinetic_phases

DIRECTION_KEY = {FORWARD: 0, BACKWARD: 1}
REALIZATION_CHUNK = 16


@dataclass(frozen=True)
class ParamNoiseConfig:
    sigma: float
    realizations: int = 1000
    seed: int = 0
    exclude_symmetric_ics: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be finite and >= 0, got {self.sigma!r}")
        if int(self.realizations) != self.realizations or self.realizations < 1:
            raise ValueError(f"realizations must be a positive integer, got {self.realizations!r}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        object.__setattr__(self, "realizations", int(self.realizations))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def ic_policy(self):
        return "exclude-symmetric" if self.exclude_symmetric_ics else "all"


def step_rng(seed, realization, direction, step):
    """Independent generator for one labelled draw."""
    key = (int(realization), DIRECTION_KEY[direction], int(step))
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def sample_kick(k, sigma, rng):
    """``k + dk`` with ``dk ~ N(0, sigma**2)``; exactly ``k`` when ``sigma == 0``."""
    if sigma == 0:
        return float(k)
    return float(k + rng.normal(0.0, sigma))


def kick_sequence(k, cfg, realization, direction, steps):
    """Kicks for map steps ``1..steps`` of one realization and direction."""
    return np.array(
        [sample_kick(k, cfg.sigma, step_rng(cfg.seed, realization, direction, s)) for s in range(1, steps + 1)]
    )


def _step_batch(x, params, kicks, kin):
    """One map step on the columns of ``x`` (shape ``(N, B)``), column b with kick ``kicks[b]``."""
    N = params.N
    q = (np.arange(N) - N // 2).astype(float) ** 2
    pot = np.exp(0.5j * params.beta**2 * np.outer(q, kicks))
    x = np.fft.ifft(x, axis=0, norm="ortho")
    x = x * pot
    x = np.fft.fft(x, axis=0, norm="ortho")
    return x * kin[:, None]


def _meta(params, cfg, momenta, t_max, negative, total, engine):
    return {
        "engine": engine,
        "n": params.n,
        "L": params.L,
        "k": params.k,
        "sigma": cfg.sigma,
        "realizations": cfg.realizations,
        "seed": cfg.seed,
        "ic_set": [int(p) for p in momenta],
        "k_eff_negative_fraction": negative / total if total else 0.0,
        "time_axis": "t_fb",
        "t_max": t_max,
    }


def echo_param_noise(params, cfg, t_max, threads=1, ic_set=None):
    """Pure-state echo with independent forward and backward kick noise.

    With forward kicks ``a_s`` and backward kicks ``b_s`` the echo at ``t`` is
    ``|<p| U(b_1)^+ ... U(b_t)^+ U(a_t) ... U(a_1) |p>|^2``, evaluated as the
    overlap of two forward evolutions so all times cost ``O(t_max)``.
    The returned standard error is across realizations of the IC-averaged echo.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    momenta = resolve_ics(params.n, cfg.ic_policy if ic_set is None else ic_set)
    N, B = params.N, len(momenta)
    kin = kinetic_phases(params)
    start = np.zeros((N, B), dtype=complex)
    for b, p in enumerate(momenta):
        start[momentum_index(params.n, p), b] = 1.0

    def work(reals):
        out = np.empty((len(reals), t_max + 1))
        neg = 0
        for i, r in enumerate(reals):
            a = kick_sequence(params.k, cfg, r, FORWARD, t_max)
            b = kick_sequence(params.k, cfg, r, BACKWARD, t_max)
            neg += int(np.sum(a < 0) + np.sum(b < 0))
            psi, phi = start.copy(), start.copy()
            out[i, 0] = 1.0
            for t in range(1, t_max + 1):
                psi = _step_batch(psi, params, np.full(B, a[t - 1]), kin)
                phi = _step_batch(phi, params, np.full(B, b[t - 1]), kin)
                out[i, t] = np.mean(np.abs(np.sum(phi.conj() * psi, axis=0)) ** 2)
        return out, neg

    parts = run_chunked(work, list(range(cfg.realizations)), threads, REALIZATION_CHUNK)
    samples = np.concatenate([p[0] for p in parts])
    negative = sum(p[1] for p in parts)
    meta = _meta(params, cfg, momenta, t_max, negative, 2 * t_max * cfg.realizations, "param-noise")
    return series_from_samples(np.arange(t_max + 1), samples, meta)


def echo_combined(params, cfg, rates, t_max, mode="continuous-all-qubits", method="rk4", threads=1, ic_set=None):
    """Echo with both kick noise and continuous decay on density matrices.

    Backward step ``s`` mirrors forward step ``s``; with channels ``F_s`` and
    ``B_s`` the echo is ``Tr[P B_1 ... B_t F_t ... F_1 (P)]`` and is evaluated as
    ``Tr[O_t rho_t]`` with ``O_t = B_t^*(O_{t-1})``.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    momenta = resolve_ics(params.n, cfg.ic_policy if ic_set is None else ic_set)

    def work(reals):
        out = np.empty((len(reals), t_max + 1))
        neg = 0
        for i, r in enumerate(reals):
            a = kick_sequence(params.k, cfg, r, FORWARD, t_max)
            b = kick_sequence(params.k, cfg, r, BACKWARD, t_max)
            neg += int(np.sum(a < 0) + np.sum(b < 0))
            rho = basis_projectors(params.n, momenta)
            obs = rho.copy()
            out[i, 0] = 1.0
            for t in range(1, t_max + 1):
                rho = StepChannel(params, rates, FORWARD, mode, method, k=a[t - 1]).apply(rho)
                obs = StepChannel(params, rates, BACKWARD, mode, method, k=b[t - 1]).apply_adjoint(obs)
                out[i, t] = np.mean(trace_overlap(obs, rho))
        return out, neg

    parts = run_chunked(work, list(range(cfg.realizations)), threads, REALIZATION_CHUNK)
    samples = np.concatenate([p[0] for p in parts])
    negative = sum(p[1] for p in parts)
    meta = _meta(params, cfg, momenta, t_max, negative, 2 * t_max * cfg.realizations, "combined")
    meta.update(nu1=rates.nu1, nu2=rates.nu2, mode=mode, method=method)
    return series_from_samples(np.arange(t_max + 1), samples, meta)


def fgr_rate(series, window, n=None):
    """Least-squares slope of ``-ln(f - 1/2**n)`` over ``window = (t_lo, t_hi)``.

    ``n`` defaults to ``series.meta["n"]``.
    """
    n = series.meta.get("n") if n is None else n
    if n is None:
        raise ValueError("qubit count not given and not present in series metadata")
    sub = series.window(*window)
    if len(sub) < 2:
        raise ValueError(f"window {window} holds fewer than two points")
    y = sub.values - 0.5**n
    if np.any(y <= 0):
        raise ValueError("fidelity at or below the 1/2**n floor inside the window; log undefined")
    slope = np.polyfit(sub.times, np.log(y), 1)[0]
    return float(-slope)
