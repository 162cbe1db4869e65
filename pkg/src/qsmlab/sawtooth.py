"""Noiseless quantum sawtooth map dynamics and localization estimates.

One map step is ``U = D_kin F^-1 D_pot F`` in the momentum basis, where ``F``
is the unitary DFT with kernel ``omega**(j k) / sqrt(N)``, ``omega = exp(2 pi i / N)``,
taking momentum to position, and

    D_kin[p'] = exp(-i hbar (p' - N/2)**2 / 2)
    D_pot[q'] = exp(+i k beta**2 (q' - N/2)**2 / 2)

with ``hbar = 2 pi L / N`` and ``beta = 2 pi / N``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .qstate import StateVector

FORWARD = "forward"
BACKWARD = "backward"


def _check_direction(direction):
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")


@dataclass(frozen=True)
class QsmParams:
    n: int
    L: int
    k: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"qubit count must be a positive integer, got {self.n!r}")
        if int(self.L) != self.L or self.L < 1 or self.L % 2 == 0:
            raise ValueError(f"L must be a positive odd integer, got {self.L!r}")
        if not math.isfinite(self.k):
            raise ValueError("k must be finite")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "k", float(self.k))

    @property
    def N(self):
        return 2**self.n

    @property
    def hbar(self):
        return 2 * math.pi * self.L / self.N

    @property
    def beta(self):
        return 2 * math.pi / self.N

    @property
    def K(self):
        return self.hbar * self.k

    def with_k(self, k):
        return replace(self, k=float(k))


@dataclass(frozen=True)
class TimeScales:
    tau_E: float
    tau_H: float
    lambda_in: float


# -- substep unitaries -------------------------------------------------------


class Fourier:
    """``F`` (or ``F^-1`` when ``inverse``) acting on one axis via the FFT."""

    def __init__(self, inverse=False):
        self.inverse = inverse

    def apply(self, x, axis=0):
        if self.inverse:
            return np.fft.fft(x, axis=axis, norm="ortho")
        return np.fft.ifft(x, axis=axis, norm="ortho")

    def apply_conj(self, x, axis=0):
        # conj(F) = F^-1 for the symmetric DFT kernel
        return Fourier(not self.inverse).apply(x, axis)

    def conjugate(self, rho):
        return self.apply_conj(self.apply(rho, axis=-2), axis=-1)

    def dagger(self):
        return Fourier(not self.inverse)

    def matrix(self, N):
        j = np.arange(N)
        F = np.exp(2j * np.pi * np.outer(j, j) / N) / math.sqrt(N)
        return F.conj() if self.inverse else F


class Diagonal:
    """Diagonal unitary given by its unit-modulus entries."""

    def __init__(self, entries):
        self.entries = np.asarray(entries, dtype=complex)

    def apply(self, x, axis=0):
        shape = [1] * np.ndim(x)
        shape[axis] = -1
        return x * self.entries.reshape(shape)

    def apply_conj(self, x, axis=0):
        return Diagonal(self.entries.conj()).apply(x, axis)

    def conjugate(self, rho):
        d = self.entries
        return rho * d[:, None] * d.conj()[None, :]

    def dagger(self):
        return Diagonal(self.entries.conj())

    def matrix(self, N):
        return np.diag(self.entries)


class Dense:
    """Arbitrary dense unitary."""

    def __init__(self, U):
        self.U = np.asarray(U, dtype=complex)

    def apply(self, x, axis=0):
        return np.moveaxis(np.tensordot(self.U, x, axes=([1], [axis])), 0, axis)

    def apply_conj(self, x, axis=0):
        return Dense(self.U.conj()).apply(x, axis)

    def conjugate(self, rho):
        return self.U @ rho @ self.U.conj().T

    def dagger(self):
        return Dense(self.U.conj().T)

    def matrix(self, N):
        return self.U


def kinetic_phases(params):
    p = np.arange(params.N) - params.N // 2
    return np.exp(-1j * params.hbar * p.astype(float) ** 2 / 2)


def potential_phases(params, k=None):
    k = params.k if k is None else k
    q = np.arange(params.N) - params.N // 2
    return np.exp(1j * k * params.beta**2 * q.astype(float) ** 2 / 2)


def substeps(params, direction=FORWARD, k=None):
    """The four substep unitaries of one map step, in application order."""
    _check_direction(direction)
    kin = Diagonal(kinetic_phases(params))
    pot = Diagonal(potential_phases(params, k))
    fwd = [Fourier(), pot, Fourier(inverse=True), kin]
    if direction == FORWARD:
        return fwd
    return [u.dagger() for u in reversed(fwd)]


def build_step_operator(params, direction=FORWARD, k=None):
    """Dense one-step propagator; ``backward`` is its conjugate transpose."""
    _check_direction(direction)
    N = params.N
    U = np.eye(N, dtype=complex)
    for u in substeps(params, FORWARD, k):
        U = u.matrix(N) @ U
    return U if direction == FORWARD else U.conj().T


def apply_step(x, params, direction=FORWARD, k=None, axis=0):
    """FFT application of one map step to the ``axis`` dimension of ``x``."""
    for u in substeps(params, direction, k):
        x = u.apply(x, axis)
    return x


def evolve(state, params, steps, direction=FORWARD):
    """Apply ``steps`` map steps to a :class:`StateVector`."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if state.n != params.n:
        raise ValueError(f"state has n={state.n}, params have n={params.n}")
    U = build_step_operator(params, direction)
    psi = state.amplitudes
    for _ in range(steps):
        psi = U @ psi
    return StateVector(state.n, psi / np.linalg.norm(psi)) if steps else state


def momentum_distributions(state, params, times):
    """Momentum probabilities at each requested time (ascending), shape ``(len(times), N)``."""
    times = [int(t) for t in times]
    if sorted(times) != times or (times and times[0] < 0):
        raise ValueError("times must be ascending and non-negative")
    U = build_step_operator(params)
    psi = state.amplitudes.copy()
    out, t_now = [], 0
    for t in times:
        for _ in range(t - t_now):
            psi = U @ psi
        t_now = t
        out.append(np.abs(psi) ** 2)
    return np.array(out).reshape(len(times), params.N)


def inverse_participation(probs):
    return float(np.sum(np.asarray(probs) ** 2))


# -- localization theory -----------------------------------------------------


def diffusion_coefficient(K):
    """Classical diffusion coefficient, with the cantori-limited branch for K < 1."""
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    if K < 1:
        return 3.3 * K**2.5
    return math.pi**2 / 3 * K**2


def localization_length(params):
    if params.k <= 0:
        raise ValueError(f"k must be positive, got {params.k}")
    return diffusion_coefficient(params.K) / params.hbar**2


def k_loc(N, L):
    """Kick strength below which the localized peak stays the global maximum."""
    if N < 2 or L < 1:
        raise ValueError("need N >= 2 and L >= 1")
    return max(0.66 * N**0.5, 0.50 * N**0.6 * L**-0.2)


def time_scales(params, lambda_in):
    """Ehrenfest estimate ``ln(N)/lambda`` and Heisenberg estimate ``~ localization length``."""
    if not lambda_in > 0:
        raise ValueError(f"Lyapunov exponent must be positive, got {lambda_in}")
    return TimeScales(math.log(params.N) / lambda_in, localization_length(params), float(lambda_in))
