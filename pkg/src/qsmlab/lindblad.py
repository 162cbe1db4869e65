"""Markovian relaxation/dephasing master equation and the Lindblad echo engine.

Each active qubit ``j`` carries two collapse operators, ``sqrt(nu1) |0><1|_j``
(relaxation) and ``sqrt(nu2) |1><1|_j`` (pure dephasing). The dissipator is
applied in closed elementwise form: every qubit contributes a mask
(``0`` on ``|0><0|``, ``-nu1`` on ``|1><1|``, ``-(nu1+nu2)/2`` on coherences) plus
a gain term feeding ``|1><1|`` population back into ``|0><0|``.

By default a map step is split into its four substep unitaries, each applied
instantaneously and followed by a quarter step of pure decay. The
``whole-step`` split applies the full step unitary at once and then decays for
the whole step; it is the limit in which a basis state under a diagonal step
unitary never leaves the computational basis.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._tensor import qubit_view
from .qstate import DensityMatrix, basis_state, resolve_ics, series_from_samples, validate_density
from .sawtooth import BACKWARD, FORWARD, Dense, build_step_operator, substeps

METHODS = ("rk4", "exact")
MODES = ("continuous-all-qubits", "alternating-pairs")
SPLITS = ("substeps", "whole-step")
STEPS_PER_UNIT = 64
RICHARDSON_TOL = 1e-10
IC_CHUNK = 8


class IntegratorError(RuntimeError):
    """Fixed-step integration failed its self-check."""

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class NoiseRates:
    """Dimensionless rates per map step."""

    nu1: float
    nu2: float

    def __post_init__(self):
        for name in ("nu1", "nu2"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def T1(self):
        return math.inf if self.nu1 == 0 else 1.0 / self.nu1

    @property
    def T2(self):
        g = (self.nu1 + self.nu2) / 2
        return math.inf if g == 0 else 1.0 / g

    @property
    def zero(self):
        return self.nu1 == 0 and self.nu2 == 0


@dataclass(frozen=True)
class Segment:
    """Instantaneous unitary (optional) followed by ``duration`` of decay on ``active``.

    ``unitary`` may be ``None``, a dense matrix, or any substep object from
    :mod:`qsmlab.sawtooth`. ``active=None`` means every qubit.
    """

    unitary: object = None
    duration: float = 0.0
    active: tuple = None

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration!r}")
        if isinstance(self.unitary, np.ndarray):
            object.__setattr__(self, "unitary", Dense(self.unitary))
        if self.active is not None:
            object.__setattr__(self, "active", tuple(sorted({int(q) for q in self.active})))


@dataclass(frozen=True)
class DecaySchedule:
    """Ordered segments. When ``map_steps`` is given the durations must sum to it."""

    segments: tuple = field(default_factory=tuple)
    map_steps: float = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if self.map_steps is not None:
            total = sum(s.duration for s in segs)
            if abs(total - self.map_steps) > 1e-12:
                raise ValueError(f"segment durations sum to {total}, expected {self.map_steps}")

    def check(self, n):
        for s in self.segments:
            if s.active is not None and any(q < 0 or q >= n for q in s.active):
                raise ValueError(f"active qubits {s.active} not a subset of [0, {n})")
        return self


def collapse_ops(n, rates, active=None):
    """Dense weighted collapse operators (zero-rate channels omitted)."""
    active = range(n) if active is None else active
    lower = np.array([[0, 1], [0, 0]], dtype=complex)
    excited = np.array([[0, 0], [0, 1]], dtype=complex)
    ops = []
    for j in active:
        for weight, local in ((rates.nu1, lower), (rates.nu2, excited)):
            if weight > 0:
                # kron order: qubit n-1 is the leftmost factor
                op = np.kron(np.kron(np.eye(2 ** (n - 1 - j)), local), np.eye(2**j))
                ops.append(math.sqrt(weight) * op)
    return ops


def dissipator_reference(rho, ops):
    """``sum L rho L^+ - {L^+ L, rho}/2`` from explicit operators (test oracle)."""
    out = np.zeros_like(rho)
    for L in ops:
        LdL = L.conj().T @ L
        out += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
    return out


class _Decay:
    """Decay generator restricted to a set of active qubits."""

    def __init__(self, n, rates, active):
        self.n = n
        self.nu1, self.nu2 = rates.nu1, rates.nu2
        self.active = tuple(range(n)) if active is None else tuple(active)
        bits = (np.arange(2**n)[:, None] >> np.array(self.active)[None, :]) & 1
        r, c = bits[:, None, :], bits[None, :, :]
        per = np.where(r & c, -self.nu1, np.where(r ^ c, -(self.nu1 + self.nu2) / 2, 0.0))
        self.mask = per.sum(axis=-1)
        self._counts = ((r ^ c).sum(axis=-1), (r & c).sum(axis=-1))
        self._factors = {}

    def deriv(self, rho, adjoint=False):
        out = self.mask * rho
        if self.nu1:
            src, dst = (0, 1) if adjoint else (1, 0)
            for j in self.active:
                vo, vr = qubit_view(out, self.n, j), qubit_view(rho, self.n, j)
                vo[..., dst, :, :, dst, :] += self.nu1 * vr[..., src, :, :, src, :]
        return out

    def rk4(self, rho, duration, adjoint=False):
        steps = max(1, math.ceil(STEPS_PER_UNIT * duration - 1e-12))
        h = duration / steps
        for _ in range(steps):
            k1 = self.deriv(rho, adjoint)
            k2 = self.deriv(rho + 0.5 * h * k1, adjoint)
            k3 = self.deriv(rho + 0.5 * h * k2, adjoint)
            k4 = self.deriv(rho + h * k3, adjoint)
            rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        return rho

    def _factor(self, duration):
        """Elementwise part of the exact channel: coherence decay ``c`` per
        differing active bit and excited-population decay ``a`` per (1, 1) bit."""
        if self._factors.get("d") != duration:
            a = math.exp(-self.nu1 * duration)
            c = math.exp(-(self.nu1 + self.nu2) * duration / 2)
            coh = c ** self._counts[0]
            self._factors = {"d": duration, "a": a, "coh": coh, "both": coh * a ** self._counts[1]}
        return self._factors

    def exact(self, rho, duration, adjoint=False):
        # single-qubit channels on distinct qubits commute, so every scaling is
        # applied at once; the transfers then read the already-scaled blocks
        f = self._factor(duration)
        a = f["a"]
        rho = rho * (f["both"] if adjoint else f["coh"])
        if a < 1:
            for j in self.active:
                v = qubit_view(rho, self.n, j)
                if adjoint:
                    v[..., 1, :, :, 1, :] += (1 - a) * v[..., 0, :, :, 0, :]
                else:
                    v[..., 0, :, :, 0, :] += (1 - a) * v[..., 1, :, :, 1, :]
                    v[..., 1, :, :, 1, :] *= a
        return rho

    def apply(self, rho, duration, method="rk4", adjoint=False, richardson=False):
        if duration == 0 or (self.nu1 == 0 and self.nu2 == 0) or not self.active:
            return rho
        if method == "exact":
            return self.exact(rho, duration, adjoint)
        out = self.rk4(rho, duration, adjoint)
        if richardson:
            fine = rho
            steps = max(1, math.ceil(STEPS_PER_UNIT * duration - 1e-12))
            for _ in range(2 * steps):
                fine = self.rk4(fine, duration / (2 * steps), adjoint)
            err = float(np.max(np.abs(out - fine))) / 15
            if err > RICHARDSON_TOL:
                raise IntegratorError("RK4 Richardson check failed", err)
        return out


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def evolve_master(dm, schedule, rates, method="rk4", richardson=True):
    """Run a schedule on a density matrix; each segment is ``U . U^+`` then decay."""
    _check_method(method)
    schedule.check(dm.n)
    rho = np.array(dm.elements, dtype=complex)
    cache = {}
    for seg in schedule.segments:
        if seg.unitary is not None:
            rho = seg.unitary.conjugate(rho)
        if seg.duration > 0:
            key = seg.active
            if key not in cache:
                cache[key] = _Decay(dm.n, rates, seg.active)
            rho = cache[key].apply(rho, seg.duration, method, richardson=richardson)
    rho = 0.5 * (rho + rho.conj().T)
    out = DensityMatrix(dm.n, rho)
    report = validate_density(out)
    if report.trace_deviation > 1e-9:
        raise IntegratorError("trace not preserved", report.trace_deviation)
    return out


def segment_actives(n, mode):
    """Active-qubit set for each of the four substep segments of a map step."""
    if mode == "continuous-all-qubits":
        return [None] * 4
    if mode == "alternating-pairs":
        if n < 2:
            raise ValueError("alternating-pairs mode needs at least 2 qubits")
        return [(m % (n - 1), m % (n - 1) + 1) for m in range(4)]
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def step_schedule(params, direction=FORWARD, mode="continuous-all-qubits", k=None, split="substeps"):
    """One map step as four quarter-step decay segments.

    ``substeps``: each segment starts with one substep unitary.
    ``whole-step``: the first segment carries the full step unitary.
    """
    actives = segment_actives(params.n, mode)
    if split == "substeps":
        unitaries = substeps(params, direction, k)
    elif split == "whole-step":
        unitaries = [Dense(build_step_operator(params, direction, k)), None, None, None]
    else:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    segs = [Segment(u, 0.25, a) for u, a in zip(unitaries, actives)]
    return DecaySchedule(tuple(segs), map_steps=1.0)


class StepChannel:
    """A map-step channel (unitaries plus decay) usable forward or in the Heisenberg picture."""

    def __init__(self, params, rates, direction, mode, method, k=None, split="substeps"):
        _check_method(method)
        self.n = params.n
        self.method = method
        self.schedule = step_schedule(params, direction, mode, k, split)
        decays = {}
        self.parts = []
        for seg in self.schedule.segments:
            if seg.active not in decays:
                decays[seg.active] = _Decay(params.n, rates, seg.active)
            self.parts.append((seg.unitary, seg.duration, decays[seg.active]))

    def apply(self, rho, richardson=False):
        for u, dur, dec in self.parts:
            if u is not None:
                rho = u.conjugate(rho)
            rho = dec.apply(rho, dur, self.method, richardson=richardson)
        return rho

    def apply_adjoint(self, obs):
        for u, dur, dec in reversed(self.parts):
            obs = dec.apply(obs, dur, self.method, adjoint=True)
            if u is not None:
                obs = u.dagger().conjugate(obs)
        return obs


def basis_projectors(n, momenta):
    N = 2**n
    out = np.zeros((len(momenta), N, N), dtype=complex)
    for b, p in enumerate(momenta):
        i = int(np.argmax(basis_state(n, p).amplitudes.real))
        out[b, i, i] = 1.0
    return out


def trace_overlap(obs, rho):
    return np.einsum("bij,bij->b", obs.conj(), rho).real


def echo_fidelities(n, fwd, bwd_channels, momenta, t_max, richardson=False):
    """Per-IC echo fidelity ``f(t) = <p| B_1..B_t F^t(|p><p|) |p>`` for t = 0..t_max.

    Uses ``f(t) = Tr[O_t rho_t]`` with ``rho_t = F^t(rho_0)`` and
    ``O_t = B_t^*(O_{t-1})``, so the cost is linear in ``t_max``.
    ``fwd(t)`` and ``bwd_channels(s)`` return the channel for forward step ``t``
    and backward step ``s``.
    """
    rho = basis_projectors(n, momenta)
    obs = rho.copy()
    out = np.empty((len(momenta), t_max + 1))
    out[:, 0] = trace_overlap(obs, rho)
    for t in range(1, t_max + 1):
        rho = fwd(t).apply(rho, richardson=richardson and t == 1)
        obs = bwd_channels(t).apply_adjoint(obs)
        out[:, t] = trace_overlap(obs, rho)
    return out


def run_chunked(fn, items, threads=1, chunk=IC_CHUNK):
    """Apply ``fn`` to fixed-size chunks of ``items``; results come back in chunk order.

    Chunk boundaries do not depend on ``threads``, so results are bit-identical
    for any thread count.
    """
    chunks = [items[i : i + chunk] for i in range(0, len(items), chunk)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, chunks))
    return [fn(c) for c in chunks]


def echo_lindblad(
    params,
    rates,
    t_max,
    mode="continuous-all-qubits",
    ic_set="all",
    method="rk4",
    threads=1,
    richardson=True,
    split="substeps",
):
    """Forward-and-back Loschmidt echo under continuous decay.

    Returns a :class:`FidelitySeries` over ``t_fb = 0..t_max`` averaged over the
    initial momentum eigenstates in ``ic_set``; the standard error is the spread
    across initial conditions.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    momenta = resolve_ics(params.n, ic_set)
    fwd = StepChannel(params, rates, FORWARD, mode, method, split=split)
    bwd = StepChannel(params, rates, BACKWARD, mode, method, split=split)

    def work(chunk):
        return echo_fidelities(params.n, lambda t: fwd, lambda t: bwd, chunk, t_max, richardson and method == "rk4")

    samples = np.concatenate(run_chunked(work, momenta, threads))
    meta = {
        "engine": "lindblad",
        "n": params.n,
        "L": params.L,
        "k": params.k,
        "nu1": rates.nu1,
        "nu2": rates.nu2,
        "mode": mode,
        "method": method,
        "split": split,
        "ic_set": [int(p) for p in momenta],
        "time_axis": "t_fb",
    }
    return series_from_samples(np.arange(t_max + 1), samples, meta)
