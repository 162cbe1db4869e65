"""Gate-based noisy circuit simulation with thermal-relaxation Kraus channels.

Every gate is applied as an ideal unitary and then each qubit it touches
relaxes for the gate's duration: excited population decays by ``exp(-d/T1)``
and coherences by ``exp(-d/T2)``. Qubits not touched by a gate are left alone.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._tensor import conjugate_local
from .circuitgen import compile_step, gate_matrix
from .lindblad import trace_overlap, basis_projectors, run_chunked
from .qstate import DensityMatrix, resolve_ics, series_from_samples
from .sawtooth import BACKWARD, FORWARD

CNOT_DURATION = 350e-9
SINGLE_QUBIT_DURATION = 35e-9


def default_durations():
    return {"CNOT": CNOT_DURATION, "SX": SINGLE_QUBIT_DURATION, "X": SINGLE_QUBIT_DURATION, "RZ": 0.0}


def _check_times(T1, T2):
    if not T1 > 0 or not T2 > 0:
        raise ValueError(f"T1 and T2 must be positive, got T1={T1}, T2={T2}")
    if T2 > 2 * T1:
        raise ValueError(f"unphysical relaxation times: T2={T2} exceeds 2*T1={2 * T1}")


@dataclass(frozen=True)
class GateNoiseConfig:
    """Physical relaxation times (seconds) and per-kind gate durations (seconds)."""

    T1: float
    T2: float
    durations: dict = field(default_factory=default_durations)

    def __post_init__(self):
        _check_times(self.T1, self.T2)
        for kind, d in self.durations.items():
            if not (d >= 0 and math.isfinite(d)):
                raise ValueError(f"duration for {kind} must be finite and >= 0, got {d!r}")
        object.__setattr__(self, "durations", dict(self.durations))

    def duration(self, kind):
        try:
            return self.durations[kind]
        except KeyError:
            raise ValueError(f"no duration configured for gate kind {kind!r}") from None

    @classmethod
    def noiseless(cls):
        return cls(math.inf, math.inf)


def thermal_kraus(T1, T2, d):
    """Kraus operators of zero-temperature relaxation over duration ``d``.

    ``K0 = diag(1, e^{-d/T2})``, ``K1 = sqrt(1 - e^{-d/T1}) |0><1|`` and
    ``K2 = diag(0, sqrt(e^{-d/T1} - e^{-2d/T2}))``; the last one carries the
    pure-dephasing part and needs ``T2 <= 2 T1``.
    """
    _check_times(T1, T2)
    if d < 0:
        raise ValueError("duration must be non-negative")
    a = math.exp(-d / T1)
    c = math.exp(-d / T2)
    ops = [
        np.diag([1.0, c]).astype(complex),
        np.array([[0.0, math.sqrt(max(1.0 - a, 0.0))], [0.0, 0.0]], dtype=complex),
        np.diag([0.0, math.sqrt(max(a - c * c, 0.0))]).astype(complex),
    ]
    return [K for K in ops if np.any(K)]


def _apply_kraus(rho, ops, q, n, adjoint=False):
    out = np.zeros_like(rho)
    for K in ops:
        out += conjugate_local(rho, K.conj().T if adjoint else K, (q,), n)
    return out


class NoisyCircuit:
    """A circuit paired with its per-gate channels, ready to run on batches."""

    def __init__(self, circuit, cfg):
        self.n = circuit.n
        self.ops = []
        cache = {}
        for g in circuit.gates:
            if g.is_barrier:
                continue
            d = cfg.duration(g.kind)
            if d not in cache:
                cache[d] = [] if d == 0 or math.isinf(cfg.T1) and math.isinf(cfg.T2) else thermal_kraus(cfg.T1, cfg.T2, d)
            self.ops.append((gate_matrix(g), g.qubits, cache[d]))

    def apply(self, rho):
        n = self.n
        for U, qs, kraus in self.ops:
            rho = conjugate_local(rho, U, qs, n)
            if kraus:
                for q in qs:
                    rho = _apply_kraus(rho, kraus, q, n)
        return rho

    def apply_adjoint(self, obs):
        n = self.n
        for U, qs, kraus in reversed(self.ops):
            if kraus:
                for q in reversed(qs):
                    obs = _apply_kraus(obs, kraus, q, n, adjoint=True)
            obs = conjugate_local(obs, U.conj().T, qs, n)
        return obs


def run_noisy_circuit(circuit, cfg, dm0):
    """Run a native circuit gate by gate with relaxation after each gate."""
    if dm0.n != circuit.n:
        raise ValueError(f"state has n={dm0.n}, circuit has n={circuit.n}")
    rho = NoisyCircuit(circuit, cfg).apply(np.array(dm0.elements, dtype=complex))
    return DensityMatrix(circuit.n, 0.5 * (rho + rho.conj().T))


def echo_kraus(params, cfg, t_max, ic_set="all", topology="linear", optimize=True, threads=1):
    """Forward-and-back echo through compiled noisy circuits.

    ``t_fb`` forward step circuits are followed by ``t_fb`` backward ones; the
    fidelity against the initial basis state is averaged over ``ic_set``.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    momenta = resolve_ics(params.n, ic_set)
    fwd_c = compile_step(params, FORWARD, topology, optimize)
    bwd_c = compile_step(params, BACKWARD, topology, optimize)
    fwd, bwd = NoisyCircuit(fwd_c, cfg), NoisyCircuit(bwd_c, cfg)

    def work(chunk):
        rho = basis_projectors(params.n, chunk)
        obs = rho.copy()
        out = np.empty((len(chunk), t_max + 1))
        out[:, 0] = trace_overlap(obs, rho)
        for t in range(1, t_max + 1):
            rho = fwd.apply(rho)
            obs = bwd.apply_adjoint(obs)
            out[:, t] = trace_overlap(obs, rho)
        return out

    samples = np.concatenate(run_chunked(work, momenta, threads))
    cnots = sum(1 for g in fwd_c.gates if g.kind == "CNOT")
    meta = {
        "engine": "kraus",
        "n": params.n,
        "L": params.L,
        "k": params.k,
        "T1_s": cfg.T1,
        "T2_s": cfg.T2,
        "durations_s": dict(cfg.durations),
        "topology": topology,
        "optimized": bool(optimize),
        "cnot_per_step": cnots,
        "ic_set": [int(p) for p in momenta],
        "time_axis": "t_fb",
    }
    return series_from_samples(np.arange(t_max + 1), samples, meta)
