import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from qsmlab.circuitgen import Circuit, Gate, compile_step, gate_counts, to_unitary
from qsmlab.closedform import f_localized
from qsmlab.krausgate import (
    CNOT_DURATION,
    GateNoiseConfig,
    NoisyCircuit,
    echo_kraus,
    run_noisy_circuit,
    thermal_kraus,
)
from qsmlab.lindblad import DecaySchedule, NoiseRates, Segment, evolve_master
from qsmlab.qstate import DensityMatrix, validate_density
from qsmlab.sawtooth import QsmParams

from conftest import random_density

AER_ROW = GateNoiseConfig(250e-6, 13.4e-6)


def _channel(ops, rho):
    return sum(K @ rho @ K.conj().T for K in ops)


def test_config_validation():
    with pytest.raises(ValueError, match="unphysical"):
        GateNoiseConfig(1e-4, 2.5e-4)
    with pytest.raises(ValueError):
        GateNoiseConfig(0.0, 1e-5)
    with pytest.raises(ValueError):
        GateNoiseConfig(1e-4, 1e-4, {"CNOT": -1.0})
    cfg = GateNoiseConfig(1e-4, 1e-4)
    assert cfg.duration("CNOT") == CNOT_DURATION
    assert cfg.duration("RZ") == 0.0
    assert cfg.duration("SX") == pytest.approx(35e-9)
    with pytest.raises(ValueError, match="no duration"):
        cfg.duration("CP")


@given(st.floats(1e-6, 1e-3), st.floats(0.05, 2.0), st.floats(0.0, 1e-4))
def test_completeness(T1, ratio, d):
    ops = thermal_kraus(T1, ratio * T1, d)
    total = sum(K.conj().T @ K for K in ops)
    assert np.max(np.abs(total - np.eye(2))) < 1e-12


def test_zero_duration_is_identity():
    ops = thermal_kraus(1e-4, 5e-5, 0.0)
    rho = random_density(np.random.default_rng(0), 1).elements
    assert np.max(np.abs(_channel(ops, rho) - rho)) < 1e-15


def test_kraus_matches_master_equation():
    T1, T2, d = 80e-6, 50e-6, 7e-6
    # rates for a unit-duration decay segment equivalent to d seconds
    nu1 = d / T1
    nu2 = 2 * d / T2 - nu1
    rng = np.random.default_rng(1)
    for _ in range(5):
        dm = random_density(rng, 1)
        ref = evolve_master(dm, DecaySchedule((Segment(None, 1.0),)), NoiseRates(nu1, nu2)).elements
        out = _channel(thermal_kraus(T1, T2, d), dm.elements)
        assert np.max(np.abs(out - ref)) < 1e-10
    one = np.diag([0.0, 1.0])
    assert _channel(thermal_kraus(T1, T2, d), one)[1, 1] == pytest.approx(math.exp(-d / T1), abs=1e-14)


def test_noiseless_config_reproduces_unitary():
    p = QsmParams(3, 1, 4.55)
    c = compile_step(p, topology="linear")
    dm = random_density(np.random.default_rng(2), 3)
    U = to_unitary(c)
    out = run_noisy_circuit(c, GateNoiseConfig.noiseless(), dm)
    assert np.max(np.abs(out.elements - U @ dm.elements @ U.conj().T)) < 1e-12


def test_single_cnot_on_11():
    T1 = 10e-6
    c = Circuit(2, [Gate("CNOT", (0, 1))])
    out = run_noisy_circuit(c, GateNoiseConfig(T1, T1), DensityMatrix(2, np.diag([0, 0, 0, 1.0])))
    a = math.exp(-CNOT_DURATION / T1)
    # CNOT (control qubit 0) maps |11> to qubit0=1, qubit1=0 -> index 1; qubit 0 then relaxes
    assert np.allclose(np.diag(out.elements).real, [1 - a, a, 0, 0], atol=1e-14)


def test_rz_only_circuit_has_no_decay():
    c = Circuit(2, [Gate("RZ", (0,), 0.4), Gate("RZ", (1,), -1.2)])
    dm = random_density(np.random.default_rng(3), 2)
    U = to_unitary(c)
    out = run_noisy_circuit(c, GateNoiseConfig(1e-7, 1e-7), dm)
    assert np.max(np.abs(out.elements - U @ dm.elements @ U.conj().T)) < 1e-14


def test_density_invariants_and_mismatch():
    c = compile_step(QsmParams(3, 1, 1.0), topology="linear", optimize=True)
    out = run_noisy_circuit(c, AER_ROW, random_density(np.random.default_rng(4), 3))
    assert validate_density(out).ok
    with pytest.raises(ValueError):
        run_noisy_circuit(c, AER_ROW, DensityMatrix.mixed(2))


def test_heisenberg_adjoint_duality():
    rng = np.random.default_rng(5)
    nc = NoisyCircuit(compile_step(QsmParams(3, 1, 2.0), topology="linear", optimize=True), AER_ROW)
    rho, O = random_density(rng, 3).elements, random_density(rng, 3).elements
    assert abs(np.trace(O.conj().T @ nc.apply(rho)) - np.trace(nc.apply_adjoint(O).conj().T @ rho)) < 1e-13


def test_echo_noiseless_is_one():
    s = echo_kraus(QsmParams(3, 1, 4.55), GateNoiseConfig.noiseless(), 3)
    assert np.max(np.abs(s.values - 1)) < 1e-12


def test_echo_gap_sign_aer_row():
    loc = echo_kraus(QsmParams(3, 1, 0.1), AER_ROW, 5)
    dif = echo_kraus(QsmParams(3, 1, 4.55), AER_ROW, 5)
    assert np.all(dif.values[1:] < loc.values[1:])
    assert loc.meta["cnot_per_step"] == 38
    assert np.all(np.diff(loc.values) < 0)


@pytest.mark.parametrize("topology", ["all-to-all", "linear"])
@pytest.mark.parametrize("ratio", [1.0, 2.0])
def test_k_zero_matches_localized_after_calibration(topology, ratio):
    s = echo_kraus(QsmParams(3, 1, 0.0), GateNoiseConfig(100e-6, ratio * 100e-6), 10, topology=topology)
    t = s.times

    def worst(nu1):
        return np.max(np.abs(f_localized(3, nu1, 2 * t) / s.values - 1))

    best = minimize_scalar(worst, bounds=(1e-4, 1.0), method="bounded")
    assert best.fun < 0.02


def test_echo_threads_and_meta():
    p = QsmParams(3, 1, 2.0)
    a = echo_kraus(p, AER_ROW, 3, threads=1)
    b = echo_kraus(p, AER_ROW, 3, threads=8)
    assert np.array_equal(a.values, b.values)
    assert a.meta["engine"] == "kraus" and a.meta["topology"] == "linear"
    with pytest.raises(ValueError):
        echo_kraus(p, AER_ROW, 0)
