import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsmlab.qstate import (
    DensityMatrix,
    FidelitySeries,
    StateVector,
    basis_state,
    bitstring,
    fidelity_pure,
    fidelity_uhlmann,
    index_momentum,
    momentum_index,
    resolve_ics,
    series_from_samples,
    validate_density,
)

from conftest import random_density, random_state


def test_basis_state_little_endian():
    s = basis_state(3, -2)
    assert np.argmax(np.abs(s.amplitudes)) == 2
    assert bitstring(3, 2) == "010"
    assert momentum_index(3, -4) == 0
    assert bitstring(3, 0) == "000"


def test_basis_state_out_of_range_names_interval():
    with pytest.raises(ValueError, match=r"\[-4, 4\)"):
        basis_state(3, 4)


@given(st.integers(1, 7), st.data())
def test_momentum_index_round_trip(n, data):
    N = 2**n
    p = data.draw(st.integers(-N // 2, N // 2 - 1))
    assert index_momentum(n, momentum_index(n, p)) == p


def test_momentum_index_is_bijection():
    for n in range(1, 8):
        N = 2**n
        idx = {momentum_index(n, p) for p in range(-N // 2, N // 2)}
        assert idx == set(range(N))


def test_state_vector_rejects_bad_norm_and_length():
    with pytest.raises(ValueError):
        StateVector(1, [1.0, 1.0])
    with pytest.raises(ValueError):
        StateVector(2, [1.0, 0, 0])


def test_fidelity_pure_trivial_cases():
    psi = basis_state(1, -1)  # index 0
    assert fidelity_pure(psi, DensityMatrix(1, np.diag([0.7, 0.3]))) == pytest.approx(0.7)
    assert fidelity_pure(psi, DensityMatrix.mixed(1)) == pytest.approx(0.5)
    assert fidelity_pure(basis_state(3, 1), DensityMatrix.mixed(3)) == pytest.approx(1 / 8)


def test_fidelity_pure_self_overlap(rng):
    for _ in range(100):
        psi = random_state(rng, int(rng.integers(1, 5)))
        assert abs(fidelity_pure(psi, psi.density()) - 1) < 1e-12


def test_fidelity_pure_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        fidelity_pure(basis_state(2, 0), DensityMatrix.mixed(3))


def test_uhlmann_examples():
    zero = np.diag([1.0, 0.0])
    one = np.diag([0.0, 1.0])
    plus = np.full((2, 2), 0.5)
    assert fidelity_uhlmann(zero, one) == pytest.approx(0.0, abs=1e-12)
    assert fidelity_uhlmann(plus, np.eye(2) / 2) == pytest.approx(0.5, abs=1e-12)


def test_uhlmann_identity_and_symmetry(rng):
    for n in (1, 2, 3):
        a, b = random_density(rng, n), random_density(rng, n)
        assert fidelity_uhlmann(a, a) == pytest.approx(1.0, abs=1e-8)
        assert fidelity_uhlmann(a, b) == pytest.approx(fidelity_uhlmann(b, a), abs=1e-8)


@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_uhlmann_reduces_to_pure_for_projectors(n, seed):
    rng = np.random.default_rng(seed)
    psi = random_state(rng, n)
    sigma = random_density(rng, n)
    assert abs(fidelity_uhlmann(psi.density(), sigma) - fidelity_pure(psi, sigma)) < 1e-8


def test_uhlmann_rejects_indefinite():
    with pytest.raises(ValueError, match="semidefinite"):
        fidelity_uhlmann(np.diag([1.1, -0.1]), np.eye(2) / 2)


def test_validate_density_flags():
    assert validate_density(DensityMatrix.mixed(2)).ok
    r = validate_density(np.diag([0.51, 0.5]))
    assert r.violations == ("trace",)
    r = validate_density(np.diag([1.001, -1e-3]))
    assert "positivity" in r.violations
    r = validate_density(np.array([[0.5, 0.1], [0.0, 0.5]]))
    assert "hermiticity" in r.violations


def test_density_check_raises():
    with pytest.raises(ValueError, match="invalid density"):
        DensityMatrix(1, np.diag([0.8, 0.3])).check()


def test_fidelity_series_invariants():
    with pytest.raises(ValueError, match="increasing"):
        FidelitySeries([0, 0], [1, 1], [0, 0])
    with pytest.raises(ValueError):
        FidelitySeries([0, 1], [1, 1], [0, -1])
    s = FidelitySeries([0, 1, 2], [1.0, 0.9, 0.8], [0, 0.01, 0.01], {"n": 3})
    w = s.window(1, 2)
    assert list(w.times) == [1, 2] and w.meta["n"] == 3
    with pytest.raises(ValueError):
        FidelitySeries([0, 1], [1.0, 1.2], [0, 0.01]).check()


def test_series_from_samples_stderr():
    samples = np.array([[1.0, 0.5], [1.0, 0.7]])
    s = series_from_samples([0, 1], samples)
    assert s.values[1] == pytest.approx(0.6)
    assert s.stderr[1] == pytest.approx(np.std([0.5, 0.7], ddof=1) / np.sqrt(2))
    assert s.stderr[0] == 0


def test_resolve_ics():
    assert resolve_ics(3, "all") == list(range(-4, 4))
    assert resolve_ics(3, "exclude-symmetric") == [-3, -2, -1, 1, 2, 3]
    assert len(resolve_ics(6, "exclude-symmetric")) == 62
    assert resolve_ics(3, "symmetric") == [-4, 0]
    assert resolve_ics(3, [2, -2]) == [2, -2]
    with pytest.raises(ValueError):
        resolve_ics(3, "nope")
    with pytest.raises(ValueError):
        resolve_ics(3, [9])
    with pytest.raises(ValueError):
        resolve_ics(3, [])
