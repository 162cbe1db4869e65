"""Closed-form Lindblad fidelity decay for localized, superposition and
random-phase (diffusive) states, and their gate-based variants.

Rates ``nu1`` (relaxation) and ``nu2`` (pure dephasing) are per map step and
times are in map steps. All curves start at 1 and relax to ``1/2**n``.
"""

import enum
import math

import numpy as np

from .qstate import StateVector


class DynamicalRegime(str, enum.Enum):
    LOCALIZED = "localized"
    SUPERPOSITION = "superposition"
    DIFFUSIVE = "diffusive"
    SEMI_LOCALIZED = "semi-localized"


def as_regime(regime):
    try:
        return DynamicalRegime(regime)
    except ValueError:
        valid = ", ".join(r.value for r in DynamicalRegime)
        raise ValueError(f"unknown regime {regime!r}; expected one of {valid}") from None


def _rates(rates):
    nu1, nu2 = float(rates.nu1), float(rates.nu2)
    if nu1 < 0 or nu2 < 0:
        raise ValueError("rates must be non-negative")
    return nu1, nu2


def rate_single(regime, rates):
    """Initial per-qubit decay rate of the fidelity in the given regime."""
    nu1, nu2 = _rates(rates)
    regime = as_regime(regime)
    if regime is DynamicalRegime.LOCALIZED:
        return nu1 / 2
    if regime is DynamicalRegime.SUPERPOSITION:
        return (nu1 + nu2) / 4
    if regime is DynamicalRegime.DIFFUSIVE:
        return nu1 / 2 + nu2 / 4
    return nu1 / 2 + nu2 / 8


def f_localized(n, nu1, t):
    """Basis-state fidelity averaged over all ``2**n`` initial conditions."""
    t = np.asarray(t, dtype=float)
    return ((1 + np.exp(-nu1 * t)) / 2) ** n


def f_superposition(n, rates, t):
    """Fidelity of the uniform product superposition ``|+>**n``."""
    nu1, nu2 = _rates(rates)
    t = np.asarray(t, dtype=float)
    return ((1 + np.exp(-(nu1 + nu2) * t / 2)) / 2) ** n


def f_diffusive(n, rates, t):
    """Phase-averaged fidelity of a uniform-amplitude random-phase state."""
    nu1, nu2 = _rates(rates)
    t = np.asarray(t, dtype=float)
    a = np.exp(-nu1 * t)
    c = np.exp(-(nu1 + nu2) * t / 2)
    return ((1 + a + 2 * c) ** n - (1 + a) ** n) / 4.0**n + 0.5**n


def f_diffusive_sum(n, rates, t):
    """Element-counting form of :func:`f_diffusive`.

    Off-diagonal elements with ``k`` superposed qubits and ``l`` excited
    spectator qubits each contribute ``exp(-k (nu1+nu2) t/2 - l nu1 t) / 4**n``;
    the diagonal contributes ``1/2**n`` by trace preservation.
    """
    nu1, nu2 = _rates(rates)
    t = np.asarray(t, dtype=float)
    total = np.full_like(t, 0.5**n)
    for k in range(1, n + 1):
        inner = sum(math.comb(n - k, l) * np.exp(-l * nu1 * t) for l in range(n - k + 1))
        total = total + math.comb(n, k) * 2**k * np.exp(-k * (nu1 + nu2) * t / 2) * inner / 4.0**n
    return total


def f_semi_localized(n, rates, t):
    """Half-localized, half-diffusive step: geometric mean of the two forms."""
    nu1, _ = _rates(rates)
    return np.sqrt(f_localized(n, nu1, t) * f_diffusive(n, rates, t))


def f_regime(regime, n, rates, t):
    regime = as_regime(regime)
    if regime is DynamicalRegime.LOCALIZED:
        return f_localized(n, _rates(rates)[0], t)
    if regime is DynamicalRegime.SUPERPOSITION:
        return f_superposition(n, rates, t)
    if regime is DynamicalRegime.DIFFUSIVE:
        return f_diffusive(n, rates, t)
    return f_semi_localized(n, rates, t)


def fid_matrix_2q(phases, rates, t):
    """Elementwise product ``sigma * conj(rho)`` for a two-qubit random-phase state.

    ``rho`` has amplitudes ``(1, e^{i phi1}, e^{i phi2}, e^{i phi3}) / 2``; the
    entries sum to the fidelity at time ``t``. Only the gain-coupled elements
    (0,1) and (0,2) depend on the phases, through ``phi1 + phi2 - phi3``.
    """
    nu1, nu2 = _rates(rates)
    phi1, phi2, phi3 = phases
    a = math.exp(-nu1 * t)
    c1 = math.exp(-(nu1 + nu2) * t / 2)  # one superposed qubit
    c2 = math.exp(-(nu1 + nu2) * t)  # both qubits superposed
    c3 = math.exp(-(3 * nu1 + nu2) * t / 2)  # one superposed, one excited
    e = np.exp(1j * (phi1 + phi2 - phi3))
    gain = (1 + e) * c1 - e * c3
    m = np.zeros((4, 4), dtype=complex)
    m[0, 0] = 4 - 4 * a + a * a
    m[1, 1] = m[2, 2] = 2 * a - a * a
    m[3, 3] = a * a
    m[0, 1] = m[0, 2] = gain
    m[0, 3] = m[1, 2] = c2
    m[1, 3] = m[2, 3] = c3
    upper = np.triu_indices(4, 1)
    m[upper[1], upper[0]] = np.conj(m[upper])
    return m / 16


def random_phase_state(n, rng):
    """Uniform-amplitude state with i.i.d. uniform phases, the first one fixed to 0."""
    phases = rng.uniform(0.0, 2 * np.pi, size=2**n)
    phases[0] = 0.0
    return StateVector(n, np.exp(1j * phases) / math.sqrt(2**n))


def f_gate_based(t, n, M, rates, regime, layout="serial", n_eff=None):
    """Gate-based fidelity: decay only while two-qubit gates act.

    ``serial``: ``M`` gates per map step, each decaying 2 qubits for ``1/M``.
    ``parallel``: depth ``D = 2M/n_eff`` layers, each decaying ``n_eff`` qubits
    for ``1/D``. Both are mapped affinely onto the ``1/2**n`` floor.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    t = np.asarray(t, dtype=float)
    floor = 0.5**n
    if layout == "serial":
        per_gate = f_regime(regime, 2, rates, 1.0 / M)
        core = per_gate ** (M * t)
    elif layout == "parallel":
        if n_eff is None or not 2 <= n_eff <= n:
            raise ValueError(f"parallel layout needs 2 <= n_eff <= n, got n_eff={n_eff}")
        D = 2 * M / n_eff
        per_layer = f_regime(regime, n_eff, rates, 1.0 / D)
        core = per_layer ** (D * t)
    else:
        raise ValueError(f"layout must be 'serial' or 'parallel', got {layout!r}")
    return core * (1 - floor) + floor
