"""State and density-matrix value types plus the fidelity primitives.

Momentum eigenvalues ``-N/2 <= p < N/2`` are stored at index ``p' = p + N/2``;
qubit ``j`` holds bit ``2**j`` of ``p'``.
"""

from dataclasses import dataclass, field
from typing import Any

import numpy as np

NORM_TOL = 1e-10
DM_TOL = 1e-9
# eigenvalues below this fraction of the largest are round-off and treated as zero
EIG_FLOOR = 1e-13


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_n(n, length):
    if n < 1 or 2**n != length:
        raise ValueError(f"dimension {length} is not 2**n for n={n}")


@dataclass(frozen=True)
class StateVector:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        if amps.ndim != 1:
            raise ValueError("amplitudes must be one-dimensional")
        _check_n(self.n, amps.size)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm!r} deviates from 1 by more than {NORM_TOL}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def N(self):
        return 2**self.n

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def density(self):
        return DensityMatrix(self.n, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Dense ``N x N`` density matrix.

    Construction only checks the shape so that defective matrices can still be
    inspected with :func:`validate_density`; call :meth:`check` to enforce the
    physical invariants.
    """

    n: int
    elements: np.ndarray

    def __post_init__(self):
        el = _frozen(self.elements)
        if el.ndim != 2 or el.shape[0] != el.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {el.shape}")
        _check_n(self.n, el.shape[0])
        object.__setattr__(self, "elements", el)

    @property
    def N(self):
        return 2**self.n

    @classmethod
    def mixed(cls, n):
        return cls(n, np.eye(2**n) / 2**n)

    def check(self, tol=DM_TOL):
        report = validate_density(self, tol)
        if not report.ok:
            raise ValueError(f"invalid density matrix: {report}")
        return self


@dataclass(frozen=True)
class DensityReport:
    trace_deviation: float
    hermiticity_deviation: float
    min_eigenvalue: float
    tol: float
    violations: tuple = ()

    @property
    def ok(self):
        return not self.violations


@dataclass(frozen=True)
class FidelitySeries:
    """Mean fidelity per time with its standard error.

    ``times`` counts map steps (forward-and-back steps for echo engines).
    """

    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        t = _frozen(self.times, float)
        v = _frozen(self.values, float)
        e = _frozen(self.stderr, float)
        if not (t.shape == v.shape == e.shape) or t.ndim != 1:
            raise ValueError("times, values and stderr must be 1-d arrays of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(e < 0):
            raise ValueError("standard errors must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stderr", e)

    def __len__(self):
        return self.times.size

    def window(self, t_lo, t_hi):
        """Sub-series with ``t_lo <= t <= t_hi``."""
        m = (self.times >= t_lo) & (self.times <= t_hi)
        return FidelitySeries(self.times[m], self.values[m], self.stderr[m], dict(self.meta))

    def check(self):
        """Raise if a value leaves ``[0, 1 + 3 stderr]`` (small round-off allowed)."""
        lo = self.values < -1e-12
        hi = self.values > 1 + 3 * self.stderr + 1e-9
        if np.any(lo | hi):
            raise ValueError("fidelity values outside [0, 1 + 3 stderr]")
        return self


def momentum_index(n, p):
    N = 2**n
    if not -N // 2 <= p < N // 2:
        raise ValueError(f"momentum p={p} outside the valid interval [{-N // 2}, {N // 2}) for n={n}")
    return int(p) + N // 2


def index_momentum(n, index):
    N = 2**n
    if not 0 <= index < N:
        raise ValueError(f"index {index} outside [0, {N})")
    return int(index) - N // 2


def basis_state(n, p):
    """Momentum eigenstate ``|p>`` as a :class:`StateVector`."""
    amps = np.zeros(2**n, dtype=complex)
    amps[momentum_index(n, p)] = 1.0
    return StateVector(n, amps)


def bitstring(n, index):
    """Ket label with qubit ``n-1`` leftmost, e.g. index 2 at n=3 -> ``'010'``."""
    return format(index, f"0{n}b")


def _as_matrix(x):
    if isinstance(x, DensityMatrix):
        return x.elements
    if isinstance(x, StateVector):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    return np.asarray(x, dtype=complex)


def fidelity_pure(psi, sigma):
    """``<psi|sigma|psi>``, i.e. the Frobenius product of sigma with ``|psi><psi|``."""
    s = _as_matrix(sigma)
    a = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex)
    if s.shape != (a.size, a.size):
        raise ValueError(f"dimension mismatch: state of length {a.size}, matrix {s.shape}")
    return float(np.real(np.vdot(a, s @ a)))


def _psd_sqrt(m, tol):
    m = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(m)
    if w.min() < -tol:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.where(w < EIG_FLOOR * max(w.max(), 1.0), 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity_uhlmann(rho, sigma, tol=DM_TOL):
    """``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2`` via clamped Hermitian square roots."""
    r, s = _as_matrix(rho), _as_matrix(sigma)
    if r.shape != s.shape:
        raise ValueError(f"dimension mismatch: {r.shape} vs {s.shape}")
    sr = _psd_sqrt(r, tol)
    inner = sr @ s @ sr
    inner = 0.5 * (inner + inner.conj().T)
    w = np.linalg.eigvalsh(inner)
    if w.min() < -tol:
        raise ValueError(f"sigma is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.where(w < EIG_FLOOR * max(w.max(), 1.0), 0.0, w)
    return float(np.sum(np.sqrt(w)) ** 2)


def validate_density(sigma, tol=DM_TOL):
    """Report trace, Hermiticity and positivity deviations of a density matrix."""
    m = _as_matrix(sigma)
    trace_dev = float(abs(np.trace(m) - 1.0))
    herm_dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    min_eig = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    violations = []
    if trace_dev > tol:
        violations.append("trace")
    if herm_dev > tol:
        violations.append("hermiticity")
    if min_eig < -tol:
        violations.append("positivity")
    return DensityReport(trace_dev, herm_dev, min_eig, tol, tuple(violations))


def series_from_samples(times, samples, meta=None):
    """Reduce a ``(samples, times)`` fidelity array to mean and standard error."""
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    if samples.shape[0] > 1:
        se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    else:
        se = np.zeros_like(mean)
    return FidelitySeries(np.asarray(times, float), mean, se, dict(meta or {}))


def symmetric_momenta(n):
    """The two momenta ``p = 0`` and ``p = -N/2`` mapped onto themselves by the map's symmetry."""
    return (0, -(2**n) // 2)


def resolve_ics(n, ic_set="all"):
    """Initial-condition momenta for a policy name or an explicit list.

    ``"all"`` gives every momentum in ascending order, ``"exclude-symmetric"``
    drops ``p = 0`` and ``p = -N/2``, and ``"symmetric"`` keeps only those two.
    """
    N = 2**n
    every = list(range(-N // 2, N // 2))
    if isinstance(ic_set, str):
        if ic_set == "all":
            return every
        if ic_set == "exclude-symmetric":
            sym = symmetric_momenta(n)
            return [p for p in every if p not in sym]
        if ic_set == "symmetric":
            return sorted(set(symmetric_momenta(n)))
        raise ValueError(f"unknown initial-condition policy {ic_set!r}")
    momenta = [int(p) for p in ic_set]
    if not momenta:
        raise ValueError("explicit initial-condition list is empty")
    for p in momenta:
        momentum_index(n, p)
    return momenta
