"""Gate-level compilation of the sawtooth map.

The logical circuit is built from ``H``, ``P`` and ``CP`` gates. Compilation
passes are pure ``Circuit -> Circuit`` functions:

* :func:`route` inserts SWAP pairs so two-qubit gates act on chain neighbours,
* :func:`lower_native` rewrites into ``{CNOT, RZ, SX, X}``,
* :func:`peephole` applies exact local cancellations until nothing changes.

Every pass preserves the circuit unitary up to a global phase.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._tensor import apply_local
from .sawtooth import BACKWARD, FORWARD, _check_direction

KINDS = ("H", "P", "CP", "SWAP", "CNOT", "RZ", "SX", "X")
BARRIER = "BARRIER"
PHASED = frozenset({"P", "CP", "RZ"})
TWO_QUBIT = frozenset({"CP", "SWAP", "CNOT"})
TOPOLOGIES = ("all-to-all", "linear")
MAX_DENSE_QUBITS = 10
ZERO_PHASE_TOL = 1e-12


def reduce_phase(phi):
    """Canonical angle in ``(-pi, pi]``."""
    phi = math.fmod(float(phi), 2 * math.pi)
    if phi > math.pi:
        phi -= 2 * math.pi
    elif phi <= -math.pi:
        phi += 2 * math.pi
    return phi + 0.0  # normalises -0.0


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple
    phase: float = 0.0

    def __post_init__(self):
        if self.kind == BARRIER:
            object.__setattr__(self, "qubits", ())
            object.__setattr__(self, "phase", 0.0)
            return
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        arity = 2 if self.kind in TWO_QUBIT else 1
        if len(qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise ValueError(f"{self.kind} needs distinct qubits, got {qubits}")
        if not math.isfinite(self.phase):
            raise ValueError("gate phase must be finite")
        phase = reduce_phase(self.phase) if self.kind in PHASED else 0.0
        object.__setattr__(self, "qubits", qubits)
        object.__setattr__(self, "phase", phase)

    @property
    def is_barrier(self):
        return self.kind == BARRIER

    def __str__(self):
        if self.is_barrier:
            return BARRIER
        fields = [str(q) for q in self.qubits]
        if self.kind in PHASED:
            fields.append(repr(self.phase))
        return f"{self.kind} {','.join(fields)}"


def barrier():
    return Gate(BARRIER, ())


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple = ()
    topology: str = "all-to-all"

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}, got {self.topology!r}")
        gates = tuple(self.gates)
        for g in gates:
            if any(q < 0 or q >= self.n for q in g.qubits):
                raise ValueError(f"gate {g} addresses a qubit outside [0, {self.n})")
            if self.topology == "linear" and len(g.qubits) == 2 and abs(g.qubits[0] - g.qubits[1]) != 1:
                raise ValueError(f"gate {g} is not nearest-neighbour on a linear chain")
        object.__setattr__(self, "gates", gates)

    def __len__(self):
        return len(self.gates)

    def __add__(self, other):
        if other.n != self.n:
            raise ValueError("cannot join circuits of different width")
        topo = "linear" if "linear" in (self.topology, other.topology) else "all-to-all"
        return Circuit(self.n, self.gates + other.gates, topo)


# -- construction --------------------------------------------------------------


def _qft_noswap(n):
    gates = []
    for j in reversed(range(n)):
        gates.append(Gate("H", (j,)))
        for m in reversed(range(j)):
            gates.append(Gate("CP", (j, m), math.pi / 2 ** (j - m)))
    return gates


def _phase_polynomial(n, coeff, qubit_of):
    """Gates for ``exp(i coeff (x - N/2)**2 / 2)`` up to global phase, where bit j
    of ``x`` lives on qubit ``qubit_of(j)``."""
    N = 2**n
    gates = []
    for j1 in range(n):
        for j2 in range(j1 + 1, n):
            gates.append(Gate("CP", (qubit_of(j1), qubit_of(j2)), coeff * 2.0 ** (j1 + j2)))
    for j in range(n):
        gates.append(Gate("P", (qubit_of(j),), coeff * 2.0 ** (2 * j - 1) - coeff * N * 2.0 ** (j - 1)))
    return gates


def _dagger_gates(gates):
    out = []
    for g in reversed(gates):
        if g.kind in PHASED:
            out.append(Gate(g.kind, g.qubits, -g.phase))
        elif g.kind == "SX":
            out += [Gate("SX", g.qubits), Gate("X", g.qubits)]
        else:
            out.append(g)
    return out


def adjoint(circuit):
    return Circuit(circuit.n, _dagger_gates(circuit.gates), circuit.topology)


def qsm_circuit(params, direction=FORWARD):
    """Logical circuit of one map step.

    The DFT pair is realised by the swap-free QFT, so the position register
    comes out bit-reversed and the potential-phase block addresses qubit
    ``n-1-j`` for bit ``j``.
    """
    _check_direction(direction)
    n = params.n
    qft = _qft_noswap(n)
    pot = _phase_polynomial(n, params.k * params.beta**2, lambda j: n - 1 - j)
    kin = _phase_polynomial(n, -params.hbar, lambda j: j)
    gates = qft + pot + _dagger_gates(qft) + kin
    if direction == BACKWARD:
        gates = _dagger_gates(gates)
    return Circuit(n, gates)


def repeat(circuit, steps):
    """``steps`` copies separated by barriers."""
    gates = []
    for s in range(steps):
        if s:
            gates.append(barrier())
        gates.extend(circuit.gates)
    return Circuit(circuit.n, gates, circuit.topology)


def compile_step(params, direction=FORWARD, topology="all-to-all", optimize=False):
    """Routed and lowered circuit for one map step, optionally peephole-optimised."""
    c = lower_native(route(qsm_circuit(params, direction), topology))
    return peephole(c) if optimize else c


def echo_circuit(params, topology="all-to-all", steps=1, optimize=False):
    """Forward ``steps`` map steps then backward ``steps``, barriers between map steps."""
    fwd = compile_step(params, FORWARD, topology, optimize)
    bwd = compile_step(params, BACKWARD, topology, optimize)
    return Circuit(params.n, repeat(fwd, steps).gates + (barrier(),) + repeat(bwd, steps).gates, fwd.topology)


# -- passes ------------------------------------------------------------------


def lower_native(circuit):
    """Rewrite into ``{CNOT, RZ, SX, X}``, exact up to global phase."""
    out = []
    for g in circuit.gates:
        k, q = g.kind, g.qubits
        if k == "H":
            out += [Gate("RZ", q, math.pi / 2), Gate("SX", q), Gate("RZ", q, math.pi / 2)]
        elif k == "P":
            out.append(Gate("RZ", q, g.phase))
        elif k == "CP":
            a, b = q
            out += [
                Gate("RZ", (b,), g.phase / 2),
                Gate("CNOT", (a, b)),
                Gate("RZ", (b,), -g.phase / 2),
                Gate("CNOT", (a, b)),
                Gate("RZ", (a,), g.phase / 2),
            ]
        elif k == "SWAP":
            a, b = q
            out += [Gate("CNOT", (a, b)), Gate("CNOT", (b, a)), Gate("CNOT", (a, b))]
        else:
            out.append(g)
    return Circuit(circuit.n, out, circuit.topology)


def route(circuit, topology="linear"):
    """Make every two-qubit gate nearest-neighbour on a linear chain.

    A gate on ``(a, b)`` with ``|a - b| > 1`` is conjugated by the SWAP ladder
    that walks ``a`` next to ``b``; the ladder is undone right after, so qubit
    identities at the end of the circuit are unchanged.
    """
    if topology not in TOPOLOGIES:
        raise ValueError(f"unsupported topology {topology!r}; expected one of {TOPOLOGIES}")
    if topology == "all-to-all":
        return Circuit(circuit.n, circuit.gates, circuit.topology)
    out = []
    for g in circuit.gates:
        if len(g.qubits) != 2 or abs(g.qubits[0] - g.qubits[1]) == 1:
            out.append(g)
            continue
        a, b = g.qubits
        step = 1 if b > a else -1
        ladder = [Gate("SWAP", tuple(sorted((x, x + step)))) for x in range(a, b - step, step)]
        moved = (b - step, b)
        out += ladder + [Gate(g.kind, moved, g.phase)] + ladder[::-1]
    return Circuit(circuit.n, out, "linear")


def _commutes_with_cnot(cnot, h):
    c, t = cnot.qubits
    if h.kind in ("RZ", "P"):
        return h.qubits[0] == c
    if h.kind in ("X", "SX"):
        return h.qubits[0] == t
    if h.kind == "CNOT":
        c2, t2 = h.qubits
        return (c2 == c and t2 != c) or (t2 == t and c2 != t)
    if h.kind == "CP":
        return t not in h.qubits
    return False


def _commutes_with_diag(g, h):
    q = g.qubits[0]
    if h.kind == "CNOT":
        return h.qubits[0] == q
    return h.kind in ("CP", "RZ", "P")


def _partner(g, h):
    """Action when ``h`` meets ``g`` on the wire: 'cancel', 'merge', or None."""
    if g.kind != h.kind:
        return None
    if g.kind == "CNOT" and g.qubits == h.qubits:
        return "cancel"
    if g.kind in ("SWAP",) and set(g.qubits) == set(h.qubits):
        return "cancel"
    if g.kind in ("H", "X") and g.qubits == h.qubits:
        return "cancel"
    if g.kind in ("RZ", "P", "SX") and g.qubits == h.qubits:
        return "merge"
    return None


def _find_partner(gates, i):
    g = gates[i]
    qs = set(g.qubits)
    for j in range(i + 1, len(gates)):
        h = gates[j]
        if h is None:
            continue
        if h.is_barrier:
            return None, None
        if not qs & set(h.qubits):
            continue
        action = _partner(g, h)
        if action:
            return j, action
        if g.kind == "CNOT" and _commutes_with_cnot(g, h):
            continue
        if g.kind in ("RZ", "P") and _commutes_with_diag(g, h):
            continue
        return None, None
    return None, None


def _wire_neighbour(gates, i, qs, step):
    j = i + step
    while 0 <= j < len(gates):
        h = gates[j]
        if h is not None and (h.is_barrier or qs & set(h.qubits)):
            return j
        j += step
    return None


def _swap_triplet_flip(gates, i):
    """Reorient a CNOT(a,b) CNOT(b,a) CNOT(a,b) run when the gate next to it on
    the wire pair is CNOT(b,a); the flipped run then cancels against it."""
    g = gates[i]
    if g.kind != "CNOT":
        return False
    a, b = g.qubits
    qs = {a, b}
    j1 = _wire_neighbour(gates, i, qs, 1)
    j2 = _wire_neighbour(gates, j1, qs, 1) if j1 is not None else None
    if j2 is None:
        return False
    if gates[j1].kind != "CNOT" or gates[j1].qubits != (b, a) or gates[j2] != g:
        return False
    after = _wire_neighbour(gates, j2, qs, 1)
    before = _wire_neighbour(gates, i, qs, -1)
    flip = Gate("CNOT", (b, a))
    for k in (after, before):
        if k is not None and gates[k] == flip:
            gates[i], gates[j1], gates[j2] = flip, g, flip
            return True
    return False


def _merge(g, h):
    if g.kind == "SX":
        return Gate("X", g.qubits)
    return Gate(g.kind, g.qubits, g.phase + h.phase)


def _drop_trivial(g):
    return g.kind in ("RZ", "P") and abs(g.phase) <= ZERO_PHASE_TOL


def peephole(circuit):
    """Exact local simplification run to a fixpoint.

    Cancels CNOT, SWAP, H and X pairs, merges RZ/P rotations and SX pairs,
    drops zero rotations, and flips SWAP-equivalent CNOT triplets when that
    exposes a cancellation. Rotations and CNOTs slide past gates they commute
    with; nothing crosses a barrier. CP gates are never removed.
    """
    gates = list(circuit.gates)
    changed = True
    while changed:
        changed = False
        for i in range(len(gates)):
            g = gates[i]
            if g is None or g.is_barrier:
                continue
            if _drop_trivial(g):
                gates[i] = None
                changed = True
                continue
            j, action = _find_partner(gates, i)
            if action == "cancel":
                gates[i] = gates[j] = None
                changed = True
            elif action == "merge":
                gates[i] = _merge(g, gates[j])
                gates[j] = None
                changed = True
            elif _swap_triplet_flip(gates, i):
                changed = True
        gates = [g for g in gates if g is not None]
    return Circuit(circuit.n, gates, circuit.topology)


# -- analysis ------------------------------------------------------------------


def gate_counts(circuit):
    """Per-kind census plus two-qubit totals and greedy two-qubit depth."""
    census = {k: 0 for k in KINDS}
    last = [0] * circuit.n
    depth = 0
    for g in circuit.gates:
        if g.is_barrier:
            continue
        census[g.kind] += 1
        if len(g.qubits) == 2:
            layer = max(last[q] for q in g.qubits) + 1
            for q in g.qubits:
                last[q] = layer
            depth = max(depth, layer)
    census["two_qubit"] = sum(census[k] for k in TWO_QUBIT)
    census["two_qubit_depth"] = depth
    return census


_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "SX": 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]]),
    # two-qubit index = b(q0) + 2 b(q1); CNOT control is q0
    "CNOT": np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def gate_matrix(g):
    if g.kind == "RZ":
        return np.diag([np.exp(-0.5j * g.phase), np.exp(0.5j * g.phase)])
    if g.kind == "P":
        return np.diag([1.0, np.exp(1j * g.phase)])
    if g.kind == "CP":
        return np.diag([1.0, 1.0, 1.0, np.exp(1j * g.phase)])
    return _FIXED[g.kind]


def to_unitary(circuit):
    """Dense unitary of the gate list (first gate applied first)."""
    if circuit.n > MAX_DENSE_QUBITS:
        raise ValueError(f"dense construction limited to n <= {MAX_DENSE_QUBITS}, got n={circuit.n}")
    U = np.eye(2**circuit.n, dtype=complex)
    for g in circuit.gates:
        if not g.is_barrier:
            U = apply_local(U, gate_matrix(g), g.qubits, circuit.n, axis=0)
    return U


def equiv_global_phase(U, V, tol=1e-10):
    """True when ``U = alpha V`` for a unit ``alpha`` to within ``tol`` elementwise."""
    U, V = np.asarray(U), np.asarray(V)
    if U.shape != V.shape:
        raise ValueError(f"shape mismatch {U.shape} vs {V.shape}")
    idx = np.unravel_index(np.argmax(np.abs(V)), V.shape)
    if abs(V[idx]) == 0:
        return bool(np.max(np.abs(U)) <= tol)
    ratio = U[idx] / V[idx]
    if ratio == 0:
        return False
    alpha = ratio / abs(ratio)
    return bool(np.max(np.abs(U - alpha * V)) <= tol)


# -- text format -------------------------------------------------------------


def dumps(circuit):
    lines = [f"n={circuit.n} topology={circuit.topology}"]
    lines += [str(g) for g in circuit.gates]
    return "\n".join(lines) + "\n"


def loads(text):
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty circuit text")
    header = dict(item.split("=", 1) for item in lines[0].split())
    try:
        n, topology = int(header["n"]), header["topology"]
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad circuit header {lines[0]!r}") from exc
    gates = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if ln == BARRIER:
            gates.append(barrier())
            continue
        try:
            kind, rest = ln.split(None, 1)
            fields = rest.split(",")
            if kind in PHASED:
                gates.append(Gate(kind, tuple(int(f) for f in fields[:-1]), float(fields[-1])))
            else:
                gates.append(Gate(kind, tuple(int(f) for f in fields)))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: cannot parse gate {ln!r}: {exc}") from exc
    return Circuit(n, gates, topology)
