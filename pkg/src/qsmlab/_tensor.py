"""Qubit-local tensor contractions on dense vectors, operators and batches of them.

Bit convention used throughout the package: basis index ``i = sum_j b_j 2**j``,
so qubit ``j`` is bit ``j`` (little-endian). A local matrix acting on the
ordered qubit tuple ``(q0, q1, ...)`` is indexed the same way,
``sub = b_q0 + 2 b_q1 + ...``.
"""

import numpy as np


def apply_local(x, mat, qubits, n, axis=0):
    """Multiply the ``axis`` dimension of ``x`` (length ``2**n``) by ``mat``
    embedded on ``qubits``. Other dimensions are carried along untouched."""
    k = len(qubits)
    x = np.moveaxis(np.asarray(x), axis, 0)
    rest = x.shape[1:]
    t = x.reshape((2,) * n + (-1,))
    # C-order reshape: tensor axis 0 is the most significant bit
    axes = [n - 1 - q for q in reversed(qubits)]
    m = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(m, t, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return np.moveaxis(out.reshape((2**n,) + rest), 0, axis)


def conjugate_local(rho, mat, qubits, n):
    """``rho -> G rho G^dagger`` for a (batch of) square operators, G local."""
    out = apply_local(rho, mat, qubits, n, axis=-2)
    return apply_local(out, np.conj(mat), qubits, n, axis=-1)


def qubit_view(rho, n, j):
    """View a ``(..., N, N)`` array as ``(..., hi, 2, lo, hi, 2, lo)`` around qubit j.

    Index ``[..., :, r, :, :, c, :]`` selects row bit ``r`` and column bit ``c``
    of qubit ``j``. The returned array shares memory with ``rho`` when possible.
    """
    hi, lo = 2 ** (n - 1 - j), 2**j
    return rho.reshape(rho.shape[:-2] + (hi, 2, lo, hi, 2, lo))


def bit_table(n):
    """``(N, n)`` integer array, entry ``[i, j]`` is bit ``j`` of ``i``."""
    idx = np.arange(2**n)
    return (idx[:, None] >> np.arange(n)[None, :]) & 1
