"""Dense statevector simulator.

Qubit ``b`` is addressed by bit ``b`` of the basis-state index (little
endian), so ``|q1 q0> = |10>`` is index 2. Gate kernels mutate the state in
place and return the same object.
"""
import numpy as np
from numba import njit

from .gates import check_gate

MAX_QUBITS = 24


class StateVector:
    """An ``n_qubits`` register stored as ``2**n_qubits`` complex amplitudes."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, n_qubits, amps):
        amps = np.asarray(amps, dtype=np.complex128)
        if amps.shape != (1 << n_qubits,):
            raise ValueError(
                f"expected {1 << n_qubits} amplitudes for {n_qubits} qubits, "
                f"got shape {amps.shape}")
        self.n_qubits = n_qubits
        self.amps = amps

    def norm(self):
        return float(np.vdot(self.amps, self.amps).real)

    def copy(self):
        return StateVector(self.n_qubits, self.amps.copy())

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def new_statevector(n_qubits):
    """All-zero register ``|0...0>``."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _check_qubit(sv, q):
    if not 0 <= q < sv.n_qubits:
        raise IndexError(f"qubit {q} out of range for {sv.n_qubits}-qubit register")


@njit(cache=True)
def _kernel_single(amps, g, q):
    stride = 1 << q
    half = amps.shape[0] >> 1
    g00, g01, g10, g11 = g[0, 0], g[0, 1], g[1, 0], g[1, 1]
    for k in range(half):
        # insert a zero at bit q
        i0 = ((k >> q) << (q + 1)) | (k & (stride - 1))
        i1 = i0 | stride
        a0 = amps[i0]
        a1 = amps[i1]
        amps[i0] = g00 * a0 + g01 * a1
        amps[i1] = g10 * a0 + g11 * a1


@njit(cache=True)
def _kernel_two(amps, g, qc, qt, controlled):
    lo = min(qc, qt)
    hi = max(qc, qt)
    bc = 1 << qc
    bt = 1 << qt
    quarter = amps.shape[0] >> 2
    idx = np.empty(4, dtype=np.int64)
    a = np.empty(4, dtype=np.complex128)
    for k in range(quarter):
        i = ((k >> lo) << (lo + 1)) | (k & ((1 << lo) - 1))
        i = ((i >> hi) << (hi + 1)) | (i & ((1 << hi) - 1))
        if controlled:
            i0 = i | bc
            i1 = i0 | bt
            a0 = amps[i0]
            a1 = amps[i1]
            amps[i0] = g[2, 2] * a0 + g[2, 3] * a1
            amps[i1] = g[3, 2] * a0 + g[3, 3] * a1
        else:
            idx[0] = i
            idx[1] = i | bt
            idx[2] = i | bc
            idx[3] = i | bc | bt
            for r in range(4):
                a[r] = amps[idx[r]]
            for r in range(4):
                acc = 0j
                for c in range(4):
                    acc += g[r, c] * a[c]
                amps[idx[r]] = acc


def apply_single(sv, g, q, check=True):
    """Apply a 2x2 unitary ``g`` to qubit ``q``."""
    _check_qubit(sv, q)
    g = check_gate(g, 2) if check else np.ascontiguousarray(g, dtype=np.complex128)
    _kernel_single(sv.amps, g, q)
    return sv


def _is_controlled(g):
    return (np.array_equal(g[:2, :2], np.eye(2))
            and not g[:2, 2:].any() and not g[2:, :2].any())


def apply_two(sv, g, q_control, q_target, check=True):
    """Apply a 4x4 unitary in (control, target) basis order.

    Controlled gates (identity on the control=0 block) only touch the half of
    the register where the control bit is set.
    """
    _check_qubit(sv, q_control)
    _check_qubit(sv, q_target)
    if q_control == q_target:
        raise IndexError("control and target must be distinct qubits")
    g = check_gate(g, 4) if check else np.ascontiguousarray(g, dtype=np.complex128)
    _kernel_two(sv.amps, g, q_control, q_target, _is_controlled(g))
    return sv


def expectation_z(sv, q):
    """Pauli-Z expectation of qubit ``q``: P(bit q = 0) - P(bit q = 1)."""
    _check_qubit(sv, q)
    n = sv.n_qubits
    probs = (sv.amps.real ** 2 + sv.amps.imag ** 2).reshape(1 << (n - q - 1), 2, 1 << q)
    return float(probs[:, 0, :].sum() - probs[:, 1, :].sum())
