"""Unitary matrices for the gates used by the hybrid model.

All constructors return fresh read-only ``complex128`` arrays. Two-qubit
matrices use (control, target) basis order with the control as the high bit
of the 2-bit block index, i.e. rows/columns are ``|00>, |01>, |10>, |11>``.
"""
import math

import numpy as np

UNITARY_TOL = 1e-10


class GateError(ValueError):
    """Raised for malformed or non-unitary gate matrices."""


def _frozen(m):
    m = np.asarray(m, dtype=np.complex128)
    m.setflags(write=False)
    return m


def _check_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


def pauli_x():
    return _frozen([[0, 1], [1, 0]])


def hadamard():
    r = 1 / math.sqrt(2)
    return _frozen([[r, r], [r, -r]])


def rx(theta):
    """Rotation about the x axis, ``exp(-i theta X / 2)``."""
    _check_finite("theta", theta)
    c = math.cos(theta / 2)
    s = math.sin(theta / 2)
    return _frozen([[c, -1j * s], [-1j * s, c]])


def cnot():
    return _frozen([[1, 0, 0, 0],
                    [0, 1, 0, 0],
                    [0, 0, 0, 1],
                    [0, 0, 1, 0]])


_QUARTER_TURNS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


def _cos_sin_half_pi(z):
    # integer z is snapped to exact values so CNOT**1 is exactly CNOT
    if float(z).is_integer():
        return _QUARTER_TURNS[int(z) % 4]
    return math.cos(math.pi * z / 2), math.sin(math.pi * z / 2)


def _cnot_pow_block(z):
    c, s = _cos_sin_half_pi(z)
    g = complex(c, s)
    return np.array([[g * c, -1j * g * s],
                     [-1j * g * s, g * c]])


def cnot_pow(z):
    """Fractional power of CNOT, ``CNOT**z``.

    The lower-right (control = 1) block is ``g * [[c, -i s], [-i s, c]]`` with
    ``c = cos(pi z / 2)``, ``s = sin(pi z / 2)`` and ``g = exp(i pi z / 2)``.
    The global phase ``g`` is kept. ``z = 0`` is the identity, ``z = 1`` is
    CNOT, and the family has period 4 in ``z``.
    """
    _check_finite("z", z)
    m = np.eye(4, dtype=np.complex128)
    m[2:, 2:] = _cnot_pow_block(z)
    return _frozen(m)


def cnot_pow_derivative(z):
    """Elementwise derivative ``d cnot_pow(z) / dz`` (not unitary)."""
    _check_finite("z", z)
    h = math.pi / 2
    c, s = _cos_sin_half_pi(z)
    g = complex(c, s)
    rot = np.array([[c, -1j * s], [-1j * s, c]])
    drot = h * np.array([[-s, -1j * c], [-1j * c, -s]])
    m = np.zeros((4, 4), dtype=np.complex128)
    m[2:, 2:] = 1j * h * g * rot + g * drot
    return _frozen(m)


def is_unitary(g, tol=UNITARY_TOL):
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        return False
    return bool(np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0]))) <= tol)


def check_gate(g, dim, tol=UNITARY_TOL):
    """Validate shape and unitarity; returns ``g`` as a complex array."""
    g = np.ascontiguousarray(g, dtype=np.complex128)
    if g.shape != (dim, dim):
        raise GateError(f"expected a {dim}x{dim} gate, got shape {g.shape}")
    if not is_unitary(g, tol):
        raise GateError("gate matrix is not unitary")
    return g
