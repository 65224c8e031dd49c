"""Star-topology parametrized circuits and the hybrid quantum model.

Each PQC has 16 data qubits (one per pixel of a 4x4 chunk) and one readout
qubit. The circuit is

    X(readout); Rx(pi * x_p)(data p) for all p;
    CNOT**z_j(control=data j, target=readout) for j in gate_order;
    measure <Z> on the readout.

Because every data qubit touches the readout exactly once, the readout
expectation has the closed form

    <Z> = -Re prod_j [(1 - p_j) + p_j * exp(i pi z_j)],   p_j = sin^2(theta_j / 2)

which is what the ``analytic`` backend evaluates. The ``statevector`` backend
simulates the 17-qubit register explicitly.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import gates
from .nn import N_CLASSES, DenseLayer, cce_loss, one_hot, softmax_cce_grad
from .qsim import apply_single, apply_two, expectation_z, new_statevector

CHUNK_PIXELS = 16
N_CHUNKS = 4
N_LAYERS = 2
N_PQC = N_LAYERS * N_CHUNKS
BACKENDS = ("analytic", "statevector")


class EncodingError(ValueError):
    pass


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class PqcLayout:
    """Qubit wiring of one PQC.

    ``gate_order`` lists pixel slots ``j``; slot ``j`` uses ``z[j]`` and is
    controlled by ``data_qubits[j]``.
    """
    data_qubits: tuple = tuple(range(CHUNK_PIXELS))
    readout_qubit: int = CHUNK_PIXELS
    gate_order: tuple = tuple(range(CHUNK_PIXELS))

    def __post_init__(self):
        if len(self.data_qubits) != CHUNK_PIXELS:
            raise ValueError(f"need {CHUNK_PIXELS} data qubits")
        wires = set(self.data_qubits) | {self.readout_qubit}
        if len(wires) != CHUNK_PIXELS + 1:
            raise ValueError("data and readout qubits must be distinct")
        if sorted(self.gate_order) != list(range(CHUNK_PIXELS)):
            raise ValueError("gate_order must be a permutation of the pixel slots")

    @property
    def n_qubits(self):
        return max(max(self.data_qubits), self.readout_qubit) + 1


DEFAULT_LAYOUT = PqcLayout()


def encode_chunk(chunk):
    """Rotation angles ``pi * x`` for a 4x4 chunk, raster order."""
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.shape != (4, 4):
        raise EncodingError(f"chunk must be 4x4, got {chunk.shape}")
    if np.any(chunk < 0) or np.any(chunk > 1) or not np.all(np.isfinite(chunk)):
        raise EncodingError("pixel values must lie in [0, 1]")
    return np.pi * chunk.reshape(CHUNK_PIXELS)


def encode_chunk_binary(chunk, threshold=0.5):
    """X-gate style encoding: ``pi`` where the pixel exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.shape != (4, 4):
        raise EncodingError(f"chunk must be 4x4, got {chunk.shape}")
    return np.where(chunk.reshape(CHUNK_PIXELS) > threshold, np.pi, 0.0)


def control_probs(angles):
    """Probability that each data qubit is found in |1> after Rx(theta)."""
    return np.sin(np.asarray(angles) / 2) ** 2


# --- statevector backend ------------------------------------------------------

def _prepare(angles, layout):
    sv = new_statevector(layout.n_qubits)
    apply_single(sv, gates.pauli_x(), layout.readout_qubit, check=False)
    for q, theta in zip(layout.data_qubits, angles):
        apply_single(sv, gates.rx(float(theta)), q, check=False)
    return sv


def pqc_forward_statevector(angles, params, layout=DEFAULT_LAYOUT):
    """Readout ``<Z>`` from a full simulation of the PQC register."""
    sv = _prepare(angles, layout)
    for j in layout.gate_order:
        apply_two(sv, gates.cnot_pow(float(params[j])), layout.data_qubits[j],
                  layout.readout_qubit, check=False)
    return expectation_z(sv, layout.readout_qubit)


def pqc_value_and_grad_statevector(angles, params, layout=DEFAULT_LAYOUT):
    """``<Z>`` and ``d<Z>/dz`` by adjoint differentiation on the statevector."""
    r = layout.readout_qubit
    psi = _prepare(angles, layout)
    for j in layout.gate_order:
        apply_two(psi, gates.cnot_pow(float(params[j])), layout.data_qubits[j], r,
                  check=False)
    value = expectation_z(psi, r)

    # lam = Z_r |psi>
    lam = psi.copy()
    apply_single(lam, np.diag([1.0, -1.0]).astype(complex), r, check=False)
    grad = np.zeros(CHUNK_PIXELS)
    for j in reversed(layout.gate_order):
        q = layout.data_qubits[j]
        z = float(params[j])
        apply_two(psi, gates.cnot_pow(z).conj().T, q, r, check=False)
        mu = psi.copy()
        apply_two(mu, gates.cnot_pow_derivative(z), q, r, check=False)
        # d<psi|Z|psi> = 2 Re <lam| dU |psi_before>
        grad[j] = 2.0 * np.vdot(lam.amps, mu.amps).real
        apply_two(lam, gates.cnot_pow(z).conj().T, q, r, check=False)
    return value, grad


# --- analytic backend -----------------------------------------------------------

def _factors(p, z):
    return (1.0 - p) + p * np.exp(1j * np.pi * z)


def analytic_value_and_grad(p, z):
    """Batched closed form over the last axis.

    ``p`` and ``z`` broadcast to ``(..., 16)``. Returns ``(values, grads)``
    with shapes ``(...)`` and ``(..., 16)``. Products that exclude one factor
    come from prefix/suffix cumulative products, so zero factors are safe.
    """
    p, z = np.broadcast_arrays(np.asarray(p, dtype=np.float64),
                               np.asarray(z, dtype=np.float64))
    f = _factors(p, z)
    ones = np.ones(f.shape[:-1] + (1,), dtype=complex)
    prefix = np.concatenate([ones, np.cumprod(f[..., :-1], axis=-1)], axis=-1)
    suffix = np.concatenate([np.cumprod(f[..., :0:-1], axis=-1)[..., ::-1], ones], axis=-1)
    total = prefix[..., -1] * f[..., -1]
    df = p * (1j * np.pi) * np.exp(1j * np.pi * z)
    grads = -(prefix * suffix * df).real
    return -total.real, grads


def pqc_forward_analytic(angles, params):
    p = control_probs(angles)
    return float(-np.prod(_factors(p, np.asarray(params, dtype=np.float64))).real)


def pqc_gradient(angles, params):
    """Exact ``d<Z>/dz_j`` from the closed form."""
    _, g = analytic_value_and_grad(control_probs(angles), params)
    return g


# --- hybrid model -------------------------------------------------------------

class QuantumModel:
    """Two parallel layers of four PQCs followed by a dense softmax head.

    Chunk ``k`` (TL, TR, BL, BR) feeds PQC ``k`` of layer A and PQC ``4 + k``
    of layer B; each PQC has its own 16 exponents.
    """

    kind = "quantum"

    def __init__(self, z, head, backend="analytic", threads=1, layout=DEFAULT_LAYOUT):
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (N_PQC, CHUNK_PIXELS):
            raise ParameterError(f"expected z of shape {(N_PQC, CHUNK_PIXELS)}, got {z.shape}")
        if head.weights.shape != (N_CLASSES, N_PQC) or head.activation != "softmax":
            raise ParameterError("head must be a dense 8 -> 10 softmax layer")
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.z = z
        self.head = head
        self.backend = backend
        self.threads = threads
        self.layout = layout

    @classmethod
    def init(cls, rng, backend="analytic", threads=1):
        z = rng.uniform(0.0, 1.0, size=(N_PQC, CHUNK_PIXELS))
        head = DenseLayer.init(rng, N_PQC, N_CLASSES, "softmax")
        return cls(z, head, backend=backend, threads=threads)

    @property
    def params(self):
        return {"z": self.z, "head.W": self.head.weights, "head.b": self.head.biases}

    @property
    def n_params(self):
        return self.z.size + self.head.n_params

    @staticmethod
    def angles(chunks):
        chunks = np.asarray(chunks, dtype=np.float64)
        if chunks.shape[1:] != (N_CHUNKS, 4, 4):
            raise ParameterError(f"expected (batch, 4, 4, 4) chunks, got {chunks.shape}")
        theta = np.pi * chunks.reshape(chunks.shape[0], N_CHUNKS, CHUNK_PIXELS)
        # layer A then layer B, same chunks
        return np.concatenate([theta, theta], axis=1)

    def expectations(self, chunks, with_grad=False):
        """Per-example PQC outputs ``(batch, 8)`` and optionally ``d/dz``."""
        theta = self.angles(chunks)
        if self.backend == "analytic":
            vals, grads = analytic_value_and_grad(control_probs(theta), self.z)
            return (vals, grads) if with_grad else vals
        return self._expectations_statevector(theta, with_grad)

    def _expectations_statevector(self, theta, with_grad):
        jobs = [(b, m) for b in range(theta.shape[0]) for m in range(N_PQC)]

        def run(job):
            b, m = job
            if with_grad:
                return pqc_value_and_grad_statevector(theta[b, m], self.z[m], self.layout)
            return pqc_forward_statevector(theta[b, m], self.z[m], self.layout), None

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                results = list(pool.map(run, jobs))
        else:
            results = [run(job) for job in jobs]
        vals = np.empty(theta.shape[:2])
        grads = np.empty(theta.shape)
        for (b, m), (v, g) in zip(jobs, results):
            vals[b, m] = v
            if with_grad:
                grads[b, m] = g
        return (vals, grads) if with_grad else vals

    def forward(self, chunks):
        probs, _ = self.head.forward(self.expectations(chunks))
        return probs

    def loss_and_grads(self, chunks, labels):
        Y = one_hot(labels)
        e, de_dz = self.expectations(chunks, with_grad=True)
        probs, cache = self.head.forward(e)
        loss = cce_loss(probs, Y)
        dW, db, de = self.head.backward_logits(cache, softmax_cce_grad(probs, Y))
        dz = np.einsum("bm,bmj->mj", de, de_dz)
        return loss, {"z": dz, "head.W": dW, "head.b": db}, probs
