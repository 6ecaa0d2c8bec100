"""Stationary velocity fields as Fourier-feature sinusoidal networks.

Positions are lifted through a fixed random Fourier embedding (an L-feature
sin/cos pair bank whose L/2 frequency rows are drawn once from N(0, scale^2)
with a stored seed), passed through sinusoidal hidden layers, and mapped to a
d-vector by a final linear layer that starts at zero so the initial field is
identically zero (identity flow).  The first layer is initialized uniform in
[-1/L, 1/L] (fan-in rule over the embedding length), hidden layers uniform in
[-sqrt(6/H)/omega0, sqrt(6/H)/omega0] with omega0 = 30.

Forward evaluation, the input/parameter VJP, and (de)serialization are
hand-rolled in numpy; there is no autodiff framework underneath.  `dtype`
selects the compute precision: float64 for gradient-check fidelity, float32
for the large-batch optimization loops (still bit-deterministic).  The VJP
can reuse a forward cache captured by evaluate_cached to skip recomputation.
"""

from __future__ import annotations

import struct

import numpy as np

__all__ = ["VelocityField", "save_field", "load_field"]

_OMEGA0 = 30.0
_HVF_MAGIC = b"HVF1"


class VelocityField:
    """v(p): R^d -> R^d, smooth by construction, deterministic given parameters."""

    def __init__(
        self,
        dim: int,
        fourier_scale: float = 5.0,
        embedding_length: int = 128,
        hidden_size: int = 256,
        n_hidden: int = 2,
        seed: int = 0,
        dtype=np.float64,
    ):
        if dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if n_hidden < 1:
            raise ValueError("need at least one hidden layer")
        if embedding_length % 2 != 0:
            raise ValueError("embedding length must be even (sin/cos pairs)")
        self.dim = dim
        self.fourier_scale = float(fourier_scale)
        self.embedding_length = int(embedding_length)
        self.hidden_size = int(hidden_size)
        self.n_hidden = int(n_hidden)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        self._omega = self.dtype.type(_OMEGA0)

        streams = np.random.SeedSequence(self.seed).spawn(1 + self.n_hidden)
        embed_rng = np.random.default_rng(streams[0])
        freq = embed_rng.normal(0.0, self.fourier_scale, (self.embedding_length // 2, dim))
        self.frequencies = freq.astype(self.dtype)
        self.frequencies.setflags(write=False)
        self._freq_in = np.ascontiguousarray((2.0 * np.pi) * freq.T, dtype=self.dtype)
        self._freq_out = np.ascontiguousarray((2.0 * np.pi) * freq, dtype=self.dtype)

        L, H = self.embedding_length, self.hidden_size
        weights, biases = [], []
        first_rng = np.random.default_rng(streams[1])
        weights.append(first_rng.uniform(-1.0 / L, 1.0 / L, (H, L)))
        biases.append(np.zeros(H))
        bound = np.sqrt(6.0 / H) / _OMEGA0
        for i in range(1, self.n_hidden):
            rng = np.random.default_rng(streams[1 + i])
            weights.append(rng.uniform(-bound, bound, (H, H)))
            biases.append(np.zeros(H))
        weights.append(np.zeros((dim, H)))  # zero-init output: identity flow at start
        biases.append(np.zeros(dim))
        self.weights = [w.astype(self.dtype) for w in weights]
        self.biases = [b.astype(self.dtype) for b in biases]
        self._refresh_transposes()

    def _refresh_transposes(self):
        self._wt = [np.ascontiguousarray(w.T) for w in self.weights]

    # -- parameter plumbing ------------------------------------------------

    @property
    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        expected = [p.shape for p in self.parameters]
        got = [np.asarray(p).shape for p in params]
        if expected != got:
            raise ValueError(f"parameter shapes {got} != expected {expected}")
        it = iter(params)
        for i in range(len(self.weights)):
            self.weights[i] = np.ascontiguousarray(next(it), dtype=self.dtype)
            self.biases[i] = np.ascontiguousarray(next(it), dtype=self.dtype)
        self._refresh_transposes()

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.astype(np.float64).ravel() for p in self.parameters])

    def load_flat(self, flat: np.ndarray) -> None:
        params, pos = [], 0
        for p in self.parameters:
            params.append(np.asarray(flat[pos : pos + p.size]).reshape(p.shape))
            pos += p.size
        if pos != len(flat):
            raise ValueError(f"expected {pos} parameters, got {len(flat)}")
        self.set_parameters(params)

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Velocities at the given points, shape (N, d), in the field's dtype."""
        return self.evaluate_cached(points)[0]

    def evaluate_cached(self, points: np.ndarray):
        """Velocities plus a compact activation cache consumable by vjp.

        The cache holds the embedding phases and the omega-scaled hidden
        pre-activations; activations are rebuilt from it with one sin pass.
        """
        pts = np.ascontiguousarray(points, dtype=self.dtype)
        z = pts @ self._freq_in
        half = z.shape[1]
        e = np.empty((len(pts), 2 * half), dtype=self.dtype)
        np.sin(z, out=e[:, :half])
        np.cos(z, out=e[:, half:])
        h = e
        pres = []
        for i in range(self.n_hidden):
            a = h @ self._wt[i]
            a += self.biases[i]
            a *= self._omega
            pres.append(a)
            h = np.sin(a)
        v = h @ self._wt[-1]
        v += self.biases[-1]
        return v, (z, pres)

    def vjp(self, points: np.ndarray, cotangent: np.ndarray, cache=None):
        """Pull a velocity cotangent back to (point cotangents, parameter cotangents).

        Reuses a forward cache when given, otherwise recomputes the forward
        pass; parameter cotangents follow the ordering of `parameters`.
        """
        cot = np.ascontiguousarray(cotangent, dtype=self.dtype)
        if cache is None:
            _, cache = self.evaluate_cached(points)
        z, pres = cache
        half = z.shape[1]
        e = np.empty((len(z), 2 * half), dtype=self.dtype)
        np.sin(z, out=e[:, :half])
        np.cos(z, out=e[:, half:])
        acts = [e] + [np.sin(a) for a in pres]

        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        w_grads[-1] = cot.T @ acts[-1]
        b_grads[-1] = cot.sum(axis=0)
        delta = cot @ self.weights[-1]
        for i in reversed(range(self.n_hidden)):
            gate = np.cos(pres[i])
            gate *= self._omega
            delta *= gate
            w_grads[i] = delta.T @ acts[i]
            b_grads[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i]
        # e's halves are sin(z), cos(z): the embedding backward needs no new trig
        z_bar = delta[:, :half] * e[:, half:]
        z_bar -= delta[:, half:] * e[:, :half]
        x_bar = z_bar @ self._freq_out

        param_grads = []
        for wg, bg in zip(w_grads, b_grads):
            param_grads.extend([wg, bg])
        return x_bar, param_grads

    def __repr__(self):
        return (
            f"VelocityField(dim={self.dim}, scale={self.fourier_scale}, "
            f"L={self.embedding_length}, H={self.hidden_size}, depth={self.n_hidden}, "
            f"dtype={self.dtype.name})"
        )


def save_field(path, field: VelocityField) -> None:
    """Binary header (d, scale, L, H, depth, seed) + flat little-endian f64 parameters."""
    flat = field.flat_parameters()
    with open(path, "wb") as fh:
        fh.write(_HVF_MAGIC)
        fh.write(
            struct.pack(
                "<IdIIIQQ",
                field.dim,
                field.fourier_scale,
                field.embedding_length,
                field.hidden_size,
                field.n_hidden,
                field.seed,
                flat.size,
            )
        )
        fh.write(np.ascontiguousarray(flat, dtype="<f8").tobytes())


def load_field(path, dtype=np.float64) -> VelocityField:
    with open(path, "rb") as fh:
        if fh.read(4) != _HVF_MAGIC:
            raise ValueError(f"{path}: not a velocity-field file")
        dim, scale, L, H, depth, seed, count = struct.unpack("<IdIIIQQ", fh.read(40))
        flat = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if flat.size != count:
            raise ValueError(f"{path}: truncated parameter payload")
    field = VelocityField(
        dim,
        fourier_scale=scale,
        embedding_length=L,
        hidden_size=H,
        n_hidden=depth,
        seed=seed,
        dtype=dtype,
    )
    field.load_flat(flat.copy())
    return field
