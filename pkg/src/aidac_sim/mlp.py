"""Quantized two-layer MLP inference on the simulated fabric.

The model is a bias-free 2-layer perceptron with unsigned 8-bit activations
and signed 8-bit weights. Between layers, activations are rectified and
requantized with a per-layer affine scale frozen from the ideal-digital
activation range (max-abs calibration on the training split).

Mapping a layer onto the unsigned fabric uses three digital tricks, all of
them plumbing the mapper already provides:

  * offset weight encoding: w_u = w_q + 128 keeps weights unsigned; the
    exact correction 128 * sum(inputs) is subtracted digitally;
  * K-slicing: the layer's input channels split into small row slices whose
    partial sums add digitally (the same accumulation used for vertical
    passes), so each TDC conversion covers few products and quantization
    noise shrinks;
  * row replication: each slice is replicated to fill the core's row
    capacity and the estimate divided by the replica count, which both
    scales the chain interval to the TDC range and averages capacitor
    mismatch across replicas.

``infer_mlp`` runs the same integer pipeline either on the exact oracle
("ideal-digital") or through the full analog simulation ("simulated") and
returns top-1 accuracy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import ArchParams
from .mapper import CoreExecutor, VmmJob, run_vmm, tile


@dataclass(frozen=True)
class MlpModel:
    """Quantized model: dims, signed int8-range weights, and scales."""

    dims: tuple[int, int, int]
    weights_q: tuple[np.ndarray, np.ndarray]    # (d0, d1), (d1, d2), int in [-127, 127]
    weight_scales: tuple[float, float]
    activation_scale: float                     # hidden requantization step

    def __post_init__(self) -> None:
        w1, w2 = (np.asarray(w, dtype=np.int64) for w in self.weights_q)
        object.__setattr__(self, "weights_q", (w1, w2))
        d0, d1, d2 = self.dims
        if min(self.dims) < 1:
            raise ValueError(f"degenerate layer dims {self.dims}")
        if w1.shape != (d0, d1) or w2.shape != (d1, d2):
            raise ValueError("weight shapes do not match dims")
        for w in (w1, w2):
            if np.any(np.abs(w) > 127):
                raise ValueError("quantized weights must lie in [-127, 127]")
        if self.activation_scale <= 0:
            raise ValueError("activation scale must be > 0")

    def to_json(self) -> str:
        return json.dumps(
            {
                "dims": list(self.dims),
                "weights_q": [w.tolist() for w in self.weights_q],
                "weight_scales": list(self.weight_scales),
                "activation_scale": self.activation_scale,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        doc = json.loads(text)
        return cls(
            dims=tuple(doc["dims"]),
            weights_q=tuple(np.array(w, dtype=np.int64) for w in doc["weights_q"]),
            weight_scales=tuple(doc["weight_scales"]),
            activation_scale=float(doc["activation_scale"]),
        )


@dataclass(frozen=True)
class LabeledSet:
    """Unsigned 8-bit feature rows with integer class labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.int64)
        y = np.asarray(self.y, dtype=np.int64)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError("x must be (N, D), y (N,)")
        if np.any(x < 0) or np.any(x > 255):
            raise ValueError("features must be 8-bit unsigned")


def _relu_requant(z: np.ndarray, scale: float) -> np.ndarray:
    a = np.maximum(z, 0) / scale
    return np.clip(np.floor(a + 0.5).astype(np.int64), 0, 255)


def _ideal_hidden(model: MlpModel, x: np.ndarray) -> np.ndarray:
    return _relu_requant(x @ model.weights_q[0], model.activation_scale)


def ideal_logits(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Integer logits of the ideal-digital pipeline, (N, classes)."""
    return _ideal_hidden(model, x) @ model.weights_q[1]


def _slice_rows(params: ArchParams) -> int:
    return max(1, params.rows_per_core // 32)


def _copies(params: ArchParams, n_out: int) -> int:
    return max(1, min(8, params.channels_per_core // n_out))


def _simulated_layer(
    x_rows: np.ndarray,
    w_q: np.ndarray,
    params: ArchParams,
    executor: CoreExecutor,
    w_cache: dict,
    tdc_bypass: bool,
) -> np.ndarray:
    """One signed layer through the fabric.

    Offset-encode, slice the input channels, replicate each slice down the
    rows and each output channel across the core's horizontal macros
    (independent capacitor arrays), then average the channel copies and
    accumulate slice partial sums digitally.
    """
    k, n_out = w_q.shape
    slice_k = _slice_rows(params)
    copies = _copies(params, n_out)
    key = id(w_q)
    if key not in w_cache:
        w_u = (w_q + 128).astype(np.int64)
        slices = []
        for lo in range(0, k, slice_k):
            hi = min(k, lo + slice_k)
            rep = max(1, params.rows_per_core // (hi - lo))
            w_rep = np.tile(w_u[lo:hi], (rep, copies))
            slices.append((lo, hi, rep, w_rep))
        w_cache[key] = (w_q, slices)
    slices = w_cache[key][1]

    total = None
    for lo, hi, rep, w_rep in slices:
        job = VmmJob(inputs=np.tile(x_rows[lo:hi], rep), weights=w_rep)
        plan = tile(job, params)
        result = run_vmm(job, plan, params, executor.instance,
                         tdc_bypass=tdc_bypass, executor=executor)
        est_mean = result.mac_estimates.reshape(copies, n_out).mean(axis=0)
        est_u = np.floor(est_mean / rep + 0.5).astype(np.int64)
        part = est_u - 128 * int(x_rows[lo:hi].sum())
        total = part if total is None else total + part
    return total


def infer_mlp(
    model: MlpModel,
    dataset: LabeledSet,
    mode: str,
    params: ArchParams,
    instance=None,
    tdc_bypass: bool = False,
) -> float:
    """Top-1 accuracy of the model over the dataset.

    ``mode`` is "ideal-digital" (exact integer oracle throughout) or
    "simulated" (every layer routed through the mapped fabric on the given
    device instance).
    """
    if model.dims[0] != dataset.x.shape[1]:
        raise ValueError(
            f"model expects {model.dims[0]} features, dataset has {dataset.x.shape[1]}"
        )
    if mode == "ideal-digital":
        logits = ideal_logits(model, dataset.x)
    elif mode == "simulated":
        executor = CoreExecutor(params, instance)
        w_cache: dict = {}
        logits = np.empty((dataset.x.shape[0], model.dims[2]), dtype=np.int64)
        for n in range(dataset.x.shape[0]):
            z1 = _simulated_layer(
                dataset.x[n], model.weights_q[0], params, executor, w_cache, tdc_bypass
            )
            a1 = _relu_requant(z1, model.activation_scale)
            logits[n] = _simulated_layer(
                a1, model.weights_q[1], params, executor, w_cache, tdc_bypass
            )
    else:
        raise ValueError(f"unknown mode '{mode}'")
    pred = logits.argmax(axis=1)
    return float((pred == dataset.y).mean())


# ---------------------------------------------------------------------------
# Desk-scale digit proxy: dataset, trainer, quantizer.
# ---------------------------------------------------------------------------

def digits_dataset() -> tuple[LabeledSet, LabeledSet]:
    """The small public 8x8 digit set, pixels rescaled to 0..255, split
    deterministically into train (even indices) and test (odd indices)."""
    from sklearn.datasets import load_digits

    raw = load_digits()
    x = np.floor(raw.data * (255.0 / 16.0) + 0.5).astype(np.int64)
    y = raw.target.astype(np.int64)
    train = LabeledSet(x=x[0::2], y=y[0::2])
    test = LabeledSet(x=x[1::2], y=y[1::2])
    return train, test


def train_digits_mlp(
    hidden: int = 16,
    epochs: int = 600,
    lr: float = 0.4,
    momentum: float = 0.9,
    noise_frac: float = 0.08,
    seed: int = 7,
) -> MlpModel:
    """Train the float 64-hidden-10 proxy with full-batch gradient descent,
    then quantize. Gaussian noise injected at both pre-activations during
    training hardens the margins against the fabric's analog noise.
    Deterministic in the seed."""
    train, _ = digits_dataset()
    x = train.x / 255.0
    n, d0 = x.shape
    d2 = int(train.y.max()) + 1
    onehot = np.zeros((n, d2))
    onehot[np.arange(n), train.y] = 1.0

    rng = np.random.Generator(np.random.Philox(key=seed))
    w1 = rng.normal(0, 1.0 / np.sqrt(d0), size=(d0, hidden))
    w2 = rng.normal(0, 1.0 / np.sqrt(hidden), size=(hidden, d2))
    v1 = np.zeros_like(w1)
    v2 = np.zeros_like(w2)

    for _ in range(epochs):
        h_pre = x @ w1
        if noise_frac > 0:
            h_pre = h_pre + rng.normal(0, noise_frac * h_pre.std() + 1e-12, size=h_pre.shape)
        h = np.maximum(h_pre, 0)
        logits = h @ w2
        if noise_frac > 0:
            logits = logits + rng.normal(0, noise_frac * logits.std() + 1e-12, size=logits.shape)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g_logits = (p - onehot) / n
        g_w2 = h.T @ g_logits
        g_h = g_logits @ w2.T
        g_h[h_pre <= 0] = 0.0
        g_w1 = x.T @ g_h
        v1 = momentum * v1 - lr * g_w1
        v2 = momentum * v2 - lr * g_w2
        w1 += v1
        w2 += v2

    return quantize_mlp(w1, w2, train)


def quantize_mlp(w1: np.ndarray, w2: np.ndarray, calibration: LabeledSet) -> MlpModel:
    """Symmetric per-layer weight quantization plus max-abs activation scale
    calibrated on the ideal-digital hidden pre-activations."""
    s1 = float(np.abs(w1).max()) / 127.0
    s2 = float(np.abs(w2).max()) / 127.0
    w1_q = np.clip(np.floor(w1 / s1 + 0.5), -127, 127).astype(np.int64)
    w2_q = np.clip(np.floor(w2 / s2 + 0.5), -127, 127).astype(np.int64)
    z1 = calibration.x @ w1_q
    z_max = float(np.maximum(z1, 0).max())
    if z_max <= 0:
        raise ValueError("calibration produced no positive hidden activation")
    act_scale = z_max / 255.0
    return MlpModel(
        dims=(w1.shape[0], w1.shape[1], w2.shape[1]),
        weights_q=(w1_q, w2_q),
        weight_scales=(s1, s2),
        activation_scale=act_scale,
    )


def proxy_params(base: ArchParams) -> ArchParams:
    """Inference-proxy geometry: a single macro row (the TDC code range then
    matches desk-scale layer magnitudes) with the full width of horizontal
    macros available for channel redundancy."""
    from dataclasses import replace

    return replace(base, macros_v=1)
