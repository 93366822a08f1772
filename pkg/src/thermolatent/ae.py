"""Fully connected autoencoder trained to reconstruct pixel signals while its
latent space is steered onto the PCA component axes.

The encoder maps a length-N_t signal to a d-dimensional latent vector, the
decoder maps it back. Hidden layers are rectified; the latent and output
layers are linear so latents can take either sign, matching the signed PCA
targets. Training minimizes

    total = mean_n ||recon_n - x_n||^2  +  alpha * mean_n (1 - cos(z_n, z'_n))

with plain analytic backprop and Adam. Everything is seeded and
single-threaded-reproducible: same seeds and data give bit-identical nets.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelFormatError, TrainingDivergenceError
from .metrics import normalize_unit
from .sequence import PixelMatrix

NORM_GUARD = 1e-12  # latent norms below this make the cosine loss degenerate

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class NetworkConfig:
    """Layer widths and init seed. Decoder defaults to the mirrored encoder."""

    input_len: int
    encoder_widths: tuple[int, ...] = (256, 128, 64)
    decoder_widths: tuple[int, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.input_len < 1:
            raise ValueError("input_len must be >= 1")
        enc = tuple(int(w) for w in self.encoder_widths)
        if not enc or any(w < 1 for w in enc):
            raise ValueError(f"bad encoder widths {self.encoder_widths}")
        if self.decoder_widths is None:
            dec = tuple(reversed(enc[:-1])) + (self.input_len,)
        else:
            dec = tuple(int(w) for w in self.decoder_widths)
        if not dec or any(w < 1 for w in dec):
            raise ValueError(f"bad decoder widths {self.decoder_widths}")
        if dec[-1] != self.input_len:
            raise ValueError(
                f"inconsistent widths: decoder must end in input_len={self.input_len}, got {dec[-1]}"
            )
        object.__setattr__(self, "encoder_widths", enc)
        object.__setattr__(self, "decoder_widths", dec)

    @property
    def latent_dim(self) -> int:
        return self.encoder_widths[-1]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_len, *self.encoder_widths, *self.decoder_widths)

    def to_dict(self) -> dict:
        return {
            "input_len": self.input_len,
            "encoder_widths": list(self.encoder_widths),
            "decoder_widths": list(self.decoder_widths),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        return cls(
            input_len=int(data["input_len"]),
            encoder_widths=tuple(data["encoder_widths"]),
            decoder_widths=tuple(data["decoder_widths"]) if data.get("decoder_widths") else None,
            seed=int(data.get("seed", 0)),
        )


@dataclass
class Network:
    """Encoder + decoder parameters as flat per-layer lists, weights shaped (fan_in, fan_out)."""

    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        dims = self.config.layer_dims
        expected = list(zip(dims[:-1], dims[1:]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValueError("layer count does not match config")
        for i, (fan_in, fan_out) in enumerate(expected):
            if self.weights[i].shape != (fan_in, fan_out) or self.biases[i].shape != (fan_out,):
                raise ValueError(f"layer {i} shape mismatch (expected {fan_in}x{fan_out})")
            if not (np.isfinite(self.weights[i]).all() and np.isfinite(self.biases[i]).all()):
                raise ValueError(f"layer {i} has non-finite parameters")

    @property
    def n_encoder_layers(self) -> int:
        return len(self.config.encoder_widths)

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings (the plateau rule stops stalled runs early)."""

    learning_rate: float = 1e-4
    batch_size: int = 512
    alpha: float = 1.0
    max_epochs: int = 3000
    plateau_rel_tol: float = 1e-5
    plateau_epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "alpha": self.alpha,
            "max_epochs": self.max_epochs,
            "plateau_rel_tol": self.plateau_rel_tol,
            "plateau_epochs": self.plateau_epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the network parameters."""

    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_network(cls, net: Network) -> "AdamState":
        return cls(
            m_weights=[np.zeros_like(w) for w in net.weights],
            v_weights=[np.zeros_like(w) for w in net.weights],
            m_biases=[np.zeros_like(b) for b in net.biases],
            v_biases=[np.zeros_like(b) for b in net.biases],
        )


@dataclass
class BatchGradients:
    """Gradients of the total loss for one batch, plus the losses seen on the way."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    loss_rec: float
    loss_kd: float
    loss_total: float


@dataclass
class TrainReport:
    """Per-epoch loss traces and end-of-run summary."""

    total_losses: list[float] = field(default_factory=list)
    rec_losses: list[float] = field(default_factory=list)
    kd_losses: list[float] = field(default_factory=list)
    final_mean_cosine: float = float("nan")
    wall_clock_s: float = 0.0
    converged_early: bool = False

    @property
    def n_epochs(self) -> int:
        return len(self.total_losses)


def init_network(cfg: NetworkConfig) -> Network:
    """Seeded uniform(+-sqrt(6/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    dims = cfg.layer_dims
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(config=cfg, weights=weights, biases=biases)


def _is_linear_layer(i: int, n_enc: int, n_all: int) -> bool:
    # latent layer (last encoder layer) and output layer skip the rectifier
    return i == n_enc - 1 or i == n_all - 1


def _run_stack(x, weights, biases, expected_in, what):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    batch = arr[None, :] if single else arr
    if batch.ndim != 2 or batch.shape[1] != expected_in:
        raise ValueError(f"{what} expects vectors of length {expected_in}, got shape {arr.shape}")
    h = batch
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = h @ w + b
        h = a if i == last else np.maximum(a, 0.0)
    return h[0] if single else h


def encode(net: Network, s) -> np.ndarray:
    """Latent vector(s) for signal(s) of length N_t; accepts 1-D or (N, N_t) input."""
    n = net.n_encoder_layers
    return _run_stack(s, net.weights[:n], net.biases[:n], net.config.input_len, "encode")


def decode(net: Network, z) -> np.ndarray:
    """Reconstruction(s) for latent vector(s) of length d; accepts 1-D or (N, d) input."""
    n = net.n_encoder_layers
    return _run_stack(z, net.weights[n:], net.biases[n:], net.config.latent_dim, "decode")


def _forward(net: Network, batch: np.ndarray):
    """All pre-activations and activations; acts[i] is the input of layer i."""
    n_enc = net.n_encoder_layers
    n_all = net.n_layers
    pres = []
    acts = [batch]
    h = batch
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        a = h @ w + b
        pres.append(a)
        h = a if _is_linear_layer(i, n_enc, n_all) else np.maximum(a, 0.0)
        acts.append(h)
    return pres, acts


def loss_rec(batch_recon, batch_in) -> float:
    """Mean over the batch of the squared reconstruction error summed over time."""
    a = np.asarray(batch_recon, dtype=np.float64)
    b = np.asarray(batch_in, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(diff * diff) / a.shape[0])


def loss_kd(z, z_target) -> float:
    """One minus the cosine of the angle between a latent and its target.

    If either vector's norm falls below 1e-12 the alignment is undefined;
    the loss is then 1 (neutral) and its gradient is zero.
    """
    z = np.asarray(z, dtype=np.float64)
    t = np.asarray(z_target, dtype=np.float64)
    if z.shape != t.shape or z.ndim != 1:
        raise ValueError(f"length mismatch: {z.shape} vs {t.shape}")
    nz = float(np.linalg.norm(z))
    nt = float(np.linalg.norm(t))
    if nz < NORM_GUARD or nt < NORM_GUARD:
        return 1.0
    return 1.0 - float(np.dot(z, t)) / (nz * nt)


def loss_total(rec: float, kd_batch_mean: float, alpha: float) -> float:
    """rec + alpha * kd_batch_mean."""
    if not (np.isfinite(rec) and np.isfinite(kd_batch_mean)):
        raise ValueError("loss inputs must be finite")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return rec + alpha * kd_batch_mean


def _kd_batch(z: np.ndarray, targets: np.ndarray):
    """Mean distillation loss over a batch and the per-sample gradient wrt z."""
    nz = np.linalg.norm(z, axis=1)
    nt = np.linalg.norm(targets, axis=1)
    ok = (nz >= NORM_GUARD) & (nt >= NORM_GUARD)
    denom = np.where(ok, nz * nt, 1.0)
    cos = np.where(ok, np.sum(z * targets, axis=1) / denom, 0.0)
    losses = np.where(ok, 1.0 - cos, 1.0)
    grad = np.zeros_like(z)
    if np.any(ok):
        grad[ok] = -(
            targets[ok] / denom[ok, None] - (cos[ok] / nz[ok] ** 2)[:, None] * z[ok]
        )
    return float(losses.mean()), grad


def backward(net: Network, batch_in, batch_target_latents, alpha: float) -> BatchGradients:
    """Analytic gradients of the total loss for one batch.

    The distillation gradient enters at the latent layer; the rectifier
    subgradient at exactly zero is zero.
    """
    x = np.asarray(batch_in, dtype=np.float64)
    targets = np.asarray(batch_target_latents, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("batch_in must be a nonempty (N, N_t) matrix")
    if x.shape[1] != net.config.input_len:
        raise ValueError(f"batch width {x.shape[1]} != input_len {net.config.input_len}")
    if targets.shape != (x.shape[0], net.config.latent_dim):
        raise ValueError(f"targets must be (N, {net.config.latent_dim}), got {targets.shape}")
    n = x.shape[0]
    n_enc = net.n_encoder_layers
    n_all = net.n_layers

    pres, acts = _forward(net, x)
    recon = acts[-1]
    latent = acts[n_enc]
    if not (np.isfinite(recon).all() and np.isfinite(latent).all()):
        raise TrainingDivergenceError("non-finite activations in forward pass")

    diff = recon - x
    rec = float(np.sum(diff * diff) / n)
    kd_mean, kd_grad = _kd_batch(latent, targets)
    total = rec + alpha * kd_mean

    weight_grads: list[np.ndarray] = [np.empty(0)] * n_all
    bias_grads: list[np.ndarray] = [np.empty(0)] * n_all
    delta = (2.0 / n) * diff  # dL/d(output activation)
    for i in reversed(range(n_all)):
        dpre = delta if _is_linear_layer(i, n_enc, n_all) else delta * (pres[i] > 0.0)
        weight_grads[i] = acts[i].T @ dpre
        bias_grads[i] = dpre.sum(axis=0)
        if i == 0:
            break
        delta = dpre @ net.weights[i].T
        if i == n_enc:  # delta now sits at the latent activations
            delta = delta + (alpha / n) * kd_grad
    return BatchGradients(
        weight_grads=weight_grads,
        bias_grads=bias_grads,
        loss_rec=rec,
        loss_kd=kd_mean,
        loss_total=total,
    )


def adam_step(net: Network, grads: BatchGradients, state: AdamState, learning_rate: float):
    """Bias-corrected Adam update, in place; returns (net, state)."""
    if learning_rate <= 0:
        raise ValueError("learning_rate must be > 0")
    state.t += 1
    corr1 = 1.0 - state.beta1**state.t
    corr2 = 1.0 - state.beta2**state.t
    for params, gs, ms, vs in (
        (net.weights, grads.weight_grads, state.m_weights, state.v_weights),
        (net.biases, grads.bias_grads, state.m_biases, state.v_biases),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return net, state


def mean_cosine(z: np.ndarray, targets: np.ndarray) -> float:
    """Mean cosine similarity over rows where both vectors are non-degenerate."""
    nz = np.linalg.norm(z, axis=1)
    nt = np.linalg.norm(targets, axis=1)
    ok = (nz >= NORM_GUARD) & (nt >= NORM_GUARD)
    if not np.any(ok):
        return 0.0
    cos = np.sum(z[ok] * targets[ok], axis=1) / (nz[ok] * nt[ok])
    return float(cos.mean())


def train(
    m: PixelMatrix,
    targets: np.ndarray,
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
) -> tuple[Network, TrainReport]:
    """Run the full training loop: seeded shuffled batches, backprop, Adam.

    Stops at max_epochs or once the relative change of the epoch total loss
    stays below plateau_rel_tol for plateau_epochs consecutive epochs.
    Raises `TrainingDivergenceError` (naming epoch and batch) if the loss
    goes non-finite.
    """
    if not m.standardized:
        raise ValueError("train requires a standardized matrix")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (m.n_pixels, net_cfg.latent_dim):
        raise ValueError(
            f"targets must be ({m.n_pixels}, {net_cfg.latent_dim}), got {targets.shape}"
        )
    if net_cfg.input_len != m.n_t:
        raise ValueError(f"net input_len {net_cfg.input_len} != N_t {m.n_t}")

    t_start = time.perf_counter()
    net = init_network(net_cfg)
    state = AdamState.for_network(net)
    rng = np.random.default_rng(train_cfg.seed)
    data = m.data
    n_pixels = m.n_pixels
    report = TrainReport()
    plateau_streak = 0
    prev_total = None

    for epoch in range(1, train_cfg.max_epochs + 1):
        perm = rng.permutation(n_pixels)
        sums = np.zeros(3)  # total, rec, kd weighted by batch size
        for b_start in range(0, n_pixels, train_cfg.batch_size):
            batch_idx = perm[b_start : b_start + train_cfg.batch_size]
            grads = backward(net, data[batch_idx], targets[batch_idx], train_cfg.alpha)
            if not np.isfinite(grads.loss_total):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {b_start // train_cfg.batch_size}"
                )
            adam_step(net, grads, state, train_cfg.learning_rate)
            w = len(batch_idx)
            sums += w * np.array([grads.loss_total, grads.loss_rec, grads.loss_kd])
        total, rec, kd = sums / n_pixels
        report.total_losses.append(float(total))
        report.rec_losses.append(float(rec))
        report.kd_losses.append(float(kd))
        if prev_total is not None:
            rel = abs(total - prev_total) / max(abs(prev_total), 1e-300)
            plateau_streak = plateau_streak + 1 if rel < train_cfg.plateau_rel_tol else 0
        prev_total = total
        if plateau_streak >= train_cfg.plateau_epochs:
            report.converged_early = True
            break

    report.final_mean_cosine = mean_cosine(encode(net, data), targets)
    report.wall_clock_s = time.perf_counter() - t_start
    return net, report


def latent_images(net: Network, m: PixelMatrix, image_shape: tuple[int, int]) -> list[np.ndarray]:
    """One [0, 1] image per latent component across all pixels.

    Latent vectors are L2-normalized per pixel first: the cosine objective
    constrains directions only, so per-pixel magnitude is uninformative
    jitter. Each component image is then min-max normalized; constant
    components map to all 0.5. Degenerate (near-zero) latents contribute 0
    before normalization.
    """
    if not m.standardized:
        raise ValueError("latent_images requires a standardized matrix")
    n_y, n_x = image_shape
    if n_y * n_x != m.n_pixels:
        raise ValueError(f"image shape {image_shape} does not cover {m.n_pixels} pixels")
    z = encode(net, m.data)
    norms = np.linalg.norm(z, axis=1)
    ok = norms >= NORM_GUARD
    unit = np.zeros_like(z)
    unit[ok] = z[ok] / norms[ok, None]
    return [normalize_unit(unit[:, k].reshape(n_y, n_x)) for k in range(net.config.latent_dim)]


def save_network(path, net: Network) -> None:
    """Persist a network: magic PGAE, version, layer count, per-layer blocks, JSON config trailer."""
    parts = [b"PGAE", struct.pack("<II", 1, net.n_layers)]
    for w, b in zip(net.weights, net.biases):
        rows, cols = w.shape
        parts.append(struct.pack("<II", rows, cols))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    parts.append(json.dumps(net.config.to_dict(), sort_keys=True).encode("utf-8"))
    Path(path).write_bytes(b"".join(parts))


def load_network(path) -> Network:
    """Read a network written by `save_network`."""
    raw = Path(path).read_bytes()
    if raw[:4] != b"PGAE":
        raise ModelFormatError(f"{path}: not a network file (bad magic {raw[:4]!r})")
    if len(raw) < 12:
        raise ModelFormatError(f"{path}: incomplete header")
    version, n_layers = struct.unpack_from("<II", raw, 4)
    if version != 1:
        raise ModelFormatError(f"{path}: unsupported network format version {version}")
    offset = 12
    weights = []
    biases = []
    for i in range(n_layers):
        if offset + 8 > len(raw):
            raise ModelFormatError(f"{path}: truncated at layer {i}")
        rows, cols = struct.unpack_from("<II", raw, offset)
        offset += 8
        need = 8 * (rows * cols + cols)
        if offset + need > len(raw):
            raise ModelFormatError(f"{path}: truncated at layer {i}")
        w = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
        offset += 8 * rows * cols
        b = np.frombuffer(raw, dtype="<f8", count=cols, offset=offset)
        offset += 8 * cols
        weights.append(w.copy())
        biases.append(b.copy())
    try:
        cfg = NetworkConfig.from_dict(json.loads(raw[offset:].decode("utf-8")))
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError) as exc:
        raise ModelFormatError(f"{path}: malformed config trailer") from exc
    return Network(config=cfg, weights=weights, biases=biases)
