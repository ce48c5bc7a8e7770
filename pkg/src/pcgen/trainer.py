"""Training loop: per-item time/noise sampling, Adam with gradient
clipping, CSV logging, and a binary checkpoint format with full replay
(parameters + optimizer moments + RNG state)."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import tensor as T
from .model import ModelConfig, VelocityModel
from .objective import LossBreakdown, total_loss
from .schedule import Schedule

CKPT_MAGIC = b"PCGNCKPT"
CKPT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 300
    clip_norm: float = 1.0
    sigma_d: float = 1.0
    seed: int = 0
    schedule: str = "trigflow"
    lambda_mode: str = "linear_ramp"  # linear_ramp | fixed
    lambda_fixed: float = 0.3
    fm_normalization: str = "per_point"  # per_point | raw
    loss_mode: str = "fm_chamfer"  # fm_chamfer | fm_only | chamfer_only

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs", "clip_norm", "sigma_d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class AdamState:
    """Per-parameter first/second moment accumulators."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def update(self, params, lr):
        self.step += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.step
        bc2 = 1.0 - b2**self.step
        for k, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_gradients(params, max_norm):
    """Scale all grads so the global L2 norm is at most ``max_norm``.

    Returns the scale factor actually applied (1.0 when no clipping).
    """
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad**2).sum())
    norm = np.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    scale = max_norm / norm
    for p in params.values():
        if p.grad is not None:
            p.grad = p.grad * scale
    return scale


@dataclass
class TrainState:
    model: VelocityModel
    optimizer: AdamState
    config: TrainConfig
    rng: np.random.Generator
    epoch: int = 0


def init_state(train_cfg: TrainConfig, model_cfg: ModelConfig) -> TrainState:
    model = VelocityModel(model_cfg)
    return TrainState(
        model=model,
        optimizer=AdamState(model.params),
        config=train_cfg,
        rng=np.random.default_rng(train_cfg.seed),
    )


@dataclass(frozen=True)
class BatchLog:
    epoch: int
    batch: int
    breakdown: LossBreakdown
    grad_norm: float


def train_epoch(state: TrainState, data: np.ndarray) -> list[BatchLog]:
    """One full pass over ``data`` of shape (N, M, 3); mutates state.

    Per item: t ~ U(0, T_max), z ~ N(0, sigma_d^2 I), noisy sample,
    total loss, backward, global-norm clip, Adam step.
    """
    cfg = state.config
    sched = Schedule(cfg.schedule, sigma_d=cfg.sigma_d)
    loss_mode = cfg.loss_mode
    if sched.kind != "trigflow" and loss_mode != "fm_only":
        # non-trigflow schedules have no closed-form predictor for the CD term
        loss_mode = "fm_only"
    n = data.shape[0]
    order = state.rng.permutation(n)
    logs = []
    for bi, start in enumerate(range(0, n, cfg.batch_size)):
        idx = order[start : start + cfg.batch_size]
        x0 = data[idx]
        b = x0.shape[0]
        t = state.rng.uniform(0.0, sched.t_max, size=b)
        z = state.rng.normal(0.0, cfg.sigma_d, size=x0.shape)
        state.model.zero_grad()
        with T.Tape() as tape:
            breakdown, total = total_loss(
                sched, state.model, x0, z, t,
                lambda_mode=cfg.lambda_mode,
                lambda_fixed=cfg.lambda_fixed,
                fm_normalization=cfg.fm_normalization,
                loss_mode=loss_mode,
            )
            if not np.isfinite(total.item()):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {state.epoch} batch {bi}, t={t}"
                )
            tape.backward(total)
        clip_gradients(state.model.params, cfg.clip_norm)
        grad_norm = np.sqrt(sum(float((p.grad**2).sum())
                                for p in state.model.params.values()
                                if p.grad is not None))
        state.optimizer.update(state.model.params, cfg.lr)
        logs.append(BatchLog(state.epoch, bi, breakdown, float(grad_norm)))
    state.epoch += 1
    return logs


def train(state: TrainState, data: np.ndarray, epochs=None, log_fn=None):
    """Run ``epochs`` (default: config) epochs; returns all batch logs."""
    all_logs = []
    for _ in range(epochs if epochs is not None else state.config.epochs):
        logs = train_epoch(state, data)
        all_logs.extend(logs)
        if log_fn is not None:
            log_fn(logs)
    return all_logs


# ---------------------------------------------------------------- checkpoints
#
# Little-endian binary layout:
#   8s   magic
#   u32  version
#   u32  length of UTF-8 JSON header (configs, epoch, optimizer scalars,
#        RNG state)
#   u32  tensor count, then per tensor:
#       u32 name length, name bytes, u32 rank, u32 dims..., raw f64 data


def _pack_tensor(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    nb = name.encode("utf-8")
    head = struct.pack("<I", len(nb)) + nb
    head += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def save_checkpoint(state: TrainState, path):
    header = {
        "train_config": asdict(state.config),
        "model_config": {
            "point_widths": list(state.model.config.point_widths),
            "time_dim": state.model.config.time_dim,
            "time_hidden": state.model.config.time_hidden,
            "out_widths": list(state.model.config.out_widths),
            "seed": state.model.config.seed,
        },
        "epoch": state.epoch,
        "adam": {
            "beta1": state.optimizer.beta1,
            "beta2": state.optimizer.beta2,
            "eps": state.optimizer.eps,
            "step": state.optimizer.step,
        },
        "rng_state": state.rng.bit_generator.state,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    tensors = []
    for name, p in state.model.params.items():
        tensors.append((name, p.data))
    for name in state.model.params:
        tensors.append((f"adam.m:{name}", state.optimizer.m[name]))
        tensors.append((f"adam.v:{name}", state.optimizer.v[name]))
    blob = CKPT_MAGIC + struct.pack("<I", CKPT_VERSION)
    blob += struct.pack("<I", len(hb)) + hb
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        blob += _pack_tensor(name, arr)
    with open(path, "wb") as fh:
        fh.write(blob)


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> TrainState:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, "magic")
        if magic != CKPT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(fh, 4, "name length"))
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
            n_items = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(
                _read_exact(fh, 8 * n_items, f"data of {name}"), dtype="<f8"
            ).reshape(dims)
            tensors[name] = data.astype(np.float64)
        if fh.read(1):
            raise CheckpointError("trailing bytes after checkpoint payload")

    train_cfg = TrainConfig(**header["train_config"])
    mc = header["model_config"]
    model_cfg = ModelConfig(
        point_widths=tuple(mc["point_widths"]),
        time_dim=mc["time_dim"],
        time_hidden=mc["time_hidden"],
        out_widths=tuple(mc["out_widths"]),
        seed=mc["seed"],
    )
    state = init_state(train_cfg, model_cfg)
    state.model.load_state_arrays({k: v for k, v in tensors.items() if ":" not in k})
    adam = header["adam"]
    opt = AdamState(state.model.params, adam["beta1"], adam["beta2"], adam["eps"])
    opt.step = adam["step"]
    for name in state.model.params:
        try:
            opt.m[name] = tensors[f"adam.m:{name}"]
            opt.v[name] = tensors[f"adam.v:{name}"]
        except KeyError:
            raise CheckpointError(f"missing optimizer moments for {name!r}") from None
    state.optimizer = opt
    state.epoch = header["epoch"]
    rng_state = header["rng_state"]
    # JSON round-trips the PCG64 state dict values as plain ints
    state.rng.bit_generator.state = rng_state
    return state


def write_log_csv(logs, path, append=False):
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        if not append:
            fh.write("epoch,batch,l_fm,l_cd,lambda,l_total,grad_norm\n")
        for row in logs:
            b = row.breakdown
            fh.write(f"{row.epoch},{row.batch},{b.l_fm:.17g},{b.l_cd:.17g},"
                     f"{b.lambda_cd:.17g},{b.l_total:.17g},{row.grad_norm:.17g}\n")
