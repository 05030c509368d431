"""Conditional flow-matching training for the joint layer posterior.

The probability path is the rectified (linear) interpolation
``x_t = (1 - t) * x0 + t * eps`` with constant target velocity
``u = eps - x0``, applied independently per noisy stream. The loss is the
squared error between predicted and target velocities, averaged over tokens
and channels within each stream and summed over the two streams. Timesteps
are sampled uniformly on [0, 1].

Training is single-threaded and fully deterministic under a fixed seed:
record choice, timestep, and noise draws all come from one PCG64 generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import TokenSequence, image_to_latent
from .model import ModelState, NumericsError, backward, forward, save_checkpoint

__all__ = [
    "TrainConfig",
    "TrainStepRecord",
    "TrainingDiverged",
    "flow_sample",
    "loss_lce",
    "train",
    "gradcheck",
    "make_probe",
    "AdamState",
    "write_loss_trace",
]


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 1
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    loss_log: str | None = None
    checkpoint_path: str | None = None
    checkpoint_every: int = 0  # 0: write only the final checkpoint

    def validate(self) -> None:
        if self.steps < 1:
            raise ValueError(f"steps must be > 0, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be > 0, got {self.batch_size}")
        # lr == 0 is allowed as a degenerate diagnostic (state stays frozen).
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError(f"adam_eps must be > 0, got {self.adam_eps}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


@dataclass
class TrainStepRecord:
    step: int
    t: float
    loss: float
    grad_norm: float


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; the last good state was checkpointed if a path is set."""


def flow_sample(x0, eps, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Point on the rectified path and its target velocity.

    ``x_t = (1 - t) * x0 + t * eps`` and ``u = eps - x0`` for ``t`` in [0, 1].
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    x_t = (1.0 - t) * x0 + t * eps
    u = eps - x0
    return x_t, u


def loss_lce(
    state: ModelState,
    z_seq: TokenSequence,
    x0: np.ndarray,
    y0: np.ndarray,
    t: float,
    eps_x: np.ndarray,
    eps_y: np.ndarray,
    subtask: str,
    return_grads: bool = False,
):
    """Flow-matching loss for one triplet at one timestep.

    ``x0``/``y0`` are clean latent tokens for the foreground and background
    streams; ``eps_x``/``eps_y`` their noise draws. Returns the scalar loss,
    or ``(loss, grads)`` with exact parameter gradients when
    ``return_grads=True``.
    """
    x_t, u_x = flow_sample(x0, eps_x, t)
    y_t, u_y = flow_sample(y0, eps_y, t)
    x_seq = TokenSequence(x_t, z_seq.rows, z_seq.cols, "foreground")
    y_seq = TokenSequence(y_t, z_seq.rows, z_seq.cols, "background")
    cache: dict | None = {} if return_grads else None
    v_x, v_y = forward(state, z_seq, x_seq, y_seq, t, subtask, cache)
    err_x = v_x - u_x
    err_y = v_y - u_y
    loss = float(np.mean(err_x * err_x) + np.mean(err_y * err_y))
    if not return_grads:
        return loss
    d_vx = 2.0 * err_x / err_x.size
    d_vy = 2.0 * err_y / err_y.size
    grads = backward(state, cache, d_vx, d_vy)
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {f"opt.m.{k}": v for k, v in self.m.items()}
        out.update({f"opt.v.{k}": v for k, v in self.v.items()})
        out["opt.step"] = np.array([float(self.step)])
        return out

    @classmethod
    def from_arrays(cls, params: dict[str, np.ndarray], arrays: dict[str, np.ndarray]) -> "AdamState":
        m = {k: arrays[f"opt.m.{k}"] for k in params}
        v = {k: arrays[f"opt.v.{k}"] for k in params}
        return cls(m=m, v=v, step=int(round(float(arrays["opt.step"][0]))))


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], opt: AdamState, cfg: TrainConfig) -> None:
    """One adaptive-moment step, in place, in fixed parameter order."""
    opt.step += 1
    bc1 = 1.0 - cfg.beta1**opt.step
    bc2 = 1.0 - cfg.beta2**opt.step
    for name in params:
        g = grads[name]
        opt.m[name] = cfg.beta1 * opt.m[name] + (1.0 - cfg.beta1) * g
        opt.v[name] = cfg.beta2 * opt.v[name] + (1.0 - cfg.beta2) * (g * g)
        mhat = opt.m[name] / bc1
        vhat = opt.v[name] / bc2
        params[name] -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def _encode_records(state: ModelState, records) -> list[tuple[TokenSequence, np.ndarray, np.ndarray, str]]:
    patch = state.config.patch
    encoded = []
    for fg, bg, comp, subtask in records:
        if subtask not in state.config.subtasks:
            raise ValueError(f"record subtask {subtask!r} unknown to the model")
        z_seq = image_to_latent(comp, patch, "composite")
        x0 = image_to_latent(fg, patch, "foreground").tokens
        y0 = image_to_latent(bg, patch, "background").tokens
        encoded.append((z_seq, x0, y0, subtask))
    return encoded


def train(
    state: ModelState,
    records: Sequence[tuple],
    cfg: TrainConfig,
) -> tuple[ModelState, list[TrainStepRecord]]:
    """Flow-matching training loop over decoded triplet records.

    ``records`` is a sequence of ``(fg, bg, comp, subtask)`` with images as
    [0, 1] arrays. Mutates and returns ``state``. Emits one
    :class:`TrainStepRecord` per step; aborts with :class:`TrainingDiverged`
    on a non-finite loss, leaving the last good parameters in ``state`` (and
    checkpointed, when a path is configured).
    """
    cfg.validate()
    if not records:
        raise ValueError("no training records")
    encoded = _encode_records(state, records)
    rng = np.random.default_rng(np.random.PCG64(cfg.seed))
    opt = AdamState.for_params(state.params)
    trace: list[TrainStepRecord] = []

    def abort(step: int, reason: str) -> None:
        # the diverging update never ran, so the current state is the last good one
        if cfg.checkpoint_path:
            save_checkpoint(cfg.checkpoint_path, state, opt.to_arrays())
        if cfg.loss_log:
            write_loss_trace(cfg.loss_log, trace)
        raise TrainingDiverged(f"{reason} at step {step}")

    for step in range(1, cfg.steps + 1):
        sum_grads: dict[str, np.ndarray] | None = None
        loss_acc = 0.0
        t_acc = 0.0
        try:
            for _ in range(cfg.batch_size):
                idx = int(rng.integers(0, len(encoded)))
                t = float(rng.random())
                z_seq, x0, y0, subtask = encoded[idx]
                eps_x = rng.standard_normal(x0.shape)
                eps_y = rng.standard_normal(y0.shape)
                loss, grads = loss_lce(state, z_seq, x0, y0, t, eps_x, eps_y, subtask, return_grads=True)
                loss_acc += loss
                t_acc += t
                if sum_grads is None:
                    sum_grads = grads
                else:
                    for name in sum_grads:
                        sum_grads[name] += grads[name]
        except NumericsError as e:
            abort(step, str(e))
        loss_mean = loss_acc / cfg.batch_size
        t_mean = t_acc / cfg.batch_size
        if not math.isfinite(loss_mean):
            abort(step, "non-finite loss")
        for name in sum_grads:
            sum_grads[name] /= cfg.batch_size
        grad_norm = math.sqrt(sum(float((g * g).sum()) for g in sum_grads.values()))
        adam_update(state.params, sum_grads, opt, cfg)
        trace.append(TrainStepRecord(step, t_mean, loss_mean, grad_norm))
        if cfg.checkpoint_path and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            save_checkpoint(cfg.checkpoint_path, state, opt.to_arrays())

    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, state, opt.to_arrays())
    if cfg.loss_log:
        write_loss_trace(cfg.loss_log, trace)
    return state, trace


def write_loss_trace(path, trace: Sequence[TrainStepRecord]) -> None:
    lines = ["step,t,loss,grad_norm"]
    for r in trace:
        lines.append(f"{r.step},{r.t:.12g},{r.loss:.12g},{r.grad_norm:.12g}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


@dataclass
class GradProbe:
    z_seq: TokenSequence
    x0: np.ndarray
    y0: np.ndarray
    t: float
    eps_x: np.ndarray
    eps_y: np.ndarray
    subtask: str


def make_probe(state: ModelState, seed: int = 0, grid: tuple[int, int] = (4, 4)) -> GradProbe:
    """Random inputs for gradient verification, deterministic in the seed."""
    cfg = state.config
    rng = np.random.default_rng(np.random.PCG64(seed))
    n = grid[0] * grid[1]
    z = TokenSequence(rng.standard_normal((n, cfg.bg_token_dim)), grid[0], grid[1], "composite")
    return GradProbe(
        z_seq=z,
        x0=rng.standard_normal((n, cfg.fg_token_dim)),
        y0=rng.standard_normal((n, cfg.bg_token_dim)),
        t=0.37,
        eps_x=rng.standard_normal((n, cfg.fg_token_dim)),
        eps_y=rng.standard_normal((n, cfg.bg_token_dim)),
        subtask=cfg.subtasks[0],
    )


def gradcheck(
    state: ModelState,
    probe: GradProbe | None = None,
    n_coords: int = 1000,
    fd_step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Compare analytic gradients against central finite differences.

    Picks ``n_coords`` random parameter coordinates and returns the maximum
    relative error ``|fd - analytic| / max(|fd|, |analytic|, 1e-6)``. All
    arithmetic is double precision.
    """
    if n_coords < 1:
        raise ValueError(f"n_coords must be >= 1, got {n_coords}")
    if fd_step <= 0:
        raise ValueError(f"fd_step must be > 0, got {fd_step}")
    if probe is None:
        probe = make_probe(state, seed=seed)

    def run_loss() -> float:
        return loss_lce(
            state, probe.z_seq, probe.x0, probe.y0, probe.t, probe.eps_x, probe.eps_y, probe.subtask
        )

    _, grads = loss_lce(
        state, probe.z_seq, probe.x0, probe.y0, probe.t, probe.eps_x, probe.eps_y, probe.subtask,
        return_grads=True,
    )
    names = list(state.params)
    sizes = np.array([state.params[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(np.random.PCG64(seed + 1))
    coords = rng.integers(0, total, size=n_coords)

    max_rel = 0.0
    for flat in coords:
        pi = int(np.searchsorted(offsets, flat, side="right") - 1)
        name = names[pi]
        idx = int(flat - offsets[pi])
        arr = state.params[name]
        orig = arr.flat[idx]
        arr.flat[idx] = orig + fd_step
        lp = run_loss()
        arr.flat[idx] = orig - fd_step
        lm = run_loss()
        arr.flat[idx] = orig
        fd = (lp - lm) / (2.0 * fd_step)
        an = grads[name].flat[idx]
        rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
        max_rel = max(max_rel, rel)
    return max_rel
