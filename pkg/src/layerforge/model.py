"""Small diffusion transformer for joint layer decomposition.

Predicts per-stream velocity fields over a concatenated token sequence
[composite; foreground; background; prompt]: the clean composite tokens
condition the two noisy layer streams through full bidirectional multi-head
attention (no stream masking), with timestep-modulated normalization in the
style of adaptive-layer-norm diffusion transformers. Velocities are read out
only at the noisy-stream positions.

Everything is plain numpy with handwritten analytic gradients, so
``backward`` can be verified coordinate-by-coordinate against central finite
differences (see ``flow.gradcheck``). Computation is float64 throughout;
checkpoints store float32.

The text encoder of full-scale systems is replaced by a learned per-subtask
prompt-token table: prompts here are fixed task templates, so a task id
carries the same conditioning signal at this scale.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .codec import TokenSequence, make_pe

__all__ = [
    "SUBTASKS",
    "PE_MODES",
    "ModelConfig",
    "ModelState",
    "NumericsError",
    "init_state",
    "n_params",
    "mm_attention",
    "forward",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
]

SUBTASKS = ("xray", "glass", "watermark", "cell", "occlusion", "flare")

# How foreground tokens are position-encoded relative to the shared
# composite/background frame:
#   "offset" - disjoint frame, shifted right of the shared frame by a gap
#   "zero"   - no position signal on foreground tokens
#   "off"    - no cloning: every stream gets the same standard frame
PE_MODES = ("offset", "zero", "off")

_LN_EPS = 1e-6
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


class NumericsError(RuntimeError):
    """Non-finite values encountered; message names the offending layer."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings; ``dim`` must divide evenly by ``heads``."""

    dim: int = 64
    heads: int = 4
    blocks: int = 2
    mlp_ratio: float = 2.0
    patch: int = 4
    prompt_tokens: int = 4
    subtasks: tuple[str, ...] = SUBTASKS
    pe_cloning: str = "offset"
    frame_gap: int = 2
    time_dim: int = 64
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"dim must be even and >= 2, got {self.dim}")
        if self.heads < 1 or self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        # blocks == 0 is a diagnostic configuration: embeddings straight into
        # the output heads, a pure linear map useful for exact gradient probes.
        if self.blocks < 0:
            raise ValueError(f"blocks must be >= 0, got {self.blocks}")
        if self.mlp_ratio <= 0:
            raise ValueError(f"mlp_ratio must be > 0, got {self.mlp_ratio}")
        if self.patch < 1:
            raise ValueError(f"patch must be >= 1, got {self.patch}")
        if self.prompt_tokens < 1:
            raise ValueError(f"prompt_tokens must be >= 1, got {self.prompt_tokens}")
        if not self.subtasks:
            raise ValueError("subtasks must be non-empty")
        if self.pe_cloning not in PE_MODES:
            raise ValueError(f"pe_cloning must be one of {PE_MODES}, got {self.pe_cloning!r}")
        if self.frame_gap < 1:
            raise ValueError(f"frame_gap must be >= 1, got {self.frame_gap}")
        if self.time_dim < 2 or self.time_dim % 2:
            raise ValueError(f"time_dim must be even and >= 2, got {self.time_dim}")

    @property
    def fg_token_dim(self) -> int:
        return self.patch * self.patch * 4

    @property
    def bg_token_dim(self) -> int:
        return self.patch * self.patch * 3

    @property
    def mlp_dim(self) -> int:
        return int(round(self.mlp_ratio * self.dim))


@dataclass
class ModelState:
    """Named parameter arrays plus their architecture configuration."""

    config: ModelConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)


def _param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, h, m = cfg.dim, cfg.time_dim, cfg.mlp_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed.z.w": (cfg.bg_token_dim, d),
        "embed.x.w": (cfg.fg_token_dim, d),
        "embed.y.w": (cfg.bg_token_dim, d),
        "prompt.table": (len(cfg.subtasks), cfg.prompt_tokens, d),
        "time.w1": (h, h),
        "time.b1": (h,),
        "time.w2": (h, h),
        "time.b2": (h,),
    }
    for i in range(cfg.blocks):
        p = f"block{i}."
        shapes[p + "mod.w"] = (h, 6 * d)
        shapes[p + "mod.b"] = (6 * d,)
        shapes[p + "attn.wqkv"] = (d, 3 * d)
        shapes[p + "attn.bqkv"] = (3 * d,)
        shapes[p + "attn.wo"] = (d, d)
        shapes[p + "attn.bo"] = (d,)
        shapes[p + "mlp.w1"] = (d, m)
        shapes[p + "mlp.b1"] = (m,)
        shapes[p + "mlp.w2"] = (m, d)
        shapes[p + "mlp.b2"] = (d,)
    shapes["final.gamma"] = (d,)
    shapes["final.beta"] = (d,)
    shapes["head.x.w"] = (d, cfg.fg_token_dim)
    shapes["head.x.b"] = (cfg.fg_token_dim,)
    shapes["head.y.w"] = (d, cfg.bg_token_dim)
    shapes["head.y.b"] = (cfg.bg_token_dim,)
    return shapes


def init_state(cfg: ModelConfig, seed: int | None = None, zero_init_heads: bool = True) -> ModelState:
    """Initialize parameters.

    Output heads and the timestep-modulation projections start at zero, so a
    fresh model predicts an identically zero velocity field and every block
    starts as the identity map. ``zero_init_heads=False`` randomizes the heads
    too (useful for gradient probes, where zero heads would block all
    upstream gradient flow).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "final.gamma":
            arr = np.ones(shape)
        elif name.startswith("head.") and not zero_init_heads:
            arr = 0.02 * rng.standard_normal(shape)
        elif name.startswith("head.") or ".mod." in name or leaf in ("b1", "b2", "bqkv", "bo", "beta"):
            arr = np.zeros(shape)
        else:
            arr = 0.02 * rng.standard_normal(shape)
        params[name] = arr
    return ModelState(cfg, params)


def n_params(state: ModelState) -> int:
    return int(sum(p.size for p in state.params.values()))


def _check_finite(arr: np.ndarray, layer: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericsError(f"non-finite activations in {layer}")


def _silu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sig = 1.0 / (1.0 + np.exp(-x))
    return x * sig, sig * (1.0 + x * (1.0 - sig))


def _gelu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inner = _GELU_C * (x + _GELU_A * x**3)
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)
    grad = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return out, grad


def _layernorm_fwd(x: np.ndarray) -> tuple[np.ndarray, dict]:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * inv
    return xhat, {"xhat": xhat, "inv": inv}


def _layernorm_bwd(dy: np.ndarray, cache: dict) -> np.ndarray:
    xhat, inv = cache["xhat"], cache["inv"]
    m1 = dy.mean(axis=-1, keepdims=True)
    m2 = (dy * xhat).mean(axis=-1, keepdims=True)
    return inv * (dy - m1 - xhat * m2)


def _time_features(t: float, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    ang = 1000.0 * float(t) * freqs
    return np.concatenate([np.cos(ang), np.sin(ang)])


def mm_attention(tokens, params: dict, return_weights: bool = False):
    """Joint bidirectional multi-head attention over one concatenated sequence.

    ``params`` holds ``wqkv (d, 3d)``, ``bqkv``, ``wo (d, d)``, ``bo`` and the
    integer ``heads``. Softmax rows are normalized per query over the full
    sequence; per-head scaling is 1/sqrt(d/heads).
    """
    x = tokens.tokens if isinstance(tokens, TokenSequence) else np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"expected (n, d) tokens with n >= 1, got shape {x.shape}")
    out, weights, _ = _attention_fwd(
        x, params["wqkv"], params["bqkv"], params["wo"], params["bo"], int(params["heads"]), "mm_attention"
    )
    if return_weights:
        return out, weights
    return out


def _attention_fwd(x, wqkv, bqkv, wo, bo, heads, layer):
    n, d = x.shape
    dh = d // heads
    qkv = x @ wqkv + bqkv
    q, k, v = qkv[:, :d], qkv[:, d : 2 * d], qkv[:, 2 * d :]
    qh = q.reshape(n, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(n, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(n, heads, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    _check_finite(scores, layer)
    scores = scores - scores.max(axis=-1, keepdims=True)
    ex = np.exp(scores)
    weights = ex / ex.sum(axis=-1, keepdims=True)
    oh = weights @ vh
    o = oh.transpose(1, 0, 2).reshape(n, d)
    out = o @ wo + bo
    cache = {"x": x, "qh": qh, "kh": kh, "vh": vh, "weights": weights, "o": o}
    return out, weights, cache


def _attention_bwd(dout, cache, wqkv, wo, heads):
    x, qh, kh, vh, weights, o = cache["x"], cache["qh"], cache["kh"], cache["vh"], cache["weights"], cache["o"]
    n, d = x.shape
    dh = d // heads
    g_wo = o.T @ dout
    g_bo = dout.sum(axis=0)
    do = dout @ wo.T
    doh = do.reshape(n, heads, dh).transpose(1, 0, 2)
    dweights = doh @ vh.transpose(0, 2, 1)
    dvh = weights.transpose(0, 2, 1) @ doh
    dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
    dscores = dscores / np.sqrt(dh)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 2, 1) @ qh
    dq = dqh.transpose(1, 0, 2).reshape(n, d)
    dk = dkh.transpose(1, 0, 2).reshape(n, d)
    dv = dvh.transpose(1, 0, 2).reshape(n, d)
    dqkv = np.concatenate([dq, dk, dv], axis=1)
    g_wqkv = x.T @ dqkv
    g_bqkv = dqkv.sum(axis=0)
    dx = dqkv @ wqkv.T
    return dx, g_wqkv, g_bqkv, g_wo, g_bo


def _pe_for_streams(cfg: ModelConfig, grid: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """(pe for composite+background, pe for foreground) per the cloning mode."""
    pe_shared = make_pe(grid, cfg.dim).values
    if cfg.pe_cloning == "offset":
        pe_fg = make_pe(grid, cfg.dim, (0, grid[1] + cfg.frame_gap)).values
    elif cfg.pe_cloning == "zero":
        pe_fg = np.zeros_like(pe_shared)
    else:  # "off": no cloning, one standard frame for everything
        pe_fg = pe_shared
    return pe_shared, pe_fg


def _validate_streams(cfg: ModelConfig, z_seq, x_seq, y_seq) -> tuple[int, int]:
    grid = z_seq.grid
    if x_seq.grid != grid or y_seq.grid != grid:
        raise ValueError(
            f"stream grids differ: z {grid}, x {x_seq.grid}, y {y_seq.grid}"
        )
    if z_seq.tokens.shape[1] != cfg.bg_token_dim:
        raise ValueError(
            f"composite token dim {z_seq.tokens.shape[1]} != patch^2*3 = {cfg.bg_token_dim}"
        )
    if x_seq.tokens.shape[1] != cfg.fg_token_dim:
        raise ValueError(
            f"foreground token dim {x_seq.tokens.shape[1]} != patch^2*4 = {cfg.fg_token_dim}"
        )
    if y_seq.tokens.shape[1] != cfg.bg_token_dim:
        raise ValueError(
            f"background token dim {y_seq.tokens.shape[1]} != patch^2*3 = {cfg.bg_token_dim}"
        )
    return grid


def forward(
    state: ModelState,
    z_seq: TokenSequence,
    x_seq: TokenSequence,
    y_seq: TokenSequence,
    t: float,
    subtask: str,
    cache: dict | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predict velocities for the noisy foreground/background token streams.

    ``z_seq`` is the clean composite; ``x_seq``/``y_seq`` are the noisy
    streams at time ``t`` in [0, 1]. Returns ``(v_x, v_y)`` in raw token
    space; the composite and prompt positions produce no output. Pass a dict
    as ``cache`` to record intermediates for :func:`backward`.
    """
    cfg = state.config
    p = state.params
    grid = _validate_streams(cfg, z_seq, x_seq, y_seq)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    if subtask not in cfg.subtasks:
        raise ValueError(f"unknown subtask {subtask!r}; known: {cfg.subtasks}")
    si = cfg.subtasks.index(subtask)
    n = grid[0] * grid[1]

    cz = z_seq.tokens @ p["embed.z.w"]
    cx = x_seq.tokens @ p["embed.x.w"]
    cy = y_seq.tokens @ p["embed.y.w"]
    pe_shared, pe_fg = _pe_for_streams(cfg, grid)
    seq = np.concatenate(
        [cz + pe_shared, cx + pe_fg, cy + pe_shared, p["prompt.table"][si]], axis=0
    )
    _check_finite(seq, "embed")
    sl_x = slice(n, 2 * n)
    sl_y = slice(2 * n, 3 * n)

    feat = _time_features(t, cfg.time_dim)
    t1 = feat @ p["time.w1"] + p["time.b1"]
    a1, da1 = _silu(t1)
    th = a1 @ p["time.w2"] + p["time.b2"]

    blocks_cache = []
    for i in range(cfg.blocks):
        pre = f"block{i}."
        mod = th @ p[pre + "mod.w"] + p[pre + "mod.b"]
        sh1, sc1, g1, sh2, sc2, g2 = np.split(mod, 6)

        seq_in = seq
        ln1, c_ln1 = _layernorm_fwd(seq_in)
        h1 = ln1 * (1.0 + sc1) + sh1
        attn_out, _, c_attn = _attention_fwd(
            h1, p[pre + "attn.wqkv"], p[pre + "attn.bqkv"], p[pre + "attn.wo"], p[pre + "attn.bo"],
            cfg.heads, pre + "attn",
        )
        mid = seq_in + g1 * attn_out

        ln2, c_ln2 = _layernorm_fwd(mid)
        h2 = ln2 * (1.0 + sc2) + sh2
        u1 = h2 @ p[pre + "mlp.w1"] + p[pre + "mlp.b1"]
        act, dact = _gelu(u1)
        u2 = act @ p[pre + "mlp.w2"] + p[pre + "mlp.b2"]
        seq = mid + g2 * u2
        _check_finite(seq, pre.rstrip("."))

        blocks_cache.append(
            {
                "mod": (sh1, sc1, g1, sh2, sc2, g2),
                "ln1": ln1,
                "c_ln1": c_ln1,
                "attn_out": attn_out,
                "c_attn": c_attn,
                "ln2": ln2,
                "c_ln2": c_ln2,
                "h2": h2,
                "act": act,
                "dact": dact,
                "u2": u2,
            }
        )

    if cfg.blocks > 0:
        fhat, c_final = _layernorm_fwd(seq)
        fo = fhat * p["final.gamma"] + p["final.beta"]
    else:
        fhat, c_final = None, None
        fo = seq

    v_x = fo[sl_x] @ p["head.x.w"] + p["head.x.b"]
    v_y = fo[sl_y] @ p["head.y.w"] + p["head.y.b"]
    _check_finite(v_x, "head.x")
    _check_finite(v_y, "head.y")

    if cache is not None:
        cache.update(
            {
                "si": si,
                "n": n,
                "z_raw": z_seq.tokens,
                "x_raw": x_seq.tokens,
                "y_raw": y_seq.tokens,
                "feat": feat,
                "a1": a1,
                "da1": da1,
                "th": th,
                "blocks": blocks_cache,
                "fhat": fhat,
                "c_final": c_final,
                "fo": fo,
            }
        )
    return v_x, v_y


def backward(state: ModelState, cache: dict, d_vx: np.ndarray, d_vy: np.ndarray) -> dict[str, np.ndarray]:
    """Exact analytic parameter gradients for a recorded forward pass.

    ``d_vx``/``d_vy`` are the upstream gradients at the velocity outputs.
    Returns a dict covering every parameter (zeros where unreached, e.g.
    prompt rows of other subtasks).
    """
    cfg = state.config
    p = state.params
    n = cache["n"]
    seq_len = 3 * n + cfg.prompt_tokens
    sl_z, sl_x, sl_y = slice(0, n), slice(n, 2 * n), slice(2 * n, 3 * n)
    grads = {name: np.zeros_like(arr) for name, arr in p.items()}

    fo = cache["fo"]
    grads["head.x.w"] += fo[sl_x].T @ d_vx
    grads["head.x.b"] += d_vx.sum(axis=0)
    grads["head.y.w"] += fo[sl_y].T @ d_vy
    grads["head.y.b"] += d_vy.sum(axis=0)
    dfo = np.zeros((seq_len, cfg.dim))
    dfo[sl_x] = d_vx @ p["head.x.w"].T
    dfo[sl_y] = d_vy @ p["head.y.w"].T

    if cfg.blocks > 0:
        fhat = cache["fhat"]
        grads["final.gamma"] += (dfo * fhat).sum(axis=0)
        grads["final.beta"] += dfo.sum(axis=0)
        dseq = _layernorm_bwd(dfo * p["final.gamma"], cache["c_final"])
    else:
        dseq = dfo

    dth = np.zeros(cfg.time_dim)
    for i in reversed(range(cfg.blocks)):
        pre = f"block{i}."
        bc = cache["blocks"][i]
        sh1, sc1, g1, sh2, sc2, g2 = bc["mod"]

        # seq = mid + g2 * u2
        du2 = dseq * g2
        dg2 = (dseq * bc["u2"]).sum(axis=0)
        grads[pre + "mlp.w2"] += bc["act"].T @ du2
        grads[pre + "mlp.b2"] += du2.sum(axis=0)
        dact = du2 @ p[pre + "mlp.w2"].T
        du1 = dact * bc["dact"]
        grads[pre + "mlp.w1"] += bc["h2"].T @ du1
        grads[pre + "mlp.b1"] += du1.sum(axis=0)
        dh2 = du1 @ p[pre + "mlp.w1"].T
        dln2 = dh2 * (1.0 + sc2)
        dsc2 = (dh2 * bc["ln2"]).sum(axis=0)
        dsh2 = dh2.sum(axis=0)
        dmid = dseq + _layernorm_bwd(dln2, bc["c_ln2"])

        # mid = seq_in + g1 * attn_out
        dattn = dmid * g1
        dg1 = (dmid * bc["attn_out"]).sum(axis=0)
        dh1, g_wqkv, g_bqkv, g_wo, g_bo = _attention_bwd(
            dattn, bc["c_attn"], p[pre + "attn.wqkv"], p[pre + "attn.wo"], cfg.heads
        )
        grads[pre + "attn.wqkv"] += g_wqkv
        grads[pre + "attn.bqkv"] += g_bqkv
        grads[pre + "attn.wo"] += g_wo
        grads[pre + "attn.bo"] += g_bo
        dln1 = dh1 * (1.0 + sc1)
        dsc1 = (dh1 * bc["ln1"]).sum(axis=0)
        dsh1 = dh1.sum(axis=0)
        dseq = dmid + _layernorm_bwd(dln1, bc["c_ln1"])

        dmod = np.concatenate([dsh1, dsc1, dg1, dsh2, dsc2, dg2])
        grads[pre + "mod.w"] += np.outer(cache["th"], dmod)
        grads[pre + "mod.b"] += dmod
        dth += p[pre + "mod.w"] @ dmod

    if cfg.blocks > 0:
        grads["time.w2"] += np.outer(cache["a1"], dth)
        grads["time.b2"] += dth
        da1 = p["time.w2"] @ dth
        dt1 = da1 * cache["da1"]
        grads["time.w1"] += np.outer(cache["feat"], dt1)
        grads["time.b1"] += dt1

    dT = dseq[3 * n :]
    grads["prompt.table"][cache["si"]] += dT
    grads["embed.z.w"] += cache["z_raw"].T @ dseq[sl_z]
    grads["embed.x.w"] += cache["x_raw"].T @ dseq[sl_x]
    grads["embed.y.w"] += cache["y_raw"].T @ dseq[sl_y]

    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericsError(f"non-finite gradient for parameter {name}")
    return grads


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, JSON header with config and an ordered
# (name, shape) manifest, then raw little-endian float32 arrays in manifest
# order. Extra arrays (optimizer moments etc.) ride along under their own
# names.
# ---------------------------------------------------------------------------

_MAGIC = b"LFCK"
_VERSION = 1


def save_checkpoint(path, state: ModelState, extra: dict[str, np.ndarray] | None = None) -> None:
    arrays: list[tuple[str, np.ndarray]] = list(state.params.items())
    if extra:
        arrays += [(name, np.asarray(arr)) for name, arr in extra.items()]
    header = {
        "config": asdict(state.config),
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", _VERSION, len(blob)))
        f.write(blob)
        for _, arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[ModelState, dict[str, np.ndarray]]:
    """Load a checkpoint; returns ``(state, extra_arrays)``."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        raw_cfg = header["config"]
        raw_cfg["subtasks"] = tuple(raw_cfg["subtasks"])
        cfg = ModelConfig(**raw_cfg)
        cfg.validate()
        arrays: dict[str, np.ndarray] = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated array data for {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f4").astype(np.float64).reshape(shape)
    expected = _param_shapes(cfg)
    params = {}
    for name, shape in expected.items():
        if name not in arrays:
            raise ValueError(f"{path}: missing parameter {name}")
        if arrays[name].shape != shape:
            raise ValueError(f"{path}: parameter {name} has shape {arrays[name].shape}, expected {shape}")
        params[name] = arrays.pop(name)
    return ModelState(cfg, params), arrays
