"""Toy-scale encoder-decoder transformer with a token-importance picker
head and a generation head, built on the in-package autodiff engine.

Architecture follows the T5 family: pre-norm residual blocks with RMS
normalization, no biases on attention or feed-forward projections, shared
input embedding between encoder and decoder, and bucketed relative-position
biases added to attention logits (bidirectional buckets in the encoder,
unidirectional in the decoder, none on cross attention). An optional flag
adds a learned absolute position embedding to the input instead.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, constant, parameter

NORM_EPS = 1e-6
MASK_NEG = -1e9
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    """Raised for inconsistent configurations or incompatible checkpoints."""


class NonFiniteError(RuntimeError):
    """Raised when a forward pass produces a non-finite activation."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    picker_widths: tuple[int, ...] = (64, 32, 16, 3)
    picker_arity: int = 3
    rel_pos_buckets: int = 32
    rel_pos_max_distance: int = 128
    dropout: float = 0.1
    literal_pe: bool = False
    max_positions: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 6:
            raise ModelError("vocab_size must cover the 6 reserved tokens")
        if self.num_layers < 1:
            raise ModelError("num_layers must be >= 1")
        if self.d_model % self.num_heads != 0:
            raise ModelError(
                f"d_model {self.d_model} not divisible by num_heads {self.num_heads}"
            )
        if self.picker_arity not in (1, 3):
            raise ModelError("picker_arity must be 1 (soft) or 3 (hard BIO)")
        if not self.picker_widths or self.picker_widths[-1] != self.picker_arity:
            raise ModelError("picker_widths must end with picker_arity")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")
        if self.rel_pos_buckets < 4 or self.rel_pos_buckets % 2 != 0:
            raise ModelError("rel_pos_buckets must be an even count >= 4")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["picker_widths"] = list(self.picker_widths)
        return data

    @staticmethod
    def from_dict(data: dict) -> "ModelConfig":
        data = dict(data)
        data["picker_widths"] = tuple(data["picker_widths"])
        return ModelConfig(**data)


def _tensor_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) listing; fixes parameter and payload order."""
    d, f, h = cfg.d_model, cfg.ffn_dim, cfg.num_heads
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("embedding", (cfg.vocab_size, d)),
        ("lm_head", (d, cfg.vocab_size)),
        ("enc_rel_bias", (cfg.rel_pos_buckets, h)),
        ("dec_rel_bias", (cfg.rel_pos_buckets, h)),
    ]
    if cfg.literal_pe:
        shapes.append(("pe_table", (cfg.max_positions, d)))
    for i in range(cfg.num_layers):
        shapes += [
            (f"enc{i}.norm1", (d,)),
            (f"enc{i}.attn.wq", (d, d)),
            (f"enc{i}.attn.wk", (d, d)),
            (f"enc{i}.attn.wv", (d, d)),
            (f"enc{i}.attn.wo", (d, d)),
            (f"enc{i}.norm2", (d,)),
            (f"enc{i}.ffn.w1", (d, f)),
            (f"enc{i}.ffn.w2", (f, d)),
        ]
    shapes.append(("enc_final_norm", (d,)))
    for i in range(cfg.num_layers):
        shapes += [
            (f"dec{i}.norm1", (d,)),
            (f"dec{i}.self.wq", (d, d)),
            (f"dec{i}.self.wk", (d, d)),
            (f"dec{i}.self.wv", (d, d)),
            (f"dec{i}.self.wo", (d, d)),
            (f"dec{i}.norm2", (d,)),
            (f"dec{i}.cross.wq", (d, d)),
            (f"dec{i}.cross.wk", (d, d)),
            (f"dec{i}.cross.wv", (d, d)),
            (f"dec{i}.cross.wo", (d, d)),
            (f"dec{i}.norm3", (d,)),
            (f"dec{i}.ffn.w1", (d, f)),
            (f"dec{i}.ffn.w2", (f, d)),
        ]
    shapes.append(("dec_final_norm", (d,)))
    widths = (cfg.d_model, *cfg.picker_widths)
    for j in range(len(cfg.picker_widths)):
        shapes.append((f"picker.w{j}", (widths[j], widths[j + 1])))
        shapes.append((f"picker.b{j}", (widths[j + 1],)))
    return shapes


def is_weight_matrix(name: str, shape: tuple[int, ...]) -> bool:
    """Tensors eligible for decoupled weight decay: 2-D projection weights,
    excluding embeddings, relative-bias tables, norms, and biases."""
    if len(shape) != 2:
        return False
    return name not in ("embedding", "pe_table") and not name.endswith("_rel_bias")


@dataclass
class ModelParameters:
    """All trainable tensors, keyed by canonical name in canonical order."""

    config: ModelConfig
    tensors: dict[str, Tensor]

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        return list(self.tensors.items())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def picker_names(self) -> list[str]:
        return [n for n in self.tensors if n.startswith("picker.")]


def init_parameters(cfg: ModelConfig) -> ModelParameters:
    """Seed-deterministic scaled random initialization; biases zero."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    tensors: dict[str, Tensor] = {}
    for name, shape in _tensor_shapes(cfg):
        if name.endswith((".b0", ".b1", ".b2", ".b3", ".b4", ".b5")):
            data = np.zeros(shape)
        elif name.endswith(("norm1", "norm2", "norm3", "_final_norm")):
            data = np.ones(shape)
        elif name in ("embedding", "pe_table"):
            data = rng.standard_normal(shape)
        elif name.endswith("_rel_bias"):
            data = rng.standard_normal(shape) * 0.1
        else:
            fan_in, fan_out = shape[0], shape[1]
            std = math.sqrt(2.0 / (fan_in + fan_out))
            data = rng.standard_normal(shape) * std
        tensors[name] = parameter(data)
    return ModelParameters(cfg, tensors)


@dataclass
class EncoderOutput:
    hidden: Tensor  # (B, L, d_model)
    mask: np.ndarray  # (B, L), 1.0 on real tokens


# ---------------------------------------------------------------------------
# Building blocks

def _check_finite(x: Tensor, where: str) -> None:
    if not np.isfinite(x.data).all():
        raise NonFiniteError(f"non-finite activation in {where}")


def _dropout(x: Tensor, rate: float, rng) -> Tensor:
    if rng is None or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * constant(keep)


def _rmsnorm(x: Tensor, scale: Tensor) -> Tensor:
    mean_sq = (x * x).mean(axis=-1, keepdims=True)
    return x * (mean_sq + NORM_EPS).pow_const(-0.5) * scale


def relative_position_bucket(
    relative_position: np.ndarray,
    bidirectional: bool,
    num_buckets: int,
    max_distance: int,
) -> np.ndarray:
    """Bucket signed key-minus-query offsets: exact buckets near zero, log
    spaced out to max_distance, clamped beyond."""
    rel = relative_position.astype(np.int64)
    buckets = np.zeros_like(rel)
    n = num_buckets
    if bidirectional:
        n //= 2
        buckets += (rel > 0).astype(np.int64) * n
        rel = np.abs(rel)
    else:
        rel = -np.minimum(rel, 0)
    max_exact = n // 2
    is_small = rel < max_exact
    scaled = np.log(np.maximum(rel, 1) / max_exact) / math.log(max_distance / max_exact)
    if_large = (max_exact + scaled * (n - max_exact)).astype(np.int64)
    if_large = np.minimum(if_large, n - 1)
    buckets += np.where(is_small, rel, if_large)
    return buckets


def _rel_bias(table: Tensor, q_len: int, k_len: int, bidirectional: bool,
              cfg: ModelConfig) -> Tensor:
    positions = np.arange(k_len)[None, :] - np.arange(q_len)[:, None]
    idx = relative_position_bucket(
        positions, bidirectional, cfg.rel_pos_buckets, cfg.rel_pos_max_distance
    )
    bias = table.lookup(idx)  # (Lq, Lk, H)
    return bias.permute(2, 0, 1)  # (H, Lq, Lk)


def _attention(
    x_q: Tensor,
    x_kv: Tensor,
    weights: dict[str, Tensor],
    cfg: ModelConfig,
    extra_bias: Tensor | None,
    key_mask_bias: np.ndarray | None,
) -> Tensor:
    b, q_len, d = x_q.shape
    k_len = x_kv.shape[1]
    heads, dk = cfg.num_heads, cfg.head_dim
    q = (x_q @ weights["wq"]).reshape(b, q_len, heads, dk).permute(0, 2, 1, 3)
    k = (x_kv @ weights["wk"]).reshape(b, k_len, heads, dk).permute(0, 2, 1, 3)
    v = (x_kv @ weights["wv"]).reshape(b, k_len, heads, dk).permute(0, 2, 1, 3)
    logits = (q @ k.swap_last()) * (1.0 / math.sqrt(dk))  # (B, H, Lq, Lk)
    if extra_bias is not None:
        logits = logits + extra_bias
    if key_mask_bias is not None:
        logits = logits + constant(key_mask_bias)
    out = logits.softmax(axis=-1) @ v  # (B, H, Lq, dk)
    out = out.permute(0, 2, 1, 3).reshape(b, q_len, d)
    return out @ weights["wo"]


def _attn_weights(params: ModelParameters, prefix: str) -> dict[str, Tensor]:
    return {k: params[f"{prefix}.{k}"] for k in ("wq", "wk", "wv", "wo")}


def _key_mask_bias(mask: np.ndarray) -> np.ndarray:
    # (B, L) -> (B, 1, 1, L) additive bias blocking attention to padding
    return (1.0 - mask)[:, None, None, :] * MASK_NEG


def _causal_bias(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), MASK_NEG), k=1)[None, None, :, :]


def embed(input_ids: np.ndarray, params: ModelParameters) -> Tensor:
    """Word embedding rows, plus a learned absolute positional term when
    the literal-PE flag is on."""
    ids = np.asarray(input_ids, dtype=np.int64)
    cfg = params.config
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ModelError("token id out of vocabulary range")
    x = params["embedding"].lookup(ids)
    if cfg.literal_pe:
        length = ids.shape[-1]
        if length > cfg.max_positions:
            raise ModelError(f"sequence length {length} exceeds max_positions")
        x = x + params["pe_table"].lookup(np.arange(length))
    return x


def encode(
    input_ids: np.ndarray,
    mask: np.ndarray,
    params: ModelParameters,
    dropout_rng=None,
) -> EncoderOutput:
    """Stacked pre-norm self-attention blocks over the serialized input."""
    cfg = params.config
    mask = np.asarray(mask, dtype=np.float64)
    x = _dropout(embed(input_ids, params), cfg.dropout, dropout_rng)
    length = x.shape[1]
    rel = _rel_bias(params["enc_rel_bias"], length, length, True, cfg)
    key_bias = _key_mask_bias(mask)
    for i in range(cfg.num_layers):
        h = _rmsnorm(x, params[f"enc{i}.norm1"])
        a = _attention(h, h, _attn_weights(params, f"enc{i}.attn"), cfg, rel, key_bias)
        x = x + _dropout(a, cfg.dropout, dropout_rng)
        h = _rmsnorm(x, params[f"enc{i}.norm2"])
        f = (h @ params[f"enc{i}.ffn.w1"]).relu() @ params[f"enc{i}.ffn.w2"]
        x = x + _dropout(f, cfg.dropout, dropout_rng)
        _check_finite(x, f"encoder layer {i}")
    x = _rmsnorm(x, params["enc_final_norm"])
    return EncoderOutput(hidden=x, mask=mask)


def picker_forward(enc: EncoderOutput, params: ModelParameters) -> Tensor:
    """Per-position importance prediction over the encoder output.

    Hard mode (arity 3): softmax over O/B/I classes, shape (B, L, 3).
    Soft mode (arity 1): probability in (0, 1), shape (B, L).
    """
    cfg = params.config
    y = enc.hidden
    n_layers = len(cfg.picker_widths)
    for j in range(n_layers):
        y = y @ params[f"picker.w{j}"] + params[f"picker.b{j}"]
        if j < n_layers - 1:
            y = y.relu()
    if cfg.picker_arity == 1:
        return y.sigmoid().reshape(y.shape[:-1])
    return y.softmax(axis=-1)


def decode_forward(
    enc: EncoderOutput,
    decoder_input_ids: np.ndarray,
    params: ModelParameters,
    dropout_rng=None,
) -> Tensor:
    """Per-step vocabulary distributions under teacher forcing; causal self
    attention, cross attention over unmasked encoder positions."""
    cfg = params.config
    ids = np.asarray(decoder_input_ids, dtype=np.int64)
    y = _dropout(embed(ids, params), cfg.dropout, dropout_rng)
    t = y.shape[1]
    rel = _rel_bias(params["dec_rel_bias"], t, t, False, cfg)
    self_bias = _causal_bias(t)
    cross_bias = _key_mask_bias(enc.mask)
    for i in range(cfg.num_layers):
        h = _rmsnorm(y, params[f"dec{i}.norm1"])
        a = _attention(h, h, _attn_weights(params, f"dec{i}.self"), cfg, rel,
                       self_bias)
        y = y + _dropout(a, cfg.dropout, dropout_rng)
        h = _rmsnorm(y, params[f"dec{i}.norm2"])
        a = _attention(h, enc.hidden, _attn_weights(params, f"dec{i}.cross"),
                       cfg, None, cross_bias)
        y = y + _dropout(a, cfg.dropout, dropout_rng)
        h = _rmsnorm(y, params[f"dec{i}.norm3"])
        f = (h @ params[f"dec{i}.ffn.w1"]).relu() @ params[f"dec{i}.ffn.w2"]
        y = y + _dropout(f, cfg.dropout, dropout_rng)
        _check_finite(y, f"decoder layer {i}")
    y = _rmsnorm(y, params["dec_final_norm"])
    logits = y @ params["lm_head"]
    return logits.softmax(axis=-1)


def backward(loss: Tensor, params: ModelParameters) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss for every parameter tensor;
    parameters outside the recorded graph get zero gradients."""
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params.named_tensors():
        grads[name] = (
            tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        )
        tensor.grad = None
    return grads


# ---------------------------------------------------------------------------
# Checkpoint container: one JSON manifest line, then raw little-endian
# float32 payloads in manifest order.

def save_checkpoint(
    params: ModelParameters, path: str, vocab_sha256: str | None = None
) -> None:
    entries = []
    offset = 0
    payloads = []
    for name, tensor in params.named_tensors():
        payload = tensor.data.astype("<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(tensor.data.shape),
                "offset": offset,
                "size": len(payload),
            }
        )
        offset += len(payload)
        payloads.append(payload)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "seed": params.config.seed,
        "vocab_sha256": vocab_sha256,
        "tensors": entries,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for payload in payloads:
            fh.write(payload)


def load_checkpoint(path: str) -> tuple[ModelParameters, dict]:
    """Read a checkpoint; returns parameters and the manifest."""
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            manifest = json.loads(header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ModelError(f"{path}: not a checkpoint file ({exc})") from exc
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version")
        cfg = ModelConfig.from_dict(manifest["config"])
        expected = _tensor_shapes(cfg)
        listed = [(e["name"], tuple(e["shape"])) for e in manifest["tensors"]]
        if listed != expected:
            raise ModelError(f"{path}: tensor listing does not match config")
        blob = fh.read()
    tensors: dict[str, Tensor] = {}
    for entry in manifest["tensors"]:
        lo, hi = entry["offset"], entry["offset"] + entry["size"]
        if hi > len(blob):
            raise ModelError(f"{path}: truncated payload for {entry['name']}")
        flat = np.frombuffer(blob[lo:hi], dtype="<f4").astype(np.float64)
        tensors[entry["name"]] = parameter(flat.reshape(entry["shape"]))
    return ModelParameters(cfg, tensors), manifest
