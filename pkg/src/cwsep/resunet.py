"""Configurable residual UNet forward pass over subband magnitude spectrograms.

Symmetric encoder/decoder with skip connections. A residual block is
[conv 3x3 -> leaky-relu(0.01) -> conv 3x3] plus an identity shortcut
(1x1 conv shortcut when channel counts differ), no normalization.
Downsampling is 2x2 average pooling, upsampling is nearest-neighbor
followed by a 3x3 conv; skips fuse by channel concatenation. The final
head is a single bias-free 3x3 conv producing four tensors (mask logits,
phase real/imag, magnitude residual) per source.

Layer counting rule: every convolution counts, including 1x1 shortcuts,
upsample convs, and the head. The bundled presets hit 276 and 166 conv
layers under this rule.

Inference only; parameters live in a flat name -> float32 array table
serialized via the CWSW container format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cirm import NetworkOutput

LEAKY_SLOPE = 0.01
HEADS_PER_SOURCE = 4

STORE_MAGIC = b"CWSW"
STORE_VERSION = 1


class ModelError(Exception):
    pass


class WeightStoreError(ModelError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 8
    out_sources: int = 1
    blocks_per_level: tuple = (1, 1)
    channels_per_level: tuple = (4, 8)
    target_layer_count: int | None = None

    def __post_init__(self):
        if len(self.blocks_per_level) != len(self.channels_per_level):
            raise ValueError(
                "blocks_per_level and channels_per_level must have equal length "
                f"({len(self.blocks_per_level)} vs {len(self.channels_per_level)})"
            )
        if len(self.blocks_per_level) == 0:
            raise ValueError("at least one level required")
        if any(b < 1 for b in self.blocks_per_level):
            raise ValueError("every level needs at least one block")
        if self.out_sources < 1:
            raise ValueError("out_sources must be >= 1")
        object.__setattr__(self, "blocks_per_level", tuple(self.blocks_per_level))
        object.__setattr__(self, "channels_per_level", tuple(self.channels_per_level))

    @property
    def num_levels(self) -> int:
        return len(self.blocks_per_level)

    def config_hash(self) -> str:
        doc = {
            "in_channels": self.in_channels,
            "out_sources": self.out_sources,
            "blocks_per_level": list(self.blocks_per_level),
            "channels_per_level": list(self.channels_per_level),
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "out_sources": self.out_sources,
            "blocks_per_level": list(self.blocks_per_level),
            "channels_per_level": list(self.channels_per_level),
            "target_layer_count": self.target_layer_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            in_channels=d["in_channels"],
            out_sources=d["out_sources"],
            blocks_per_level=tuple(d["blocks_per_level"]),
            channels_per_level=tuple(d["channels_per_level"]),
            target_layer_count=d.get("target_layer_count"),
        )


PRESETS = {
    # 5 levels x 13 blocks: 4*65 + 3*5 + 1 = 276 convs
    "vocals-276": ModelConfig(
        in_channels=8,
        out_sources=1,
        blocks_per_level=(13,) * 5,
        channels_per_level=(16, 32, 48, 64, 80),
        target_layer_count=276,
    ),
    # 3 levels x 13 blocks: 4*39 + 3*3 + 1 = 166 convs
    "other-166": ModelConfig(
        in_channels=8,
        out_sources=4,
        blocks_per_level=(13,) * 3,
        channels_per_level=(16, 32, 48),
        target_layer_count=166,
    ),
    "tiny": ModelConfig(
        in_channels=8,
        out_sources=1,
        blocks_per_level=(1, 1),
        channels_per_level=(4, 8),
    ),
}


def _conv_shapes(config: ModelConfig):
    """Yield (name, shape, has_bias) for every parameter, in canonical order."""
    c_in = config.in_channels
    chans = config.channels_per_level
    prev = c_in
    for lvl, (blocks, ch) in enumerate(zip(config.blocks_per_level, chans)):
        for b in range(blocks):
            bin_ = prev if b == 0 else ch
            yield from _block_shapes(f"enc{lvl}.block{b}", bin_, ch)
        prev = ch
    for lvl in reversed(range(config.num_levels)):
        ch = chans[lvl]
        yield f"dec{lvl}.upsample.weight", (ch, prev, 3, 3), True
        for b in range(config.blocks_per_level[lvl]):
            bin_ = 2 * ch if b == 0 else ch
            yield from _block_shapes(f"dec{lvl}.block{b}", bin_, ch)
        prev = ch
    out_ch = HEADS_PER_SOURCE * config.out_sources * config.in_channels
    yield "head.weight", (out_ch, prev, 3, 3), False


def _block_shapes(prefix: str, cin: int, cout: int):
    yield f"{prefix}.conv1.weight", (cout, cin, 3, 3), True
    yield f"{prefix}.conv2.weight", (cout, cout, 3, 3), True
    if cin != cout:
        yield f"{prefix}.shortcut.weight", (cout, cin, 1, 1), False


def count_layers(config: ModelConfig) -> int:
    """Number of convolutions under the documented counting rule."""
    return sum(1 for name, _, _ in _conv_shapes(config) if name.endswith(".weight"))


class Model:
    """Parameter table plus the forward pass. Immutable by convention."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params

    @property
    def out_sources(self) -> int:
        return self.config.out_sources

    def forward(self, mag: np.ndarray, ablate_skip: int | None = None):
        """Map a magnitude tensor [in_channels, T, F] to NetworkOutputs.

        Returns one NetworkOutput per source, each tensor shaped exactly
        like the input. `ablate_skip` zeroes one skip tensor (structural
        diagnostics only).
        """
        cfg = self.config
        mag = np.asarray(mag, dtype=np.float32)
        if mag.ndim != 3 or mag.shape[0] != cfg.in_channels:
            raise ValueError(
                f"expected input [{cfg.in_channels}, T, F], got shape {mag.shape}"
            )
        _, t0, f0 = mag.shape
        mult = 2**cfg.num_levels
        pad_t = (-t0) % mult
        pad_f = (-f0) % mult
        h = np.pad(mag, ((0, 0), (0, pad_t), (0, pad_f)))

        skips = []
        for lvl in range(cfg.num_levels):
            for b in range(cfg.blocks_per_level[lvl]):
                h = self._block(h, f"enc{lvl}.block{b}")
            skips.append(h)
            h = _avgpool2(h)
        for lvl in reversed(range(cfg.num_levels)):
            h = _upsample2(h)
            h = _leaky(self._conv(h, f"dec{lvl}.upsample"))
            skip = skips[lvl]
            if ablate_skip == lvl:
                skip = np.zeros_like(skip)
            h = np.concatenate([h, skip], axis=0)
            for b in range(cfg.blocks_per_level[lvl]):
                h = self._block(h, f"dec{lvl}.block{b}")
        out = self._conv(h, "head")[:, :t0, :f0]

        per_source = np.split(out, cfg.out_sources, axis=0)
        results = []
        for chunk in per_source:
            m, pr, pi, q = np.split(chunk, HEADS_PER_SOURCE, axis=0)
            results.append(
                NetworkOutput(mask_logits=m, phase_real=pr, phase_imag=pi, mag_residual=q)
            )
        return results

    def _conv(self, x, prefix):
        w = self.params[f"{prefix}.weight"]
        b = self.params.get(f"{prefix}.bias")
        return _conv2d(x, w, b)

    def _block(self, x, prefix):
        y = _leaky(self._conv(x, f"{prefix}.conv1"))
        y = self._conv(y, f"{prefix}.conv2")
        sc_name = f"{prefix}.shortcut.weight"
        if sc_name in self.params:
            sc = _conv2d(x, self.params[sc_name], None)
        else:
            sc = x
        return y + sc


def _leaky(x):
    return np.where(x >= 0, x, LEAKY_SLOPE * x)


def _conv2d(x, w, b):
    """x [C,H,W], w [O,C,kh,kw] with kh=kw in {1,3}, zero padding to 'same'."""
    o, c, kh, kw = w.shape
    if kh == 1:
        y = np.tensordot(w[:, :, 0, 0], x, axes=([1], [0]))
    else:
        _, hgt, wid = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        v = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # [C,H,W,kh,kw]
        flat = v.transpose(1, 2, 0, 3, 4).reshape(hgt * wid, c * kh * kw)
        y = (flat @ w.reshape(o, -1).T).T.reshape(o, hgt, wid)
    if b is not None:
        y = y + b[:, None, None]
    return y


def _avgpool2(x):
    c, hgt, wid = x.shape
    return x.reshape(c, hgt // 2, 2, wid // 2, 2).mean(axis=(2, 4))


def _upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def build(config: ModelConfig) -> Model:
    """Zero-initialized model with the canonical parameter table.

    Raises if the config declares a target layer count the architecture
    does not hit.
    """
    n = count_layers(config)
    if config.target_layer_count is not None and n != config.target_layer_count:
        raise ModelError(
            f"config targets {config.target_layer_count} conv layers but builds {n}"
        )
    params = {}
    for name, shape, has_bias in _conv_shapes(config):
        params[name] = np.zeros(shape, dtype=np.float32)
        if has_bias:
            params[name[: -len(".weight")] + ".bias"] = np.zeros(shape[0], dtype=np.float32)
    return Model(config, params)


def init_random(model: Model, seed: int) -> Model:
    """He-normal weights, zero biases; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, value in model.params.items():
        if name.endswith(".weight"):
            fan_in = int(np.prod(value.shape[1:]))
            params[name] = (rng.standard_normal(value.shape) * np.sqrt(2.0 / fan_in)).astype(
                np.float32
            )
        else:
            params[name] = np.zeros_like(value)
    return Model(model.config, params)


@dataclass
class WeightStore:
    config_hash: str
    tensors: dict  # name -> float32 ndarray, insertion-ordered
    config: dict | None = None
    metadata: dict = field(default_factory=dict)


def save_weights(model: Model) -> WeightStore:
    return WeightStore(
        config_hash=model.config.config_hash(),
        tensors={k: v.astype(np.float32) for k, v in model.params.items()},
        config=model.config.to_dict(),
        metadata={"source_count": model.config.out_sources},
    )


def load_weights(model: Model, store: WeightStore) -> Model:
    """New Model with the store's tensors; strict name/shape/hash checking."""
    expected_hash = model.config.config_hash()
    if store.config_hash != expected_hash:
        raise WeightStoreError(
            f"config hash mismatch: store {store.config_hash}, model {expected_hash}"
        )
    missing = [k for k in model.params if k not in store.tensors]
    extra = [k for k in store.tensors if k not in model.params]
    bad_shape = [
        k
        for k in model.params
        if k in store.tensors and store.tensors[k].shape != model.params[k].shape
    ]
    if missing or extra or bad_shape:
        parts = []
        if missing:
            parts.append(f"missing: {sorted(missing)}")
        if extra:
            parts.append(f"unexpected: {sorted(extra)}")
        if bad_shape:
            parts.append(f"shape mismatch: {sorted(bad_shape)}")
        raise WeightStoreError("weight store does not match model; " + "; ".join(parts))
    params = {k: store.tensors[k].astype(np.float32) for k in model.params}
    return Model(model.config, params)


def write_store(store: WeightStore, path) -> None:
    """CWSW container: magic, u32 version, u64 header length, JSON header,
    then raw little-endian f32 tensor data in header order."""
    entries = []
    offset = 0
    blobs = []
    for name, tensor in store.tensors.items():
        data = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
        entries.append(
            {"name": name, "shape": list(tensor.shape), "dtype": "f32", "offset": offset}
        )
        blobs.append(data)
        offset += len(data)
    header = {
        "config_hash": store.config_hash,
        "config": store.config,
        "metadata": store.metadata,
        "tensors": entries,
    }
    header_bytes = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(STORE_MAGIC)
        f.write(struct.pack("<I", STORE_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def read_store(path) -> WeightStore:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != STORE_MAGIC:
        raise WeightStoreError(f"{path}: bad magic, not a CWSW weight store")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != STORE_VERSION:
        raise WeightStoreError(f"{path}: unsupported store version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, 8)
    header_start = 16
    data_start = header_start + header_len
    if data_start > len(raw):
        raise WeightStoreError(f"{path}: truncated header")
    header = json.loads(raw[header_start:data_start].decode())
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + entry["offset"]
        end = start + 4 * count
        if end > len(raw):
            raise WeightStoreError(f"{path}: truncated data for tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(raw[start:end], dtype="<f4").reshape(shape)
    return WeightStore(
        config_hash=header["config_hash"],
        tensors=tensors,
        config=header.get("config"),
        metadata=header.get("metadata", {}),
    )


def model_from_store(store: WeightStore) -> Model:
    """Rebuild a model from a store that embeds its config."""
    if store.config is None:
        raise WeightStoreError("weight store carries no model config")
    config = ModelConfig.from_dict(store.config)
    return load_weights(build(config), store)
