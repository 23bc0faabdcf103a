"""Shared feature trunk, residual label cleaner, and sigmoid classifier head.

The cleaner maps a noisy label vector plus the trunk embedding to cleaned
targets through an additive residual clipped to [0, 1]. Its final
projection starts at exactly zero, so a freshly initialized cleaner is the
identity on labels; everything it learns is a correction on top of the
input annotations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, FormatError

_INIT_TAG = 11

CHECKPOINT_MAGIC = b"NLLAB-CKPT"
CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelDims:
    """Layer widths; feature_dim and class_count come from the dataset."""

    feature_dim: int
    class_count: int
    embed_dim: int = 32
    label_embed_dim: int = 32
    trunk_hidden: int = 64
    fuse_hidden: int = 64

    def validate(self) -> None:
        for name in (
            "feature_dim",
            "class_count",
            "embed_dim",
            "label_embed_dim",
            "trunk_hidden",
            "fuse_hidden",
        ):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")


def parameter_layout(dims: ModelDims):
    """(name, shape, init) per parameter; init is 'glorot', 'zero_bias', or
    'zero' for the residual projection."""
    k, d = dims.feature_dim, dims.class_count
    e, ey = dims.embed_dim, dims.label_embed_dim
    hf, hc = dims.trunk_hidden, dims.fuse_hidden
    return (
        ("trunk_w1", (k, hf), "glorot"),
        ("trunk_b1", (hf,), "zero_bias"),
        ("trunk_w2", (hf, e), "glorot"),
        ("trunk_b2", (e,), "zero_bias"),
        ("label_w", (d, ey), "glorot"),
        ("label_b", (ey,), "zero_bias"),
        ("fuse_w", (ey + e, hc), "glorot"),
        ("fuse_b", (hc,), "zero_bias"),
        ("resid_w", (hc, d), "zero"),
        ("resid_b", (d,), "zero"),
        ("head_w", (e, d), "glorot"),
        ("head_b", (d,), "zero_bias"),
    )

TRUNK_PARAMS = ("trunk_w1", "trunk_b1", "trunk_w2", "trunk_b2")
CLEANER_PARAMS = ("label_w", "label_b", "fuse_w", "fuse_b", "resid_w", "resid_b")
HEAD_PARAMS = ("head_w", "head_b")


class ModelParams:
    """Ordered bag of named parameter tensors; tensors are immutable, the
    bag swaps them wholesale on update."""

    def __init__(self, dims: ModelDims, tensors: dict):
        dims.validate()
        self.dims = dims
        expected = {name: shape for name, shape, _ in parameter_layout(dims)}
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ConfigurationError(f"parameter names mismatch: missing {missing}, extra {extra}")
        for name, shape in expected.items():
            if tensors[name].data.shape != shape:
                raise ConfigurationError(
                    f"parameter '{name}' has shape {tensors[name].data.shape}, expected {shape}"
                )
        self._tensors = {name: tensors[name] for name, _, _ in parameter_layout(dims)}

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def replace(self, name: str, tensor: Tensor) -> None:
        if name not in self._tensors:
            raise ConfigurationError(f"unknown parameter '{name}'")
        if tensor.data.shape != self._tensors[name].data.shape:
            raise ConfigurationError(
                f"parameter '{name}': shape {tensor.data.shape} != "
                f"{self._tensors[name].data.shape}"
            )
        self._tensors[name] = tensor

    def named(self) -> dict:
        return dict(self._tensors)

    def names(self):
        return tuple(self._tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, {n: Tensor(t.data) for n, t in self._tensors.items()})

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def equals_bitwise(self, other: "ModelParams") -> bool:
        return self.dims == other.dims and all(
            np.array_equal(self._tensors[n].data, other._tensors[n].data)
            for n in self._tensors
        )


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Uniform Glorot weights, zero biases, and an exactly-zero residual
    projection so cleaning starts as the identity."""
    dims.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, _INIT_TAG])))
    tensors = {}
    for name, shape, kind in parameter_layout(dims):
        if kind == "glorot":
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = Tensor(rng.uniform(-limit, limit, size=shape))
        else:
            tensors[name] = Tensor(np.zeros(shape))
    return ModelParams(dims, tensors)


def _as_batch(values, width: int, what: str) -> Tensor:
    t = values if isinstance(values, Tensor) else Tensor(values)
    if t.data.ndim != 2:
        raise ConfigurationError(f"{what} must be a 2-d batch, got shape {t.data.shape}")
    if t.data.shape[1] != width:
        raise ConfigurationError(
            f"{what} has width {t.data.shape[1]}, expected {width}"
        )
    return t


def features(params: ModelParams, inputs) -> Tensor:
    """Trunk embedding of a feature batch."""
    x = _as_batch(inputs, params.dims.feature_dim, "features input")
    hidden = ad.tanh(ad.affine(x, params["trunk_w1"], params["trunk_b1"]))
    return ad.affine(hidden, params["trunk_w2"], params["trunk_b2"])


def clean_labels(params: ModelParams, noisy, embedding: Tensor) -> Tensor:
    """Cleaned targets: clip(noisy + residual(noisy, embedding), [0, 1])."""
    y = _as_batch(noisy, params.dims.class_count, "noisy labels")
    emb = _as_batch(embedding, params.dims.embed_dim, "embedding")
    if y.data.shape[0] != emb.data.shape[0]:
        raise ConfigurationError(
            f"noisy labels have {y.data.shape[0]} rows but embedding has "
            f"{emb.data.shape[0]}"
        )
    label_emb = ad.affine(y, params["label_w"], params["label_b"])
    fused = ad.tanh(
        ad.affine(ad.concat([label_emb, emb], axis=1), params["fuse_w"], params["fuse_b"])
    )
    residual = ad.affine(fused, params["resid_w"], params["resid_b"])
    return ad.clip01(y + residual)


def predict(params: ModelParams, embedding: Tensor) -> Tensor:
    """Per-class probabilities from the classifier head."""
    emb = _as_batch(embedding, params.dims.embed_dim, "embedding")
    return ad.sigmoid(ad.affine(emb, params["head_w"], params["head_b"]))


def save_checkpoint(params: ModelParams, path) -> None:
    """Magic line, JSON header, then little-endian float64 payloads in
    layout order. Round-trips bitwise."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": {
            "feature_dim": params.dims.feature_dim,
            "class_count": params.dims.class_count,
            "embed_dim": params.dims.embed_dim,
            "label_embed_dim": params.dims.label_embed_dim,
            "trunk_hidden": params.dims.trunk_hidden,
            "fuse_hidden": params.dims.fuse_hidden,
        },
        "tensors": [
            {"name": name, "shape": list(params[name].data.shape)}
            for name in params.names()
        ],
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + b"\n")
        fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8") + b"\n")
        for name in params.names():
            fh.write(np.ascontiguousarray(params[name].data, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic_end = blob.find(b"\n")
    if magic_end < 0 or blob[:magic_end] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    header_end = blob.find(b"\n", magic_end + 1)
    if header_end < 0:
        raise FormatError("checkpoint is truncated before the header")
    try:
        header = json.loads(blob[magic_end + 1 : header_end].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"checkpoint header is not valid JSON: {exc}") from None
    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"unsupported checkpoint version {version!r} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        dims = ModelDims(**header["dims"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"checkpoint dims are malformed: {exc}") from None
    layout = parameter_layout(dims)
    declared = [(t["name"], tuple(t["shape"])) for t in header.get("tensors", [])]
    if declared != [(name, shape) for name, shape, _ in layout]:
        raise FormatError("checkpoint tensor table does not match the expected layout")
    payload = blob[header_end + 1 :]
    tensors = {}
    offset = 0
    for name, shape, _ in layout:
        count = int(np.prod(shape))
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise FormatError(f"checkpoint payload is truncated at tensor '{name}'")
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype="<f8").reshape(shape)
        tensors[name] = Tensor(arr.astype(np.float64))
        offset += nbytes
    if offset != len(payload):
        raise FormatError(f"checkpoint has {len(payload) - offset} trailing bytes")
    return ModelParams(dims, tensors)
