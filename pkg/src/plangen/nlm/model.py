"""Logic-machine policy and critic networks."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import factorial
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .layers import expand, permuted_linear, reduce

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NLMConfig:
    depth: int = 7
    breadth: int = 3
    hidden_channels: int = 8
    mlp_hidden_layers: int = 0
    io_residual: bool = True
    residual: bool = False
    exclude_self: bool = True

    def __post_init__(self):
        if self.depth < 1 or self.breadth < 1 or self.hidden_channels < 1:
            raise ValueError("depth, breadth and hidden_channels must be >= 1")
        if self.mlp_hidden_layers < 0:
            raise ValueError("mlp_hidden_layers must be >= 0")


def _layer_inputs(cfg: NLMConfig, in_channels: Sequence[int], layer: int, r: int) -> int:
    b, h = cfg.breadth, cfg.hidden_channels
    prev = list(in_channels) if layer == 0 else [h] * (b + 1)
    c = prev[r]
    if r >= 1:
        c += prev[r - 1]
    if r < b:
        c += 2 * prev[r + 1]
    if layer > 0 and cfg.io_residual:
        c += in_channels[r]
    return c


def _glorot(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class NLM:
    """Stack of logic-machine layers followed by linear read-out heads.

    ``head_arities`` lists the arity of every output schema (predicates or
    action schemas, in index order).  Each gets one logit per grounding, read
    from a linear projection of the last layer at that arity; one extra
    nullary logit scores termination.  With ``value_head=True`` the network
    instead outputs a scalar state value from the nullary channels.
    """

    def __init__(
        self,
        cfg: NLMConfig,
        in_channels: Sequence[int],
        head_arities: Sequence[int] = (),
        value_head: bool = False,
        seed: Optional[int] = 0,
    ):
        self.cfg = cfg
        self.in_channels = tuple(int(c) for c in in_channels)
        if len(self.in_channels) != cfg.breadth + 1:
            raise ValueError(f"expected {cfg.breadth + 1} input arities, got {len(self.in_channels)}")
        self.head_arities = tuple(int(a) for a in head_arities)
        if any(a > cfg.breadth for a in self.head_arities):
            raise ValueError(f"output arity {max(self.head_arities)} exceeds NLM breadth {cfg.breadth}")
        self.value_head = value_head
        self.params: dict[str, ad.Tensor] = {}
        self.init_params(seed)

    # -- parameters --------------------------------------------------------

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg, h = self.cfg, self.cfg.hidden_channels
        shapes = {}
        for layer in range(cfg.depth):
            for r in range(cfg.breadth + 1):
                fan_in = _layer_inputs(cfg, self.in_channels, layer, r) * max(factorial(r), 1)
                shapes[f"layer{layer}.arity{r}.w0"] = (fan_in, h)
                shapes[f"layer{layer}.arity{r}.b0"] = (h,)
                for j in range(1, cfg.mlp_hidden_layers + 1):
                    shapes[f"layer{layer}.arity{r}.w{j}"] = (h, h)
                    shapes[f"layer{layer}.arity{r}.b{j}"] = (h,)
        if self.value_head:
            shapes["value.w"] = (h, 1)
            shapes["value.b"] = (1,)
        else:
            for r in sorted(set(self.head_arities) | {0}):
                k = self.head_arities.count(r) + (1 if r == 0 else 0)
                shapes[f"head.arity{r}.w"] = (h, k)
                shapes[f"head.arity{r}.b"] = (k,)
        return shapes

    def init_params(self, seed):
        """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        self.params = {}
        for name, shape in self.param_shapes().items():
            if len(shape) == 2:
                data = _glorot(rng, *shape)
            else:
                data = np.zeros(shape)
            self.params[name] = ad.parameter(data)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params.values()])

    def set_flat(self, flat: np.ndarray):
        k = 0
        for p in self.params.values():
            p.data = flat[k:k + p.data.size].reshape(p.shape).copy()
            k += p.data.size

    # -- forward -----------------------------------------------------------

    def body(self, inputs: Sequence[np.ndarray]) -> list[ad.Tensor]:
        """Run all layers; ``inputs[r]`` has shape ``(B, n, ..., n, C_r)``."""
        cfg = self.cfg
        if len(inputs) != cfg.breadth + 1:
            raise ValueError(f"expected {cfg.breadth + 1} input tensors, got {len(inputs)}")
        for r, (x, c) in enumerate(zip(inputs, self.in_channels)):
            if x.ndim != r + 2 or x.shape[-1] != c:
                raise ValueError(f"input arity {r} has shape {x.shape}, expected {c} channels")
        n = inputs[1].shape[1] if cfg.breadth >= 1 else 0
        raw = [ad.Tensor(x) for x in inputs]
        prev = raw
        for layer in range(cfg.depth):
            out = []
            for r in range(cfg.breadth + 1):
                parts = [prev[r]]
                if r >= 1:
                    parts.append(expand(prev[r - 1], n))
                if r < cfg.breadth:
                    nxt = prev[r + 1]
                    parts.append(reduce(nxt, "exists", cfg.exclude_self))
                    parts.append(reduce(nxt, "forall", cfg.exclude_self))
                if layer > 0 and cfg.io_residual:
                    parts.append(raw[r])
                x = ad.concat(parts, axis=-1)
                p = self.params
                y = ad.sigmoid(permuted_linear(x, p[f"layer{layer}.arity{r}.w0"], p[f"layer{layer}.arity{r}.b0"]))
                for j in range(1, cfg.mlp_hidden_layers + 1):
                    y = ad.sigmoid(ad.add(ad.matmul(y, p[f"layer{layer}.arity{r}.w{j}"]), p[f"layer{layer}.arity{r}.b{j}"]))
                if cfg.residual and layer > 0:
                    y = ad.add(y, prev[r])
                out.append(y)
            prev = out
        return prev

    def logits(self, inputs: Sequence[np.ndarray]) -> ad.Tensor:
        return policy_logits(self, self.body(inputs))

    def value(self, inputs: Sequence[np.ndarray]) -> ad.Tensor:
        return value_head(self, self.body(inputs))

    # -- checkpoints -------------------------------------------------------

    def describe(self) -> dict:
        return {
            "config": asdict(self.cfg),
            "in_channels": list(self.in_channels),
            "head_arities": list(self.head_arities),
            "value_head": self.value_head,
        }

    def state_dict(self, prefix="") -> dict[str, np.ndarray]:
        return {prefix + k: v.data for k, v in self.params.items()}

    def load_state_dict(self, arrays, prefix=""):
        for name, shape in self.param_shapes().items():
            key = prefix + name
            if key not in arrays:
                raise ValueError(f"checkpoint lacks parameter {key!r}")
            data = np.asarray(arrays[key], dtype=float)
            if data.shape != shape:
                raise ValueError(f"parameter {key!r} has shape {data.shape}, expected {shape}")
            self.params[name] = ad.parameter(data)


def policy_logits(net: NLM, outputs: Sequence[ad.Tensor]) -> ad.Tensor:
    """Flat logits ``(B, L)``: one block of ``n**arity`` per schema, termination last."""
    batch = outputs[0].shape[0]
    heads = {}
    for r in sorted(set(net.head_arities) | {0}):
        heads[r] = ad.add(ad.matmul(outputs[r], net.params[f"head.arity{r}.w"]), net.params[f"head.arity{r}.b"])
    seen = {r: 0 for r in heads}
    blocks = []
    for r in net.head_arities:
        j = seen[r]
        seen[r] += 1
        blocks.append(ad.reshape(ad.slice_last(heads[r], j, j + 1), (batch, -1)))
    k0 = heads[0].shape[-1]
    blocks.append(ad.slice_last(heads[0], k0 - 1, k0))
    return ad.concat(blocks, axis=-1)


def value_head(net: NLM, outputs: Sequence[ad.Tensor]) -> ad.Tensor:
    """State value ``(B,)`` from the nullary channels of the last layer."""
    v = ad.add(ad.matmul(outputs[0], net.params["value.w"]), net.params["value.b"])
    return ad.reshape(v, (v.shape[0],))


@dataclass
class PolicyOutput:
    logits: ad.Tensor
    log_probs: ad.Tensor
    mask: np.ndarray

    @property
    def masked_probs(self) -> np.ndarray:
        return np.where(self.mask, np.exp(self.log_probs.data), 0.0)


def policy_head(logits: ad.Tensor, mask: np.ndarray) -> PolicyOutput:
    """Masked softmax; masked entries get probability exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None, :]
    if not mask.any(axis=-1).all():
        raise ValueError("every row of the mask needs at least one legal entry")
    return PolicyOutput(logits, ad.masked_log_softmax(logits, mask), mask)


def save_checkpoint(path, nets: dict[str, NLM], meta: Optional[dict] = None, extra_arrays=None):
    arrays = {}
    for key, net in nets.items():
        arrays.update(net.state_dict(prefix=f"{key}/"))
    for k, v in (extra_arrays or {}).items():
        arrays[f"extra/{k}"] = v
    header = {
        "version": CHECKPOINT_VERSION,
        "nets": {k: n.describe() for k, n in nets.items()},
        "meta": meta or {},
    }
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def read_checkpoint(path):
    """Return ``(header, arrays)``; ``arrays`` maps names to numpy arrays."""
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    header = json.loads(bytes(arrays.pop("__header__")).decode())
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')!r}")
    return header, arrays


def load_into(nets: dict[str, NLM], header, arrays):
    for key, net in nets.items():
        saved = header["nets"].get(key)
        if saved is None:
            raise ValueError(f"checkpoint has no network {key!r}")
        if saved != json.loads(json.dumps(net.describe())):
            raise ValueError(f"checkpoint network {key!r} does not match the configured architecture")
        net.load_state_dict(arrays, prefix=f"{key}/")
