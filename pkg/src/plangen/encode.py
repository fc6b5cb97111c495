"""Tensor encodings of generation states and flat action layouts.

Every predicate of arity ``r`` becomes one channel of an ``(n, ..., n)``
tensor with ``r`` object axes.  Policy outputs use a matching flat layout:
one contiguous row-major block of ``n**arity`` entries per predicate (initial
phase) or action schema (goal phase), followed by a single termination entry.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .genmdp import TERMINATE, AtomAction, GenerationMDP, GenState, Phase
from .pddl import GroundAction, State


@dataclass(frozen=True)
class TensorBundle:
    """Per-arity arrays ``arrays[r]`` of shape ``(n,)*r + (C_r,)``.

    ``channels[r][c]`` is ``(name, provenance)`` with provenance one of
    ``"init"``, ``"goal"`` or ``"aux"``.
    """

    arrays: tuple[np.ndarray, ...]
    channels: tuple[tuple[tuple[str, str], ...], ...]
    n: int

    @property
    def breadth(self) -> int:
        return len(self.arrays) - 1

    @property
    def in_channels(self) -> tuple[int, ...]:
        return tuple(len(c) for c in self.channels)

    def channel(self, name: str, provenance: str) -> tuple[int, int]:
        """``(arity, channel index)`` of a named channel."""
        for r, chans in enumerate(self.channels):
            for c, key in enumerate(chans):
                if key == (name, provenance):
                    return r, c
        raise KeyError((name, provenance))

    def value(self, name: str, provenance: str, args: Sequence[int] = ()):
        r, c = self.channel(name, provenance)
        return self.arrays[r][tuple(args) + (c,)]


def stack(bundles: Sequence[TensorBundle]) -> list[np.ndarray]:
    """Batch bundles that share ``n`` into arrays with a leading batch axis."""
    if not bundles:
        raise ValueError("nothing to stack")
    n = bundles[0].n
    if any(b.n != n for b in bundles):
        raise ValueError("bundles in one batch must have the same object count")
    return [np.stack([b.arrays[r] for b in bundles]) for r in range(len(bundles[0].arrays))]


class ActionIndexMap:
    """Bijection between flat indices and actions for one object count ``n``."""

    def __init__(self, arities: Sequence[int], n: int, kind: str):
        if kind not in ("atom", "ground"):
            raise ValueError(f"kind must be 'atom' or 'ground', got {kind!r}")
        self.arities = tuple(arities)
        self.n = n
        self.kind = kind
        self.offsets = []
        off = 0
        for a in self.arities:
            self.offsets.append(off)
            off += n ** a
        self.termination = off
        self.size = off + 1

    def __len__(self):
        return self.size

    def schema_of(self) -> np.ndarray:
        """Schema id per flat index; termination gets ``len(arities)``."""
        out = np.empty(self.size, dtype=np.int64)
        for k, (a, off) in enumerate(zip(self.arities, self.offsets)):
            out[off:off + self.n ** a] = k
        out[self.termination] = len(self.arities)
        return out

    def encode(self, action) -> int:
        if action is TERMINATE:
            return self.termination
        if self.kind == "atom":
            k, args = action.pred, action.args
        else:
            k, args = action.schema, action.args
        if len(args) != self.arities[k] or any(not 0 <= a < self.n for a in args):
            raise ValueError(f"action {action} does not fit this layout")
        idx = 0
        for a in args:
            idx = idx * self.n + a
        return self.offsets[k] + idx

    def decode(self, idx: int) -> Union[AtomAction, GroundAction, object]:
        if not 0 <= idx < self.size:
            raise IndexError(f"action index {idx} outside layout of size {self.size}")
        idx = int(idx)
        if idx == self.termination:
            return TERMINATE
        k = next(
            k for k, (a, off) in enumerate(zip(self.arities, self.offsets)) if off <= idx < off + self.n ** a
        )
        rest = idx - self.offsets[k]
        args = []
        for _ in range(self.arities[k]):
            rest, a = divmod(rest, self.n)
            args.append(a)
        args = tuple(reversed(args))
        return AtomAction(k, args) if self.kind == "atom" else GroundAction(k, args)


def init_action_map(mdp: GenerationMDP, n: int) -> ActionIndexMap:
    return ActionIndexMap([p.arity for p in mdp.domain.predicates], n, "atom")


def goal_action_map(mdp: GenerationMDP, n: int) -> ActionIndexMap:
    return ActionIndexMap([a.arity for a in mdp.domain.actions], n, "ground")


def _truth(domain, state: State, n: int, breadth: int, provenance: str, arrays, channels):
    for r in range(breadth + 1):
        preds = [pi for pi, p in enumerate(domain.predicates) if p.arity == r]
        col = {pi: c for c, pi in enumerate(preds)}
        block = np.zeros((n,) * r + (len(preds),))
        for atom in state.atoms:
            if atom.pred in col:
                block[atom.args + (col[atom.pred],)] = 1.0
        arrays[r].append(block)
        channels[r].extend((domain.predicates[pi].name, provenance) for pi in preds)


def _check_breadth(domain, breadth):
    top = max([p.arity for p in domain.predicates] + [a.arity for a in domain.actions] + [0])
    if top > breadth:
        raise ValueError(f"domain needs arity {top}, above the NLM breadth {breadth}")


def _type_channels(mdp: GenerationMDP, objects, n, arrays, channels):
    types = mdp.object_types
    onehot = np.zeros((n, len(types)))
    col = {t: i for i, t in enumerate(types)}
    for i, o in enumerate(objects):
        if o.type in col:
            onehot[i, col[o.type]] = 1.0
    arrays[1].append(onehot)
    channels[1].extend((f"type({t})", "aux") for t in types)


def encode_init(gs: GenState, mdp: GenerationMDP, breadth: int = 3) -> TensorBundle:
    """Initial-phase encoding over real objects followed by the virtual set."""
    if gs.phase != Phase.INIT:
        raise ValueError("encode_init requires the INIT phase")
    domain = mdp.domain
    _check_breadth(domain, breadth)
    ext = mdp.extended_state(gs)
    n = len(ext.objects)
    arrays: list[list[np.ndarray]] = [[] for _ in range(breadth + 1)]
    channels: list[list] = [[] for _ in range(breadth + 1)]
    _truth(domain, ext, n, breadth, "init", arrays, channels)

    cap = float(mdp.config.max_init_atoms)
    real = gs.s_ic.objects
    counts = [len(real)]
    names = ["objects"]
    for t in mdp.object_types:
        counts.append(sum(o.type == t for o in real))
        names.append(f"objects({t})")
    per_pred = [0] * len(domain.predicates)
    for a in gs.s_ic.atoms:
        per_pred[a.pred] += 1
    counts.extend(per_pred)
    names.extend(f"atoms({p.name})" for p in domain.predicates)
    arrays[0].append(np.clip(np.array(counts, dtype=float) / cap, 0.0, 1.0))
    channels[0].extend((nm, "aux") for nm in names)

    _type_channels(mdp, ext.objects, n, arrays, channels)
    arrays[1].append(np.array([[1.0 if o.virtual else 0.0] for o in ext.objects]).reshape(n, 1))
    channels[1].append(("virtual", "aux"))
    return _finish(arrays, channels, n)


def encode_goal_pair(gs: GenState, mdp: GenerationMDP, breadth: int = 3) -> TensorBundle:
    """Goal-phase encoding: initial-state and current-state truth side by side."""
    if gs.phase != Phase.GOAL:
        raise ValueError("encode_goal_pair requires the GOAL phase")
    domain = mdp.domain
    _check_breadth(domain, breadth)
    n = len(gs.s_gc.objects)
    arrays: list[list[np.ndarray]] = [[] for _ in range(breadth + 1)]
    channels: list[list] = [[] for _ in range(breadth + 1)]
    _truth(domain, gs.s_ic, n, breadth, "init", arrays, channels)
    _truth(domain, gs.s_gc, n, breadth, "goal", arrays, channels)
    _type_channels(mdp, gs.s_gc.objects, n, arrays, channels)
    return _finish(arrays, channels, n)


def _finish(arrays, channels, n) -> TensorBundle:
    out = []
    for r, parts in enumerate(arrays):
        parts = [p.reshape((n,) * r + (-1,)) for p in parts]
        out.append(np.concatenate(parts, axis=-1) if parts else np.zeros((n,) * r + (0,)))
    return TensorBundle(tuple(out), tuple(tuple(c) for c in channels), n)


def init_channel_counts(mdp: GenerationMDP, breadth: int = 3) -> tuple[int, ...]:
    counts = [0] * (breadth + 1)
    for p in mdp.domain.predicates:
        counts[p.arity] += 1
    counts[0] += 1 + len(mdp.object_types) + len(mdp.domain.predicates)
    counts[1] += len(mdp.object_types) + 1
    return tuple(counts)


def goal_channel_counts(mdp: GenerationMDP, breadth: int = 3) -> tuple[int, ...]:
    counts = [0] * (breadth + 1)
    for p in mdp.domain.predicates:
        counts[p.arity] += 2
    counts[1] += len(mdp.object_types)
    return tuple(counts)


def mask_init(gs: GenState, mdp: GenerationMDP, amap: ActionIndexMap, legal=None) -> np.ndarray:
    """Legal initial-phase entries; ``legal`` may pass a precomputed action list."""
    if legal is None:
        legal = mdp.legal_atom_actions(gs)
    mask = np.zeros(amap.size, dtype=bool)
    for a in legal:
        mask[amap.encode(a)] = True
    if mdp.can_terminate_init(gs) or not legal:
        mask[amap.termination] = True
    return mask


def mask_goal(gs: GenState, mdp: GenerationMDP, amap: ActionIndexMap, legal=None) -> np.ndarray:
    if legal is None:
        legal = mdp.legal_goal_actions(gs)
    mask = np.zeros(amap.size, dtype=bool)
    for a in legal:
        mask[amap.encode(a)] = True
    mask[amap.termination] = True
    return mask


def decode_action(idx: int, amap: ActionIndexMap):
    return amap.decode(idx)
