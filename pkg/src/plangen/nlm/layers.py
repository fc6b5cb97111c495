"""Neural Logic Machine wiring.

Tensors carry a leading batch axis, then ``r`` object axes for arity ``r``,
then channels: ``(B, n, ..., n, C)``.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import permutations

import numpy as np

from . import autodiff as ad


@lru_cache(maxsize=None)
def perms(r: int) -> tuple[tuple[int, ...], ...]:
    return tuple(permutations(range(r)))


@lru_cache(maxsize=64)
def self_mask(n: int, r: int) -> np.ndarray:
    """True where the last of ``r`` object indices repeats an earlier one.

    Shape ``(1, n, ..., n, 1)``; used to drop such entries when reducing the
    last object axis.
    """
    grids = np.indices((n,) * r)
    mask = np.zeros((n,) * r, dtype=bool)
    for k in range(r - 1):
        mask |= grids[k] == grids[r - 1]
    return mask[None, ..., None]


def expand(t: ad.Tensor, n: int) -> ad.Tensor:
    """Arity r -> r+1 by broadcasting along a new trailing object axis."""
    return ad.expand(t, t.ndim - 1, n)


def reduce(t: ad.Tensor, mode: str, exclude_self: bool = True) -> ad.Tensor:
    """Arity r -> r-1 by quantifying the last object axis (exists=max, forall=min)."""
    r = t.ndim - 2
    if r < 1:
        raise ValueError("cannot reduce a nullary tensor")
    exclude = self_mask(t.shape[1], r) if exclude_self and r >= 2 else None
    op = ad.reduce_max if mode == "exists" else ad.reduce_min
    return op(t, t.ndim - 2, exclude)


def _perm_axes(p, r):
    return (0,) + tuple(1 + i for i in p) + (r + 1,)


def permute_stack(t: ad.Tensor) -> ad.Tensor:
    """Concatenate all r! object-axis permutations along channels."""
    r = t.ndim - 2
    if r <= 1:
        return t
    return ad.concat([ad.transpose(t, _perm_axes(p, r)) for p in perms(r)], axis=-1)


def permuted_linear(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    """``permute_stack(x) @ w + b`` without materialising the permuted copies.

    ``w`` has shape ``(r! * C, H)``; block ``p`` acts on permutation ``p``.
    Each block is applied to the unpermuted input and the (narrower) result
    is permuted instead.
    """
    r = x.ndim - 2
    ps = perms(r) if r > 1 else ((),)
    if len(ps) == 1:
        return ad.add(ad.matmul(x, w), b)
    c = x.shape[-1]
    h = w.shape[1]
    # (P*C, H) -> (C, P*H) so one matmul serves every permutation.
    wcat = ad.reshape(ad.transpose(ad.reshape(w, (len(ps), c, h)), (1, 0, 2)), (c, len(ps) * h))
    z = ad.matmul(x, wcat)
    # transpose commutes with the channel contraction
    total = None
    for k, p in enumerate(ps):
        term = ad.transpose(ad.slice_last(z, k * h, (k + 1) * h), _perm_axes(p, r))
        total = term if total is None else ad.add(total, term)
    return ad.add(total, b)
