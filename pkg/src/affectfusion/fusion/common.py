"""Batch container and parameter initialisation shared by the fusion models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ndcore import ContractError, ModelParams


@dataclass
class MultiViewBatch:
    """N aligned views, each B x T x d_n, with a shared B x T validity mask."""

    views: list[np.ndarray]
    view_tags: list[str]
    valid: np.ndarray

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=np.float64) for v in self.views]
        self.valid = np.asarray(self.valid, dtype=bool)
        if not self.views:
            raise ContractError("a batch needs at least one view")
        if len(self.views) != len(self.view_tags):
            raise ContractError("one tag per view required")
        if len(set(self.view_tags)) != len(self.view_tags):
            raise ContractError(f"duplicate view tags {self.view_tags}")
        B, T = self.valid.shape
        for tag, v in zip(self.view_tags, self.views):
            if v.ndim != 3 or v.shape[:2] != (B, T):
                raise ContractError(f"view {tag!r} has shape {v.shape}, expected ({B}, {T}, d)")

    @property
    def B(self) -> int:
        return self.valid.shape[0]

    @property
    def T(self) -> int:
        return self.valid.shape[1]

    def view(self, tag: str) -> np.ndarray:
        try:
            return self.views[self.view_tags.index(tag)]
        except ValueError:
            raise ContractError(f"view {tag!r} not in batch {self.view_tags}") from None

    def has(self, tag: str) -> bool:
        return tag in self.view_tags

    def without(self, tag: str) -> "MultiViewBatch":
        keep = [i for i, t in enumerate(self.view_tags) if t != tag]
        return MultiViewBatch([self.views[i] for i in keep],
                              [self.view_tags[i] for i in keep], self.valid)


def uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def add_dense(params: ModelParams, name: str, d_in: int, d_out: int, rng, bias=True) -> None:
    params[f"{name}.w"] = uniform(rng, d_in, (d_in, d_out))
    if bias:
        params[f"{name}.b"] = np.zeros(d_out)


def add_lstm(params: ModelParams, name: str, d_in: int, d_h: int, rng) -> None:
    """Gate order: input, forget, candidate, output. Forget bias starts at +1."""
    params[f"{name}.w"] = uniform(rng, d_in, (d_in, 4 * d_h))
    params[f"{name}.u"] = uniform(rng, d_h, (d_h, 4 * d_h))
    b = np.zeros(4 * d_h)
    b[d_h:2 * d_h] = 1.0
    params[f"{name}.b"] = b
