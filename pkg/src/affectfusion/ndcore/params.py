"""Named, ordered collections of trainable tensors."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .tensor import Tensor


class ModelParams:
    """Ordered name -> Tensor mapping tagged with the model kind."""

    def __init__(self, kind: str, tensors=None):
        self.kind = kind
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()
        for name, value in (tensors or {}).items():
            self[name] = value

    def __setitem__(self, name: str, value) -> None:
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self._tensors[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def values(self) -> list[Tensor]:
        return list(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def num_params(self) -> int:
        return int(sum(t.size for t in self._tensors.values()))

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, {k: t.data.copy() for k, t in self._tensors.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def __repr__(self) -> str:
        return f"ModelParams(kind={self.kind!r}, tensors={len(self)}, size={self.num_params()})"
