"""Named, shaped, owner-tagged parameter collections."""

from collections import OrderedDict

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor

OWNERS = ("image_encoder", "text_encoder", "image_classifier", "text_classifier")


class ParameterStore:
    """Ordered mapping ``name -> float64 array`` with an owner tag per entry.

    Shapes are fixed at creation; :meth:`assign` refuses a reshape.
    ``model`` holds the architecture config the parameters were built for.
    """

    def __init__(self, model=None):
        self.model = model
        self._values = OrderedDict()
        self._owners = {}

    def add(self, name, value, owner):
        if name in self._values:
            raise KeyError(f"duplicate parameter name {name!r}")
        if owner not in OWNERS:
            raise ValueError(f"unknown owner {owner!r}")
        self._values[name] = np.array(value, dtype=np.float64)
        self._owners[name] = owner

    def assign(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._values[name].shape:
            raise ShapeError(
                f"parameter {name!r} has shape {self._values[name].shape}, got {value.shape}")
        self._values[name] = value.copy()

    def __getitem__(self, name):
        return self._values[name]

    def __contains__(self, name):
        return name in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def items(self):
        return self._values.items()

    def names(self, owner=None):
        return [n for n in self._values if owner is None or self._owners[n] == owner]

    def owner(self, name):
        return self._owners[name]

    def size(self):
        return sum(v.size for v in self._values.values())

    def copy(self):
        out = ParameterStore(self.model)
        for name, value in self._values.items():
            out.add(name, value, self._owners[name])
        return out

    def tensors(self, requires_grad=True):
        """Fresh leaf tensors (one per parameter) for a forward pass."""
        return {n: Tensor(v, requires_grad=requires_grad) for n, v in self._values.items()}

    def equals(self, other):
        """Exact (bitwise) equality of names, owners and values."""
        return (list(self._values) == list(other._values)
                and self._owners == other._owners
                and all(np.array_equal(v, other._values[n]) for n, v in self._values.items()))


class GradientSet(dict):
    """``name -> gradient array`` for every parameter reachable from the loss.

    Parameters absent from the mapping had no path to the loss.
    """

    def get_or_zero(self, params, name):
        return self[name] if name in self else np.zeros_like(params[name])
