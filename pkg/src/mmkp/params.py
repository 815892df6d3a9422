"""Named parameter registry shared by all model components."""

import numpy as np

from . import autodiff as ad
from .errors import ContractError


class ParamStore:
    """Flat name -> Tensor map. Creation order is fixed, which keeps the
    optimizer walk, checkpoint layout, and gradient checks deterministic."""

    def __init__(self, seed=0, init_scale=0.1):
        self._rng = np.random.default_rng(seed)
        self._scale = init_scale
        self.params = {}

    def add(self, name, shape, zero=False):
        if name in self.params:
            raise ContractError(f"duplicate parameter {name!r}")
        if zero:
            values = np.zeros(shape)
        else:
            values = self._rng.uniform(-self._scale, self._scale, size=shape)
        t = ad.tensor(values, requires_grad=True)
        self.params[name] = t
        return t

    def add_fixed(self, name, values):
        if name in self.params:
            raise ContractError(f"duplicate parameter {name!r}")
        t = ad.tensor(values, requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def items(self):
        return self.params.items()

    def values(self):
        return self.params.values()

    def names(self):
        return list(self.params)

    def zero_grads(self):
        for t in self.params.values():
            t.grad = None

    def n_scalars(self):
        return sum(t.data.size for t in self.params.values())
