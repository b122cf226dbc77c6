"""Tiny module system: named parameter trees and a few standard layers."""
import numpy as np

from . import ops
from .array import Parameter


class Module:
    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def assign_names(self):
        """Stamp every parameter with its dotted path."""
        seen = set()
        for name, p in self.named_parameters():
            if name in seen:
                raise ValueError(f"duplicate parameter name {name!r}")
            seen.add(name)
            p.name = name
        return self

    def state_dict(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        bad = [f"{k}: expected {own[k].shape}, got {np.shape(state[k])}"
               for k in own if k in state and np.shape(state[k]) != own[k].shape]
        if missing or bad:
            raise ValueError("incompatible state: " + "; ".join(
                [f"missing {m}" for m in missing] + bad))
        for k, p in own.items():
            p.data = np.array(state[k], dtype=p.data.dtype)


def uniform_init(rng, shape, fan_in, name=""):
    bound = 1.0 / np.sqrt(fan_in)
    return Parameter(rng.uniform(-bound, bound, size=shape), name=name)


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True):
        self.weight = uniform_init(rng, (d_in, d_out), d_in)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim):
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def __call__(self, x):
        return ops.layer_norm(x, self.weight, self.bias)
