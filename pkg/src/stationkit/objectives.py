"""Builtin smooth test objectives with analytic gradients."""

import math

import numpy as np

from .errors import InvalidArgument
from .oracle import Objective


def quadratic(d, lipschitz=1.0, center=None, domain="cube"):
    """``(L/2) ||x - c||^2``; gradient-Lipschitz with constant ``L``."""
    c = np.full(d, 0.5) if center is None else np.asarray(center, dtype=float)
    if c.shape != (d,):
        raise InvalidArgument(f"center must have dimension {d}")

    def func(x):
        return 0.5 * lipschitz * np.sum((x - c) ** 2, axis=1)

    def grad(x):
        return lipschitz * (x - c)

    return Objective(func, d, lipschitz, grad=grad, domain=domain, name="quadratic")


def cosine(d, lipschitz=1.0, domain="cube"):
    """Separable ``sum (1 - cos(pi x_i)) L / pi^2``; gradient-Lipschitz with constant ``L``."""
    scale = lipschitz / math.pi**2

    def func(x):
        return scale * np.sum(1.0 - np.cos(math.pi * x), axis=1)

    def grad(x):
        return (lipschitz / math.pi) * np.sin(math.pi * x)

    return Objective(func, d, lipschitz, grad=grad, domain=domain, name="cosine")


BUILTINS = {"quadratic": quadratic, "cosine": cosine}
