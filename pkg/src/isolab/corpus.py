"""Builtin positive test functions for the grid-based proof paths.

Each entry maps points of shape (m, n) to values of shape (m,). All are
positive on the whole lattice (not only on the ball), so band nodes that sit
slightly outside the sphere are safe.
"""

from __future__ import annotations

import numpy as np


def const1(x):
    return np.ones(np.shape(x)[0])


def bump1(x):
    return 2.0 - np.sum(np.asarray(x) ** 2, axis=-1)


def gauss(x):
    x = np.asarray(x)
    c = np.zeros(x.shape[-1])
    c[0] = 0.3
    return np.exp(-4.0 * np.sum((x - c) ** 2, axis=-1)) + 0.1


def aniso(x):
    return np.exp(3.0 * np.asarray(x)[..., 0])


def ridge(x):
    # distance to the x1-axis diameter
    x = np.asarray(x)
    dist = np.linalg.norm(x[..., 1:], axis=-1)
    return 1.0 + np.maximum(0.0, 1.0 - 4.0 * dist)


BUILTIN = {
    "const1": const1,
    "bump1": bump1,
    "gauss": gauss,
    "aniso": aniso,
    "ridge": ridge,
}


def get(name: str):
    try:
        return BUILTIN[name]
    except KeyError:
        raise KeyError(f"unknown corpus item {name!r}; known: {', '.join(BUILTIN)}") from None


def is_radial(name: str) -> bool:
    return name in ("const1", "bump1")
