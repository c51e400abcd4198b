"""Committed fixtures: the TINY dataset and the 7-attribute synthetic network.

The synthetic network's CPTs were produced by ``scripts/tune_fixture.py``
(a one-parameter family tuned to an entropy of 5.12 bits, then rounded to
three decimals). Its joint entropy is recomputed in the tests.
"""

from __future__ import annotations

import numpy as np

from .bayes_net import BayesNet, BNStructure, ConditionalTables
from .discrete_prob import AttributeSchema, Dataset

TINY_SCHEMA = AttributeSchema.from_sizes([("A", 2), ("B", 2), ("C", 2)])
TINY_ROWS = [(0, 0, 0)] * 3 + [(0, 1, 1)] * 2 + [(1, 0, 1)] * 2 + [(1, 1, 1)]


def tiny_dataset() -> Dataset:
    return Dataset.from_rows(TINY_SCHEMA, TINY_ROWS)


SYNTH_PARENTS = {
    "X0": (),
    "X1": ("X0",),
    "X2": ("X1",),
    "X3": ("X1",),
    "X4": ("X0",),
    "X5": ("X4",),
    "X6": ("X3",),
}

SYNTH_CPTS = {
    "X0": [[0.55, 0.45]],
    "X1": [[0.889, 0.111], [0.148, 0.852]],
    "X2": [[0.778, 0.222], [0.129, 0.871]],
    "X3": [[0.834, 0.166], [0.194, 0.806]],
    "X4": [[0.871, 0.129], [0.222, 0.778]],
    "X5": [[0.732, 0.268], [0.111, 0.889]],
    "X6": [[0.85, 0.083, 0.067], [0.061, 0.207, 0.732]],
}

SYNTH_SCHEMA = AttributeSchema.from_sizes([(f"X{i}", 2) for i in range(6)] + [("X6", 3)])


def synthetic_network(cpts: dict | None = None) -> BayesNet:
    """The 7-attribute network (six binary, one ternary; 192 joint cells)."""
    cpts = SYNTH_CPTS if cpts is None else cpts
    structure = BNStructure(SYNTH_SCHEMA.names, SYNTH_PARENTS, SYNTH_SCHEMA.names)
    theta = {k: np.array(v, dtype=float) for k, v in cpts.items()}
    return BayesNet(SYNTH_SCHEMA, structure, ConditionalTables(theta))
