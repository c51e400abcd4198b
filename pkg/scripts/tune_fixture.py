"""Regenerate the CPTs of the committed 7-attribute fixture.

A one-parameter family of tree CPTs (strength t in [0, 1]) is tuned with
brentq so the joint entropy is 5.12 bits, then rounded to three decimals.
Prints the rounded tables and their entropy; the output is pasted into
``panbayes/fixtures.py``.

Usage: python3 scripts/tune_fixture.py
"""

import numpy as np
from scipy.optimize import brentq

from panbayes.discrete_prob import entropy_bits
from panbayes.fixtures import SYNTH_CPTS, synthetic_network

TARGET_BITS = 5.12


def _binary(a: float, b: float) -> list[list[float]]:
    # rows: parent value; P(child=1 | parent=0) = a, P(child=1 | parent=1) = b
    return [[1 - a, a], [1 - b, b]]


def family(t: float) -> dict:
    s = 0.9 * t
    return {
        "X0": [[0.55, 0.45]],
        "X1": _binary(0.5 - 0.42 * t, 0.5 + 0.38 * t),
        "X2": _binary(0.5 - 0.30 * t, 0.5 + 0.40 * t),
        "X3": _binary(0.5 - 0.36 * t, 0.5 + 0.33 * t),
        "X4": _binary(0.5 - 0.40 * t, 0.5 + 0.30 * t),
        "X5": _binary(0.5 - 0.25 * t, 0.5 + 0.42 * t),
        "X6": [[0.6 + 0.3 * s, 0.25 - 0.2 * s, 0.15 - 0.1 * s], [0.2 - 0.15 * t, 0.3 - 0.1 * t, 0.5 + 0.25 * t]],
    }


def joint_entropy(cpts: dict) -> float:
    return entropy_bits(synthetic_network(cpts).joint_table())


def main() -> None:
    t = brentq(lambda x: joint_entropy(family(x)) - TARGET_BITS, 0.0, 1.0, xtol=1e-12)
    rounded = {k: np.round(np.array(v), 3).tolist() for k, v in family(t).items()}
    print(f"strength t = {t:.6f}")
    for name, rows in rounded.items():
        print(f"    {name!r}: {rows},")
    print(f"H = {joint_entropy(rounded):.6f} bits")
    print("matches committed fixture:", rounded == {k: [list(r) for r in v] for k, v in SYNTH_CPTS.items()})


if __name__ == "__main__":
    main()
