import numpy as np
import pytest

from mseboot import CountTable, ModelSpec, enumerate_models

# Korea sex-trafficking table: lists B, C, D mapped to bits 1, 2, 4.
KOREA_COUNTS = {
    0b111: 12,
    0b011: 54,
    0b101: 6,
    0b001: 5,
    0b010: 5,
    0b100: 41,
}

# Four sparse four-list tables sharing the same singleton counts.
A, B, C, D = 1, 2, 4, 8
_TABLE1_BASE = {A: 13, B: 16, C: 12, D: 11, A | B: 3, B | D: 4}
TABLE1 = {
    "n1": {**_TABLE1_BASE, A | B | C: 2, A | C | D: 1, B | C | D: 1},
    "n2": {**_TABLE1_BASE, A | B | C: 2},
    "n3": dict(_TABLE1_BASE),
    "n4": {**_TABLE1_BASE, A | B: 0, A | B | C: 2},
}


@pytest.fixture
def korea():
    return CountTable.from_counts(3, KOREA_COUNTS)


@pytest.fixture(scope="session")
def korea_space():
    return enumerate_models(3, 2)


@pytest.fixture
def table1():
    return {k: CountTable.from_counts(4, v) for k, v in TABLE1.items()}


@pytest.fixture
def abcd_model():
    return ModelSpec.from_notation("[123,14]", 4)


def random_table(rng: np.random.Generator, t: int, mean: float = 8.0,
                 zero_prob: float = 0.0) -> CountTable:
    """Random positive table; optionally zero out cells to make it sparse."""
    counts = {}
    for mask in range(1, 1 << t):
        if rng.random() < zero_prob:
            continue
        counts[mask] = int(rng.poisson(mean)) + 1
    if not counts:
        counts[1] = 1
    return CountTable.from_counts(t, counts)
