"""Four-test-node, two-supply-node example used throughout the tests and docs."""

import numpy as np

from .supply_model import Dataset, Network

N0 = np.array([[7, 5], [0, 3], [3, 4], [8, 3]])
Y0 = np.array([[3, 1], [0, 0], [0, 0], [2, 1]])

# Relative allocations of the three candidate plans compared in the example.
PLAN_SHAPES = {
    "least_tested": np.array([0.0, 1.0, 0.0, 0.0]),
    "uniform": np.array([0.25, 0.25, 0.25, 0.25]),
    "highest_sfps": np.array([0.5, 0.0, 0.0, 0.5]),
}


def network() -> Network:
    return Network(test_nodes=("TN1", "TN2", "TN3", "TN4"), supply_nodes=("SN1", "SN2"))


def dataset(sensitivity: float = 1.0, specificity: float = 1.0) -> Dataset:
    return Dataset.from_counts(network(), N0, Y0, sensitivity, specificity)
