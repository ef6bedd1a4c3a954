import numpy as np
import pytest

from crtweight import from_arrays


@pytest.fixture
def toy_dataset():
    """Two clusters, four rows: treated outcomes {1, 3}, control {0, 2}."""
    return from_arrays(
        cluster_ids=["t", "t", "c", "c"],
        treatments=[1, 1, 0, 0],
        covariates=np.array([[0.5], [1.0], [-0.5], [0.2]]),
        outcomes=[1.0, 3.0, 0.0, 2.0],
        design_treatment_prob=0.5,
    )


def random_dataset(rng, n_clusters=10, d=3, pi_t=0.5, treated_frac=0.5, size_range=(2, 9)):
    """Small synthetic dataset with both arms populated."""
    ids, zs, Xs, ys = [], [], [], []
    n_treated = max(1, int(round(treated_frac * n_clusters)))
    for j in range(n_clusters):
        size = int(rng.integers(*size_range))
        ids += [f"c{j:03d}"] * size
        zs += [int(j < n_treated)] * size
        Xs.append(rng.normal(0.0, 1.0, (size, d)))
        ys.append(rng.normal(0.0, 1.0, size))
    return from_arrays(ids, zs, np.vstack(Xs), np.concatenate(ys), pi_t)
