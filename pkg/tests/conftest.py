import numpy as np
import pytest

from elicit import data


def make_cluster_matrix(n_per_cluster=100, items_per_cluster=10, clusters=3,
                        p_like=0.6, seed=0):
    """Synthetic dataset with disjoint user groups, each liking one disjoint
    item block. The informative seed set is one item per block."""
    rng = np.random.Generator(np.random.PCG64(seed))
    m = clusters * items_per_cluster
    rows = []
    for c in range(clusters):
        block = np.arange(c * items_per_cluster, (c + 1) * items_per_cluster)
        for _ in range(n_per_cluster):
            liked = block[rng.random(items_per_cluster) < p_like]
            while len(liked) < 2:
                liked = block[rng.random(items_per_cluster) < p_like]
            rows.append(np.sort(liked).astype(np.int64))
    n = len(rows)
    return data.RatingMatrix(
        n=n, m=m, rows=rows,
        user_index={str(u): u for u in range(n)},
        item_index={str(i): i for i in range(m)},
    )


def write_raw_file(path, records, delimiter="::"):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(delimiter.join(str(f) for f in rec) + "\n")


@pytest.fixture
def cluster_matrix():
    return make_cluster_matrix(seed=0)
