"""Comparison methods: random / popularity / maximal-volume seed selection,
the linear least-squares decoder, the '++' variants that pair any selector
with the neural decoder, and the non-personalized popularity ranking."""

from dataclasses import dataclass

import numpy as np

from . import model
from .linalg import maxvol, ridge_solve, truncated_svd

__all__ = [
    "LinearDecoder",
    "select_random",
    "select_popular",
    "rbmf_select",
    "rbmf_decoder",
    "plusplus_decoder",
    "mostpop_ranking",
    "save_seeds",
    "load_seeds",
]


@dataclass
class LinearDecoder:
    x: np.ndarray  # k x m
    seeds: np.ndarray

    def predict(self, z):
        return np.asarray(z, dtype=np.float64) @ self.x


def select_random(m, k, rng):
    """Uniform sample of k distinct items."""
    if k > m:
        raise ValueError(f"cannot sample k={k} from m={m} items")
    return rng.permutation(m)[:k].astype(np.int64)


def select_popular(matrix, k):
    """Top-k items by positive-interaction count, ties by ascending index."""
    counts = matrix.item_counts()
    order = np.lexsort((np.arange(matrix.m), -counts))
    return order[:k].astype(np.int64)


def rbmf_select(matrix, k, delta=0.01, seed=0):
    """Maximal-volume seed selection: rank-k SVD of the training matrix, then
    Maxvol over the item rows of the (value-weighted) right factor."""
    svd = truncated_svd(matrix if isinstance(matrix, np.ndarray) else matrix.dense(), k, seed=seed)
    result = maxvol(svd.right.T, delta=delta)
    return result.indices.astype(np.int64)


def rbmf_decoder(matrix_train, seeds):
    """Linear decoder X from the regularized least-squares fit of the full
    training matrix onto its seed columns; predictions are z @ X."""
    R = matrix_train if isinstance(matrix_train, np.ndarray) else matrix_train.dense()
    x = ridge_solve(R[:, seeds], R)
    return LinearDecoder(x=x, seeds=np.asarray(seeds, dtype=np.int64))


def plusplus_decoder(matrix, split, seeds, cfg):
    """Neural decoder for a fixed, externally chosen seed itemset: a fresh
    decoder trained on hard selections with the full epoch budget. Shares the
    training loop and architecture with the end-to-end model."""
    ss = np.random.SeedSequence(cfg.seed)
    init_rng = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
    theta = model.init_decoder(cfg.k, cfg.d, matrix.m, init_rng)
    return model.retrain_decoder(
        matrix, split, seeds, theta, epochs=cfg.epochs,
        lr=cfg.lr, batch_size=cfg.batch_size, seed=cfg.seed,
    )


def mostpop_ranking(matrix_train, excluded, N):
    """Popularity-descending ranking over all items minus the excluded seed
    set; identical for every user. Ties broken by ascending item index."""
    counts = matrix_train.item_counts()
    mask = np.ones(matrix_train.m, dtype=bool)
    mask[np.asarray(excluded, dtype=np.int64)] = False
    candidates = np.nonzero(mask)[0]
    if N > len(candidates):
        raise ValueError(f"N={N} exceeds candidate count {len(candidates)}")
    order = np.lexsort((candidates, -counts[candidates]))
    return candidates[order[:N]]


def save_seeds(seeds, path):
    """Seed exchange file: one ASCII decimal item index per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in seeds:
            fh.write(f"{int(s)}\n")


def load_seeds(path):
    with open(path, "r", encoding="utf-8") as fh:
        seeds = np.array([int(line.strip()) for line in fh if line.strip()], dtype=np.int64)
    if len(set(seeds.tolist())) != len(seeds):
        raise ValueError(f"{path}: duplicate seed indices")
    return seeds
