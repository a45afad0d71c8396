"""Raw interaction ingestion, binarization, filtering, matrix building and user splits."""

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "InteractionRecord",
    "RatingMatrix",
    "SplitSpec",
    "load_interactions",
    "binarize",
    "filter_min_ratings",
    "build_matrix",
    "split_users",
    "save_snapshot",
    "load_snapshot",
    "save_maps",
    "load_item_map",
    "matrix_fingerprint",
]

SNAPSHOT_MAGIC = "ELICIT-MATRIX v1"


class DataError(ValueError):
    """Malformed input file or degenerate dataset."""


@dataclass(frozen=True)
class InteractionRecord:
    user: str
    item: str
    rating: float
    timestamp: Optional[int] = None


@dataclass
class RatingMatrix:
    """Binary implicit-feedback matrix stored as per-user sorted positive item indices.

    Immutable after construction; safe to share read-only across threads.
    """

    n: int
    m: int
    rows: list  # list of np.ndarray[int64], strictly increasing within each row
    user_index: dict = field(repr=False)
    item_index: dict = field(repr=False)

    @property
    def nnz(self):
        return sum(len(r) for r in self.rows)

    @property
    def sparsity(self):
        return 1.0 - self.nnz / (self.n * self.m)

    def dense(self, user_ids=None, dtype=np.float64):
        """Densify (a subset of) the matrix. Rows follow the order of user_ids."""
        if user_ids is None:
            user_ids = range(self.n)
        out = np.zeros((len(user_ids), self.m), dtype=dtype)
        for i, u in enumerate(user_ids):
            out[i, self.rows[u]] = 1.0
        return out

    def item_counts(self):
        counts = np.zeros(self.m, dtype=np.int64)
        for r in self.rows:
            counts[r] += 1
        return counts


@dataclass(frozen=True)
class SplitSpec:
    train_users: np.ndarray
    val_users: np.ndarray
    test_users: np.ndarray
    rng_seed: int


def load_interactions(path, delimiter="::"):
    """Parse a delimited interaction log into records, in file order.

    Lines need at least (user, item, rating) fields; a fourth field is taken
    as an integer timestamp. A single leading header line with a non-numeric
    rating field is skipped.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: expected >=3 fields, got {len(parts)}")
            user, item, rating_s = parts[0], parts[1], parts[2]
            try:
                rating = float(rating_s)
            except ValueError:
                if lineno == 1:  # header line
                    continue
                raise DataError(f"{path}:{lineno}: unparseable rating {rating_s!r}")
            if not np.isfinite(rating):
                raise DataError(f"{path}:{lineno}: non-finite rating")
            if not user or not item:
                raise DataError(f"{path}:{lineno}: empty user or item token")
            ts = None
            if len(parts) >= 4:
                try:
                    ts = int(parts[3])
                except ValueError:
                    ts = None
            records.append(InteractionRecord(user, item, rating, ts))
    if not records:
        raise DataError(f"{path}: no interaction records")
    return records


def binarize(records, threshold=3.5):
    """Keep records with rating strictly above threshold, as positives (rating 1)."""
    return [
        InteractionRecord(r.user, r.item, 1.0, r.timestamp)
        for r in records
        if r.rating > threshold
    ]


def filter_min_ratings(records, min_count):
    """Drop users with fewer than min_count positive records (single pass)."""
    counts = {}
    for r in records:
        counts[r.user] = counts.get(r.user, 0) + 1
    kept = [r for r in records if counts[r.user] >= min_count]
    if not kept:
        raise DataError("no users survive the minimum-rating filter")
    return kept


def build_matrix(records):
    """Assemble a RatingMatrix with indices in first-appearance order.

    Items only get an index if they appear in some surviving record, so
    all-zero columns cannot occur. Duplicate (user, item) pairs collapse
    to a single positive.
    """
    if not records:
        raise DataError("no records to build a matrix from")
    user_index, item_index = {}, {}
    pairs = set()
    row_items = []
    for r in records:
        u = user_index.setdefault(r.user, len(user_index))
        if u == len(row_items):
            row_items.append([])
        i = item_index.setdefault(r.item, len(item_index))
        if (u, i) not in pairs:
            pairs.add((u, i))
            row_items[u].append(i)
    rows = [np.array(sorted(items), dtype=np.int64) for items in row_items]
    return RatingMatrix(
        n=len(user_index), m=len(item_index), rows=rows,
        user_index=user_index, item_index=item_index,
    )


def split_users(matrix, test_frac=0.2, val_frac_of_train=0.1, seed=0):
    """Deterministic uniform user split: test fraction first, then validation
    as a fraction of the remaining (train) users.

    Shuffling uses numpy's PCG64 generator so the split is bit-identical
    across platforms for a given seed.
    """
    if not (0.0 < test_frac < 1.0 and 0.0 < val_frac_of_train < 1.0):
        raise ValueError("split fractions must lie in (0, 1)")
    n = matrix.n
    if n < 10:
        raise ValueError(f"need at least 10 users to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(n)
    n_test = int(round(test_frac * n))
    test = perm[:n_test]
    rest = perm[n_test:]
    n_val = int(round(val_frac_of_train * len(rest)))
    val = rest[:n_val]
    train = rest[n_val:]
    return SplitSpec(
        train_users=np.sort(train), val_users=np.sort(val),
        test_users=np.sort(test), rng_seed=seed,
    )


def save_snapshot(matrix, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{SNAPSHOT_MAGIC} n={matrix.n} m={matrix.m} nnz={matrix.nnz}\n")
        for u in range(matrix.n):
            fh.write(f"{u}:{' '.join(str(i) for i in matrix.rows[u])}\n")


def load_snapshot(path, users_map=None, items_map=None):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(SNAPSHOT_MAGIC):
            raise DataError(f"{path}: bad snapshot header {header!r}")
        fields = dict(kv.split("=") for kv in header[len(SNAPSHOT_MAGIC):].split())
        n, m, nnz = int(fields["n"]), int(fields["m"]), int(fields["nnz"])
        rows = [None] * n
        for line in fh:
            u_s, _, items_s = line.rstrip("\n").partition(":")
            rows[int(u_s)] = np.array(
                [int(t) for t in items_s.split()] if items_s else [], dtype=np.int64
            )
    if any(r is None for r in rows):
        raise DataError(f"{path}: missing user rows")
    user_index = _load_map(users_map) if users_map else {str(u): u for u in range(n)}
    item_index = _load_map(items_map) if items_map else {str(i): i for i in range(m)}
    mat = RatingMatrix(n=n, m=m, rows=rows, user_index=user_index, item_index=item_index)
    if mat.nnz != nnz:
        raise DataError(f"{path}: header nnz={nnz} but rows hold {mat.nnz}")
    return mat


def save_maps(matrix, users_path, items_path):
    for index, path in ((matrix.user_index, users_path), (matrix.item_index, items_path)):
        with open(path, "w", encoding="utf-8") as fh:
            for token, idx in sorted(index.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\n")


def _load_map(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            token, _, idx = line.rstrip("\n").rpartition("\t")
            out[token] = int(idx)
    return out


def load_item_map(path):
    """token -> index map, plus the inverse index -> token list."""
    index = _load_map(path)
    inverse = [None] * len(index)
    for token, idx in index.items():
        inverse[idx] = token
    return index, inverse


def matrix_fingerprint(matrix):
    """Stable hash of the matrix contents, recorded in checkpoint manifests."""
    h = hashlib.sha256()
    h.update(f"{matrix.n},{matrix.m},{matrix.nnz};".encode())
    for row in matrix.rows:
        h.update(row.tobytes())
    return h.hexdigest()[:16]
