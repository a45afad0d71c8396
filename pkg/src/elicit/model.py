"""End-to-end seed-item selection: relaxed categorical encoder, 2-layer
sigmoid decoder, joint MSE training with Adam and temperature annealing,
decoder re-training on hard selections, and new-user recommendation."""

import struct
from dataclasses import dataclass, field

import numpy as np

from .linalg import gumbel_noise, softmax_rows

__all__ = [
    "TrainConfig",
    "DecoderParams",
    "AdamState",
    "temperature",
    "init_encoder",
    "init_decoder",
    "encode",
    "decode",
    "mse_loss",
    "backward",
    "adam_step",
    "train",
    "extract_seeds",
    "retrain_decoder",
    "recommend",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"DRE1"


@dataclass(frozen=True)
class TrainConfig:
    k: int
    d: int = 300
    lr: float = 0.005
    epochs: int = 400
    batch_size: int = 256
    t0: float = 10.0
    te: float = 0.1
    retrain_epochs: int = 100
    seed: int = 0
    val_every: int = 20

    def __post_init__(self):
        if not (self.t0 >= self.te > 0):
            raise ValueError("need t0 >= te > 0")
        if self.epochs < 1 or self.d < 1 or self.k < 1:
            raise ValueError("epochs, d and k must be positive")


@dataclass
class DecoderParams:
    w1: np.ndarray  # k x d
    b1: np.ndarray  # d
    w2: np.ndarray  # d x m
    b2: np.ndarray  # m

    def copy(self):
        return DecoderParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())

    def astype(self, dtype):
        return DecoderParams(*(a.astype(dtype) for a in (self.w1, self.b1, self.w2, self.b2)))


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def temperature(e, cfg):
    """Exponential annealing from t0 down to te over the epoch budget."""
    return cfg.t0 * (cfg.te / cfg.t0) ** (e / cfg.epochs)


def init_encoder(k, m, rng, dtype=np.float32):
    return (0.01 * rng.standard_normal((k, m))).astype(dtype)


def init_decoder(k, d, m, rng, dtype=np.float32):
    """Glorot-uniform weights, zero biases."""
    lim1 = np.sqrt(6.0 / (k + d))
    lim2 = np.sqrt(6.0 / (d + m))
    return DecoderParams(
        w1=rng.uniform(-lim1, lim1, (k, d)).astype(dtype),
        b1=np.zeros(d, dtype=dtype),
        w2=rng.uniform(-lim2, lim2, (d, m)).astype(dtype),
        b2=np.zeros(m, dtype=dtype),
    )


def encode(phi, r_batch, tau, rng):
    """Relaxed categorical selection: y = softmax((phi + g) / tau) with one
    fresh Gumbel draw shared across the batch; z = r @ y^T."""
    g = gumbel_noise(*phi.shape, rng=rng, dtype=phi.dtype)
    y = softmax_rows(phi + g, tau)
    return y, r_batch @ y.T


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def decode(theta, z_batch):
    h = _sigmoid(z_batch @ theta.w1 + theta.b1)
    return _sigmoid(h @ theta.w2 + theta.b2)


def mse_loss(r_hat, r_batch):
    """Per-user sum of squared errors over items, averaged over the batch."""
    diff = r_hat - r_batch
    return float(np.sum(diff * diff) / r_batch.shape[0])


def _forward_backward(phi, theta, r_batch, tau, g):
    """Forward pass with the given Gumbel noise g, then exact reverse-mode
    gradients of the MSE loss w.r.t. phi and all decoder parameters."""
    b = r_batch.shape[0]
    y = softmax_rows(phi + g, tau)
    z = r_batch @ y.T
    h = _sigmoid(z @ theta.w1 + theta.b1)
    r_hat = _sigmoid(h @ theta.w2 + theta.b2)

    d_out = (2.0 / b) * (r_hat - r_batch) * r_hat * (1.0 - r_hat)
    g_w2 = h.T @ d_out
    g_b2 = d_out.sum(axis=0)
    d_h = (d_out @ theta.w2.T) * h * (1.0 - h)
    g_w1 = z.T @ d_h
    g_b1 = d_h.sum(axis=0)
    d_z = d_h @ theta.w1.T                  # b x k
    d_y = d_z.T @ r_batch                   # k x m
    # softmax backward per row, through (phi + g) / tau
    g_phi = (d_y - (d_y * y).sum(axis=1, keepdims=True)) * y / tau

    loss = mse_loss(r_hat, r_batch)
    grads = {"phi": g_phi, "w1": g_w1, "b1": g_b1, "w2": g_w2, "b2": g_b2}
    return loss, grads


def backward(phi, theta, r_batch, tau, g):
    """Gradients of the reconstruction loss for a replayed noise draw g."""
    return _forward_backward(phi, theta, r_batch, tau, g)[1]


def adam_step(params, grads, state, lr):
    """Standard bias-corrected Adam update, in place on the params dict."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        grad = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * grad
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * grad * grad
        p -= lr * (state.m[name] / c1) / (np.sqrt(state.v[name] / c2) + state.eps)


def extract_seeds(phi):
    """Hard seed itemset: per-row argmax, with collisions resolved by letting
    the most confident rows pick first and later rows fall back to their best
    not-yet-taken item. Output order follows encoder rows."""
    probs = softmax_rows(np.asarray(phi, dtype=np.float64), 1.0)
    k, m = probs.shape
    if m < k:
        raise ValueError(f"cannot pick {k} distinct items out of {m}")
    order = np.argsort(-probs.max(axis=1), kind="stable")
    taken = set()
    items = np.empty(k, dtype=np.int64)
    for row in order:
        for j in np.argsort(-probs[row], kind="stable"):
            if int(j) not in taken:
                taken.add(int(j))
                items[row] = j
                break
    return items


def _validation_ndcg(theta, seeds, matrix, user_ids, N=20):
    """NDCG@N on the given users with hard seed feedback, seeds excluded
    from ranking and from ground truth. Users with empty truth are skipped."""
    from .evaluate import ndcg_at

    seed_set = set(int(s) for s in seeds)
    N = min(N, matrix.m - len(seed_set))
    R = matrix.dense(user_ids, dtype=theta.w1.dtype)
    r_hat = decode(theta, R[:, seeds])
    scores = []
    for i, u in enumerate(user_ids):
        truth = set(int(j) for j in matrix.rows[u]) - seed_set
        if not truth:
            continue
        omega = _rank_candidates(r_hat[i], seeds, N)
        scores.append(ndcg_at(omega, truth, N))
    return float(np.mean(scores)) if scores else 0.0


def train(matrix, split, cfg, log=None):
    """Joint end-to-end training of encoder logits and decoder.

    Per epoch: anneal the temperature, reshuffle training users, and for each
    minibatch run encode -> decode, MSE loss, backprop, one Adam step on both
    parameter groups. Validation NDCG@20 (hard extracted seeds) is recorded
    every cfg.val_every epochs and the best snapshot is kept.

    Returns (phi, theta, history) for the best-validation snapshot.
    """
    ss = np.random.SeedSequence(cfg.seed)
    init_rng, noise_rng, shuffle_rng = (
        np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(3)
    )
    m = matrix.m
    if cfg.k >= m:
        raise ValueError(f"k={cfg.k} must be smaller than the item count {m}")
    dtype = np.float32
    phi = init_encoder(cfg.k, m, init_rng, dtype)
    theta = init_decoder(cfg.k, cfg.d, m, init_rng, dtype)
    R_train = matrix.dense(split.train_users, dtype=dtype)
    n_train = R_train.shape[0]
    state = AdamState()
    params = {"phi": phi, "w1": theta.w1, "b1": theta.b1, "w2": theta.w2, "b2": theta.b2}

    history = []
    best = (-1.0, phi.copy(), theta.copy())
    for e in range(cfg.epochs):
        tau = temperature(e, cfg)
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        for start in range(0, n_train, cfg.batch_size):
            batch = R_train[order[start:start + cfg.batch_size]]
            g = gumbel_noise(cfg.k, m, noise_rng, dtype=dtype)
            loss, grads = _forward_backward(phi, theta, batch, tau, g)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {e} (loss={loss})")
            adam_step(params, grads, state, cfg.lr)
            epoch_loss += loss * batch.shape[0]
        epoch_loss /= n_train

        val_ndcg = None
        if (e + 1) % cfg.val_every == 0 or e == cfg.epochs - 1:
            val_ndcg = _validation_ndcg(theta, extract_seeds(phi), matrix, split.val_users)
            if val_ndcg > best[0]:
                best = (val_ndcg, phi.copy(), theta.copy())
        history.append({"epoch": e, "tau": tau, "loss": epoch_loss, "val_ndcg": val_ndcg})
        if log is not None:
            log(history[-1])
    if best[0] < 0.0:
        best = (0.0, phi, theta)
    return best[1], best[2], history


def retrain_decoder(matrix, split, seeds, theta, epochs, lr=0.005, batch_size=256, seed=0):
    """Decoder-only Adam training with the encoder frozen: the input is the
    hard selection r[:, seeds], no Gumbel noise and no encoder update."""
    if epochs == 0:
        return theta
    theta = theta.copy()
    ss = np.random.SeedSequence(seed)
    shuffle_rng = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
    R_train = matrix.dense(split.train_users, dtype=theta.w1.dtype)
    Z = R_train[:, seeds]
    n_train = R_train.shape[0]
    state = AdamState()
    params = {"w1": theta.w1, "b1": theta.b1, "w2": theta.w2, "b2": theta.b2}
    for e in range(epochs):
        order = shuffle_rng.permutation(n_train)
        for start in range(0, n_train, batch_size):
            idx = order[start:start + batch_size]
            z, r = Z[idx], R_train[idx]
            b = r.shape[0]
            h = _sigmoid(z @ theta.w1 + theta.b1)
            r_hat = _sigmoid(h @ theta.w2 + theta.b2)
            loss = mse_loss(r_hat, r)
            if not np.isfinite(loss):
                raise RuntimeError(f"decoder retraining diverged at epoch {e}")
            d_out = (2.0 / b) * (r_hat - r) * r_hat * (1.0 - r_hat)
            d_h = (d_out @ theta.w2.T) * h * (1.0 - h)
            grads = {
                "w1": z.T @ d_h, "b1": d_h.sum(axis=0),
                "w2": h.T @ d_out, "b2": d_out.sum(axis=0),
            }
            adam_step(params, grads, state, lr)
    return theta


def _rank_candidates(scores, seeds, N):
    """Top-N item indices by descending score, seeds excluded, ties broken
    by ascending index."""
    m = len(scores)
    mask = np.ones(m, dtype=bool)
    mask[seeds] = False
    candidates = np.nonzero(mask)[0]
    if N > len(candidates):
        raise ValueError(f"N={N} exceeds candidate count {len(candidates)}")
    order = np.lexsort((candidates, -scores[candidates].astype(np.float64)))
    return candidates[order[:N]]


def recommend(theta, seeds, z, N):
    """Rank candidate items for a new user from their seed feedback z."""
    z = np.asarray(z, dtype=theta.w1.dtype)
    if z.shape != (len(seeds),):
        raise ValueError(f"feedback must have {len(seeds)} entries, got {z.shape}")
    scores = decode(theta, z[None, :])[0]
    return _rank_candidates(scores, seeds, N)


def save_checkpoint(path, phi, theta, seeds, manifest=None):
    """Binary checkpoint: magic 'DRE1', little-endian u32 (k, m, d), float32
    row-major phi, w1, b1, w2, b2, then the k u32 seed indices. An optional
    sidecar manifest (path + '.manifest') records config and data fingerprint."""
    k, m = phi.shape
    d = theta.w1.shape[1]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", k, m, d))
        for arr in (phi, theta.w1, theta.b1, theta.w2, theta.b2):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(seeds, dtype="<u4").tobytes())
    if manifest is not None:
        with open(path + ".manifest", "w", encoding="utf-8") as fh:
            for key in sorted(manifest):
                fh.write(f"{key}={manifest[key]}\n")


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a DRE1 checkpoint")
    k, m, d = struct.unpack_from("<III", raw, 4)
    off = 16
    shapes = [("phi", (k, m)), ("w1", (k, d)), ("b1", (d,)), ("w2", (d, m)), ("b2", (m,))]
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        off += 4 * count
    seeds = np.frombuffer(raw, dtype="<u4", count=k, offset=off).astype(np.int64)
    theta = DecoderParams(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"])
    return arrays["phi"], theta, seeds
