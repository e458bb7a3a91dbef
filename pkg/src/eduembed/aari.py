"""Stage 2 building blocks: task adapters, embedding fusion, alignment.

Frozen textual embeddings pass through a per-role two-layer adapter,
are convexly fused with learnable ID embeddings, and an InfoNCE-style
loss pulls each adapted text vector toward its own ID vector and away
from the other entities of the same role.

The InfoNCE denominator supports two modes.  ``exclude_positive`` sums
over the negatives only (the as-written formulation, which can go
negative); ``include_positive`` is the standard softmax variant, bounded
below by zero.  Both share one log-sum-exp implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nncore import ParamStore

__all__ = [
    "FusionConfig",
    "AdapterParams",
    "adapt",
    "fuse",
    "align_loss",
    "align_loss_and_grad",
    "total_loss",
]

INFONCE_MODES = ("exclude_positive", "include_positive")


@dataclass(frozen=True)
class FusionConfig:
    """Fusion/alignment hyperparameters shared by the Stage-2 trainers."""

    lam: float = 0.5
    alpha: float = 0.01
    tau: float = 0.1
    dt: int = 64
    infonce_mode: str = "exclude_positive"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda {self.lam} outside [0, 1]")
        if self.alpha < 0.0:
            raise ValueError(f"alpha {self.alpha} must be >= 0")
        if self.tau <= 0.0:
            raise ValueError(f"tau {self.tau} must be > 0")
        if self.infonce_mode not in INFONCE_MODES:
            raise ValueError(f"infonce_mode must be one of {INFONCE_MODES}")


class AdapterParams:
    """Two-layer feedforward adapter d -> d_hidden -> d_out.

    The hidden nonlinearity is tanh by default; ``linear=True`` bypasses
    it (the simple-linear ablation configuration).  Parameters register
    into the given store under ``prefix``.
    """

    def __init__(self, store: ParamStore, prefix: str, d_in: int, d_hidden: int,
                 d_out: int, rng: np.random.Generator, linear: bool = False,
                 out_scale: float = 0.5):
        self.prefix = prefix
        self.linear = linear
        self.W1 = store.add(f"{prefix}_W1", rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_hidden)))
        self.b1 = store.add(f"{prefix}_b1", np.zeros(d_hidden))
        # modest output init keeps fused dot products out of sigmoid
        # saturation; frozen text vectors arrive with norms around sqrt(d)
        self.W2 = store.add(f"{prefix}_W2", rng.normal(0.0, out_scale / np.sqrt(d_hidden), (d_hidden, d_out)))
        self.b2 = store.add(f"{prefix}_b2", np.zeros(d_out))
        self.d_in = d_in
        self.d_out = d_out

    def forward(self, h: np.ndarray):
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != self.d_in:
            raise ValueError(f"adapter {self.prefix}: input dim {h.shape[-1]} != {self.d_in}")
        u = h @ self.W1.value + self.b1.value
        a = u if self.linear else np.tanh(u)
        out = a @ self.W2.value + self.b2.value
        return out, (h, a)

    def backward(self, dout: np.ndarray, cache) -> np.ndarray:
        h, a = cache
        self.W2.grad += a.T @ dout
        self.b2.grad += dout.sum(axis=0)
        da = dout @ self.W2.value.T
        du = da if self.linear else da * (1.0 - a * a)
        self.W1.grad += h.T @ du
        self.b1.grad += du.sum(axis=0)
        return du @ self.W1.value.T


def adapt(h: np.ndarray, adapter: AdapterParams) -> np.ndarray:
    """Task-specific adaptation of a (batch of) textual embedding(s)."""
    out, _ = adapter.forward(np.atleast_2d(h))
    return out if np.asarray(h).ndim > 1 else out[0]


def fuse(h_hat: np.ndarray, g: np.ndarray, lam: float) -> np.ndarray:
    """Convex combination lam * h_hat + (1 - lam) * g."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda {lam} outside [0, 1]")
    h_hat = np.asarray(h_hat, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h_hat.shape != g.shape:
        raise ValueError(f"fuse shape mismatch: {h_hat.shape} vs {g.shape}")
    return lam * h_hat + (1.0 - lam) * g


def _score_grid(h_hat, g, tau):
    h_hat = np.asarray(h_hat, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h_hat.ndim != 2 or h_hat.shape != g.shape:
        raise ValueError("expected matching n x d matrices")
    if h_hat.shape[0] < 2:
        raise ValueError("alignment needs at least 2 entities")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    return h_hat @ g.T / tau


def align_loss(h_hat: np.ndarray, g: np.ndarray, tau: float,
               mode: str = "exclude_positive") -> float:
    """InfoNCE alignment between row-matched text and ID embeddings."""
    value, _, _ = align_loss_and_grad(h_hat, g, tau, mode)
    return value


def align_loss_and_grad(h_hat: np.ndarray, g: np.ndarray, tau: float,
                        mode: str = "exclude_positive"):
    """Alignment loss and gradients w.r.t. both embedding matrices.

    Row i of each matrix refers to the same entity; all other rows of
    ``g`` act as negatives for row i of ``h_hat``.
    """
    if mode not in INFONCE_MODES:
        raise ValueError(f"infonce_mode must be one of {INFONCE_MODES}")
    scores = _score_grid(h_hat, g, tau)
    n = scores.shape[0]
    pos = np.diag(scores).copy()

    masked = scores.copy()
    if mode == "exclude_positive":
        np.fill_diagonal(masked, -np.inf)
    shift = masked.max(axis=1, keepdims=True)
    expos = np.exp(masked - shift)
    denom = expos.sum(axis=1)
    lse = shift[:, 0] + np.log(denom)
    loss = float(np.mean(lse - pos))

    dscores = expos / denom[:, None] / n
    idx = np.arange(n)
    dscores[idx, idx] -= 1.0 / n
    dh = dscores @ np.asarray(g, dtype=np.float64) / tau
    dg = dscores.T @ np.asarray(h_hat, dtype=np.float64) / tau
    return loss, dh, dg


def total_loss(l_cd: float, l_align: float, alpha: float) -> float:
    """Joint Stage-2 objective: task loss plus weighted alignment."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return float(l_cd) + alpha * float(l_align)
