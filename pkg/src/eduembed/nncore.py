"""Minimal differentiable numeric core.

Everything trainable in this package lives in a :class:`ParamStore` of
float64 numpy arrays and is updated by :func:`adam_step`.  The layers here
carry hand-written backward passes; :func:`grad_check` verifies every one
of them (and every composite loss built from them) against central finite
differences.

Randomness everywhere in the package comes from numpy's PCG64 generator
(O'Neill's permuted congruential generator, the documented default bit
generator of ``numpy.random.Generator``), seeded explicitly so runs
reproduce across platforms.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

__all__ = [
    "NumericError",
    "Param",
    "ParamStore",
    "OptimState",
    "new_rng",
    "child_rng",
    "affine",
    "affine_backward",
    "sigmoid",
    "sigmoid_backward",
    "bce",
    "bce_backward",
    "log_softmax_excluding",
    "adam_step",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

BCE_EPS = 1e-7


class NumericError(RuntimeError):
    """Raised when training encounters non-finite values."""


def new_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the single entry point for randomness."""
    return np.random.Generator(np.random.PCG64(seed))


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, *key), independent of call order.

    Used where per-entity sampling (e.g. per-student response capping)
    must not depend on how many draws other entities consumed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *key))))


class Param:
    """One named parameter array with a matching gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape


class ParamStore:
    """Ordered collection of named parameters.

    Insertion order is preserved and is the iteration / serialization
    order, which keeps optimizer traversal deterministic.
    """

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        p = Param(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def names(self) -> list[str]:
        return list(self._params.keys())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad.fill(0.0)

    def check_finite(self) -> None:
        for p in self._params.values():
            if not np.all(np.isfinite(p.value)):
                raise NumericError(f"non-finite value in parameter {p.name!r}")

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            p = self._params[name]
            if p.value.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            p.value[...] = arr

    def checksum(self) -> str:
        """Order- and content-sensitive digest of all parameter bytes."""
        import hashlib

        h = hashlib.sha256()
        for name, p in self._params.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()


class OptimState:
    """Adam optimizer state: per-parameter moments plus a step counter."""

    def __init__(self, params: ParamStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}


def adam_step(params: ParamStore, optim: OptimState) -> None:
    """Standard Adam update with bias correction; zeroes gradients after.

    Computes lr * m_hat / (sqrt(v_hat) + eps) in the algebraically equal
    form scale * m / (sqrt(v) + eps'), with scale = lr sqrt(1-b2^t)/(1-b1^t)
    and eps' = eps sqrt(1-b2^t), reusing the gradient buffer as scratch
    (it is zeroed at the end regardless).  Raises :class:`NumericError`
    naming the parameter if any gradient is non-finite, leaving all
    values untouched in that case.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(f"non-finite gradient for parameter {p.name!r}")
    optim.step += 1
    t = optim.step
    b1, b2 = optim.beta1, optim.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    scale = optim.lr * np.sqrt(bias2) / bias1
    shifted_eps = optim.eps * np.sqrt(bias2)
    for p in params:
        m = optim.m[p.name]
        v = optim.v[p.name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        np.multiply(p.grad, p.grad, out=p.grad)
        v += (1.0 - b2) * p.grad
        np.sqrt(v, out=p.grad)
        p.grad += shifted_eps
        np.divide(m, p.grad, out=p.grad)
        p.grad *= scale
        p.value -= p.grad
        p.grad.fill(0.0)


# ---------------------------------------------------------------------------
# Layers (forward + analytic backward)
# ---------------------------------------------------------------------------

def affine(x: np.ndarray, W: np.ndarray, b: np.ndarray):
    """y = x @ W + b for x of shape (..., d_in); returns (y, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != W.shape[0] or W.shape[1] != b.shape[0]:
        raise ValueError(
            f"affine shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    y = x @ W + b
    return y, (x, W)


def affine_backward(dy: np.ndarray, cache):
    """Gradients of affine: returns (dx, dW, db)."""
    x, W = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dW = x2.T @ dy2
    db = dy2.sum(axis=0)
    dx = dy @ W.T
    return dx, dW, db


def sigmoid(z):
    """Numerically stable logistic function, elementwise."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_backward(dy, y):
    """Backward through sigmoid given its output y."""
    return dy * y * (1.0 - y)


def bce(pred, target):
    """Mean binary cross entropy; predictions clamped to [eps, 1-eps]."""
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    t = np.asarray(target, dtype=np.float64)
    losses = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
    return float(np.mean(losses)), (p, t)


def bce_backward(cache):
    """d(mean BCE)/d(pred), evaluated at the clamped predictions."""
    p, t = cache
    n = p.size if p.ndim else 1
    return (p - t) / (p * (1.0 - p)) / n


def log_softmax_excluding(scores: np.ndarray, exclude: int) -> float:
    """log sum_{j != exclude} exp(scores_j), computed with max-shift."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least 2 scores")
    rest = np.delete(s, exclude)
    m = rest.max()
    return float(m + np.log(np.sum(np.exp(rest - m))))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def grad_check(loss_fn, params: ParamStore, probe_eps: float = 1e-5,
               n_probe: int = 32, seed: int = 0) -> float:
    """Max relative error of stored gradients vs central differences.

    ``loss_fn()`` must deterministically return the scalar loss under the
    current parameter values and populate ``params`` gradients.  For each
    parameter, up to ``n_probe`` random coordinates are perturbed by
    +-probe_eps.  Coordinates where both gradients are below 1e-7 in
    magnitude count as exact (covers structurally-zero gradients without
    dividing by noise).
    """
    rng = new_rng(seed)
    params.zero_grads()
    loss_fn()
    analytic = {p.name: p.grad.copy() for p in params}
    max_err = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= n_probe else rng.choice(n, size=n_probe, replace=False)
        for i in np.sort(idx):
            orig = flat[i]
            flat[i] = orig + probe_eps
            lp = loss_fn()
            flat[i] = orig - probe_eps
            lm = loss_fn()
            flat[i] = orig
            num = (lp - lm) / (2.0 * probe_eps)
            ana = analytic[p.name].reshape(-1)[i]
            denom = max(abs(num), abs(ana))
            if denom < 1e-7:
                continue
            err = abs(num - ana) / denom
            max_err = max(max_err, err)
    params.zero_grads()
    loss_fn()
    return max_err


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

def save_checkpoint(params: ParamStore, path, meta: dict | None = None) -> None:
    """Write parameters as an NPZ container (named little-endian arrays).

    Metadata rides along as a JSON document under the ``__meta__`` entry;
    array names, shapes, and dtype live in the standard NPY headers.
    """
    arrays = {name: np.ascontiguousarray(params[name].value, dtype="<f8")
              for name in params.names()}
    header = {"names": params.names(), "meta": meta or {}}
    arrays["__meta__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    """Inverse of :func:`save_checkpoint`; returns (params, metadata)."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise ValueError(f"unreadable checkpoint {path}: {exc}") from exc
    if "__meta__" not in data:
        raise ValueError(f"checkpoint {path} missing metadata entry")
    header = json.loads(bytes(data["__meta__"]).decode("utf-8"))
    store = ParamStore()
    for name in header["names"]:
        store.add(name, np.asarray(data[name], dtype=np.float64))
    return store, header["meta"]
