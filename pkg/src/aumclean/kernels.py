"""Hot numeric kernels: minibatch SGD epochs and margin extraction.

Two implementations of each kernel are kept side by side:

* a numba ``@njit`` version (default when numba is importable), and
* a vectorized pure-numpy fallback.

Set ``AUMCLEAN_PURE_NUMPY=1`` to force the numpy path. The active choice is
exposed as ``BACKEND`` ("numba" or "numpy"). Matrix products go through BLAS
in both paths; elementwise transcendentals may differ between paths in the
last ulp, so the two backends agree to floating-point roundoff rather than
bitwise. Each backend on its own is fully deterministic.

``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

from __future__ import annotations

import os

import numpy as np

_FORCE_NUMPY = os.environ.get("AUMCLEAN_PURE_NUMPY", "").strip().lower() in {"1", "true", "yes"}

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env-flag subprocess test
    numba = None
    _HAVE_NUMBA = False

BACKEND = "numba" if (_HAVE_NUMBA and not _FORCE_NUMPY) else "numpy"


# ---------------------------------------------------------------------------
# Margins: assigned-class logit minus the largest other logit, per row.
# ---------------------------------------------------------------------------

def _margins_numpy(logits: np.ndarray, assigned: np.ndarray) -> np.ndarray:
    rows = np.arange(logits.shape[0])
    own = logits[rows, assigned]
    masked = logits.copy()
    masked[rows, assigned] = -np.inf
    return own - masked.max(axis=1)


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _margins_numba(logits, assigned):
        n, c = logits.shape
        out = np.empty(n)
        for i in range(n):
            y = assigned[i]
            best = -np.inf
            for j in range(c):
                if j != y and logits[i, j] > best:
                    best = logits[i, j]
            out[i] = logits[i, y] - best
        return out


# ---------------------------------------------------------------------------
# One SGD epoch over a shuffled sample order.
#
# Shared semantics (both backends):
#   - minibatches are consecutive slices of `perm`; the last partial batch
#     is kept, so every sample is visited exactly once;
#   - each sample's logits are written to out_logits[row] at its forward
#     pass, before that minibatch's parameter update;
#   - loss is softmax cross-entropy (mean over the batch); L2 weight decay
#     is added to the raw gradient; Nesterov momentum uses zero-initialized
#     velocity buffers v, with per-tensor update
#         g <- grad + wd * p;  v <- mu * v + g;  p <- p - lr * (g + mu * v)
#     which reduces to plain SGD when mu = 0;
#   - returns the index of the first minibatch whose loss is non-finite,
#     or -1 when the epoch completed.
#
# Parameters and velocity buffers are updated in place.
# ---------------------------------------------------------------------------

def _sgd_epoch_numpy(X, labels, perm, batch_size,
                     W1, b1, W2, b2, vW1, vb1, vW2, vb2,
                     lr, momentum, weight_decay, out_logits):
    # overflow/invalid are expected on the way to the non-finite-loss exit;
    # the numba twin is silent there, so this path must not warn either
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd_epoch_numpy_impl(
            X, labels, perm, batch_size, W1, b1, W2, b2, vW1, vb1, vW2, vb2,
            lr, momentum, weight_decay, out_logits)


def _sgd_epoch_numpy_impl(X, labels, perm, batch_size,
                          W1, b1, W2, b2, vW1, vb1, vW2, vb2,
                          lr, momentum, weight_decay, out_logits):
    n = X.shape[0]
    for batch_idx, start in enumerate(range(0, n, batch_size)):
        rows = perm[start:start + batch_size]
        bs = rows.shape[0]
        Xb = X[rows]
        yb = labels[rows]

        Z1 = Xb @ W1 + b1
        H = np.maximum(Z1, 0.0)
        Z2 = H @ W2 + b2
        out_logits[rows] = Z2

        zmax = Z2.max(axis=1, keepdims=True)
        E = np.exp(Z2 - zmax)
        S = E.sum(axis=1, keepdims=True)
        idx = np.arange(bs)
        loss = float(np.mean(np.log(S[:, 0]) + zmax[:, 0] - Z2[idx, yb]))
        if not np.isfinite(loss):
            return batch_idx

        G = E / S
        G[idx, yb] -= 1.0
        G /= bs

        gW2 = H.T @ G
        gb2 = G.sum(axis=0)
        GH = G @ W2.T
        GH[Z1 <= 0.0] = 0.0
        gW1 = Xb.T @ GH
        gb1 = GH.sum(axis=0)

        for p, v, g in ((W1, vW1, gW1), (b1, vb1, gb1),
                        (W2, vW2, gW2), (b2, vb2, gb2)):
            g = g + weight_decay * p
            v *= momentum
            v += g
            p -= lr * (g + momentum * v)
    return -1


if _HAVE_NUMBA:

    @numba.njit(cache=True)
    def _sgd_epoch_numba(X, labels, perm, batch_size,
                         W1, b1, W2, b2, vW1, vb1, vW2, vb2,
                         lr, momentum, weight_decay, out_logits):
        n, d = X.shape
        h = W1.shape[1]
        c = W2.shape[1]
        batch_idx = -1
        for start in range(0, n, batch_size):
            batch_idx += 1
            end = min(start + batch_size, n)
            bs = end - start

            Xb = np.empty((bs, d))
            yb = np.empty(bs, np.int64)
            for i in range(bs):
                r = perm[start + i]
                yb[i] = labels[r]
                for j in range(d):
                    Xb[i, j] = X[r, j]

            Z1 = np.dot(Xb, W1)
            for i in range(bs):
                for j in range(h):
                    Z1[i, j] += b1[j]
            H = np.maximum(Z1, 0.0)
            Z2 = np.dot(H, W2)
            for i in range(bs):
                for j in range(c):
                    Z2[i, j] += b2[j]

            for i in range(bs):
                r = perm[start + i]
                for j in range(c):
                    out_logits[r, j] = Z2[i, j]

            P = np.empty((bs, c))
            loss = 0.0
            for i in range(bs):
                zmax = Z2[i, 0]
                for j in range(1, c):
                    if Z2[i, j] > zmax:
                        zmax = Z2[i, j]
                s = 0.0
                for j in range(c):
                    e = np.exp(Z2[i, j] - zmax)
                    P[i, j] = e
                    s += e
                for j in range(c):
                    P[i, j] /= s
                loss += np.log(s) + zmax - Z2[i, yb[i]]
            loss /= bs
            if not np.isfinite(loss):
                return batch_idx

            inv_bs = 1.0 / bs
            for i in range(bs):
                P[i, yb[i]] -= 1.0
                for j in range(c):
                    P[i, j] *= inv_bs

            gW2 = np.dot(H.T, P)
            gb2 = np.zeros(c)
            for i in range(bs):
                for j in range(c):
                    gb2[j] += P[i, j]

            GH = np.dot(P, W2.T)
            for i in range(bs):
                for j in range(h):
                    if Z1[i, j] <= 0.0:
                        GH[i, j] = 0.0
            gW1 = np.dot(Xb.T, GH)
            gb1 = np.zeros(h)
            for i in range(bs):
                for j in range(h):
                    gb1[j] += GH[i, j]

            for a in range(d):
                for j in range(h):
                    g = gW1[a, j] + weight_decay * W1[a, j]
                    v = momentum * vW1[a, j] + g
                    vW1[a, j] = v
                    W1[a, j] -= lr * (g + momentum * v)
            for j in range(h):
                g = gb1[j] + weight_decay * b1[j]
                v = momentum * vb1[j] + g
                vb1[j] = v
                b1[j] -= lr * (g + momentum * v)
            for a in range(h):
                for j in range(c):
                    g = gW2[a, j] + weight_decay * W2[a, j]
                    v = momentum * vW2[a, j] + g
                    vW2[a, j] = v
                    W2[a, j] -= lr * (g + momentum * v)
            for j in range(c):
                g = gb2[j] + weight_decay * b2[j]
                v = momentum * vb2[j] + g
                vb2[j] = v
                b2[j] -= lr * (g + momentum * v)
        return -1


if BACKEND == "numba":
    margins_from_logits = _margins_numba
    sgd_epoch = _sgd_epoch_numba
else:
    margins_from_logits = _margins_numpy
    sgd_epoch = _sgd_epoch_numpy
