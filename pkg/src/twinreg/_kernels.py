"""Compiled inner training loop.

Same arithmetic as ``nn.mse_gradient`` followed by ``Optimizer.step``, fused so
one call processes many mini-batches without returning to Python.  Dropout is
not supported here; the trainer falls back to the numpy path when it is on.
"""
import numpy as np
from numba import njit

ADADELTA = 0
RMSPROP = 1


@njit(cache=True)
def run_batches(flat, dims, relu, X, y, I, J, twin, batch_size,
                opt_kind, rho, eps, lr, sq_grad, sq_update, l2, wmask):
    """Train on pairs ``(I[k], J[k])`` (or samples ``I[k]``) in consecutive batches.

    Returns ``(sum of batch losses, batches run, index of first bad batch or -1)``.
    """
    n_layers = dims.shape[0]
    d = X.shape[1]
    total = I.shape[0]
    grad = np.zeros_like(flat)
    loss_sum = 0.0
    n_batches = 0
    start = 0
    while start < total:
        stop = min(start + batch_size, total)
        B = stop - start
        in_dim = dims[0, 0]
        a = np.empty((B, in_dim))
        t = np.empty(B)
        for r in range(B):
            i = I[start + r]
            if twin:
                j = J[start + r]
                for c in range(d):
                    a[r, c] = X[i, c]
                    a[r, d + c] = X[j, c]
                t[r] = y[i] - y[j]
            else:
                for c in range(d):
                    a[r, c] = X[i, c]
                t[r] = y[i]

        inputs = [a]
        preacts = [a]
        offset = 0
        for k in range(n_layers):
            nin = dims[k, 0]
            nout = dims[k, 1]
            W = flat[offset:offset + nin * nout].reshape((nin, nout))
            b = flat[offset + nin * nout:offset + nin * nout + nout]
            z = inputs[k] @ W
            for r in range(B):
                for c in range(nout):
                    z[r, c] += b[c]
            if k == 0:
                preacts[0] = z
            else:
                preacts.append(z)
            if k + 1 < n_layers:
                if relu[k]:
                    inputs.append(np.maximum(z, 0.0))
                else:
                    inputs.append(z.copy())
            offset += nin * nout + nout

        out = preacts[n_layers - 1]
        loss = 0.0
        delta = np.empty((B, 1))
        for r in range(B):
            e = out[r, 0] - t[r]
            loss += e * e
            delta[r, 0] = 2.0 * e / B
        loss /= B
        if not np.isfinite(loss):
            return loss_sum, n_batches, n_batches

        for k in range(n_layers - 1, -1, -1):
            nin = dims[k, 0]
            nout = dims[k, 1]
            offset -= nin * nout + nout
            z = preacts[k]
            if relu[k]:
                for r in range(B):
                    for c in range(nout):
                        if z[r, c] <= 0.0:
                            delta[r, c] = 0.0
            gW = inputs[k].T @ delta
            base = offset
            for p in range(nin):
                for c in range(nout):
                    grad[base + p * nout + c] = gW[p, c]
            base = offset + nin * nout
            for c in range(nout):
                s = 0.0
                for r in range(B):
                    s += delta[r, c]
                grad[base + c] = s
            if k > 0:
                W = flat[offset:offset + nin * nout].reshape((nin, nout))
                delta = delta @ W.T

        for p in range(flat.shape[0]):
            if l2 != 0.0:
                grad[p] += 2.0 * l2 * wmask[p] * flat[p]
            if not np.isfinite(grad[p]):
                return loss_sum, n_batches, n_batches
        for p in range(flat.shape[0]):
            g = grad[p]
            acc = rho * sq_grad[p] + (1.0 - rho) * g * g
            sq_grad[p] = acc
            if opt_kind == ADADELTA:
                u = -lr * np.sqrt(sq_update[p] + eps) / np.sqrt(acc + eps) * g
                sq_update[p] = rho * sq_update[p] + (1.0 - rho) * u * u
            else:
                u = -lr * g / np.sqrt(acc + eps)
            flat[p] += u

        loss_sum += loss
        n_batches += 1
        start = stop
    return loss_sum, n_batches, -1

