"""Pure-numpy implementations of the hot kernels.

Mirrors the API of the compiled module wrcast._kernels. The split scan
uses np.cumsum (sequential prefix sums) and the same gain expression as
the compiled loop, so both backends select identical splits.
"""

import numpy as np

BACKEND = "numpy"


def conv1d_causal_forward(x, w, b, dilation):
    """Dilated causal 1-d convolution.

    x: (B, T, Cin), w: (K, Cin, Cout), b: (Cout,). Tap k reads x at
    t - k*dilation; positions before the series start are zero.
    """
    B, T, _ = x.shape
    K = w.shape[0]
    y = np.empty((B, T, w.shape[2]))
    y[:] = b
    for k in range(K):
        shift = k * dilation
        if shift >= T:
            continue
        if shift == 0:
            y += x @ w[k]
        else:
            y[:, shift:, :] += x[:, :-shift, :] @ w[k]
    return y


def conv1d_causal_backward(x, w, gy, dilation):
    """Gradients of conv1d_causal_forward w.r.t. x, w and b."""
    B, T, Cin = x.shape
    K = w.shape[0]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for k in range(K):
        shift = k * dilation
        if shift >= T:
            continue
        if shift == 0:
            gx += gy @ w[k].T
            gw[k] = np.tensordot(x, gy, axes=([0, 1], [0, 1]))
        else:
            gx[:, :-shift, :] += gy[:, shift:, :] @ w[k].T
            gw[k] = np.tensordot(x[:, :-shift, :], gy[:, shift:, :],
                                 axes=([0, 1], [0, 1]))
    gb = gy.sum(axis=(0, 1))
    return gx, gw, gb


def best_split(values, grad, hess, min_leaf):
    """Exact greedy split of one presorted feature.

    values/grad/hess are aligned and sorted by value ascending. Returns
    (gain, threshold, n_left); gain <= 0 means no admissible split.
    Candidates are midpoints between distinct adjacent values, children
    must hold at least min_leaf rows and positive hessian mass.
    """
    n = values.shape[0]
    if n < 2 * min_leaf:
        return -1.0, 0.0, 0
    gl = np.cumsum(grad)
    hl = np.cumsum(hess)
    gt = gl[-1]
    ht = hl[-1]
    if ht <= 0.0:
        return -1.0, 0.0, 0
    gl = gl[:-1]
    hl = hl[:-1]
    gr = gt - gl
    hr = ht - hl
    counts = np.arange(1, n)
    ok = (values[1:] != values[:-1]) & (counts >= min_leaf) \
        & (n - counts >= min_leaf) & (hl > 0.0) & (hr > 0.0)
    if not ok.any():
        return -1.0, 0.0, 0
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl * gl / hl + gr * gr / hr - gt * gt / ht
    gain[~ok] = -np.inf
    i = int(np.argmax(gain))
    if not gain[i] > 0.0:
        return -1.0, 0.0, 0
    return float(gain[i]), float((values[i] + values[i + 1]) / 2.0), i + 1
