"""Pure numpy implementations of the compiled kernels.

Same signatures and results (up to float rounding order) as ``_ckernels``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x, kh, kw, sh, sw, oh, ow):
    # (N, C, OH, OW, KH, KW) view, no copy
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, : (oh - 1) * sh + 1 : sh, : (ow - 1) * sw + 1 : sw]


def conv2d_forward(x, k, b, sh, sw):
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    oh = (h - kh) // sh + 1
    ow = (w - kw) // sw + 1
    win = _windows(x, kh, kw, sh, sw, oh, ow)
    out = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))  # (N, OH, OW, O)
    out += b
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(x, k, g, sh, sw, need_input_grad=True):
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    oh, ow = g.shape[2], g.shape[3]
    win = _windows(x, kh, kw, sh, sw, oh, ow)
    dk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, KH, KW)
    db = g.sum(axis=(0, 2, 3))
    if not need_input_grad:
        return dk, db, None
    # (N, OH, OW, C, KH, KW) contributions scattered back window by window
    cols = np.tensordot(g, k, axes=([1], [0]))
    dx = np.zeros_like(x)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i : i + (oh - 1) * sh + 1 : sh, j : j + (ow - 1) * sw + 1 : sw] += (
                cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dk, db, dx


def threshold_crossings(profile, threshold):
    n = len(profile) + 1
    picked = [0]
    s = 0.0
    for i in range(1, n):
        s += abs(float(profile[i - 1]))
        if s > threshold:
            picked.append(i)
            s = 0.0
    if picked[-1] != n - 1:
        picked.append(n - 1)
    return np.asarray(picked, dtype=np.int64)
