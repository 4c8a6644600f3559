"""Pure numpy convolution kernels; used when the compiled extension is absent."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _columns(x, k):
    p = k // 2
    xp = np.pad(np.asarray(x, dtype=np.float64), ((0, 0), (p, p), (p, p)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (cin, h, w, k, k)
    return win.transpose(0, 3, 4, 1, 2).reshape(x.shape[0] * k * k, -1)


def conv2d(x, w):
    cout, _, k, _ = w.shape
    cols = _columns(x, k)
    return (w.reshape(cout, -1) @ cols).reshape(cout, x.shape[1], x.shape[2])


def conv2d_weight_grad(x, gy, k):
    cout = gy.shape[0]
    cols = _columns(x, k)
    return (gy.reshape(cout, -1) @ cols.T).reshape(cout, x.shape[0], k, k)
