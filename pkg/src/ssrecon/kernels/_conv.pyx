# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled 2-D convolution kernels (float64, zero-padded, stride 1)."""
import numpy as np

cdef extern from "conv_impl.h":
    void conv2d_padded(const double* xp, const double* w, double* out,
                       Py_ssize_t cin, Py_ssize_t cout, Py_ssize_t h,
                       Py_ssize_t wd, Py_ssize_t k) nogil
    void conv2d_weight_grad_padded(const double* xp, const double* gy, double* gw,
                                   Py_ssize_t cin, Py_ssize_t cout, Py_ssize_t h,
                                   Py_ssize_t wd, Py_ssize_t k) nogil


def _pad(x, Py_ssize_t p):
    out = np.zeros((x.shape[0], x.shape[1] + 2 * p, x.shape[2] + 2 * p))
    out[:, p : p + x.shape[1], p : p + x.shape[2]] = x
    return out


def conv2d(x, w):
    """Same-size cross-correlation of ``x`` (cin, h, w) with ``w`` (cout, cin, k, k)."""
    cdef Py_ssize_t k = w.shape[2]
    cdef const double[:, :, ::1] xp = _pad(x, k // 2)
    cdef const double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    out_arr = np.empty((wv.shape[0], x.shape[1], x.shape[2]))
    cdef double[:, :, ::1] out = out_arr
    if out_arr.size == 0:
        return out_arr
    with nogil:
        conv2d_padded(&xp[0, 0, 0], &wv[0, 0, 0, 0], &out[0, 0, 0],
                      xp.shape[0], wv.shape[0], out.shape[1], out.shape[2], k)
    return out_arr


def conv2d_weight_grad(x, gy, Py_ssize_t k):
    """Gradient of ``sum(gy * conv2d(x, w))`` with respect to ``w``."""
    cdef const double[:, :, ::1] xp = _pad(x, k // 2)
    cdef const double[:, :, ::1] g = np.ascontiguousarray(gy, dtype=np.float64)
    gw_arr = np.empty((g.shape[0], xp.shape[0], k, k))
    cdef double[:, :, :, ::1] gw = gw_arr
    if gw_arr.size == 0:
        return gw_arr
    with nogil:
        conv2d_weight_grad_padded(&xp[0, 0, 0], &g[0, 0, 0], &gw[0, 0, 0, 0],
                                  xp.shape[0], g.shape[0], g.shape[1], g.shape[2], k)
    return gw_arr
