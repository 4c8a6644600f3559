"""Unrolled reconstruction network: shared ResNet regularizer + CG data consistency.

All trainable scalars live in one flat float64 vector (``NetworkParams.theta``);
layer weights are views into it. The layout is

    conv_in   (C, 2, k, k)
    blocks    B x [(C, C, k, k), (C, C, k, k)]
    conv_out  (2, C, k, k)
    mu_raw    scalar, mu = softplus(mu_raw)

Convolutions are bias-free with zero "same" padding. Complex images enter and
leave the CNN as two real channels (real, imaginary).

Gradients of complex quantities follow the convention ``g = dL/dRe + i dL/dIm``,
under which a C-linear map ``A`` backpropagates as ``A^H``.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError, ParameterError, ShapeError
from .solvers import conjugate_gradient, dc_solve


@dataclass(frozen=True)
class NetConfig:
    unrolls: int = 10
    cg_iters: int = 10
    channels: int = 16
    res_blocks: int = 4
    kernel: int = 3
    scale: float = 0.1
    mu_init: float = 1.0

    def __post_init__(self):
        if self.unrolls < 0:
            raise ParameterError(f"unrolls must be >= 0, got {self.unrolls}")
        if self.cg_iters < 1:
            raise ParameterError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.channels < 1:
            raise ParameterError(f"channels must be >= 1, got {self.channels}")
        if self.res_blocks < 0:
            raise ParameterError(f"res_blocks must be >= 0, got {self.res_blocks}")
        if self.kernel < 1 or self.kernel % 2 == 0 or self.kernel > kernels.MAX_KERNEL:
            raise ParameterError(f"kernel must be odd and <= {kernels.MAX_KERNEL}, got {self.kernel}")
        if self.mu_init <= 0:
            raise ParameterError(f"mu_init must be > 0, got {self.mu_init}")


def count_params(cfg):
    """Number of trainable scalars: bias-free convolutions plus the penalty mu."""
    k2, c = cfg.kernel**2, cfg.channels
    return 2 * (k2 * 2 * c) + cfg.res_blocks * 2 * (k2 * c * c) + 1


def _layer_shapes(cfg):
    c, k = cfg.channels, cfg.kernel
    shapes = [(c, 2, k, k)]
    shapes += [(c, c, k, k)] * (2 * cfg.res_blocks)
    shapes.append((2, c, k, k))
    return shapes


def softplus(s):
    return float(np.logaddexp(0.0, s))


def softplus_inv(mu):
    return float(mu + np.log(-np.expm1(-mu)))


def sigmoid(s):
    return float(0.5 * (1.0 + np.tanh(0.5 * s)))


class NetworkParams:
    """Trainable weights as one flat vector with per-layer views."""

    def __init__(self, cfg, theta):
        theta = np.array(theta, dtype=np.float64)
        n = count_params(cfg)
        if theta.shape != (n,):
            raise ShapeError(f"expected {n} parameters for {cfg}, got shape {theta.shape}")
        self.cfg = cfg
        self.theta = theta
        self.layers = []
        offset = 0
        for shape in _layer_shapes(cfg):
            size = int(np.prod(shape))
            self.layers.append(theta[offset : offset + size].reshape(shape))
            offset += size
        if offset != n - 1:
            raise ShapeError("layer layout does not match count_params")

    @property
    def conv_in(self):
        return self.layers[0]

    @property
    def conv_out(self):
        return self.layers[-1]

    def block(self, b):
        return self.layers[1 + 2 * b], self.layers[2 + 2 * b]

    @property
    def mu_raw(self):
        return float(self.theta[-1])

    @property
    def mu(self):
        return softplus(self.theta[-1])

    def copy(self):
        return NetworkParams(self.cfg, self.theta.copy())

    @classmethod
    def zeros(cls, cfg):
        theta = np.zeros(count_params(cfg))
        theta[-1] = softplus_inv(cfg.mu_init)
        return cls(cfg, theta)


def init_params(cfg, seed):
    """He-scaled truncated-normal weights (cut at 2 std), mu = cfg.mu_init.

    The output convolution starts at zero, so the untrained regularizer is the
    identity; with random output weights the null-space component of the image
    is amplified at every unroll.
    """
    rng = np.random.default_rng(seed)
    params = NetworkParams.zeros(cfg)
    for w in params.layers[:-1]:
        std = np.sqrt(2.0 / (cfg.kernel**2 * w.shape[1]))
        vals = rng.standard_normal(w.size)
        bad = np.abs(vals) > 2.0
        while bad.any():
            vals[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(vals) > 2.0
        w[...] = (std * vals).reshape(w.shape)
    return params


def _to_channels(x):
    return np.stack([x.real, x.imag])


def _to_complex(h):
    return h[0] + 1j * h[1]


def resnet_forward(params, x, cache=None):
    """Apply the regularizer CNN: ``x + conv_out(blocks(conv_in(x)))``.

    If ``cache`` is a list, the activations needed by
    :func:`resnet_backward` are appended to it.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-D complex image, got shape {x.shape}")
    cfg = params.cfg
    h0 = _to_channels(x)
    a = kernels.conv2d(h0, params.conv_in)
    acts = [h0, a]
    for b in range(cfg.res_blocks):
        w1, w2 = params.block(b)
        t = kernels.conv2d(a, w1)
        np.maximum(t, 0.0, out=t)
        acts.append(t)
        a = a + cfg.scale * kernels.conv2d(t, w2)
        acts.append(a)
    out = kernels.conv2d(a, params.conv_out)
    if cache is not None:
        cache.append(acts)
    return x + _to_complex(out)


def resnet_backward(params, acts, g_out, g_theta):
    """Backpropagate ``g_out`` through one regularizer application.

    Accumulates weight gradients into the flat vector ``g_theta`` and returns
    the gradient with respect to the input image.
    """
    cfg = params.cfg
    k = cfg.kernel
    grads = NetworkParams(cfg, np.zeros_like(g_theta))
    g_o = _to_channels(g_out)
    a_last = acts[-1]
    grads.layers[-1][...] = kernels.conv2d_weight_grad(a_last, g_o, k)
    g_a = kernels.conv2d_input_grad(g_o, params.conv_out)
    for b in reversed(range(cfg.res_blocks)):
        w1, w2 = params.block(b)
        a_in = acts[1 + 2 * b]
        t = acts[2 + 2 * b]
        g_t2 = cfg.scale * g_a
        gw1, gw2 = grads.block(b)
        gw2[...] = kernels.conv2d_weight_grad(t, g_t2, k)
        g_t = kernels.conv2d_input_grad(g_t2, w2)
        g_t *= t > 0.0
        gw1[...] = kernels.conv2d_weight_grad(a_in, g_t, k)
        g_a = g_a + kernels.conv2d_input_grad(g_t, w1)
    grads.layers[0][...] = kernels.conv2d_weight_grad(acts[0], g_a, k)
    g_h0 = kernels.conv2d_input_grad(g_a, params.conv_in)
    g_theta += grads.theta
    return g_out + _to_complex(g_h0)


def unrolled_forward(params, op, y, tape=None):
    """Run ``cfg.unrolls`` alternations of regularizer and CG data consistency.

    Starts from the zero-filled image ``E^H y``; every DC unit runs exactly
    ``cfg.cg_iters`` CG iterations from the regularizer output. If ``tape`` is
    a list, per-unroll records for :func:`unrolled_backward` are appended.
    """
    cfg = params.cfg
    mu = params.mu
    x = op.adjoint(y)
    for _ in range(cfg.unrolls):
        acts = [] if tape is not None else None
        z = resnet_forward(params, x, acts)
        x, _ = dc_solve(op, y, z, mu, cfg.cg_iters, early_exit=False)
        if tape is not None:
            tape.append((acts[0], z, x))
    return x


def unrolled_backward(params, op, tape, g_x):
    """Gradient of a scalar loss with respect to ``params.theta``.

    ``g_x`` is the loss gradient at the network output. Each DC unit is
    differentiated with the implicit rule: with ``g_b = (E^H E + mu I)^{-1} g_x``
    the regularizer output receives ``mu g_b`` and mu receives
    ``Re <g_b, z - x>``.
    """
    cfg = params.cfg
    mu = params.mu
    g_theta = np.zeros_like(params.theta)
    g_mu = 0.0
    zero = np.zeros(op.shape, dtype=np.complex128)
    for t in reversed(range(len(tape))):
        acts, z, x = tape[t]
        g_b, _ = conjugate_gradient(lambda v: op.normal(v) + mu * v, g_x, zero, cfg.cg_iters, early_exit=False)
        g_mu += float(np.vdot(g_b, z - x).real)
        g_z = mu * g_b
        g_x = resnet_backward(params, acts, g_z, g_theta)
        if not (np.all(np.isfinite(g_x)) and np.all(np.isfinite(g_theta))):
            raise NumericError(f"non-finite gradient in unroll {t + 1} of {len(tape)} (regularizer/DC unit)")
    g_theta[-1] = g_mu * sigmoid(params.mu_raw)
    return g_theta
