"""Losses, gradients, Adam and the supervised / self-supervised training loops."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .encoding import SenseOperator
from .errors import ConfigError, DegenerateSplitError, NormalizationError, NumericError, ShapeError
from .network import NetworkParams, count_params, init_params, unrolled_backward, unrolled_forward
from .sampling import derive_seed, splitmix64

logger = logging.getLogger(__name__)

SUPERVISED = "supervised_image"
SELFSUP = "selfsup_kspace"
LOSS_KINDS = (SUPERVISED, SELFSUP)


def norm_l1l2_loss(u, v):
    """``||u - v||_2 / ||u||_2 + ||u - v||_1 / ||u||_1`` for complex vectors."""
    return _loss_and_grad(u, v, want_grad=False)[0]


def _loss_and_grad(u, v, want_grad=True):
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    if u.size != v.size:
        raise ShapeError(f"loss arguments differ in length: {u.size} vs {v.size}")
    mag_u = np.abs(u)
    l1_u = mag_u.sum()
    l2_u = np.sqrt(np.dot(mag_u, mag_u))
    if l2_u == 0.0:
        raise NormalizationError("loss target is identically zero")
    d = v - u
    mag_d = np.abs(d)
    l2_d = np.sqrt(np.dot(mag_d, mag_d))
    loss = float(l2_d / l2_u + mag_d.sum() / l1_u)
    if not want_grad:
        return loss, None
    g = np.zeros_like(d, dtype=np.complex128)
    nz = mag_d > 0.0
    # subgradient of the l1 term is 0 at exact zeros
    g[nz] = d[nz] / mag_d[nz] / l1_u
    if l2_d > 0.0:
        g += d / (l2_d * l2_u)
    return loss, g


@dataclass(frozen=True, eq=False)
class LossSpec:
    """What one training example contributes to the loss.

    ``op`` and ``y`` feed the network. For the supervised loss the output is
    compared with ``x_ref``; for the self-supervised loss it is mapped through
    ``op_loss`` and compared with ``y`` on the loss operator's mask only.
    """

    kind: str
    op: SenseOperator
    y: np.ndarray
    x_ref: np.ndarray | None = None
    op_loss: SenseOperator | None = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {self.kind!r}")
        if self.kind == SUPERVISED and self.x_ref is None:
            raise ConfigError("supervised loss requires a reference image")
        if self.kind == SELFSUP:
            if self.op_loss is None:
                raise ConfigError("self-supervised loss requires a loss-set operator")
            if not self.op_loss.mask.any():
                raise DegenerateSplitError("loss set is empty")

    @classmethod
    def supervised(cls, op, y, x_ref):
        return cls(SUPERVISED, op, y, x_ref=np.asarray(x_ref))

    @classmethod
    def selfsup(cls, op_theta, op_lambda, y):
        return cls(SELFSUP, op_theta, y, op_loss=op_lambda)


def _evaluate(params, spec, want_grad):
    tape = [] if want_grad else None
    x = unrolled_forward(params, spec.op, spec.y, tape)
    if spec.kind == SUPERVISED:
        if spec.x_ref.shape != x.shape:
            raise ShapeError(f"reference shape {spec.x_ref.shape} != output shape {x.shape}")
        loss, g = _loss_and_grad(spec.x_ref, x, want_grad)
        g_x = None if g is None else g.reshape(x.shape)
    else:
        target = spec.op_loss.restrict(spec.y)
        pred = spec.op_loss.restrict(spec.op_loss.forward(x))
        loss, g = _loss_and_grad(target, pred, want_grad)
        g_x = None if g is None else spec.op_loss.adjoint(spec.op_loss.scatter(g))
    if not np.isfinite(loss):
        raise NumericError("loss is not finite")
    return loss, x, tape, g_x


def loss_value(params, spec):
    return _evaluate(params, spec, want_grad=False)[0]


def selfsup_loss(params, op_theta, op_lambda, y_theta, y_lambda):
    """Loss between measured Lambda samples and the network output mapped onto Lambda.

    The network sees only the Theta samples of ``y_theta``; only the Lambda
    samples of ``y_lambda`` enter the loss.
    """
    x = unrolled_forward(params, op_theta, y_theta)
    pred = op_lambda.restrict(op_lambda.forward(x))
    return norm_l1l2_loss(op_lambda.restrict(y_lambda), pred)


def supervised_loss(params, op_omega, y_omega, x_ref):
    if x_ref is None:
        raise ConfigError("supervised loss requires a reference image")
    return loss_value(params, LossSpec.supervised(op_omega, y_omega, x_ref))


@dataclass
class GradientBundle:
    loss: float
    grad: np.ndarray


def backprop(params, spec):
    """Loss and its exact reverse-mode gradient with respect to every trainable scalar."""
    loss, _, tape, g_x = _evaluate(params, spec, want_grad=True)
    g = unrolled_backward(params, spec.op, tape, g_x)
    return GradientBundle(loss=loss, grad=g)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n, lr=1e-3, **kw):
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr, **kw)


def adam_step(state, theta, grad):
    """Bias-corrected Adam update; returns ``(new_theta, new_state)`` without mutating inputs."""
    theta = np.asarray(theta)
    grad = np.asarray(grad)
    if not (theta.shape == grad.shape == state.m.shape):
        raise ShapeError(f"Adam layout mismatch: {theta.shape}, {grad.shape}, {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_theta = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_state = AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps)
    return new_theta, new_state


def epoch_order(n, seed, epoch):
    """Shuffled scan order for one epoch, from the splitmix64 stream."""
    keys = splitmix64(derive_seed(seed, epoch), n)
    return np.argsort(keys, kind="stable")


def loss_spec_for(scan, kind):
    """Build the training example of ``scan`` for the given loss kind.

    Supervised examples use all acquired samples and the reference image.
    Self-supervised examples feed Theta to the network and score on Lambda;
    a scan without a split falls back to Theta = Lambda = Omega.
    """
    op = SenseOperator(scan.sens, scan.mask)
    if kind == SUPERVISED:
        if scan.ref_image is None:
            raise ConfigError(f"scan {scan.scan_id} has no reference image for supervised training")
        return LossSpec.supervised(op, scan.kspace, scan.ref_image)
    if kind == SELFSUP:
        if scan.split is None:
            return LossSpec.selfsup(op, op, scan.kspace)
        return LossSpec.selfsup(op.with_mask(scan.split.theta), op.with_mask(scan.split.lam), scan.kspace)
    raise ConfigError(f"loss kind must be one of {LOSS_KINDS}, got {kind!r}")


@dataclass
class FitResult:
    params: NetworkParams
    trace: list = field(default_factory=list)


def fit(scans, cfg, loss_kind, epochs, seed, lr=1e-3, init=None, on_epoch=None):
    """Train with batch size 1 over a seeded shuffled order of ``scans``.

    ``trace`` holds the mean training loss of each epoch. ``on_epoch`` is
    called as ``on_epoch(epoch, params, mean_loss)`` after every epoch.
    """
    scans = list(scans)
    if not scans:
        raise ConfigError("training set is empty")
    if loss_kind == SELFSUP and any(s.split is None for s in scans):
        logger.info("some scans carry no split; those use Theta = Lambda = Omega")
    specs = [loss_spec_for(s, loss_kind) for s in scans]
    params = init.copy() if init is not None else init_params(cfg, derive_seed(seed, 0x1D17))
    if params.theta.size != count_params(cfg):
        raise ShapeError("parameter vector does not match configuration")
    state = AdamState.create(params.theta.size, lr=lr)
    trace = []
    for epoch in range(epochs):
        total = 0.0
        for idx in epoch_order(len(scans), seed, epoch):
            bundle = backprop(params, specs[idx])
            if not np.isfinite(bundle.loss):
                raise NumericError(f"loss became {bundle.loss} at epoch {epoch + 1}, scan {scans[idx].scan_id}")
            theta, state = adam_step(state, params.theta, bundle.grad)
            params = NetworkParams(cfg, theta)
            total += bundle.loss
        mean = total / len(scans)
        trace.append(mean)
        logger.info("epoch %d/%d  loss %.6f  mu %.4f", epoch + 1, epochs, mean, params.mu)
        if on_epoch is not None:
            on_epoch(epoch + 1, params, mean)
    return FitResult(params=params, trace=trace)
