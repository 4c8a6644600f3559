"""Conjugate-gradient data consistency, CG-SENSE and a TGV-regularized baseline."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


@dataclass(frozen=True)
class CgReport:
    iterations_run: int
    final_residual_norm: float
    converged: bool
    residual_trace: tuple = ()


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


def conjugate_gradient(apply_a, b, x0, max_iters, tol=0.0, early_exit=True):
    """Solve ``A x = b`` for Hermitian positive (semi)definite ``A`` starting at ``x0``.

    With ``early_exit`` the loop stops once ``||r|| <= tol * ||b||``;
    otherwise exactly ``max_iters`` steps run unless the residual vanishes.
    """
    x = np.array(x0, dtype=np.complex128)
    r = b - apply_a(x)
    p = r.copy()
    rr = np.vdot(r, r).real
    b_norm = np.sqrt(np.vdot(b, b).real)
    trace = [np.sqrt(rr)]
    threshold = tol * b_norm
    done = 0
    for _ in range(max_iters):
        if rr == 0.0 or (early_exit and np.sqrt(rr) <= threshold):
            break
        ap = apply_a(p)
        pap = np.vdot(p, ap).real
        if pap <= 0.0:
            break
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = np.vdot(r, r).real
        p *= rr_new / rr
        p += r
        rr = rr_new
        done += 1
        trace.append(np.sqrt(rr))
    res = float(np.sqrt(rr))
    return x, CgReport(done, res, bool(res <= threshold), tuple(float(t) for t in trace))


def dc_solve(op, y, z, mu, max_iters=10, tol=1e-10, early_exit=True):
    """Data-consistency step ``(E^H E + mu I)^{-1} (E^H y + mu z)`` by CG from ``z``."""
    if mu < 0:
        raise ParameterError(f"mu must be >= 0, got {mu}")
    z = np.asarray(z, dtype=np.complex128)
    if z.shape != op.shape:
        raise ShapeError(f"z shape {z.shape} does not match operator {op.shape}")
    _check_finite("dc_solve inputs", y, z, np.asarray(mu))
    rhs = op.adjoint(y) + mu * z
    return conjugate_gradient(lambda v: op.normal(v) + mu * v, rhs, z, max_iters, tol, early_exit)


def cg_sense(op, y, max_iters=10, tol=1e-10):
    """Unregularized CG-SENSE: CG on ``E^H E x = E^H y`` from zero."""
    return dc_solve(op, y, np.zeros(op.shape, dtype=np.complex128), 0.0, max_iters, tol)


# --- TGV^2 -------------------------------------------------------------------
# Forward differences with Neumann boundary (last difference zero) for the
# image gradient; the symmetrized derivative of the vector field uses the
# negative adjoints of those differences.


def _dplus(u, axis):
    d = np.zeros_like(u)
    if axis == 0:
        d[:-1] = u[1:] - u[:-1]
    else:
        d[:, :-1] = u[:, 1:] - u[:, :-1]
    return d


def _dplus_adj(g, axis):
    # adjoint of _dplus: out[i] = g[i-1] - g[i] on the interior
    out = np.zeros_like(g)
    if axis == 0:
        out[1:] += g[:-1]
        out[:-1] -= g[:-1]
    else:
        out[:, 1:] += g[:, :-1]
        out[:, :-1] -= g[:, :-1]
    return out


def _dminus(u, axis):
    return -_dplus_adj(u, axis)


def _dminus_adj(g, axis):
    return -_dplus(g, axis)


def grad(x):
    return np.stack([_dplus(x, 0), _dplus(x, 1)])


def grad_adj(p):
    return _dplus_adj(p[0], 0) + _dplus_adj(p[1], 1)


def sym_grad(v):
    """Components (rr, ss, rs) of the symmetrized derivative of ``v``."""
    return np.stack([
        _dminus(v[0], 0),
        _dminus(v[1], 1),
        0.5 * (_dminus(v[0], 1) + _dminus(v[1], 0)),
    ])


def sym_grad_adj(q):
    # adjoint under the inner product that counts the off-diagonal twice
    return np.stack([
        _dminus_adj(q[0], 0) + _dminus_adj(q[2], 1),
        _dminus_adj(q[1], 1) + _dminus_adj(q[2], 0),
    ])


def _pointwise_norm(p, weights=None):
    mag2 = np.abs(p) ** 2
    if weights is not None:
        mag2 = mag2 * np.asarray(weights)[:, None, None]
    return np.sqrt(mag2.sum(axis=0))


_SYM_WEIGHTS = (1.0, 1.0, 2.0)


def tgv_penalty(x, v, alpha1, alpha0, border=0):
    """``alpha1 |grad x - v|_1 + alpha0 |sym_grad v|_1``, optionally ignoring a border."""
    a = _pointwise_norm(grad(x) - v)
    b = _pointwise_norm(sym_grad(v), _SYM_WEIGHTS)
    if border:
        a = a[border:-border, border:-border]
        b = b[border:-border, border:-border]
    return float(alpha1 * a.sum() + alpha0 * b.sum())


def tgv_objective(op, y, x, v, alpha1, alpha0):
    res = op.forward(x) - op.mask * y
    return float(np.vdot(res, res).real) + tgv_penalty(x, v, alpha1, alpha0)


def _project(p, radius, weights=None):
    scale = np.maximum(1.0, _pointwise_norm(p, weights) / radius)
    return p / scale


OPNORM_BOUND = 12.0


def tgv_reconstruct(op, y, alpha1=1e-2, alpha0=2e-2, iters=500, trace_every=0, step=None):
    """Primal-dual minimization of ``||y - E x||^2 + TGV2_{alpha1, alpha0}(x)``.

    Runs a fixed number of Chambolle-Pock iterations (theta = 1) over the image
    and an auxiliary vector field, starting from zero. ``step`` defaults to
    ``1 / sqrt(12)`` for both primal and dual steps. The last iterate is
    returned. With ``trace_every > 0`` returns ``(x, objective_values)``,
    where the objective is evaluated every ``trace_every`` iterations at the
    running (ergodic) average of the primal iterates.
    """
    if alpha1 <= 0 or alpha0 <= 0:
        raise ParameterError(f"TGV weights must be positive, got alpha1={alpha1}, alpha0={alpha0}")
    if iters < 0:
        raise ParameterError(f"iters must be >= 0, got {iters}")
    tau = sigma = 1.0 / np.sqrt(OPNORM_BOUND) if step is None else step
    if tau <= 0:
        raise ParameterError(f"step must be positive, got {tau}")
    y = op.mask * np.asarray(y)
    _check_finite("tgv_reconstruct data", y)
    x = np.zeros(op.shape, dtype=np.complex128)
    v = np.zeros((2, *op.shape), dtype=np.complex128)
    p = np.zeros_like(v)
    q = np.zeros((3, *op.shape), dtype=np.complex128)
    r = np.zeros_like(y, dtype=np.complex128)
    xb, vb = x.copy(), v.copy()
    x_sum, v_sum = np.zeros_like(x), np.zeros_like(v)
    trace = []
    for it in range(1, iters + 1):
        p = _project(p + sigma * (grad(xb) - vb), alpha1)
        q = _project(q + sigma * sym_grad(vb), alpha0, _SYM_WEIGHTS)
        r = (r + sigma * (op.forward(xb) - y)) / (1.0 + sigma / 2.0)
        x_new = x - tau * (grad_adj(p) + op.adjoint(r))
        v_new = v - tau * (-p + sym_grad_adj(q))
        xb = 2.0 * x_new - x
        vb = 2.0 * v_new - v
        x, v = x_new, v_new
        if trace_every:
            x_sum += x
            v_sum += v
            if it % trace_every == 0:
                trace.append(tgv_objective(op, y, x_sum / it, v_sum / it, alpha1, alpha0))
    if trace_every:
        return x, trace
    return x
