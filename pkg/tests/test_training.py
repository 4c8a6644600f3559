import numpy as np
import pytest

from ssrecon.dataio import CohortConfig, generate_cohort
from ssrecon.encoding import SenseOperator
from ssrecon.errors import ConfigError, DegenerateSplitError, NormalizationError, NumericError, ShapeError
from ssrecon.network import NetConfig, NetworkParams, count_params, init_params, softplus_inv, unrolled_forward
from ssrecon.phantom import make_coilmaps
from ssrecon.sampling import UNIFORM, make_omega_mask, split_omega
from ssrecon.training import (SELFSUP, SUPERVISED, AdamState, LossSpec, adam_step, backprop, epoch_order, fit,
                              loss_spec_for, loss_value, norm_l1l2_loss, selfsup_loss, supervised_loss)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_params(cfg, seed, scale=0.2, mu=0.8):
    rng = np.random.default_rng(seed)
    theta = scale * rng.standard_normal(count_params(cfg))
    theta[-1] = softplus_inv(mu)
    return NetworkParams(cfg, theta)


# --- monolithic oracle: dense matrices, explicit convolutions and CG ---------

def dense_encoding(maps, mask):
    nc, n, _ = maps.shape
    idx = np.arange(n) - n // 2
    f1 = np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    f2 = np.kron(f1, f1)
    return np.vstack([mask.ravel()[:, None] * (f2 * maps[c].ravel()[None, :]) for c in range(nc)])


def conv_matrix(w, n):
    # dense matrix of a zero-padded 'same' convolution acting on (cin, n, n) stacks
    cout, cin, k, _ = w.shape
    r = k // 2
    m = np.zeros((cout * n * n, cin * n * n))
    for o in range(cout):
        for c in range(cin):
            for i in range(n):
                for j in range(n):
                    for a in range(k):
                        for b in range(k):
                            ii, jj = i + a - r, j + b - r
                            if 0 <= ii < n and 0 <= jj < n:
                                m[(o * n + i) * n + j, (c * n + ii) * n + jj] += w[o, c, a, b]
    return m


def oracle_output(params, maps, mask, y):
    cfg = params.cfg
    n = mask.shape[0]
    e = dense_encoding(maps, mask)
    normal = e.conj().T @ e + params.mu * np.eye(n * n)
    mats = [conv_matrix(w, n) for w in params.layers]
    x = e.conj().T @ y.ravel()
    for _ in range(cfg.unrolls):
        h = np.concatenate([x.real, x.imag])
        a = mats[0] @ h
        for b in range(cfg.res_blocks):
            a = a + cfg.scale * (mats[2 + 2 * b] @ np.maximum(mats[1 + 2 * b] @ a, 0.0))
        out = mats[-1] @ a
        z = x + out[: n * n] + 1j * out[n * n:]
        rhs = e.conj().T @ y.ravel() + params.mu * z
        xk = z.copy()
        r = rhs - normal @ xk
        p = r.copy()
        for _ in range(cfg.cg_iters):
            rr = np.vdot(r, r).real
            if rr == 0.0:
                break
            ap = normal @ p
            alpha = rr / np.vdot(p, ap).real
            xk = xk + alpha * p
            r = r - alpha * ap
            p = r + (np.vdot(r, r).real / rr) * p
        x = xk
    return x, e


def oracle_loss(u, v):
    d = v - u
    return np.linalg.norm(d) / np.linalg.norm(u) + np.abs(d).sum() / np.abs(u).sum()


def tiny_problem(seed=0, n=8, coils=1):
    rng = np.random.default_rng(seed)
    maps = make_coilmaps(n, n, coils, seed)
    mask = make_omega_mask(n, n, 2, 2)
    split = split_omega(mask, 0.4, UNIFORM, seed)
    x_true = crandn(rng, n, n)
    y = SenseOperator(maps, mask).forward(x_true) + mask.picked * 0.05 * crandn(rng, coils, n, n)
    return maps, mask, split, x_true, y


# --- loss ----------------------------------------------------------------------

def test_loss_examples():
    u = np.array([1 + 0j, 0])
    assert norm_l1l2_loss(u, u) == 0.0
    assert norm_l1l2_loss(u, np.zeros(2)) == 2.0
    assert abs(norm_l1l2_loss(u, np.array([0, 1 + 0j])) - 3.414213562373095) < 1e-12
    rng = np.random.default_rng(0)
    a = crandn(rng, 50)
    assert norm_l1l2_loss(a, a) == 0.0
    assert norm_l1l2_loss(a, np.zeros(50)) == 2.0


def test_loss_errors():
    with pytest.raises(NormalizationError):
        norm_l1l2_loss(np.zeros(3), np.ones(3))
    with pytest.raises(ShapeError):
        norm_l1l2_loss(np.ones(3), np.ones(4))


def test_loss_matches_formula():
    rng = np.random.default_rng(1)
    u, v = crandn(rng, 40), crandn(rng, 40)
    assert abs(norm_l1l2_loss(u, v) - oracle_loss(u, v)) < 1e-13


@pytest.mark.parametrize("unrolls", [1, 2])
def test_selfsup_loss_compositional_oracle(unrolls):
    maps, mask, split, _, y = tiny_problem(2)
    cfg = NetConfig(unrolls=unrolls, channels=3, res_blocks=1, cg_iters=6)
    params = random_params(cfg, 2)
    op_t, op_l = SenseOperator(maps, split.theta), SenseOperator(maps, split.lam)
    got = selfsup_loss(params, op_t, op_l, y, y)
    x, _ = oracle_output(params, maps, split.theta, (split.theta * y))
    e_lam = dense_encoding(maps, split.lam)
    sel = np.tile(split.lam.ravel(), maps.shape[0])
    expected = oracle_loss(y.ravel()[sel], (e_lam @ x)[sel])
    assert abs(got - expected) < 1e-12


def test_supervised_loss_compositional_oracle():
    maps, mask, _, x_true, y = tiny_problem(3, coils=2)
    cfg = NetConfig(unrolls=1, channels=3, res_blocks=1, cg_iters=6)
    params = random_params(cfg, 3)
    got = supervised_loss(params, SenseOperator(maps, mask), y, x_true)
    x, _ = oracle_output(params, maps, mask.picked, y)
    assert abs(got - oracle_loss(x_true.ravel(), x)) < 1e-12


def test_supervised_trivial_values():
    maps, mask, _, x_true, y = tiny_problem(4)
    op = SenseOperator(maps, mask)
    zero_net = NetworkParams(NetConfig(unrolls=0, channels=2, res_blocks=0), np.zeros(count_params(
        NetConfig(unrolls=0, channels=2, res_blocks=0))))
    out = op.adjoint(y)
    assert supervised_loss(zero_net, op, y, out) == 0.0
    assert supervised_loss(zero_net, op, np.zeros_like(y), x_true) == 2.0
    with pytest.raises(ConfigError):
        supervised_loss(zero_net, op, y, None)


def test_selfsup_exact_projection_is_zero():
    # full single-coil sampling and an identity regularizer reproduce the data
    n = 8
    maps = np.ones((1, n, n), dtype=complex)
    full = np.ones((n, n), bool)
    x = crandn(np.random.default_rng(5), n, n)
    op = SenseOperator(maps, full)
    y = op.forward(x)
    p = NetworkParams.zeros(NetConfig(unrolls=1, channels=2, res_blocks=0))
    assert selfsup_loss(p, op, op, y, y) < 1e-14


def test_selfsup_masking_invariance():
    maps, mask, split, _, y = tiny_problem(6, coils=2)
    params = random_params(NetConfig(unrolls=1, channels=3, res_blocks=1), 6)
    op_t, op_l = SenseOperator(maps, split.theta), SenseOperator(maps, split.lam)
    base = selfsup_loss(params, op_t, op_l, y, y)
    rng = np.random.default_rng(6)
    noise = crandn(rng, *y.shape)
    # values outside Lambda in the target and outside Theta in the input do not matter
    y_target = np.where(split.lam, y, noise)
    y_input = np.where(split.theta, y, noise)
    assert selfsup_loss(params, op_t, op_l, y_input, y_target) == base


def test_loss_spec_requirements():
    maps, mask, split, _, y = tiny_problem(7)
    op = SenseOperator(maps, mask)
    with pytest.raises(ConfigError):
        LossSpec(SUPERVISED, op, y)
    with pytest.raises(ConfigError):
        LossSpec(SELFSUP, op, y)
    with pytest.raises(DegenerateSplitError):
        LossSpec.selfsup(op, op.with_mask(np.zeros((8, 8), bool)), y)
    with pytest.raises(ConfigError):
        LossSpec("perceptual", op, y)


# --- gradients -----------------------------------------------------------------

def test_single_conv_l2_gradient_formula():
    # with T=1, no residual blocks, mu -> large the output is z = x0 + W * h;
    # check the weight gradient of ||z - ref||^2 / 2 against the correlation formula
    from ssrecon.kernels import conv2d, conv2d_weight_grad
    rng = np.random.default_rng(8)
    x = rng.standard_normal((3, 8, 8))
    w = rng.standard_normal((2, 3, 3, 3))
    ref = rng.standard_normal((2, 8, 8))
    gy = conv2d(x, w) - ref
    got = conv2d_weight_grad(x, gy, 3)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    expected = np.zeros_like(w)
    for o in range(2):
        for c in range(3):
            for a in range(3):
                for b in range(3):
                    expected[o, c, a, b] = np.sum(gy[o] * xp[c, a:a + 8, b:b + 8])
    assert np.max(np.abs(got - expected)) < 1e-12


def fd_check(spec, params, indices, h=1e-5):
    g = backprop(params, spec).grad
    worst = 0.0
    for i in indices:
        tp, tm = params.theta.copy(), params.theta.copy()
        tp[i] += h
        tm[i] -= h
        fd = (loss_value(NetworkParams(params.cfg, tp), spec) - loss_value(NetworkParams(params.cfg, tm), spec)) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), abs(g[i]), 1e-6))
    return worst


@pytest.mark.parametrize("kind", [SUPERVISED, SELFSUP])
def test_gradient_matches_finite_differences(kind):
    maps, mask, split, x_true, y = tiny_problem(9, coils=2)
    cfg = NetConfig(unrolls=2, channels=4, res_blocks=1, cg_iters=8)
    params = random_params(cfg, 9, scale=0.15)
    op = SenseOperator(maps, mask)
    if kind == SUPERVISED:
        spec = LossSpec.supervised(op, y, x_true)
    else:
        spec = LossSpec.selfsup(op.with_mask(split.theta), op.with_mask(split.lam), y)
    rng = np.random.default_rng(9)
    idx = list(rng.choice(count_params(cfg) - 1, 25, replace=False)) + [count_params(cfg) - 1]
    assert fd_check(spec, params, idx) < 1e-3


def test_gradient_zero_at_exact_fit():
    maps, mask, _, _, y = tiny_problem(10)
    op = SenseOperator(maps, mask)
    p = NetworkParams.zeros(NetConfig(unrolls=1, channels=2, res_blocks=1))
    spec = LossSpec.supervised(op, y, unrolled_forward(p, op, y))
    bundle = backprop(p, spec)
    assert bundle.loss == 0.0
    assert not np.any(bundle.grad)


def test_backprop_layout():
    maps, mask, _, x_true, y = tiny_problem(11)
    cfg = NetConfig(unrolls=1, channels=2, res_blocks=1)
    g = backprop(random_params(cfg, 11), LossSpec.supervised(SenseOperator(maps, mask), y, x_true)).grad
    assert g.shape == (count_params(cfg),) and np.all(np.isfinite(g))


# --- Adam ----------------------------------------------------------------------

def test_adam_three_step_trace():
    # with a constant gradient the bias-corrected moments equal g and g^2 exactly,
    # so every step moves by lr * 1 / (1 + eps)
    state = AdamState.create(1, lr=0.1)
    theta = np.zeros(1)
    for t in range(1, 4):
        theta, state = adam_step(state, theta, np.ones(1))
        assert state.t == t
        assert abs(theta[0] - (-0.1 * t / (1 + 1e-8))) < 1e-12


def test_adam_hand_trace_varying_gradient():
    b1, b2, lr, eps = 0.9, 0.999, 0.1, 1e-8
    grads = [1.0, -2.0, 0.5]
    m = v = 0.0
    theta = 0.3
    expected = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        expected.append(theta)
    state, th = AdamState.create(1, lr=lr), np.array([0.3])
    for g, e in zip(grads, expected):
        th, state = adam_step(state, th, np.array([g]))
        assert abs(th[0] - e) < 1e-12


def test_adam_first_step_is_lr_sign():
    g = np.array([3.0, -1e-3, 250.0, -7.0])
    th, _ = adam_step(AdamState.create(4, lr=1e-3), np.zeros(4), g)
    assert np.allclose(th, -1e-3 * np.sign(g), rtol=1e-4, atol=0)


def test_adam_zero_gradient_and_purity():
    state = AdamState.create(3, lr=0.01)
    theta = np.array([1.0, 2.0, 3.0])
    new, new_state = adam_step(state, theta, np.zeros(3))
    assert np.array_equal(new, theta)
    assert state.t == 0 and not np.any(state.m)
    g = np.array([0.1, -0.2, 0.3])
    a = adam_step(state, theta, g)
    b = adam_step(state, theta, g)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1].v, b[1].v)
    assert np.array_equal(theta, [1.0, 2.0, 3.0])


def test_adam_layout_mismatch():
    with pytest.raises(ShapeError):
        adam_step(AdamState.create(3), np.zeros(3), np.zeros(4))


# --- training loop -------------------------------------------------------------

def test_epoch_order_permutation_and_seeding():
    a = epoch_order(20, 5, 0)
    assert sorted(a) == list(range(20))
    assert np.array_equal(a, epoch_order(20, 5, 0))
    assert not np.array_equal(a, epoch_order(20, 5, 1))
    assert not np.array_equal(a, epoch_order(20, 6, 0))


@pytest.fixture(scope="module")
def tiny_cohort():
    return generate_cohort(CohortConfig(scans=4, test_scans=0, size=16, acs=4, seed=3))


TINY = NetConfig(unrolls=2, channels=4, res_blocks=1, cg_iters=5)


def test_fit_zero_epochs(tiny_cohort):
    a, b = fit(tiny_cohort, TINY, SELFSUP, 0, seed=1), fit(tiny_cohort, TINY, SELFSUP, 0, seed=1)
    assert a.trace == []
    assert np.array_equal(a.params.theta, b.params.theta)
    init = init_params(TINY, 42)
    assert np.array_equal(fit(tiny_cohort, TINY, SELFSUP, 0, seed=1, init=init).params.theta, init.theta)


def test_fit_deterministic(tiny_cohort):
    a = fit(tiny_cohort, TINY, SELFSUP, 2, seed=7)
    b = fit(tiny_cohort, TINY, SELFSUP, 2, seed=7)
    assert np.array_equal(a.params.theta, b.params.theta)
    assert a.trace == b.trace
    assert len(a.trace) == 2


@pytest.mark.parametrize("kind", [SUPERVISED, SELFSUP])
def test_fit_reduces_loss(tiny_cohort, kind):
    cfg = NetConfig(unrolls=3, channels=8, res_blocks=2, cg_iters=5)
    res = fit(tiny_cohort, cfg, kind, 30, seed=0, lr=1e-2)
    assert res.trace[29] <= res.trace[0] / 2


def test_fit_errors(tiny_cohort):
    with pytest.raises(ConfigError):
        fit([], TINY, SELFSUP, 1, seed=0)
    bad = tiny_cohort[0]
    kspace = bad.kspace.copy()
    kspace[0][bad.mask.picked] = np.nan
    poisoned = type(bad)(**{**bad.__dict__, "kspace": kspace})
    with pytest.raises(NumericError):
        fit([poisoned], TINY, SUPERVISED, 1, seed=0)


def test_selfsup_without_split_uses_all_samples(tiny_cohort):
    scan = tiny_cohort[0].with_split(None)
    spec = loss_spec_for(scan, SELFSUP)
    assert np.array_equal(spec.op.mask, scan.mask.picked) and np.array_equal(spec.op_loss.mask, scan.mask.picked)
    with pytest.raises(ConfigError):
        loss_spec_for(scan, "other")
