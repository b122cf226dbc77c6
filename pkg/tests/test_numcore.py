import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lumamba.numcore import Array, Parameter, ShapeError, Tape, backward, grad_check, ops


def _shape(rng, ndim):
    return tuple(int(n) for n in rng.integers(1, 9, size=ndim))


def _params(rng, *shapes, positive=False):
    out = []
    for i, s in enumerate(shapes):
        x = rng.uniform(0.5, 2.0, size=s) if positive else rng.normal(size=s)
        out.append(Parameter(x, name=f"x{i}"))
    return out


def _case(name, rng):
    """(params, f) where f is a scalar function of params built from one primitive."""
    s = _shape(rng, 3)
    if name in ("add", "sub", "mul"):
        a, b = _params(rng, s, s[1:])   # b broadcasts along the leading axis
        fn = getattr(ops, name)
        return [a, b], lambda: fn(a, b)
    if name == "div":
        a, b = _params(rng, s, s, positive=True)
        return [a, b], lambda: ops.div(a, b)
    if name in ("sigmoid", "silu", "exp", "softplus", "square"):
        (a,) = _params(rng, s)
        return [a], lambda: getattr(ops, name)(a)
    if name in ("log", "sqrt"):
        (a,) = _params(rng, s, positive=True)
        return [a], lambda: getattr(ops, name)(a)
    if name == "matmul":
        m, k, n = _shape(rng, 3)
        a, b = _params(rng, (m, k), (k, n))
        return [a, b], lambda: ops.matmul(a, b)
    if name == "linear_nd":
        bsz, m, k, n = _shape(rng, 4)
        a, w, bias = _params(rng, (bsz, m, k), (k, n), (n,))
        return [a, w, bias], lambda: ops.linear(a, w, bias)
    if name == "bmm":
        bsz, m, k, n = _shape(rng, 4)
        a, b = _params(rng, (bsz, m, k), (bsz, k, n))
        return [a, b], lambda: ops.bmm(a, b)
    if name == "conv1d":
        n, cin, cout, length = _shape(rng, 4)
        k = int(rng.integers(1, 6))
        x, w, b = _params(rng, (n, cin, length), (cout, cin, k), (cout,))
        return [x, w, b], lambda: ops.conv1d(x, w, b)
    if name == "softmax":
        (a,) = _params(rng, s)
        return [a], lambda: ops.softmax(a)
    if name == "log_softmax":
        (a,) = _params(rng, s)
        return [a], lambda: ops.log_softmax(a)
    if name == "layer_norm":
        # width 2 pins the output at +-1 and leaves only eps-sized gradients
        s = s[:-1] + (max(s[-1], 3),)
        a, w, b = _params(rng, s, s[-1:], s[-1:])
        return [a, w, b], lambda: ops.layer_norm(a, w, b)
    if name == "sum":
        (a,) = _params(rng, s)
        ax = int(rng.integers(0, 3))
        return [a], lambda: ops.sum(a, axis=ax)
    if name == "mean":
        (a,) = _params(rng, s)
        return [a], lambda: ops.mean(a, axis=(0, 2), keepdims=True)
    if name == "reshape":
        (a,) = _params(rng, s)
        return [a], lambda: ops.reshape(a, (s[0] * s[1], s[2]))
    if name == "transpose":
        (a,) = _params(rng, s)
        return [a], lambda: ops.transpose(a, (2, 0, 1))
    if name == "concat":
        a, b = _params(rng, s, s[:1] + (int(rng.integers(1, 9)),) + s[2:])
        return [a, b], lambda: ops.concat([a, b], axis=1)
    if name == "slice":
        (a,) = _params(rng, s)
        lo = int(rng.integers(0, s[1]))
        return [a], lambda: ops.slice(a, 1, lo, s[1])
    if name == "gather":
        (a,) = _params(rng, s)
        idx = rng.integers(0, s[0], size=5)   # repeats exercise accumulation
        return [a], lambda: ops.getitem(a, idx)
    if name == "reverse":
        (a,) = _params(rng, s)
        return [a], lambda: ops.reverse(a, 2)
    if name == "broadcast_to":
        (a,) = _params(rng, (1,) + s[1:])
        return [a], lambda: ops.broadcast_to(a, s)
    if name == "cross_entropy":
        b, k = _shape(rng, 2)
        k = max(k, 2)
        (a,) = _params(rng, (b, k))
        labels = rng.integers(0, k, size=b)
        return [a], lambda: ops.cross_entropy(a, labels)
    raise KeyError(name)


PRIMITIVES = ["add", "sub", "mul", "div", "sigmoid", "silu", "exp", "softplus", "square",
              "log", "sqrt", "matmul", "linear_nd", "bmm", "conv1d", "softmax", "log_softmax",
              "layer_norm", "sum", "mean", "reshape", "transpose", "concat", "slice", "gather",
              "reverse", "broadcast_to", "cross_entropy"]


@pytest.mark.parametrize("name", PRIMITIVES)
def test_primitive_gradients_match_finite_differences(name):
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        params, build = _case(name, rng)
        proj = rng.normal(size=build().shape)

        def f():
            return ops.sum(ops.mul(build(), proj))

        worst = max(worst, grad_check(f, params, step=1e-4, max_coords=8, seed=seed))
    assert worst <= 1e-4, f"{name}: {worst:.2e}"


def test_matmul_identity():
    m = np.arange(9.0).reshape(3, 3)
    out = ops.matmul(np.eye(3), m)
    np.testing.assert_array_equal(out.data, m)


def test_softmax_uniform_on_zeros():
    out = ops.softmax(np.zeros(3))
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_softmax_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=10.0, size=(int(rng.integers(1, 9)), int(rng.integers(1, 9))))
    s = ops.softmax(x).data
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(-1), 1.0, atol=1e-6)


def test_layernorm_constant_row_is_zero():
    out = ops.layer_norm(np.full((2, 7), 3.25))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-6)
    assert np.isfinite(out.data).all()


def test_layout_ops_are_exact_permutations():
    x = np.random.default_rng(0).normal(size=(3, 4, 5)).astype(np.float32)
    np.testing.assert_array_equal(ops.reshape(x, (12, 5)).data.reshape(3, 4, 5), x)
    np.testing.assert_array_equal(ops.transpose(x, (2, 0, 1)).data.transpose(1, 2, 0), x)
    np.testing.assert_array_equal(ops.reverse(ops.reverse(x, 1), 1).data, x)
    assert sorted(ops.transpose(x, (1, 2, 0)).data.ravel()) == sorted(x.ravel())


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(np.ones((2, 3)), np.ones((4, 5)))
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4,\)"):
        ops.add(np.ones((2, 3)), np.ones(4))


def test_backward_product_rule():
    x, y = Parameter(2.0, "x"), Parameter(3.0, "y")
    with Tape() as tape:
        z = x * y
    grads = backward(tape, z, [x, y])
    assert grads["x"] == pytest.approx(3.0)
    assert grads["y"] == pytest.approx(2.0)


def test_backward_sigmoid_layer_against_finite_differences():
    rng = np.random.default_rng(1)
    w = Parameter(rng.normal(size=(5, 5)), "w")
    x = Array(rng.normal(size=(5, 1)))
    err = grad_check(lambda: ops.sum(ops.sigmoid(ops.matmul(w, x))), [w], step=1e-3, max_coords=25)
    assert err <= 1e-4


def test_unreachable_parameter_gets_zero_grad():
    x, y = Parameter([1.0, 2.0], "x"), Parameter([5.0], "y")
    y.grad = np.array([7.0], dtype=np.float32)
    with Tape() as tape:
        loss = ops.sum(x * x)
    backward(tape, loss, [x, y])
    np.testing.assert_array_equal(y.grad, [0.0])


def test_non_scalar_root_rejected():
    x = Parameter([1.0, 2.0])
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_backward_twice_is_deterministic():
    rng = np.random.default_rng(2)
    w = Parameter(rng.normal(size=(4, 3)), "w")
    x = rng.normal(size=(6, 4))
    with Tape() as tape:
        loss = ops.sum(ops.softmax(ops.matmul(x, w)) * x[:, :3])
    g1 = {k: v.copy() for k, v in backward(tape, loss, [w]).items()}
    g2 = backward(tape, loss, [w])
    np.testing.assert_array_equal(g1["w"], g2["w"])


def test_shared_subexpression_accumulates():
    x = Parameter(1.5)
    with Tape() as tape:
        y = x * x + x
    tape.backward(y, [x])
    assert float(x.grad) == pytest.approx(4.0)


def test_grad_check_quadratic_and_constant():
    theta = Parameter(np.random.default_rng(3).normal(size=10), "theta")
    assert grad_check(lambda: ops.sum(theta * theta), [theta]) <= 1e-6
    c = Parameter(np.ones(3), "c")
    worst, details = grad_check(lambda: Array(4.0) + 0.0 * ops.sum(c), [c], return_details=True)
    assert worst == 0.0
    assert all(a == 0.0 and n == 0.0 for *_, a, n, _ in details)


def test_grad_check_rejects_non_finite():
    p = Parameter([0.0])
    with pytest.raises(FloatingPointError):
        grad_check(lambda: ops.sum(ops.log(p)), [p])


def test_grad_check_restores_parameters():
    p = Parameter(np.arange(4.0), "p")
    before = p.data.copy()
    grad_check(lambda: ops.sum(ops.exp(p)), [p])
    assert p.data.dtype == np.float32
    np.testing.assert_array_equal(p.data, before)
