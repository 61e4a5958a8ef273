import zlib

import numpy as np
import pytest

from twinseq import core
from twinseq.core import (
    Graph,
    GraphError,
    NonFiniteError,
    NondeterministicError,
    ShapeError,
    Tensor,
    backward,
    count_ops,
    gradcheck,
    no_grad,
    ops,
)


def param(values):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)


class TestForwardOps:
    def test_matmul_identity(self):
        A = np.random.default_rng(0).standard_normal((3, 3))
        out = ops.matmul(Tensor(np.eye(3)), Tensor(A))
        np.testing.assert_array_equal(out.numpy(), A)

    def test_sigmoid_relu_at_known_points(self):
        assert ops.sigmoid(Tensor([[0.0]])).item() == 0.5
        assert ops.relu(Tensor([[-1.0]])).item() == 0.0
        assert ops.relu(Tensor([[2.5]])).item() == 2.5

    def test_sigmoid_tails_are_stable(self):
        out = ops.sigmoid(Tensor([[-800.0, -40.0, 40.0, 800.0]])).numpy()
        assert np.all(np.isfinite(out))
        assert out[0, 1] == pytest.approx(np.exp(-40.0), rel=1e-12)
        assert out[0, 2] == 1.0

    def test_softmax_uniform(self):
        out = ops.softmax_rows(Tensor([[0.0, 0.0, 0.0]])).numpy()
        np.testing.assert_allclose(out, [[1 / 3, 1 / 3, 1 / 3]], rtol=1e-15)

    def test_softmax_large_logits(self):
        out = ops.softmax_rows(Tensor([[1000.0, 0.0], [-1000.0, -999.0]])).numpy()
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_concat_and_slice_are_inverse(self):
        a, b = Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 2)))
        c = ops.concat([a, b], axis=1)
        assert c.shape == (2, 5)
        np.testing.assert_array_equal(ops.slice_cols(c, 0, 3).numpy(), a.numpy())
        np.testing.assert_array_equal(ops.slice_cols(c, 3, 5).numpy(), b.numpy())

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ShapeError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_row_broadcast_allowed(self):
        out = ops.add(Tensor(np.zeros((4, 3))), Tensor(np.arange(3.0)[None, :]))
        np.testing.assert_array_equal(out.numpy(), np.tile(np.arange(3.0), (4, 1)))

    def test_non_finite_output_raises(self):
        with pytest.raises(NonFiniteError), np.errstate(over="ignore"):
            ops.mul(Tensor([[1e308]]), Tensor([[1e308]]))

    def test_non_finite_input_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.nan])

    def test_empty_extent_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))

    def test_log_clamp(self):
        out = ops.log(Tensor([[1e-20, 1.0]]), clamp=1e-12).numpy()
        assert out[0, 0] == pytest.approx(np.log(1e-12))
        assert out[0, 1] == 0.0

    def test_log_without_clamp_rejects_zero(self):
        with pytest.raises((ValueError, NonFiniteError)):
            ops.log(Tensor([[0.0]]))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            core.apply("conv2d", Tensor([1.0]))

    def test_spec_op_kinds_registered(self):
        for kind in ("matmul", "add", "mul", "sigmoid", "tanh", "relu", "concat", "slice", "sum",
                     "mean", "square", "log", "softmax_rows"):
            assert kind in core.op_kinds()


class TestBackward:
    def test_square_at_three(self):
        x = param([3.0])
        with Graph():
            y = ops.sum(ops.square(x))
            backward(y)
        assert x.grad[0] == pytest.approx(6.0, abs=1e-12)

    def test_fan_out_accumulates(self):
        x = param([[1.5]])
        with Graph():
            backward(ops.sum(ops.add(x, x)))
        assert x.grad[0, 0] == 2.0

    def test_unused_parameter_gets_no_gradient(self):
        x, p = param([[2.0]]), param([[5.0]])
        with Graph():
            backward(ops.sum(ops.square(x)))
        assert p.grad is None or np.all(p.grad == 0)

    def test_softmax_nll_gradient_closed_form(self):
        logits = param([[0.0, 0.0, 0.0]])
        with Graph():
            p = ops.softmax_rows(logits)
            onehot = Tensor([[0.0, 0.0, 1.0]])
            loss = ops.mul(ops.sum(ops.mul(onehot, ops.log(p))), -1.0)
            backward(loss)
        np.testing.assert_allclose(logits.grad, [[1 / 3, 1 / 3, -2 / 3]], atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        x = param([1.0, 2.0])
        with Graph():
            y = ops.square(x)
            with pytest.raises(GraphError):
                backward(y)

    def test_detached_loss_rejected(self):
        with pytest.raises(GraphError):
            backward(Tensor(1.0))

    def test_graph_cleared_after_backward(self):
        x = param([[1.0]])
        with Graph() as g:
            y = ops.sum(ops.square(x))
            assert len(g) == 2
            backward(y)
            assert len(g) == 0

    def test_no_grad_records_nothing(self):
        x = param([[1.0]])
        with Graph() as g, no_grad():
            y = ops.square(x)
        assert len(g) == 0 and not y.requires_grad

    def test_count_ops(self):
        with count_ops() as c:
            ops.tanh(ops.add(Tensor([[1.0]]), Tensor([[2.0]])))
        assert c == {"add": 1, "tanh": 1}


@pytest.mark.parametrize("kind", ["matmul", "add", "sub", "mul", "sigmoid", "tanh", "relu", "square", "log",
                                  "sum", "mean", "softmax", "concat", "slice", "sum_axis", "batch_norm"])
def test_op_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(zlib.crc32(kind.encode()))
    r, c = rng.integers(2, 9, size=2)
    a = param(rng.standard_normal((r, c)))
    b = param(rng.standard_normal((r, c)))
    m = param(rng.standard_normal((c, int(rng.integers(1, 9)))))
    w = Tensor(rng.standard_normal((r, c)))
    if kind == "relu":
        # keep entries away from the kink
        a.data = np.where(np.abs(a.data) < 0.1, 0.5, a.data)
    pos = param(rng.uniform(0.5, 2.0, (r, c)))
    axis = int(rng.integers(2))
    gamma, beta = param(rng.standard_normal((1, c))), param(rng.standard_normal((1, c)))
    body = {
        "matmul": (lambda: ops.matmul(a, m), [a, m]),
        "add": (lambda: ops.add(a, b), [a, b]),
        "sub": (lambda: ops.sub(a, b), [a, b]),
        "mul": (lambda: ops.mul(a, b), [a, b]),
        "sigmoid": (lambda: ops.sigmoid(a), [a]),
        "tanh": (lambda: ops.tanh(a), [a]),
        "relu": (lambda: ops.relu(a), [a]),
        "square": (lambda: ops.square(a), [a]),
        "log": (lambda: ops.log(pos), [pos]),
        "sum": (lambda: ops.mul(ops.sum(a), a), [a]),
        "mean": (lambda: ops.mul(ops.mean(a), a), [a]),
        "softmax": (lambda: ops.softmax_rows(a), [a]),
        "concat": (lambda: ops.concat([a, b], axis=axis), [a, b]),
        "slice": (lambda: ops.slice_rows(a, 0, 1 + r // 2), [a]),
        "sum_axis": (lambda: ops.sum(a, axis=1), [a]),
        "batch_norm": (lambda: ops.batch_norm(a, gamma, beta), [a, gamma, beta]),
    }[kind]
    fn, params = body
    # weight the output by a fixed random tensor so every entry matters
    def f():
        out = fn()
        proj = Tensor(np.resize(w.data, out.shape)) if out.shape != w.shape else w
        return ops.sum(ops.mul(out, proj))
    report = gradcheck(f, params, tolerance=1e-4)
    assert report.passed, report.summary()


class TestGradcheck:
    def test_square_passes_tight(self):
        x = param([3.0])
        report = gradcheck(lambda: ops.sum(ops.square(x)), [x], tolerance=1e-6)
        assert report.passed
        assert report.analytic[0][0] == pytest.approx(6.0)

    def test_constant_function(self):
        x = param([[1.0, 2.0]])
        report = gradcheck(lambda: ops.sum(Tensor([[4.0]])), [x])
        assert report.passed
        assert np.all(report.analytic[0] == 0) and np.all(report.numeric[0] == 0)

    def test_corrupted_gradient_fails(self):
        x = param([[0.3, -1.2]])
        register = core.tensor._KERNELS["square"]

        def broken(a, exact):
            out, g = register(a, exact=exact)
            return out, lambda gr, needs: (g(gr, needs)[0] + 0.1,)

        core.tensor._KERNELS["square"] = broken
        try:
            report = gradcheck(lambda: ops.sum(ops.square(x)), [x])
        finally:
            core.tensor._KERNELS["square"] = register
        assert not report.passed
        assert "FAIL" in report.summary()

    def test_nondeterministic_function_detected(self):
        x = param([[1.0]])
        rng = np.random.default_rng(0)
        with pytest.raises(NondeterministicError):
            gradcheck(lambda: ops.sum(ops.mul(x, Tensor([[rng.random()]]))), [x])

    def test_requires_double(self):
        x = Tensor(np.array([[1.0]], dtype=np.float32), requires_grad=True, dtype=np.float32)
        with pytest.raises(TypeError):
            gradcheck(lambda: ops.sum(ops.square(x)), [x])


def test_single_precision_mode():
    with core.precision("single"):
        t = Tensor([1.0, 2.0])
        assert t.dtype == np.float32
    assert Tensor([1.0]).dtype == np.float64


def test_inference_matmul_is_row_exact():
    # one row through the inference kernel equals that row of a batched product
    rng = np.random.default_rng(3)
    A, B = rng.standard_normal((50, 37)), rng.standard_normal((37, 29))
    full = ops.matmul(Tensor(A), Tensor(B)).numpy()
    for i in range(50):
        np.testing.assert_array_equal(ops.matmul(Tensor(A[i:i + 1]), Tensor(B)).numpy(), full[i:i + 1])
