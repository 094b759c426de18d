"""
Test Suite for the tensor engine
Covers the tape, the primitive operations, precision handling and checkpoint I/O
"""

import math
import struct
import threading

import numpy as np
import pytest

from src.engine import (
    GradientTape,
    Parameter,
    Tensor,
    backward,
    clamp_min,
    concat,
    current_tape,
    finite_difference_check,
    get_default_dtype,
    load_checkpoint,
    matmul,
    no_grad,
    precision,
    reduce,
    save_checkpoint,
)
from src.engine.tensor import anomaly_mode, map_elementwise
from src.utils.errors import (
    DataFormatError,
    DomainError,
    GradientError,
    NonFiniteError,
    PrecisionError,
    ShapeError,
)


@pytest.fixture
def float64():
    """Run a test in 64-bit mode"""
    with precision(np.float64):
        yield


class TestMatmul:
    """Test matrix products and their backward rule"""

    def test_identity_left(self):
        """Test that I·B == B"""
        out = matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 4], [5, 6]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_zero_product(self):
        """Test a product with a zero column"""
        out = matmul(Tensor([[1, 2]]), Tensor([[0], [0]]))
        np.testing.assert_array_equal(out.data, [[0]])

    def test_hand_expanded(self):
        """Test [[1,2],[3,4]]·[[5],[6]] == [[17],[39]]"""
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[5], [6]]))
        np.testing.assert_array_equal(out.data, [[17], [39]])

    def test_identity_right_is_exact(self):
        """Test that A·I reproduces A element-exactly"""
        a = np.random.default_rng(0).standard_normal((4, 3)).astype(np.float32)
        out = matmul(Tensor(a), Tensor(np.eye(3)))
        np.testing.assert_array_equal(out.data, a)

    def test_dimension_mismatch_names_both_shapes(self):
        """Test that a mismatch raises ShapeError naming both shapes"""
        with pytest.raises(ShapeError) as exc:
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        assert "(2, 3)" in str(exc.value)

    def test_backward_rule(self):
        """Test dA = dC·Bᵀ and dB = Aᵀ·dC for loss = sum(A·B)"""
        a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        b = Tensor([[5.0], [6.0]], requires_grad=True)
        with GradientTape() as tape:
            loss = matmul(a, b).sum()
            tape.backward(loss)
        np.testing.assert_allclose(a.grad, [[5.0, 6.0], [5.0, 6.0]])
        np.testing.assert_allclose(b.grad, [[4.0], [6.0]])


class TestElementwise:
    """Test elementwise maps"""

    def test_sigmoid_zero(self):
        """Test sigmoid(0) == 0.5"""
        assert Tensor(0.0).sigmoid().item() == 0.5

    def test_relu_clamps(self):
        """Test relu(-3) == 0"""
        assert Tensor(-3.0).relu().item() == 0.0

    def test_relu_keeps_nan(self):
        """Test that relu passes NaN through instead of clamping it to 0"""
        with anomaly_mode(False):
            out = Tensor([np.nan, -1.0, 2.0]).relu().data
        assert np.isnan(out[0])
        np.testing.assert_array_equal(out[1:], [0.0, 2.0])

    def test_clamp_min_keeps_nan(self):
        """Test that clamp_min passes NaN through"""
        with anomaly_mode(False):
            out = clamp_min(Tensor([np.nan, 0.5]), 1.0).data
        assert np.isnan(out[0])
        assert out[1] == 1.0

    def test_sigmoid_threshold_root(self):
        """Test sigmoid(-0.2007) is approximately 0.45"""
        assert abs(Tensor(-0.2007).sigmoid().item() - 0.45) < 1e-4

    def test_log_of_non_positive(self):
        """Test that log(0) raises a domain error"""
        with pytest.raises(DomainError):
            Tensor([1.0, 0.0]).log()

    def test_unknown_function(self):
        """Test that an unknown map name is rejected"""
        with pytest.raises(ValueError):
            map_elementwise(Tensor(1.0), "tanh")

    def test_neg(self):
        """Test unary negation"""
        np.testing.assert_array_equal((-Tensor([1.0, -2.0])).data, [-1.0, 2.0])


class TestReduce:
    """Test reductions"""

    def test_mean(self):
        """Test mean([1,2,3]) == 2"""
        assert reduce(Tensor([1.0, 2.0, 3.0]), 0, "mean").item() == 2.0

    def test_l2norm(self):
        """Test l2norm([3,4]) == 5"""
        assert reduce(Tensor([3.0, 4.0]), None, "l2norm").item() == 5.0

    def test_sum_of_zeros(self):
        """Test sum(zeros(4)) == 0"""
        assert reduce(Tensor(np.zeros(4)), None, "sum").item() == 0.0

    def test_invalid_axis(self):
        """Test that an out-of-range axis raises ShapeError"""
        with pytest.raises(ShapeError):
            reduce(Tensor(np.ones((2, 2))), 2, "sum")

    def test_full_sum_matches_buffer(self, float64):
        """Test that a full 64-bit sum equals numpy's sum to accumulation tolerance"""
        data = np.random.default_rng(1).standard_normal((3, 4, 5))
        assert reduce(Tensor(data), None, "sum").item() == pytest.approx(float(data.sum()), rel=1e-12, abs=1e-12)

    def test_l2norm_gradient_at_zero(self):
        """Test that the l2norm gradient at the origin is zero, not NaN"""
        x = Tensor(np.zeros(3), requires_grad=True)
        with GradientTape() as tape:
            tape.backward(reduce(x, None, "l2norm"))
        np.testing.assert_array_equal(x.grad, np.zeros(3))


class TestBroadcasting:
    """Test the restricted broadcasting rules"""

    def test_scalar_broadcast(self):
        """Test that a 0-d operand broadcasts"""
        np.testing.assert_array_equal((Tensor([1.0, 2.0]) * 2.0).data, [2.0, 4.0])

    def test_size_one_dims(self):
        """Test bias-style broadcasting over size-1 dims"""
        out = Tensor(np.zeros((2, 3))) + Tensor([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])

    def test_rank_mismatch_rejected(self):
        """Test that general numpy-style broadcasting is not supported"""
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros(3))

    def test_broadcast_gradient_is_reduced(self):
        """Test that the gradient of a broadcast operand is summed back to its shape"""
        bias = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
        with GradientTape() as tape:
            tape.backward((Tensor(np.ones((4, 3))) * bias).sum())
        np.testing.assert_array_equal(bias.grad, [[4.0, 4.0, 4.0]])


class TestBackward:
    """Test backward propagation"""

    def test_linear_map(self):
        """Test loss = sum(w), w=[1,2] gives dw = [1,1]"""
        w = Parameter([1.0, 2.0])
        with GradientTape():
            loss = w.sum()
        backward(loss)
        np.testing.assert_array_equal(w.grad, [1.0, 1.0])

    def test_power_rule(self):
        """Test loss = sum(w²), w=[3] gives dw = [6]"""
        w = Parameter([3.0])
        with GradientTape():
            loss = w.square().sum()
        backward(loss)
        np.testing.assert_allclose(w.grad, [6.0])

    def test_sigmoid_derivative(self):
        """Test loss = σ(w) at 0 gives dw = 0.25"""
        w = Parameter(0.0)
        with GradientTape():
            loss = w.sigmoid()
        backward(loss)
        assert float(w.grad) == pytest.approx(0.25)

    def test_non_scalar_loss(self):
        """Test that a vector loss is rejected"""
        w = Parameter([1.0, 2.0])
        with GradientTape():
            out = w * 2.0
        with pytest.raises(GradientError):
            backward(out)

    def test_detached_loss(self):
        """Test that a loss computed off-tape is rejected"""
        w = Parameter([1.0, 2.0])
        with pytest.raises(GradientError):
            backward(w.sum())

    def test_second_backward_without_reset(self):
        """Test that replaying into populated grads is an error unless accumulating"""
        w = Parameter([1.0])
        with GradientTape() as tape:
            loss = (w * 3.0).sum()
        tape.backward(loss, retain=True)
        with pytest.raises(GradientError):
            tape.backward(loss)
        tape.backward(loss, accumulate=True)
        np.testing.assert_allclose(w.grad, [6.0])

    def test_tape_replayed_once(self):
        """Test that a tape cannot be replayed twice without retain"""
        w = Parameter([1.0])
        with GradientTape() as tape:
            loss = w.sum()
        tape.backward(loss)
        w.zero_grad()
        with pytest.raises(GradientError):
            tape.backward(loss)

    def test_shared_input_accumulates(self):
        """Test that a tensor used twice receives both contributions"""
        w = Parameter([2.0])
        with GradientTape():
            loss = (w * w + w).sum()
        backward(loss)
        np.testing.assert_allclose(w.grad, [5.0])

    def test_topological_order(self):
        """Test that every recorded op's inputs were produced earlier on the tape"""
        w = Parameter(np.ones((2, 2)))
        with GradientTape() as tape:
            (matmul(w, w).relu() + w).sum()
        produced = set()
        for op in tape.operations:
            for inp in op.inputs:
                assert inp._op is None or id(inp) in produced
            produced.add(id(op.output))

    def test_concat_backward(self):
        """Test that concat splits the upstream gradient"""
        a, b = Parameter([1.0, 2.0]), Parameter([3.0])
        with GradientTape():
            loss = (concat([a, b]) * Tensor([1.0, 2.0, 3.0])).sum()
        backward(loss)
        np.testing.assert_array_equal(a.grad, [1.0, 2.0])
        np.testing.assert_array_equal(b.grad, [3.0])


class TestRecordingContext:
    """Test no_grad, precision and anomaly handling"""

    def test_no_grad_suspends_recording(self):
        """Test that no_grad inside a tape records nothing"""
        w = Parameter([1.0])
        with GradientTape() as tape:
            with no_grad():
                out = w * 2.0
        assert len(tape) == 0
        assert out.requires_grad is False

    def test_tape_is_thread_local(self):
        """Test that another thread does not see this thread's tape"""
        seen = []
        with GradientTape():
            worker = threading.Thread(target=lambda: seen.append(current_tape()))
            worker.start()
            worker.join()
        assert seen == [None]

    def test_precision_context(self):
        """Test that precision() switches and restores the default dtype"""
        assert get_default_dtype() == np.float32
        with precision(np.float64):
            assert Tensor(1.0).dtype == np.float64
        assert get_default_dtype() == np.float32

    def test_anomaly_mode(self):
        """Test that anomaly mode reports non-finite outputs"""
        with anomaly_mode(True):
            with pytest.raises(NonFiniteError):
                Tensor([1.0]) / Tensor([0.0])


class TestFiniteDifferenceCheck:
    """Test the finite-difference oracle"""

    def test_requires_64_bit(self):
        """Test that the check refuses to run in 32-bit mode"""
        with pytest.raises(PrecisionError):
            finite_difference_check(lambda x: x.sum(), Tensor([1.0]))

    def test_linear_function_is_exact(self, float64):
        """Test f = sum(x) gives error ≈ 0"""
        assert finite_difference_check(lambda x: x.sum(), Tensor([0.3, -1.2, 4.0])) < 1e-9

    def test_quadratic(self, float64):
        """Test f = sum(x²) at [1,2] gives error < 1e-7"""
        assert finite_difference_check(lambda x: x.square().sum(), Tensor([1.0, 2.0]), h=1e-5) < 1e-7

    def test_nan_is_failure(self, float64):
        """Test that NaN in f reports an infinite error"""
        assert math.isinf(finite_difference_check(lambda x: (x * float("nan")).sum(), Tensor([1.0])))


class TestCheckpoint:
    """Test CGV1 checkpoint files"""

    def test_save_and_load(self, tmp_path):
        """Test that names, order and values survive a save/load"""
        path = str(tmp_path / "w.cgv")
        tensors = {"b.weight": np.arange(6, dtype=np.float32).reshape(2, 3), "a.bias": np.array([1.5], np.float32)}
        save_checkpoint(tensors, path)
        loaded = load_checkpoint(path)
        assert list(loaded) == ["b.weight", "a.bias"]
        np.testing.assert_array_equal(loaded["b.weight"], tensors["b.weight"])

    def test_header_layout(self, tmp_path):
        """Test the little-endian magic and tensor count"""
        path = str(tmp_path / "w.cgv")
        save_checkpoint({"x": np.zeros(2, np.float32)}, path)
        with open(path, "rb") as f:
            head = f.read(8)
        assert head[:4] == b"CGV1"
        assert struct.unpack("<I", head[4:8])[0] == 1

    def test_bad_magic(self, tmp_path):
        """Test that a foreign file is rejected"""
        path = tmp_path / "bad.cgv"
        path.write_bytes(b"XXXX\x00\x00\x00\x00")
        with pytest.raises(DataFormatError):
            load_checkpoint(str(path))

    def test_truncated(self, tmp_path):
        """Test that a truncated file is rejected"""
        path = str(tmp_path / "w.cgv")
        save_checkpoint({"x": np.ones(4, np.float32)}, path)
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:-3])
        with pytest.raises(DataFormatError):
            load_checkpoint(path)
