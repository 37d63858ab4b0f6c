import numpy as np
import pytest

from loglens.autodiff import (
    Adam,
    ParamSet,
    SGD,
    load_params,
    make_optimizer,
    optimize_step,
    save_params,
)
from loglens.exceptions import FormatError, TrainingError


def single_param(value, grad):
    ps = ParamSet(0)
    p = ps.zeros("p", np.shape(value))
    p.data = np.array(value, dtype=np.float64)
    if grad is not None:
        p.grad = np.array(grad, dtype=np.float64)
    return ps, p


class TestOptimizers:
    def test_sgd_step(self):
        ps, p = single_param([1.0], [0.5])
        SGD(lr=0.1).step(ps)
        assert p.data.tolist() == [0.95]

    def test_zero_gradient_leaves_params_unchanged(self):
        ps, p = single_param([1.0, -2.0], [0.0, 0.0])
        before = p.data.copy()
        Adam(lr=0.1).step(ps)
        assert np.array_equal(p.data, before)

    def test_adam_first_step_magnitude_is_lr(self):
        # bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
        for g in (3.0, -0.01, 0.7):
            ps, p = single_param([1.0], [g])
            Adam(lr=1e-3).step(ps)
            assert abs(abs(p.data[0] - 1.0) - 1e-3) < 1e-8

    def test_missing_gradient_raises(self):
        ps, _ = single_param([1.0], None)
        with pytest.raises(TrainingError, match="p"):
            Adam(lr=0.1).step(ps)

    def test_optimize_step_clears_gradients(self):
        ps, p = single_param([1.0], [1.0])
        optimize_step(ps, make_optimizer("sgd", 0.5))
        assert p.grad is None
        assert p.data.tolist() == [0.5]


class TestParamContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        ps = ParamSet(99)
        ps.uniform("layer.w", (7, 5), fan_in=7)
        ps.zeros("layer.b", (5,))
        ps.constant("table", np.arange(12.0).reshape(3, 4))
        path = tmp_path / "params.llns"
        save_params(ps.copy_values(), path)
        loaded = load_params(path)
        assert list(loaded) == ps.names()
        for name, arr in loaded.items():
            assert arr.dtype == np.float64
            assert np.array_equal(arr, ps[name].data)
            assert arr.tobytes() == ps[name].data.astype("<f8").tobytes()

    def test_header_magic(self, tmp_path):
        path = tmp_path / "params.llns"
        save_params({"x": np.zeros(2)}, path)
        assert path.read_bytes()[:5] == b"LLNS1"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.llns"
        path.write_bytes(b"NOPE!" + b"\x00" * 16)
        with pytest.raises(FormatError):
            load_params(path)

    def test_scalar_rank_zero(self, tmp_path):
        path = tmp_path / "scalar.llns"
        save_params({"s": np.float64(3.5)}, path)
        assert load_params(path)["s"] == 3.5
