import numpy as np
import pytest

from src.errors import ContractError, TrainingDivergenceError
from src.handlers.case_model import Parameters
from src.handlers.optimizer import OptimizerState, adamw_step, lr_at_epoch
from src.helpers.tensor import Tensor
from src.schemas.model_config import InitConfig
from src.schemas.training import LrSchedule


def scalar_params(**values) -> Parameters:
    tensors = {
        name: Tensor(np.array([value], dtype=np.float64), requires_grad=True, name=name)
        for name, value in values.items()
    }
    return Parameters(tensors, InitConfig())


class TestAdamW:
    def test_first_step_moves_by_lr(self):
        params = scalar_params(w=1.0)
        state = OptimizerState.zeros(params)
        adamw_step(state, params, {"w": np.array([1.0])}, lr=0.1, weight_decay=0.0)
        assert params["w"].data[0] == pytest.approx(0.9, abs=1e-7)
        assert state.step == 1

    def test_bias_correction_over_two_steps(self):
        params = scalar_params(w=1.0)
        state = OptimizerState.zeros(params)
        for _ in range(2):
            adamw_step(state, params, {"w": np.array([1.0])}, lr=0.1, weight_decay=0.0)
        assert params["w"].data[0] == pytest.approx(0.8, abs=1e-6)

    def test_decay_only_without_gradient(self):
        """A block with zero gradient shrinks by exactly lr * weight_decay"""
        params = scalar_params(w=2.0)
        state = OptimizerState.zeros(params)
        adamw_step(state, params, {"w": np.array([0.0])}, lr=0.1, weight_decay=0.1)
        assert params["w"].data[0] == pytest.approx(2.0 * 0.99)
        adamw_step(state, params, {}, lr=0.1, weight_decay=0.1)
        assert params["w"].data[0] == pytest.approx(2.0 * 0.99 * 0.99)

    def test_missing_gradient_skips_momentum(self):
        params = scalar_params(w=1.0)
        state = OptimizerState.zeros(params)
        adamw_step(state, params, {"w": np.array([1.0])}, lr=0.1, weight_decay=0.1)
        moved = params["w"].data[0]
        first, second = state.first["w"].copy(), state.second["w"].copy()
        adamw_step(state, params, {}, lr=0.1, weight_decay=0.1)
        assert params["w"].data[0] == pytest.approx(moved * 0.99)
        assert np.array_equal(state.first["w"], first)
        assert np.array_equal(state.second["w"], second)

    def test_decay_is_decoupled_from_adaptive_step(self):
        plain, decayed = scalar_params(w=1.0), scalar_params(w=1.0)
        grads = {"w": np.array([0.5])}
        adamw_step(OptimizerState.zeros(plain), plain, grads, 0.1, weight_decay=0.0)
        adamw_step(OptimizerState.zeros(decayed), decayed, grads, 0.1, weight_decay=0.2)
        assert plain["w"].data[0] - decayed["w"].data[0] == pytest.approx(0.1 * 0.2)

    def test_names_restrict_updates(self):
        params = scalar_params(a=1.0, b=1.0)
        grads = {"a": np.array([1.0]), "b": np.array([1.0])}
        adamw_step(OptimizerState.zeros(params), params, grads, 0.1, 0.0, names=["a"])
        assert params["a"].data[0] != 1.0
        assert params["b"].data[0] == 1.0

    def test_non_finite_gradient_aborts_before_any_update(self):
        params = scalar_params(a=1.0, b=1.0)
        state = OptimizerState.zeros(params)
        grads = {"a": np.array([1.0]), "b": np.array([np.inf])}
        with pytest.raises(TrainingDivergenceError):
            adamw_step(state, params, grads, lr=0.1, weight_decay=0.0)
        assert params["a"].data[0] == 1.0
        assert state.step == 0

    def test_dtype_preserved(self, tiny_model):
        params = tiny_model.params
        state = OptimizerState.zeros(params)
        grads = {n: np.ones_like(t.data) for n, t in params.items()}
        adamw_step(state, params, grads, lr=1e-3, weight_decay=0.05)
        assert all(t.dtype == np.float32 for t in params)


class TestLrSchedule:
    def test_exponential_decay(self):
        schedule = LrSchedule()
        assert lr_at_epoch(schedule, 0) == pytest.approx(5e-5)
        assert lr_at_epoch(schedule, 1) == pytest.approx(5e-5 * 0.93)
        assert lr_at_epoch(schedule, 3) == pytest.approx(5e-5 * 0.93**3)

    def test_floor(self):
        assert lr_at_epoch(LrSchedule(), 500) == 1e-6

    def test_negative_epoch(self):
        with pytest.raises(ContractError):
            lr_at_epoch(LrSchedule(), -1)
