#!/usr/bin/env python3
"""
可微仿真与数值优化测试模块
"""
import json
import math
import os
import sys
import unittest

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from twoport_fit.circuit.canonical import canonicalize
from twoport_fit.circuit.components import Configuration
from twoport_fit.circuit.enumeration import random_canonical
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.diffsim import tape as ops
from twoport_fit.diffsim.refine import (
    AdamState, CandidateConfig, Refiner, grad_values, loss_spectrum, refine
)
from twoport_fit.diffsim.tape import ComplexVar, Tape
from twoport_fit.exceptions import InvalidInputError, SingularityError
from twoport_fit.simulation.simulator import FrequencyGrid, Spectrum, Termination, default_grid, simulate


def central_difference(candidate: CandidateConfig, target: Spectrum, termination: Termination) -> np.ndarray:
    """对数参数上的中心差分, 步长为相对 1e-6"""
    theta = candidate.log_values
    grad = np.zeros_like(theta)
    for k in range(len(theta)):
        h = 1e-6 * max(1.0, abs(theta[k]))
        plus, minus = theta.copy(), theta.copy()
        plus[k] += h
        minus[k] -= h
        grad[k] = (loss_spectrum(candidate.with_log_values(plus), target, termination)
                   - loss_spectrum(candidate.with_log_values(minus), target, termination)) / (2.0 * h)
    return grad


class TestTape(unittest.TestCase):
    """反向模式自动微分测试类"""

    def test_scalar_gradients(self):
        """测试标量函数的梯度与解析结果一致"""
        tape = Tape()
        x, y = tape.variable(0.7), tape.variable(-1.3)
        out = ops.tanh(x * y) + ops.exp(x) / y - ops.square(x - y)
        gx, gy = tape.gradient(out, [x, y])

        sech2 = 1.0 - math.tanh(0.7 * -1.3) ** 2
        expected_x = sech2 * -1.3 + math.exp(0.7) / -1.3 - 2.0 * (0.7 + 1.3)
        expected_y = sech2 * 0.7 - math.exp(0.7) / 1.3 ** 2 + 2.0 * (0.7 + 1.3)
        self.assertAlmostEqual(float(gx), expected_x, places=12)
        self.assertAlmostEqual(float(gy), expected_y, places=12)

    def test_broadcast_reduction(self):
        """测试标量参与数组运算时梯度被求和"""
        tape = Tape()
        x = tape.variable(2.0)
        out = ops.total(x * np.arange(4.0))
        (gx,) = tape.gradient(out, [x])
        self.assertEqual(float(gx), 6.0)

    def test_complex_division(self):
        """测试复数除法的实部虚部梯度"""
        tape = Tape()
        a, b = tape.variable(1.5), tape.variable(-0.5)
        z = ComplexVar(1.0, 2.0) / ComplexVar(a, b)
        self.assertAlmostEqual(complex(z.value), (1 + 2j) / (1.5 - 0.5j))

        out = z.abs2()
        ga, gb = tape.gradient(out, [a, b])
        # |w|^2 / |z|^2 的梯度: -2 |w|^2 z / |z|^4
        w2, z2 = 5.0, 1.5 ** 2 + 0.5 ** 2
        self.assertAlmostEqual(float(ga), -2.0 * w2 * 1.5 / z2 ** 2, places=12)
        self.assertAlmostEqual(float(gb), -2.0 * w2 * -0.5 / z2 ** 2, places=12)

    def test_unused_variable_has_zero_gradient(self):
        """测试与输出无关的变量梯度为零"""
        tape = Tape()
        x, y = tape.variable(1.0), tape.variable(3.0)
        out = ops.square(x)
        _, gy = tape.gradient(out, [x, y])
        self.assertEqual(float(gy), 0.0)

    def test_backward_needs_scalar(self):
        """测试非标量输出不能反向传播"""
        tape = Tape()
        x = tape.variable(np.ones(3))
        with self.assertRaises(ValueError):
            tape.backward(x * 2.0)


class TestLoss(unittest.TestCase):
    """频谱损失与梯度测试类"""

    def setUp(self):
        """测试前准备"""
        self.grid = FrequencyGrid.log_spaced(32)

    def test_self_distance(self):
        """测试候选值等于生成值时损失为零"""
        config = Configuration.parse('P:C:1m;S:R:1;S:L:0.5u')
        target = simulate(config, self.grid)
        self.assertLessEqual(loss_spectrum(CandidateConfig.from_configuration(config), target), 1e-20)

    def test_loss_against_zero_target(self):
        """测试目标为零时 1欧串联电阻的损失为0.5"""
        zero = Spectrum(np.zeros(32), np.zeros(32), self.grid, Termination.load(1.0))
        candidate = CandidateConfig.from_configuration(Configuration.parse('S:R:1'))
        self.assertAlmostEqual(loss_spectrum(candidate, zero), 0.5, places=14)

    def test_loss_invariant_under_run_permutation(self):
        """测试同一段内元件置换不改变损失"""
        target = simulate(Configuration.parse('S:R:2;P:C:1e-4;P:L:1e-3'), self.grid)
        a = Configuration.parse('S:R:1;P:L:2e-3;P:C:3e-4')
        b = canonicalize(a)
        loss_a = loss_spectrum(CandidateConfig.from_configuration(a), target)
        loss_b = loss_spectrum(CandidateConfig.from_configuration(b), target)
        self.assertAlmostEqual(loss_a, loss_b, delta=1e-12 * max(1.0, loss_a))

    def test_gradient_at_minimum(self):
        """测试最优点梯度为零"""
        config = Configuration.parse('S:R:1;P:C:1e-4;S:L:1e-3')
        target = simulate(config, self.grid)
        grad = grad_values(CandidateConfig.from_configuration(config), target)
        self.assertLessEqual(float(np.linalg.norm(grad)), 1e-10)

    def test_gradient_sign_single_resistor(self):
        """测试单个电阻的梯度方向指向目标值"""
        target = simulate(Configuration.parse('S:R:2'), self.grid)
        below = grad_values(CandidateConfig.from_configuration(Configuration.parse('S:R:1')), target)
        above = grad_values(CandidateConfig.from_configuration(Configuration.parse('S:R:4')), target)
        self.assertLess(below[0], 0.0)
        self.assertGreater(above[0], 0.0)

    def test_gradient_matches_finite_differences(self):
        """测试梯度与中心差分一致 (两种终端, 长度1-6)"""
        rng = np.random.default_rng(99)
        checked = 0
        for trial in range(100):
            termination = Termination.open_circuit() if trial % 2 else Termination.load(1.0)
            config = random_canonical(int(rng.integers(1, 7)), rng=rng)
            factors = np.exp(rng.uniform(-0.5, 0.5, size=len(config)))
            candidate = CandidateConfig.from_configuration(config)
            try:
                target = simulate(config, self.grid, termination)
                candidate = candidate.with_log_values(candidate.log_values + np.log(factors))
                loss = loss_spectrum(candidate, target, termination)
                analytic = grad_values(candidate, target, termination)
            except SingularityError:
                continue
            numeric = central_difference(candidate, target, termination)
            tolerance = 1e-5 * np.abs(analytic) + 1e-7 * (1.0 + loss)
            self.assertTrue(np.all(np.abs(analytic - numeric) <= tolerance),
                            msg=f"{config.to_literal()}: {analytic} vs {numeric}")
            checked += 1
        self.assertGreater(checked, 90)

    def test_candidate_validation(self):
        """测试候选参数数量必须与结构一致"""
        with self.assertRaises(InvalidInputError):
            CandidateConfig(Configuration.parse('S:R:1;P:C:1'), np.zeros(3))
        with self.assertRaises(InvalidInputError):
            CandidateConfig(Configuration.parse('S:R:1'), np.array([np.nan]))


class TestAdam(unittest.TestCase):
    """Adam 优化器测试类"""

    def test_first_step_moves_by_learning_rate(self):
        """测试第一步更新幅度约等于学习率"""
        state = AdamState.zeros(2, lr=0.01)
        params = state.step(np.zeros(2), np.array([3.0, -0.5]))
        np.testing.assert_allclose(params, [-0.01, 0.01], rtol=1e-6)
        self.assertEqual(state.step_count, 1)


class TestRefine(unittest.TestCase):
    """数值精修测试类"""

    def setUp(self):
        """测试前准备"""
        self.grid = FrequencyGrid.log_spaced(32)
        self.config = Configuration.parse('S:R:1;P:C:1e-4;S:L:1e-3')
        self.target = simulate(self.config, self.grid)

    def _perturbed(self, factor: float = 1.5) -> CandidateConfig:
        candidate = CandidateConfig.from_configuration(self.config)
        return candidate.with_log_values(candidate.log_values + math.log(factor))

    def test_already_optimal(self):
        """测试候选值即生成值时不迭代"""
        result = refine(CandidateConfig.from_configuration(self.config), self.target)
        self.assertEqual(result.iters, 0)
        self.assertTrue(result.converged)

    def test_best_seen_is_monotone(self):
        """测试最优损失序列单调不增且不超过初始损失"""
        result = refine(self._perturbed(), self.target, max_iters=60)
        self.assertLessEqual(result.iters, 60)
        self.assertEqual(len(result.best_history), result.iters + 1)
        self.assertTrue(all(b <= a for a, b in zip(result.best_history, result.best_history[1:])))
        self.assertLessEqual(result.final_loss, result.initial_loss)
        self.assertLess(result.final_loss, result.initial_loss)
        self.assertTrue(np.all(result.candidate.values > 0))

    def test_determinism(self):
        """测试相同输入得到相同轨迹"""
        a = refine(self._perturbed(), self.target, max_iters=30)
        b = refine(self._perturbed(), self.target, max_iters=30)
        self.assertEqual(a.best_history, b.best_history)
        np.testing.assert_array_equal(a.candidate.log_values, b.candidate.log_values)

    def test_report(self):
        """测试精修报告字段"""
        result = refine(self._perturbed(), self.target, max_iters=5)
        report = json.loads(result.to_json())
        self.assertEqual(set(report), {'initial_loss', 'final_loss', 'iters', 'values_before', 'values_after'})
        self.assertEqual(len(report['values_after']), 3)
        self.assertAlmostEqual(report['values_before'][0], 1.5)

    def test_invalid_iteration_cap(self):
        """测试迭代上限必须为正"""
        with self.assertRaises(InvalidInputError):
            refine(self._perturbed(), self.target, max_iters=0)

    def test_requantized_configuration(self):
        """测试精修结果可带量化区间输出"""
        from twoport_fit.dataset.grid import ValueGrid
        config = self._perturbed(1.2).to_configuration(ValueGrid.default())
        self.assertEqual(config.bins, (1, 2, 4))

    def test_refiner_reads_config(self):
        """测试精修器读取配置文件"""
        config_manager = ConfigManager(os.path.join(os.path.dirname(__file__), 'test_config.ini'))
        refiner = Refiner(config_manager)
        self.assertEqual(refiner.lr, 0.01)
        result = refiner.refine(self._perturbed().to_configuration(), self.target, max_iters=10)
        self.assertLessEqual(result.iters, 10)

    @pytest.mark.slow
    def test_convergence_harness(self):
        """测试长度3随机电路数值扰动1.5倍后至少95/100次收敛到 1e-8 以下"""
        grid = default_grid()
        converged = 0
        for seed in range(100):
            config = random_canonical(3, rng_seed=seed)
            try:
                target = simulate(config, grid)
            except SingularityError:
                continue
            candidate = CandidateConfig.from_configuration(config)
            candidate = candidate.with_log_values(candidate.log_values + math.log(1.5))
            result = refine(candidate, target, max_iters=5000, lr=0.01)
            converged += int(result.final_loss < 1e-8)
        self.assertGreaterEqual(converged, 95)


if __name__ == '__main__':
    unittest.main()
