#!/usr/bin/env python3
"""
频谱仿真测试模块: 传输矩阵, 端口求解与节点分析对照
"""
import io
import math
import os
import sys
import shutil
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from twoport_fit.circuit.canonical import canonicalize
from twoport_fit.circuit.components import Alignment, ComponentType, Configuration
from twoport_fit.circuit.enumeration import random_canonical
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.exceptions import IntegrityError, InvalidInputError, SingularityError
from twoport_fit.simulation.export import (
    from_bytes, load_spectrum, read_csv, save_spectrum, to_bytes, write_csv
)
from twoport_fit.simulation.simulator import (
    Complex2x2, FrequencyGrid, Spectrum, Termination, TransferMatrix, chain_matrix, component_matrix,
    default_grid, is_singular, normalize, simulate
)


FIG1 = 'P:C:1m;S:R:1;S:L:0.5u'


def _admittance(component, omega: np.longdouble) -> np.clongdouble:
    value = np.longdouble(component.value)
    if component.ctype is ComponentType.RESISTOR:
        return np.clongdouble(1.0 / value)
    if component.ctype is ComponentType.CAPACITOR:
        return np.clongdouble(1j) * omega * value
    return np.clongdouble(-1j) / (omega * value)


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """高斯消元 (部分主元), 支持 clongdouble"""
    A, b = A.copy(), b.copy()
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            factor = A[i, k] / A[k, k]
            A[i, k:] = A[i, k:] - factor * A[k, k:]
            b[i] = b[i] - factor * b[k]
    x = np.zeros(n, dtype=A.dtype)
    for i in reversed(range(n)):
        x[i] = (b[i] - np.sum(A[i, i + 1:] * x[i + 1:])) / A[i, i]
    return x


def nodal_oracle(config: Configuration, frequencies: np.ndarray, termination: Termination):
    """
    独立的节点分析求解器, 使用扩展精度

    串联元件新建一个节点, 并联元件接在当前节点与地之间; 节点0由1V理想电压源驱动。
    负载时返回输出电流, 开路时返回输入电流。
    """
    v_out = np.empty(len(frequencies), dtype=np.complex128)
    current = np.empty(len(frequencies), dtype=np.complex128)
    n_nodes = 1 + sum(1 for c in config if c.alignment is Alignment.SERIES)
    omegas = 2.0 * math.pi * np.asarray(frequencies, dtype=np.float64)

    for k, omega in enumerate(omegas):
        omega = np.longdouble(omega)
        G = np.zeros((n_nodes, n_nodes), dtype=np.clongdouble)
        node = 0
        for component in config:
            y = _admittance(component, omega)
            if component.alignment is Alignment.SERIES:
                G[node, node] += y
                G[node + 1, node + 1] += y
                G[node, node + 1] -= y
                G[node + 1, node] -= y
                node += 1
            else:
                G[node, node] += y
        if not termination.is_open:
            G[node, node] += np.longdouble(1.0) / np.longdouble(termination.impedance)

        v = np.zeros(n_nodes, dtype=np.clongdouble)
        v[0] = 1.0
        if n_nodes > 1:
            v[1:] = _solve(G[1:, 1:], -G[1:, 0] * v[0])
        v_out[k] = complex(v[node])
        if termination.is_open:
            current[k] = complex(np.sum(G[0, :] * v))
        else:
            current[k] = complex(v[node] / np.longdouble(termination.impedance))
    return v_out, current


def solve_conditioning(config: Configuration, frequencies: np.ndarray, termination: Termination) -> np.ndarray:
    """
    端口求解的条件数估计: 各元件矩阵绝对值之积与分母(及开路时分子)大小之比
    """
    bound = None
    for component in config:
        m = component_matrix(component, frequencies)
        m = TransferMatrix(np.abs(m.a), np.abs(m.b), np.abs(m.c), np.abs(m.d))
        bound = m if bound is None else m @ bound
    matrix = chain_matrix(config, frequencies)
    if termination.is_open:
        kappa = np.abs(bound.d) / np.abs(matrix.d)
        c = np.abs(matrix.c)
        with np.errstate(divide='ignore'):
            kappa_c = np.where(c > 0, np.abs(bound.c) / np.where(c > 0, c, 1.0), 1.0)
        return np.maximum(kappa, kappa_c).real
    z = termination.impedance
    return (np.abs(bound.b) + z * np.abs(bound.d)).real / np.abs(matrix.b - z * matrix.d)


def assert_close(testcase, actual, expected, rtol, conditioning=None):
    """
    逐点比较; 给出条件数估计时, 容差取 rtol 与双精度舍入误差经条件数放大后的界中较大者
    """
    atol = 1e-12 * max(1.0, float(np.max(np.abs(expected))))
    if conditioning is not None:
        rtol = np.maximum(rtol, 32.0 * np.finfo(np.float64).eps * conditioning)
    ok = np.abs(actual - expected) <= rtol * np.abs(expected) + atol
    testcase.assertTrue(bool(np.all(ok)), msg=f"max deviation {np.max(np.abs(actual - expected))}")


def singular_points(config: Configuration, grid: FrequencyGrid, termination: Termination) -> np.ndarray:
    """端口求解奇异的频点掩码, 与仿真器的判据相同"""
    m = chain_matrix(config, grid.frequencies)
    denominator = m.d if termination.is_open else m.b - termination.impedance * m.d
    return is_singular(denominator, np.abs(m.a) + np.abs(m.b) + np.abs(m.c) + np.abs(m.d))


class TestTransferMatrix(unittest.TestCase):
    """传输矩阵测试类"""

    def test_component_matrices(self):
        """测试串联与并联元件的矩阵形式"""
        series = component_matrix(Configuration.parse('S:R:2')[0], 10.0)
        self.assertEqual(complex(series.b), -2.0)
        self.assertEqual(complex(series.c), 0.0)
        shunt = component_matrix(Configuration.parse('P:R:4')[0], 10.0)
        self.assertEqual(complex(shunt.c), -0.25)
        self.assertEqual(complex(shunt.b), 0.0)

    def test_series_resistors_add(self):
        """测试两个1欧串联电阻等于一个2欧电阻"""
        two = chain_matrix(Configuration.parse('S:R:1;S:R:1'), 50.0)
        one = chain_matrix(Configuration.parse('S:R:2'), 50.0)
        np.testing.assert_array_equal(two.to_array(), one.to_array())

    def test_single_component_chain(self):
        """测试单元件链等于该元件矩阵"""
        config = Configuration.parse('P:L:1m')
        np.testing.assert_array_equal(chain_matrix(config, 1e3).to_array(),
                                      component_matrix(config[0], 1e3).to_array())

    def test_lossless_determinant(self):
        """测试级联矩阵行列式为1"""
        matrix = chain_matrix(Configuration.parse(FIG1), default_grid().frequencies)
        np.testing.assert_allclose(matrix.det(), 1.0, rtol=1e-9)

    def test_complex_real_form(self):
        """测试复数的2x2实矩阵表示满足乘法"""
        a, b = complex(1.5, -2.0), complex(-0.25, 3.0)
        product = Complex2x2.from_complex(a) @ Complex2x2.from_complex(b)
        self.assertAlmostEqual(product.to_complex(), a * b)

    def test_transfer_matrix_real_form(self):
        """测试传输矩阵的4x4实矩阵表示与矩阵乘法一致"""
        first = component_matrix(Configuration.parse('S:L:1m')[0], 1e3)
        second = component_matrix(Configuration.parse('P:C:1u')[0], 1e3)
        np.testing.assert_allclose((second @ first).as_real(), second.as_real() @ first.as_real(), rtol=1e-12, atol=1e-15)
        self.assertEqual(first.as_real().shape, (4, 4))

    def test_fig1_matches_oracle_at_1khz(self):
        """测试示例电路在1kHz处与节点分析一致"""
        config = Configuration.parse(FIG1)
        grid = FrequencyGrid(np.array([1e3]))
        spectrum = simulate(config, grid, Termination.load(1.0))
        v, i = nodal_oracle(config, grid.frequencies, Termination.load(1.0))
        assert_close(self, spectrum.V, v, 1e-12)
        assert_close(self, spectrum.I, i, 1e-12)

    def test_rejects_bad_frequency(self):
        """测试非正频率报错"""
        with self.assertRaises(InvalidInputError):
            component_matrix(Configuration.parse('S:R:1')[0], 0.0)


class TestSimulate(unittest.TestCase):
    """端口求解测试类"""

    def test_default_grid(self):
        """测试默认频率网格"""
        grid = default_grid()
        self.assertEqual(len(grid), 512)
        self.assertEqual(grid.frequencies[0], 1.0)
        self.assertEqual(grid.frequencies[-1], 1e6)

    def test_voltage_divider(self):
        """测试1欧串联电阻接1欧负载时输出0.5"""
        spectrum = simulate(Configuration.parse('S:R:1'), termination=Termination.load(1.0))
        np.testing.assert_allclose(spectrum.V, 0.5, rtol=0, atol=1e-15)
        np.testing.assert_allclose(spectrum.I, 0.5, rtol=0, atol=1e-15)

    def test_open_shunt_resistor(self):
        """测试开路输出时并联电阻不改变输出电压"""
        spectrum = simulate(Configuration.parse('P:R:7'), termination=Termination.open_circuit())
        np.testing.assert_allclose(spectrum.V, 1.0, rtol=0, atol=1e-15)
        np.testing.assert_allclose(spectrum.I, 1.0 / 7.0, rtol=1e-12)

    def test_fig1_matches_oracle(self):
        """测试示例电路在全部512个频点上与节点分析一致"""
        config = Configuration.parse(FIG1)
        grid = default_grid()
        spectrum = simulate(config, grid, Termination.load(1.0))
        v, i = nodal_oracle(config, grid.frequencies, Termination.load(1.0))
        assert_close(self, spectrum.V, v, 1e-10)
        assert_close(self, spectrum.I, i, 1e-10)

    def test_random_circuits_match_oracle(self):
        """
        测试200个随机规范电路在两种终端下, 于全部512个频点与节点分析一致

        仅跳过仿真器判定为奇异的频点; 条件数很大的频点容差随舍入误差界放宽
        """
        rng = np.random.default_rng(2024)
        grid = default_grid()
        skipped = total = 0
        for trial in range(200):
            config = random_canonical(int(rng.integers(1, 7)), rng=rng)
            termination = Termination.open_circuit() if trial % 2 else Termination.load(1.0)
            singular = singular_points(config, grid, termination)
            if np.any(singular):
                with self.assertRaises(SingularityError):
                    simulate(config, grid, termination)
            keep = ~singular
            sub_grid = FrequencyGrid(grid.frequencies[keep])
            spectrum = simulate(config, sub_grid, termination)
            v, i = nodal_oracle(config, sub_grid.frequencies, termination)
            conditioning = solve_conditioning(config, sub_grid.frequencies, termination)
            assert_close(self, spectrum.V, v, 1e-9, conditioning)
            assert_close(self, spectrum.I, i, 1e-9, conditioning)
            skipped += int(singular.sum())
            total += len(grid)
        self.assertLess(skipped, 0.01 * total)

    def test_canonicalization_preserves_spectrum(self):
        """测试规范化不改变频谱"""
        rng = np.random.default_rng(8)
        for _ in range(50):
            items = [
                (Alignment(int(rng.integers(0, 2))), ComponentType(int(rng.integers(0, 3))),
                 float(10.0 ** rng.uniform(-6, 2)))
                for _ in range(int(rng.integers(1, 7)))
            ]
            config = Configuration.parse(';'.join(f"{a.letter}:{t.letter}:{v!r}" for a, t, v in items))
            termination = Termination.load(1.0)
            a = simulate(config, termination=termination)
            b = simulate(canonicalize(config), termination=termination)
            conditioning = solve_conditioning(config, a.grid.frequencies, termination)
            assert_close(self, a.V, b.V, 1e-9, conditioning)
            assert_close(self, a.I, b.I, 1e-9, conditioning)

    def test_resonant_singularity(self):
        """测试开路LC谐振点的奇异求解报错并带有频点下标"""
        config = Configuration.parse('S:L:1;P:C:1')
        grid = FrequencyGrid(np.array([0.01, 1.0 / (2.0 * math.pi), 10.0]))
        with self.assertRaises(SingularityError) as ctx:
            simulate(config, grid, Termination.open_circuit())
        self.assertEqual(ctx.exception.index, 1)

    def test_thread_count_does_not_change_result(self):
        """测试多线程分块计算结果逐位一致"""
        config = Configuration.parse(FIG1)
        single = simulate(config, threads=1)
        multi = simulate(config, threads=4)
        np.testing.assert_array_equal(single.V, multi.V)
        np.testing.assert_array_equal(single.I, multi.I)

    def test_passivity(self):
        """测试RC链与RL链在负载下电压增益不超过1"""
        rng = np.random.default_rng(17)
        grid = FrequencyGrid.log_spaced(64)
        grid_values = ValueGrid.default()
        for types in ((ComponentType.RESISTOR, ComponentType.CAPACITOR),
                      (ComponentType.RESISTOR, ComponentType.INDUCTOR)):
            for _ in range(100):
                config = Configuration(tuple(
                    grid_values.component(Alignment(int(rng.integers(0, 2))), types[int(rng.integers(0, 2))],
                                          int(rng.integers(0, 5)))
                    for _ in range(int(rng.integers(1, 7)))
                ))
                spectrum = simulate(config, grid, Termination.load(1.0))
                self.assertTrue(np.all(np.abs(spectrum.V) <= 1.0 + 1e-9), msg=config.to_literal())

    def test_empty_configuration_rejected(self):
        """测试空电路被拒绝"""
        with self.assertRaises(InvalidInputError):
            simulate(Configuration())

    def test_termination_parse(self):
        """测试终端描述解析"""
        self.assertTrue(Termination.parse('open').is_open)
        self.assertEqual(Termination.parse('load:50').impedance, 50.0)
        self.assertEqual(Termination.parse('LOAD:1k').impedance, 1000.0)
        self.assertEqual(str(Termination.load(2.0)), 'load:2')
        with self.assertRaises(InvalidInputError):
            Termination.parse('short')


class TestNormalize(unittest.TestCase):
    """频谱归一化测试类"""

    def setUp(self):
        """测试前准备"""
        self.grid = FrequencyGrid.log_spaced(8)

    def test_zero_spectrum(self):
        """测试零频谱归一化为零"""
        spectrum = Spectrum(np.zeros(8), np.zeros(8), self.grid)
        np.testing.assert_array_equal(normalize(spectrum).channels, 0.0)

    def test_unit_voltage(self):
        """测试 V=1 时第0通道为 tanh(1)"""
        spectrum = Spectrum(np.ones(8), np.zeros(8), self.grid)
        channels = normalize(spectrum).channels
        np.testing.assert_allclose(channels[0], 0.7615941559557649, rtol=1e-15)
        np.testing.assert_array_equal(channels[1], 0.0)

    def test_channel_order_and_range(self):
        """测试通道顺序为 Re V, Im V, Re I, Im I 且取值在(-1, 1)"""
        spectrum = simulate(Configuration.parse(FIG1), self.grid)
        channels = normalize(spectrum).channels
        self.assertEqual(channels.shape, (4, 8))
        np.testing.assert_array_equal(channels[2], np.tanh(spectrum.I.real))
        np.testing.assert_array_equal(channels[1], np.tanh(spectrum.V.imag))
        self.assertTrue(np.all(np.abs(channels) < 1.0))

    def test_non_finite_rejected(self):
        """测试非有限值报错"""
        v = np.ones(8)
        v[3] = np.nan
        with self.assertRaises(InvalidInputError):
            normalize(Spectrum(v, np.zeros(8), self.grid))


class TestExport(unittest.TestCase):
    """频谱文件读写测试类"""

    def setUp(self):
        """测试前准备"""
        self.test_dir = tempfile.mkdtemp(prefix='tpf_spectrum_')
        self.spectrum = simulate(Configuration.parse(FIG1), FrequencyGrid.log_spaced(32))

    def tearDown(self):
        """测试后清理"""
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def test_csv_file(self):
        """测试CSV文件保存后逐位读回"""
        path = save_spectrum(self.spectrum, os.path.join(self.test_dir, 'target.csv'))
        loaded = load_spectrum(path)
        np.testing.assert_array_equal(loaded.V, self.spectrum.V)
        np.testing.assert_array_equal(loaded.I, self.spectrum.I)
        self.assertEqual(loaded.grid, self.spectrum.grid)

    def test_binary_file_keeps_termination(self):
        """测试二进制文件保存终端信息"""
        spectrum = simulate(Configuration.parse('S:R:1'), FrequencyGrid.log_spaced(4), Termination.open_circuit())
        path = save_spectrum(spectrum, os.path.join(self.test_dir, 'target.bin'))
        loaded = load_spectrum(path)
        self.assertTrue(loaded.termination.is_open)
        np.testing.assert_array_equal(loaded.V, spectrum.V)

        loaded = from_bytes(to_bytes(self.spectrum))
        self.assertEqual(loaded.termination, self.spectrum.termination)

    def test_csv_header_columns(self):
        """测试CSV表头"""
        stream = io.StringIO()
        write_csv(self.spectrum, stream)
        self.assertTrue(stream.getvalue().startswith('frequency_hz,re_v,im_v,re_i,im_i\n'))

    def test_corrupt_files(self):
        """测试损坏的文件报完整性错误"""
        with self.assertRaises(IntegrityError):
            from_bytes(to_bytes(self.spectrum)[:-3])
        with self.assertRaises(IntegrityError):
            from_bytes(b'XXXX' + to_bytes(self.spectrum)[4:])
        with self.assertRaises(IntegrityError):
            read_csv(io.StringIO('f,v\n1,2\n'))


if __name__ == '__main__':
    unittest.main()
