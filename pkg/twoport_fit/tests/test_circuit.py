#!/usr/bin/env python3
"""
电路结构测试模块: 字面量解析, 规范化, 计数与枚举
"""
import os
import sys
import itertools
import unittest

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from twoport_fit.circuit.canonical import (
    canonical_key, canonicalize, canonicalize_structure, equivalent, is_canonical
)
from twoport_fit.circuit.components import (
    Alignment, Component, ComponentType, Configuration, format_value, parse_literal, parse_value
)
from twoport_fit.circuit.enumeration import (
    count_canonical, count_table, enumerate_canonical, random_canonical, raw_space_size
)
from twoport_fit.exceptions import CapacityError, InvalidInputError


S, P = Alignment.SERIES, Alignment.PARALLEL
R, C, L = ComponentType.RESISTOR, ComponentType.CAPACITOR, ComponentType.INDUCTOR


def chain(*items):
    return Configuration(tuple(Component(a, t, v) for a, t, v in items))


class TestLiteral(unittest.TestCase):
    """配置字面量测试类"""

    def test_parse_circuit_literal(self):
        """测试解析带SI后缀的字面量"""
        config = parse_literal('P:C:1m;S:R:1;S:L:0.5u')
        self.assertEqual(config.structure, ((1, 1), (0, 0), (0, 2)))
        self.assertAlmostEqual(config[0].value, 1e-3)
        self.assertEqual(config[1].value, 1.0)
        self.assertAlmostEqual(config[2].value, 0.5e-6)

    def test_literal_round_trip(self):
        """测试字面量格式化后可精确解析回来"""
        config = chain((S, R, 1.0), (P, C, 3.3e-7), (S, L, 0.1 + 0.2))
        self.assertEqual(Configuration.parse(config.to_literal()), config)

    def test_parse_value_suffixes(self):
        """测试数值后缀"""
        self.assertEqual(parse_value('2k'), 2000.0)
        self.assertEqual(parse_value('1e-3'), 1e-3)
        self.assertAlmostEqual(parse_value('4.7n'), 4.7e-9)
        self.assertEqual(format_value(2.0), '2')

    def test_malformed_literals(self):
        """测试非法字面量报错"""
        for literal in ['', 'X:R:1', 'S:Q:1', 'S:R', 'S:R:abc', 'S:R:-1', 'S:R:0']:
            with self.assertRaises(InvalidInputError, msg=literal):
                parse_literal(literal)

    def test_component_rejects_bad_values(self):
        """测试元件值必须为正的有限数"""
        with self.assertRaises(InvalidInputError):
            Component(S, R, 0.0)
        with self.assertRaises(InvalidInputError):
            Component(S, R, float('inf'))

    def test_slicing_and_concatenation(self):
        """测试切片与拼接"""
        config = chain((S, R, 1.0), (P, C, 1e-3), (S, L, 1e-4))
        self.assertEqual(len(config[:1] + config[2:]), 2)
        self.assertEqual([a for a, _ in config.runs()], [S, P, S])


class TestCanonical(unittest.TestCase):
    """规范化测试类"""

    def setUp(self):
        """测试前准备"""
        self.canonical = chain((S, R, 1.0), (P, R, 0.05), (P, R, 0.5), (P, C, 0.1))
        self.shuffled = chain((S, R, 1.0), (P, C, 0.1), (P, R, 0.5), (P, R, 0.05))

    def test_canonicalize_sorts_runs(self):
        """测试同一连接方式的元件按类型和数值排序"""
        self.assertEqual(canonicalize(self.shuffled), self.canonical)
        self.assertTrue(is_canonical(self.canonical))
        self.assertFalse(is_canonical(chain((P, C, 0.1), (P, R, 0.5))))
        self.assertTrue(is_canonical(chain((S, R, 1.0))))

    def test_idempotence(self):
        """测试规范化的幂等性"""
        rng = np.random.default_rng(3)
        for _ in range(50):
            items = [(Alignment(int(rng.integers(0, 2))), ComponentType(int(rng.integers(0, 3))),
                      float(10.0 ** rng.uniform(-6, 3))) for _ in range(int(rng.integers(1, 7)))]
            once = canonicalize(chain(*items))
            self.assertEqual(canonicalize(once), once)

    def test_permutation_closure(self):
        """测试同一段内任意置换后规范形式不变"""
        run = [(P, R, 0.05), (P, R, 0.5), (P, C, 0.1)]
        for permutation in itertools.permutations(run):
            config = chain((S, R, 1.0), *permutation)
            self.assertEqual(canonicalize(config), self.canonical)
            self.assertTrue(equivalent(config, self.canonical))

    def test_equivalence(self):
        """测试等价判断"""
        self.assertTrue(equivalent(self.shuffled, self.canonical))
        self.assertTrue(equivalent(self.canonical, self.canonical))
        self.assertFalse(equivalent(chain((S, R, 1.0)), chain((P, R, 1.0))))
        self.assertEqual(canonical_key(self.shuffled), canonical_key(self.canonical))

    def test_structure_canonicalization_ignores_values(self):
        """测试仅按类型排序时同类型元件保持原顺序"""
        config = chain((P, C, 0.5), (P, R, 2.0), (P, C, 0.1))
        ordered = canonicalize_structure(config)
        self.assertEqual(ordered.values, (2.0, 0.5, 0.1))

    def test_empty_configuration_rejected(self):
        """测试空配置被拒绝"""
        with self.assertRaises(InvalidInputError):
            canonicalize(Configuration())


class TestCounting(unittest.TestCase):
    """规范电路计数测试类"""

    def test_known_counts(self):
        """测试 n_c=3, n_v=5 时各长度的计数"""
        expected = [1, 30, 690, 15310, 338970, 7506006, 166215050, 3680713350]
        self.assertEqual(count_table(7, 3, 5), expected)
        self.assertEqual(count_canonical(2).count, 690)
        self.assertEqual(int(count_canonical(1)), 30)

    def test_trivial_universe(self):
        """测试单类型单数值时长度1只有串联和并联两种"""
        self.assertEqual(count_canonical(1, 1, 1).count, 2)
        self.assertEqual(count_canonical(0, 1, 1).count, 1)

    def test_negative_length(self):
        """测试负长度报错"""
        with self.assertRaises(InvalidInputError):
            count_canonical(-1)

    def test_raw_space_size(self):
        """测试未去除对称性的空间大小"""
        self.assertEqual(raw_space_size(2), 30 ** 2)
        self.assertGreater(raw_space_size(4), count_canonical(4).count)

    def test_enumeration_matches_count(self):
        """测试枚举数量与计数公式一致"""
        cases = [(n, n_c, n_v) for n in range(1, 5) for n_c, n_v in ((1, 1), (2, 2))]
        cases += [(1, 3, 5), (2, 3, 5), (3, 3, 5)]
        for n, n_c, n_v in cases:
            configs = list(enumerate_canonical(n, n_c, n_v))
            self.assertEqual(len(configs), count_canonical(n, n_c, n_v).count, msg=(n, n_c, n_v))
            self.assertEqual(len({canonical_key(c) for c in configs}), len(configs))
            self.assertTrue(all(len(c) == n and is_canonical(c) for c in configs))

    @pytest.mark.slow
    def test_enumeration_matches_count_length_four(self):
        """测试长度4的完整枚举"""
        self.assertEqual(sum(1 for _ in enumerate_canonical(4, 3, 5)), 338970)

    def test_enumeration_cap(self):
        """测试超过上限时报容量错误"""
        with self.assertRaises(CapacityError):
            enumerate_canonical(3, cap=1000)

    def test_enumerated_components_carry_bins(self):
        """测试枚举出的元件带有量化区间"""
        for config in enumerate_canonical(1):
            self.assertIsNotNone(config[0].value_bin)


class TestRandomCanonical(unittest.TestCase):
    """随机规范电路测试类"""

    def test_contract(self):
        """测试随机电路是规范的且长度正确"""
        rng = np.random.default_rng(11)
        for n in range(1, 9):
            for _ in range(20):
                config = random_canonical(n, rng=rng)
                self.assertEqual(len(config), n)
                self.assertTrue(is_canonical(config))

    def test_determinism(self):
        """测试相同种子得到相同电路"""
        self.assertEqual(random_canonical(6, rng_seed=42), random_canonical(6, rng_seed=42))

    def test_membership(self):
        """测试随机抽取的电路都在枚举结果中"""
        universe = {canonical_key(c) for c in enumerate_canonical(2)}
        rng = np.random.default_rng(5)
        for _ in range(10000):
            self.assertIn(canonical_key(random_canonical(2, rng=rng)), universe)


if __name__ == '__main__':
    unittest.main()
