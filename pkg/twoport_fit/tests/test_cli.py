#!/usr/bin/env python3
"""
命令行接口测试模块
"""
import csv
import json
import os
import shutil
import sys
import tempfile
import unittest

from click.testing import CliRunner

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from twoport_fit.cli.commands import cli, main
from twoport_fit.dataset.storage import read_manifest
from twoport_fit.simulation.export import load_spectrum


TEST_CONFIG = os.path.join(os.path.dirname(__file__), 'test_config.ini')


class TestCli(unittest.TestCase):
    """命令行测试类"""

    def setUp(self):
        """测试前准备"""
        self.test_dir = tempfile.mkdtemp()
        self.runner = CliRunner()

    def tearDown(self):
        """测试后清理"""
        shutil.rmtree(self.test_dir)

    def invoke(self, *args):
        return self.runner.invoke(cli, ['-c', TEST_CONFIG, '-j', '1'] + list(args))

    def path(self, name: str) -> str:
        return os.path.join(self.test_dir, name)

    def test_count(self):
        """测试计数命令"""
        result = self.invoke('count', '2')
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(result.output.strip(), '690')
        table = self.invoke('count', '3', '--upto')
        self.assertIn('15310', table.output)

    def test_enumerate(self):
        """测试枚举命令输出30行"""
        result = self.invoke('enumerate', '1')
        self.assertEqual(result.exit_code, 0, result.output)
        lines = result.output.strip().splitlines()
        self.assertEqual(len(lines), 30)
        self.assertIn('S:R:0.1', lines)

    def test_enumerate_cap(self):
        """测试超出上限时退出码为2"""
        self.assertEqual(self.invoke('enumerate', '3', '--cap', '10').exit_code, 2)

    def test_simulate_to_file(self):
        """测试仿真命令写出CSV文件"""
        out = self.path('spectrum.csv')
        result = self.invoke('simulate', '--config', 'S:R:1', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(out, newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(len(rows), 16)
        for row in rows:
            self.assertEqual(float(row['re_v']), 0.5)
            self.assertEqual(float(row['re_i']), 0.5)

    def test_simulate_binary_keeps_termination(self):
        """测试二进制输出保留终端信息"""
        out = self.path('open.bin')
        result = self.invoke('simulate', '--config', 'P:R:7', '--term', 'open', '--out', 'bin', '-o', out)
        self.assertEqual(result.exit_code, 0, result.output)
        spectrum = load_spectrum(out)
        self.assertTrue(spectrum.termination.is_open)
        self.assertAlmostEqual(float(spectrum.V[0].real), 1.0)

    def test_malformed_literal(self):
        """测试非法字面量退出码为2"""
        result = self.invoke('simulate', '--config', 'S:X:1')
        self.assertEqual(result.exit_code, 2)
        self.assertEqual(main(['-c', TEST_CONFIG, 'simulate', '--config', 'S:R:-1']), 2)

    def test_main_exit_codes(self):
        """测试主入口返回值"""
        self.assertEqual(main(['-c', TEST_CONFIG, 'count', '1']), 0)
        self.assertEqual(main(['-c', TEST_CONFIG, 'count']), 2)

    def test_refine(self):
        """测试精修命令输出JSON报告"""
        target = self.path('target.bin')
        self.assertEqual(self.invoke('simulate', '--config', 'S:R:1;P:C:1e-4', '--out', 'bin', '-o', target).exit_code, 0)
        report_path = self.path('report.json')
        result = self.invoke('refine', '--config', 'S:R:1.5;P:C:1.5e-4', '--target', target,
                             '--max-iters', '20', '-o', report_path)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(report_path, 'r', encoding='utf-8') as f:
            report = json.load(f)
        self.assertLessEqual(report['final_loss'], report['initial_loss'])
        self.assertLessEqual(report['iters'], 20)

    def test_ga(self):
        """测试遗传搜索命令写出历史记录"""
        target = self.path('target.csv')
        self.assertEqual(self.invoke('simulate', '--config', 'S:R:10', '-o', target).exit_code, 0)
        history = self.path('history.csv')
        result = self.invoke('ga', '--target', target, '--generations', '3', '--pop', '10', '--elites', '1',
                             '--seed', '2', '--history', history)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(history, newline='', encoding='utf-8') as f:
            self.assertEqual(len(list(csv.reader(f))), 4)

    def test_dataset_train_predict_eval(self):
        """测试数据集生成, 训练, 预测与评估的完整流程"""
        data_dir = self.path('data')
        result = self.invoke('gen-dataset', '--spec', 'config', '--seed', '1', '--out', data_dir)
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(read_manifest(data_dir)['splits']['train']['count'], 42)

        model = self.path('model.tpfm')
        result = self.invoke('train', '--dataset', data_dir, '--out', model, '--epochs', '1')
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue(os.path.exists(model))

        spectrum = self.path('query.csv')
        self.invoke('simulate', '--config', 'S:R:10;P:C:1e-5', '-o', spectrum)
        result = self.invoke('predict', '--model', model, '--spectrum', spectrum)
        # 只训练一轮的模型可能首步即输出EOS, 此时退出码为3
        self.assertIn(result.exit_code, (0, 3), result.output)

        results_csv = self.path('results.csv')
        result = self.invoke('eval', '--model', model, '--dataset', data_dir, '--limit', '4', '--out', results_csv)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(results_csv, newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(sum(int(row['n']) for row in rows), 4)

    def test_eval_with_genetic_search(self):
        """测试以遗传搜索作为预测器进行评估"""
        data_dir = self.path('data')
        self.assertEqual(self.invoke('gen-dataset', '--spec', 'config', '--seed', '2', '--out', data_dir).exit_code, 0)
        results_csv = self.path('ga_results.csv')
        result = self.invoke('eval', '--predictor', 'ga', '--dataset', data_dir, '--limit', '3',
                             '--seed', '1', '--out', results_csv)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(results_csv, newline='', encoding='utf-8') as f:
            rows = list(csv.DictReader(f))
        self.assertEqual(sum(int(row['n']) for row in rows), 3)
        for row in rows:
            self.assertGreaterEqual(float(row['value_agnostic_acc']), float(row['complete_acc']))

    def test_eval_model_predictor_needs_model(self):
        """测试模型预测器缺少检查点时退出码为2"""
        data_dir = self.path('data')
        self.assertEqual(self.invoke('gen-dataset', '--spec', 'config', '--out', data_dir).exit_code, 0)
        self.assertEqual(self.invoke('eval', '--dataset', data_dir).exit_code, 2)

    def test_missing_dataset(self):
        """测试读取不存在的数据集目录"""
        os.makedirs(self.path('empty'))
        result = self.invoke('train', '--dataset', self.path('empty'), '--out', self.path('m.tpfm'))
        self.assertEqual(result.exit_code, 2)


if __name__ == '__main__':
    unittest.main()
