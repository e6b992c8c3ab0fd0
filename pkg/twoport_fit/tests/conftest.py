"""
pytest配置: 注册 slow 标记, 未设置 TPF_RUN_SLOW=1 时跳过耗时的统计测试
"""
import os

import pytest


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: 耗时的统计测试, 需要 TPF_RUN_SLOW=1')


def pytest_collection_modifyitems(config, items):
    if os.environ.get('TPF_RUN_SLOW') == '1':
        return
    skip_slow = pytest.mark.skip(reason='设置 TPF_RUN_SLOW=1 以运行耗时测试')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
