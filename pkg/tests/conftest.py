# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

import json

from hypothesis import HealthCheck, settings
import pytest

from problems import (exact_estimator, mixed_pair, noisy_pair,
                      quiet_consultant, skewed)

settings.register_profile(
    'consult', deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow,
                           HealthCheck.filter_too_much])
settings.load_profile('consult')


def pytest_configure(config):
    config.addinivalue_line(
        'markers', 'slow: long-running solves and sweeps')


@pytest.fixture
def noisy():
    return noisy_pair()


@pytest.fixture
def mixed():
    return mixed_pair()


@pytest.fixture
def skew():
    return skewed()


@pytest.fixture
def est():
    return exact_estimator()


@pytest.fixture
def quiet():
    return quiet_consultant()


@pytest.fixture
def write_doc(tmp_path):
    '''Write a problem document dict to a file and return its path.'''
    def write(d, name='problem.json'):
        path = tmp_path / name
        path.write_text(json.dumps(d, indent=2))
        return str(path)
    return write
