"""Shared fixtures: seeded synthetic images and cached pipeline outputs."""
from __future__ import annotations

import functools

import numpy as np
import pytest

from dentid import PyramidParams, describe
from dentid.synthetic import blob_texture

TEXTURE_SIZE = 192


@functools.lru_cache(maxsize=None)
def texture(seed: int, size: int = TEXTURE_SIZE) -> np.ndarray:
    img = blob_texture(seed, size)
    img.setflags(write=False)
    return img


@functools.lru_cache(maxsize=None)
def described(seed: int, size: int = TEXTURE_SIZE):
    return describe(texture(seed, size), PyramidParams())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def params():
    return PyramidParams()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
