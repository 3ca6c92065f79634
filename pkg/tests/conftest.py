"""Shared fixtures: small generated scenes reused across test modules."""

import dataclasses

import numpy as np
import pytest

from rigcal.synthetic import ScenarioConfig, generate, preset


@pytest.fixture(scope="session")
def arm_tiny():
    """Small noiseless single-camera arm scene with ground truth."""
    cfg = ScenarioConfig(mode="arm", cameras=1, poses=6, n_points=120,
                         lambda_star=(2.0,), seed=11)
    return generate(cfg)


@pytest.fixture(scope="session")
def arm_board():
    """Noiseless arm scene with a checkerboard, unit scale."""
    cfg = dataclasses.replace(preset("franka-like"), poses=8, n_points=150,
                              seed=3)
    return generate(cfg)


@pytest.fixture(scope="session")
def mobile_tiny():
    """Small noiseless three-camera planar scene."""
    cfg = dataclasses.replace(preset("memroc-like"), poses=8, n_points=300,
                              seed=5)
    return generate(cfg)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
