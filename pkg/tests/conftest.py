"""Shared fixtures: small grids, metrics, and operators reused across tests."""

import numpy as np
import pytest

import geoxray as gx


@pytest.fixture(scope="session")
def grid64():
    return gx.Grid2D(64)


@pytest.fixture(scope="session")
def grid129():
    return gx.Grid2D(129)


@pytest.fixture(scope="session")
def metric_unit(grid129):
    return gx.make_speed("unit", grid129)


@pytest.fixture(scope="session")
def metric_c1(grid129):
    return gx.make_speed("c1", grid129)


@pytest.fixture(scope="session")
def metric_c2(grid129):
    return gx.make_speed("c2", grid129)


@pytest.fixture(scope="session")
def metric_c3(grid129):
    return gx.make_speed("c3", grid129)


@pytest.fixture(scope="session")
def small_op(grid64):
    """c1 metric with Gaussian attenuation on a small fan-beam set."""
    metric = gx.make_speed("c1", grid64)
    atten = gx.make_attenuation("gaussian_bump", grid64)
    return gx.build_operator(metric, atten, gx.make_rayset(32, 64))


@pytest.fixture(scope="session")
def small_flat_op(grid64):
    metric = gx.make_speed("unit", grid64)
    atten = gx.make_attenuation("zero", grid64)
    return gx.build_operator(metric, atten, gx.make_rayset(32, 64))


def weighted_dot_sino(op, a, b):
    return float(np.sum(a * b * op.rayset.weights.reshape(op.range_shape)))


def area_dot_field(op, a, b):
    return float(np.sum(a * b) * op.cell_area)
