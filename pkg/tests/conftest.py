import numpy as np
import pytest

from oypolymer.environment import Environment, TimeGrid, zero_environment


@pytest.fixture
def small_grid():
    return TimeGrid(0.0, 3.0, 0.25)


@pytest.fixture
def small_env(small_grid):
    return Environment.generate(42, small_grid, (0, 5))


@pytest.fixture
def small_zero(small_grid):
    return zero_environment(small_grid, (0, 5))


def brute_log_z(field, m, j0, n, j1):
    """Enumeration oracle: log of the sum over strictly increasing interior
    jump tuples of exp(path energy) * dt^(n-m)."""
    import itertools
    import math

    grid = field.grid
    cums = {k: field.level_values(k) for k in range(m, n + 1)}
    if n == m:
        return float(cums[m][j1] - cums[m][j0])
    k = n - m
    total = 0.0
    for tup in itertools.combinations(range(j0 + 1, j1), k):
        nodes = (j0,) + tup + (j1,)
        energy = sum(cums[m + i][nodes[i + 1]] - cums[m + i][nodes[i]]
                     for i in range(k + 1))
        total += math.exp(energy) * grid.dt ** k
    if total == 0.0:
        return float("-inf")
    return math.log(total)
