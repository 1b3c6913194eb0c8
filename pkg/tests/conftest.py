import numpy as np
import pytest

from oedopt import models
from oedopt import polychaos as pc
from oedopt.bounds import Bounds
from oedopt.eig import EIGEstimator, NoiseModel, PriorSpec


@pytest.fixture(scope="session")
def benchmark_surrogate():
    """Degree-4 surrogate of the diffusion benchmark (6561 solves, built once)."""
    cfg = models.DiffusionConfig()
    fm = models.diffusion_forward(cfg)
    maps = pc.box_maps([(0.0, 1.0)] * 4)
    rule = pc.tensor_quadrature([3, 3, 3, 3])
    iset = pc.total_order_index_set(4, 4)
    return pc.project(fm.value, iset, rule, maps, n_theta=2)


@pytest.fixture(scope="session")
def benchmark_model(benchmark_surrogate):
    return models.SurrogateForwardModel(benchmark_surrogate, n_theta=2)


@pytest.fixture(scope="session")
def benchmark_estimator_factory(benchmark_model):
    def make(N, M):
        return EIGEstimator(
            benchmark_model,
            NoiseModel.scaled(5, 0.1, 0.1),
            PriorSpec.uniform([(0.0, 1.0), (0.0, 1.0)]),
            N=N, M=M, design_bounds=Bounds.unit_box(2))
    return make


@pytest.fixture(scope="session")
def oracle_estimator_factory():
    def make(N, M, alpha=0.5, d_hi=2.0):
        return EIGEstimator(
            models.linear_gaussian_forward(),
            NoiseModel.scaled(1, alpha, 0.0),
            PriorSpec.standard_normal(1),
            N=N, M=M, design_bounds=Bounds.from_pairs([(0.0, d_hi)]))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(0)
