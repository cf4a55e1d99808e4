"""Shared builders for the test suite."""

import numpy as np
import pytest

from ccdesign.covmodel import CorrelationSpec, CovarianceModel, generate_correlation


def toeplitz_model(k: int, rho: float) -> CovarianceModel:
    return generate_correlation(CorrelationSpec(pattern="toeplitz", k=k, rho=rho))


def equicorr_model(k: int, rho: float) -> CovarianceModel:
    return generate_correlation(CorrelationSpec(pattern="equicorrelation", k=k, rho=rho))


def identity_model(k: int) -> CovarianceModel:
    return CovarianceModel.from_matrix(np.eye(k))


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)
