import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hmctune import (
    MODEL_CATALOG,
    ContractViolationError,
    DomainError,
    PhaseState,
    TargetModel,
    UnsupportedOperationError,
    exact_canonical_sample,
    funnel,
    hamiltonian,
    kinetic_energy,
    potential_energy,
    sample_momentum,
    scaled_gaussian,
    standard_gaussian,
)
from hmctune.model import finite_difference_hvp


def numeric_gradient(model, q, h=1e-6):
    g = np.empty_like(q)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (model.potential(q + e) - model.potential(q - e)) / (2 * h)
    return g


MODELS = [standard_gaussian(3), scaled_gaussian([0.5, 1.0, 2.0]), funnel(5, 3.0), funnel(50, 3.0)]


class TestPhaseState:
    def test_valid(self):
        z = PhaseState([1.0, 2.0], [0.0, -1.0])
        assert z.dim == 2
        assert z.is_finite()

    def test_length_mismatch(self):
        with pytest.raises(ContractViolationError):
            PhaseState([1.0, 2.0], [0.0])

    def test_empty(self):
        with pytest.raises(ContractViolationError):
            PhaseState([], [])

    def test_flip(self):
        z = PhaseState([1.0], [2.0]).flip()
        assert z.momentum[0] == -2.0 and z.position[0] == 1.0

    def test_nonfinite_flagged(self):
        assert not PhaseState([np.nan], [0.0]).is_finite()


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_gradient_matches_finite_differences(model, rng):
    for _ in range(5):
        q = model.sample_position(rng)
        g = model.gradient(q)
        num = numeric_gradient(model, q)
        scale = np.maximum(np.abs(g), 1.0)
        assert np.all(np.abs(g - num) / scale < 1e-5)


@pytest.mark.parametrize("model", MODELS, ids=repr)
def test_hvp_matches_finite_differences(model, rng):
    for _ in range(5):
        q = model.sample_position(rng)
        w = rng.standard_normal(model.dim)
        hv = model.hessian_vector_product(q, w)
        num = finite_difference_hvp(model, q, w)
        scale = np.maximum(np.abs(hv), 1.0)
        assert np.all(np.abs(hv - num) / scale < 1e-4)


def test_batched_evaluation_matches_single(rng):
    m = funnel(4)
    q = m.sample_position(rng, 6)
    pot, grad = m.potential_and_gradient(q)
    for i in range(6):
        p1, g1 = m.potential_and_gradient(q[i])
        assert pot[i] == pytest.approx(p1, rel=1e-14)
        np.testing.assert_allclose(grad[i], g1, rtol=1e-14)


def test_gaussian_sampler_moments(rng):
    m = scaled_gaussian([0.5, 2.0])
    x = m.sample_position(rng, 100_000)
    n = x.shape[0]
    se_mean = m.scales / np.sqrt(n)
    se_var = m.scales**2 * np.sqrt(2.0 / n)
    assert np.all(np.abs(x.mean(axis=0)) < 5 * se_mean)
    assert np.all(np.abs(x.var(axis=0) - m.scales**2) < 5 * se_var)


def test_funnel_sampler_moments(rng):
    m = funnel(3, 3.0)
    x = m.sample_position(rng, 100_000)
    n = x.shape[0]
    v = x[:, 0]
    assert abs(v.mean()) < 5 * 3.0 / np.sqrt(n)
    assert abs(v.var() - 9.0) < 5 * 9.0 * np.sqrt(2.0 / n)
    # x_i | v ~ N(0, e^v), so x_i e^{-v/2} is standard normal
    z = x[:, 1:] * np.exp(-0.5 * v)[:, None]
    assert np.all(np.abs(z.mean(axis=0)) < 5 / np.sqrt(n))
    assert np.all(np.abs(z.var(axis=0) - 1) < 5 * np.sqrt(2.0 / n))


def test_funnel_potential_at_origin():
    assert potential_energy(funnel(2, 3.0), np.zeros(3)) == 0.0


def test_funnel_dimension():
    assert funnel(50).dim == 51


def test_catalog_names():
    assert set(MODEL_CATALOG) == {"standard_gaussian", "scaled_gaussian", "funnel"}
    assert MODEL_CATALOG["standard_gaussian"](4).dim == 4


def test_gaussian_rejects_bad_scales():
    with pytest.raises(DomainError):
        scaled_gaussian([1.0, 0.0])


def test_potential_energy_validates_length():
    with pytest.raises(ContractViolationError):
        potential_energy(standard_gaussian(3), np.zeros(2))


def test_potential_energy_rejects_nan():
    with pytest.raises(DomainError):
        potential_energy(standard_gaussian(1), [np.nan])


def test_hamiltonian_is_sum():
    m = standard_gaussian(2)
    z = PhaseState([1.0, 2.0], [3.0, 0.0])
    assert hamiltonian(m, z) == pytest.approx(0.5 * 5 + 0.5 * 9)
    assert kinetic_energy([3.0, 4.0]) == 12.5


def test_sample_momentum_shape(rng):
    assert sample_momentum(rng, 3).shape == (3,)
    assert sample_momentum(rng, 3, 5).shape == (5, 3)


def test_custom_model_without_sampler():
    m = TargetModel(1, lambda q: 0.5 * (q * q).sum(-1), lambda q: q)
    assert not m.has_exact_sampler
    assert not m.has_analytic_hvp
    with pytest.raises(UnsupportedOperationError):
        exact_canonical_sample(m, np.random.default_rng(0))
    np.testing.assert_allclose(m.hessian_vector_product(np.array([2.0]), np.array([3.0])),
                               [3.0], rtol=1e-8)


def test_exact_canonical_sample(rng):
    z = exact_canonical_sample(funnel(3), rng)
    assert z.dim == 4 and z.is_finite()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_gaussian_potential_nonnegative(q):
    assert potential_energy(scaled_gaussian([0.3, 1.0, 4.0]), q) >= 0.0
