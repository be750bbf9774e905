import numpy as np
import pytest

import tica


@pytest.fixture(scope="module")
def subject():
    spec = tica.sima_spec()
    prior = tica.population_prior(spec)
    sources = tica.sample_subject_a(prior, seed=5)
    tc = tica.gen_timecourses(200, spec.n_sources(), seed=6)
    return spec, prior, tica.gen_observed(sources, tc, 1.0, seed=7)


def test_simulation_shapes(subject):
    spec, prior, data = subject
    v = spec.grid.size()
    assert data.observed.shape == (200, v)
    assert data.sources.shape == (spec.n_sources(), v)
    assert data.snr == pytest.approx(1.0)


def test_preprocess_and_reduction(subject):
    _, _, data = subject
    scaled = tica.center_scale(data.observed)
    assert np.allclose(scaled.data.sum(axis=0), 0.0, atol=1e-8)
    assert np.allclose(scaled.data.sum(axis=1), 0.0, atol=1e-8)
    red = tica.prewhiten(scaled.data)
    assert red.order >= 1
    assert red.y.shape == (red.order, data.observed.shape[1])


def test_fast_fit_beats_nothing(subject):
    spec, prior, data = subject
    opts = tica.FitOptions()
    opts.seed = 11
    fit = tica.fit_fast(data.observed, prior, opts)
    assert fit.l == spec.n_sources()
    assert fit.template_mean.shape == data.sources.shape
    assert fit.converged
    trace = np.asarray(fit.loglik_trace)
    assert np.all(np.diff(trace) >= -1e-6 * np.abs(trace[:-1]))
    for q in range(fit.l):
        mask = tica.activation_mask(data.sources[q])
        r = tica.corr_activated(fit.template_mean[q], data.sources[q], mask)
        assert r > 0.5


def test_dual_regression_and_metrics(subject):
    spec, prior, data = subject
    scaled = tica.center_scale(data.observed)
    dr = tica.dual_regress(scaled.data, prior.mean)
    assert dr.sources.shape == (spec.n_sources(), spec.grid.size())
    perm = tica.match_components(dr.sources, data.sources)
    assert sorted(perm) == list(range(spec.n_sources()))


def test_space_enumeration_counts():
    assert tica.enumerate_space(3, 3, tica.SpaceKind.full).n_configs == 27
    assert tica.enumerate_space(3, 3, tica.SpaceKind.subspace).n_configs == 20
    with pytest.raises(ValueError):
        tica.enumerate_space(15, 3, tica.SpaceKind.full, 1_000_000)


def test_errors_are_python_exceptions():
    with pytest.raises(ValueError):
        tica.estimate_order(np.zeros(5), 100)
