"""Distribution metrics and anytime curves against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anydiff import (
    AnytimeCurve,
    GaussianFit,
    ParameterError,
    Trace,
    TraceEntry,
    anytime_curve,
    auc,
    consistency_curve,
    curve_rows,
    fit_gaussian,
    frechet_distance,
    prior_moments,
    value_at,
)
from oracles import auc_enumeration, sqrtm_frechet


def test_gaussian_fit_validation():
    with pytest.raises(ParameterError):
        GaussianFit(np.zeros(2), np.eye(3))
    with pytest.raises(ParameterError):
        GaussianFit(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ParameterError):
        GaussianFit(np.zeros(2), np.eye(2), n=2)
    assert GaussianFit(np.zeros(2), np.eye(2), n=3).dim == 2


def test_fit_gaussian_matches_numpy():
    x = np.random.default_rng(0).normal(size=(50, 3))
    fit = fit_gaussian(x)
    assert np.allclose(fit.mean, x.mean(axis=0))
    assert np.allclose(fit.cov, np.cov(x.T, ddof=1), atol=1e-12)
    assert fit.n == 50
    one_d = fit_gaussian(np.arange(5.0))
    assert one_d.dim == 1 and one_d.cov[0, 0] == pytest.approx(2.5)
    with pytest.raises(ParameterError):
        fit_gaussian(np.zeros((3, 3)))
    with pytest.raises(ParameterError):
        fit_gaussian(np.zeros((2, 2, 2)))


def test_prior_moments_closed_form(four_mode_prior):
    fit = prior_moments(four_mode_prior)
    assert np.allclose(fit.mean, 0.0)
    # component covariance 0.25 plus the spread of the modes: (3/sqrt2)^2
    assert np.allclose(fit.cov, np.diag([4.75, 4.75]), atol=1e-12)
    assert fit.n is None


def test_frechet_one_dimensional_closed_form():
    a = GaussianFit(np.array([1.0]), np.array([[4.0]]))
    b = GaussianFit(np.array([-2.0]), np.array([[1.0]]))
    # (mu difference)^2 + (sigma difference)^2
    assert frechet_distance(a, b) == pytest.approx(9.0 + 1.0)
    assert frechet_distance(a, a) == pytest.approx(0.0, abs=1e-12)


def test_frechet_matches_sqrtm_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = int(rng.integers(1, 5))
        A = rng.normal(size=(d, d))
        B = rng.normal(size=(d, d))
        cov_a = A @ A.T + 0.1 * np.eye(d)
        cov_b = B @ B.T + 0.1 * np.eye(d)
        mu_a, mu_b = rng.normal(size=d), rng.normal(size=d)
        got = frechet_distance(GaussianFit(mu_a, cov_a), GaussianFit(mu_b, cov_b))
        want = sqrtm_frechet(mu_a, cov_a, mu_b, cov_b)
        assert got == pytest.approx(want, rel=1e-8, abs=1e-10)
        # symmetry
        rev = frechet_distance(GaussianFit(mu_b, cov_b), GaussianFit(mu_a, cov_a))
        assert got == pytest.approx(rev, rel=1e-8, abs=1e-10)


def test_frechet_rejections():
    with pytest.raises(ParameterError):
        frechet_distance(
            GaussianFit(np.zeros(1), np.eye(1)), GaussianFit(np.zeros(2), np.eye(2))
        )
    with pytest.raises(ParameterError, match="PSD"):
        frechet_distance(
            GaussianFit(np.zeros(1), np.array([[-1.0]])),
            GaussianFit(np.zeros(1), np.eye(1)),
        )


def test_curve_validation():
    with pytest.raises(ParameterError):
        AnytimeCurve((), 10)
    with pytest.raises(ParameterError):
        AnytimeCurve(((0, 1.0),), 10)
    with pytest.raises(ParameterError):
        AnytimeCurve(((3, 1.0), (3, 2.0)), 10)
    with pytest.raises(ParameterError):
        AnytimeCurve(((5, 1.0),), 4)


def test_value_at_step_semantics():
    curve = AnytimeCurve(((1, 2.0), (5, 1.0)), 10)
    assert value_at(curve, 1) == 2.0
    assert value_at(curve, 4) == 2.0
    assert value_at(curve, 5) == 1.0
    assert value_at(curve, 10) == 1.0
    late = AnytimeCurve(((3, 5.0),), 4)
    assert value_at(late, 1) == 5.0  # first value extends backwards
    with pytest.raises(ParameterError):
        value_at(curve, 0)
    with pytest.raises(ParameterError):
        value_at(curve, 11)


def test_auc_example():
    assert auc(AnytimeCurve(((1, 2.0), (5, 1.0)), 10)) == pytest.approx(14.0)
    assert auc(AnytimeCurve(((3, 5.0),), 4)) == pytest.approx(20.0)
    flat = AnytimeCurve(((1, 3.0),), 7)
    assert auc(flat) == pytest.approx(21.0)


@given(data=st.data())
@settings(max_examples=60, deadline=None)
def test_auc_matches_enumeration(data):
    n_pts = data.draw(st.integers(1, 6))
    nfes = sorted(
        data.draw(
            st.lists(
                st.integers(1, 40), min_size=n_pts, max_size=n_pts, unique=True
            )
        )
    )
    values = data.draw(
        st.lists(
            st.floats(-10, 10, allow_nan=False), min_size=n_pts, max_size=n_pts
        )
    )
    end = data.draw(st.integers(nfes[-1], nfes[-1] + 20))
    curve = AnytimeCurve(tuple(zip(nfes, values)), end)
    assert auc(curve) == pytest.approx(auc_enumeration(curve.points, end))
    for n in (1, end):
        assert value_at(curve, n) == pytest.approx(
            [v for m, v in curve.points if m <= n][-1]
            if curve.points[0][0] <= n
            else curve.points[0][1]
        )


def _toy_traces():
    # three 1-d runs with predictions at budgets 1 and 2
    finals = [0.1, -0.2, 0.4]
    traces = []
    for i, f in enumerate(finals):
        entries = [
            TraceEntry(1, 500, np.array([f + 1.0])),
            TraceEntry(2, 0, np.array([f])),
        ]
        traces.append(Trace(entries, np.array([f]), 2))
    return traces


def test_anytime_curve_points():
    traces = _toy_traces()
    reference = fit_gaussian(np.array([[0.1], [-0.2], [0.4]]))
    curve = anytime_curve(traces, reference, 1)
    assert [n for n, _ in curve.points] == [1, 2]
    assert curve.domain_end == 2
    # at budget 2 the population IS the reference sample: distance ~ 0
    assert np.exp(curve.points[1][1]) == pytest.approx(0.0, abs=1e-9)
    shifted = fit_gaussian(np.array([[1.1], [0.8], [1.4]]))
    expect = np.log(frechet_distance(shifted, reference))
    assert curve.points[0][1] == pytest.approx(expect, abs=1e-9)


def test_anytime_curve_validation():
    traces = _toy_traces()
    reference = fit_gaussian(np.array([[0.0], [1.0], [2.0]]))
    with pytest.raises(ParameterError):
        anytime_curve(traces, reference, 0)
    with pytest.raises(ParameterError):
        anytime_curve([], reference, 1)
    uneven = _toy_traces()
    uneven[1].total_nfe = 3
    with pytest.raises(ParameterError):
        anytime_curve(uneven, reference, 1)
    # budget below eval_every falls back to the terminal point
    curve = anytime_curve(traces, reference, 10)
    assert [n for n, _ in curve.points] == [2]


def test_consistency_curve():
    entries = [
        TraceEntry(1, 900, np.array([2.0, 0.0])),
        TraceEntry(4, 300, np.array([1.0, 1.0])),
    ]
    trace = Trace(entries, np.array([1.0, 0.0]), 4)
    curve = consistency_curve(trace)
    assert curve.points == ((1, 0.5), (4, 0.5))
    assert curve.domain_end == 4
    with pytest.raises(ParameterError):
        consistency_curve(Trace([entries[0]], np.array([0.0, 0.0]), 1))


def test_curve_rows_format():
    text = curve_rows(AnytimeCurve(((1, 0.5), (3, 0.25)), 5))
    assert text == "nfe,value\n1,0.5\n3,0.25\n"
