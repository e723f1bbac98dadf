"""Pearson, KSG mutual information, and ground-truth field generation."""

import logging

import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from ndf.ensemble import (
    EnsembleField,
    GridDomain,
    WhiteNoiseKernel,
    generate_synthetic,
)
from ndf.errors import DegenerateSampleError, FormatError, ParameterError
from ndf.measures import (
    CorrelationMeasure,
    FieldGrid,
    digamma,
    gaussian_mi_analytic,
    ground_truth_field,
    ksg_mi,
    load_field_grid,
    pearson,
    pearson_rowwise,
    save_field_grid,
)


def pearson_oracle(a, b):
    """Direct two-pass evaluation: means first, then moments."""
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    ma = sum(a) / len(a)
    mb = sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / np.sqrt(va * vb)


def gaussian_pair(rng, n, rho):
    x = rng.standard_normal(n)
    y = rho * x + np.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
    return x, y


class TestPearson:
    def test_perfect_linear_relation(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == 1.0

    def test_perfect_anticorrelation(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == -1.0

    def test_hand_computed_example(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == 0.8

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 512))
            a = rng.standard_normal(n)
            b = rng.standard_normal(n) + rng.uniform(-1, 1) * a
            assert abs(pearson(a, b) - np.clip(pearson_oracle(a, b), -1, 1)) \
                < 1e-12

    def test_self_correlation_exactly_one(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal(37)
        assert pearson(a, a.copy()) == 1.0

    @settings(max_examples=50, deadline=None)
    @given(alpha=st.floats(1e-3, 1e3), beta=st.floats(-10, 10),
           seed=st.integers(0, 10_000))
    def test_positive_affine_invariance(self, alpha, beta, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(64)
        b = rng.standard_normal(64)
        assert pearson(alpha * a + beta, b) == pytest.approx(
            pearson(a, b), abs=1e-10)

    def test_constant_vector_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            pearson([1.0, 1.0, 1.0], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            pearson([1, 2], [1, 2, 3])

    def test_rowwise_matches_scalar(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((20, 30))
        b = rng.standard_normal((20, 30))
        rows = pearson_rowwise(a, b)
        for i in range(20):
            assert rows[i] == pytest.approx(pearson(a[i], b[i]), abs=1e-13)

    def test_rowwise_marks_degenerate_rows(self):
        a = np.ones((2, 5))
        b = np.arange(10, dtype=float).reshape(2, 5)
        assert np.isnan(pearson_rowwise(a, b)).all()


class TestDigamma:
    def test_against_scipy_on_wide_range(self):
        x = np.concatenate([
            np.arange(1, 200, dtype=np.float64),
            np.geomspace(1.0, 1e6, 500),
            np.random.default_rng(0).uniform(1.0, 50.0, 200),
        ])
        assert np.max(np.abs(digamma(x) - scipy.special.digamma(x))) < 1e-10

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            digamma(0.0)


class TestKsgMi:
    def test_independent_near_zero(self):
        rng = np.random.default_rng(21)
        est = ksg_mi(rng.random(2000), rng.random(2000), 3)
        assert abs(est) < 0.05

    @pytest.mark.parametrize("rho", [0.0, 0.5, 0.9])
    def test_gaussian_matches_analytic(self, rho):
        ests = [ksg_mi(*gaussian_pair(np.random.default_rng(s), 2000, rho), 3)
                for s in range(20)]
        assert abs(np.mean(ests) - gaussian_mi_analytic(rho)) < 0.05

    def test_argument_symmetry_exact(self):
        rng = np.random.default_rng(9)
        a, b = gaussian_pair(rng, 500, 0.6)
        assert ksg_mi(a, b, 3) == ksg_mi(b, a, 3)

    def test_monotone_transform_stability(self):
        for s in range(20):
            a, b = gaussian_pair(np.random.default_rng(100 + s), 2000, 0.7)
            base = ksg_mi(a, b, 3)
            assert abs(ksg_mi(np.exp(a), b, 3) - base) <= 0.05
            assert abs(ksg_mi(a, b ** 3 + b, 3) - base) <= 0.05

    def test_error_shrinks_with_sample_size(self):
        analytic = gaussian_mi_analytic(0.5)

        def median_err(n):
            errs = [abs(ksg_mi(*gaussian_pair(np.random.default_rng(s), n,
                                              0.5), 3) - analytic)
                    for s in range(9)]
            return np.median(errs)

        assert median_err(8000) <= median_err(500)

    def test_duplicate_points_survive(self):
        # heavy quantization produces many exact joint duplicates
        rng = np.random.default_rng(2)
        a = np.round(rng.standard_normal(500), 1)
        b = np.round(0.8 * a + 0.2 * rng.standard_normal(500), 1)
        est = ksg_mi(a, b, 3)
        assert np.isfinite(est)

    def test_constant_vector_survives(self):
        a = np.zeros(100)
        b = np.random.default_rng(0).standard_normal(100)
        assert np.isfinite(ksg_mi(a, b, 3))

    def test_k_bounds(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ParameterError):
            ksg_mi(rng.random(10), rng.random(10), 10)
        with pytest.raises(ParameterError):
            ksg_mi(rng.random(10), rng.random(10), 0)


class TestGaussianMiAnalytic:
    def test_known_values(self):
        assert gaussian_mi_analytic(0.0) == 0.0
        assert gaussian_mi_analytic(0.5) == pytest.approx(0.143841, abs=1e-6)
        assert gaussian_mi_analytic(0.9) == pytest.approx(0.830366, abs=1e-6)

    def test_rejects_unit_correlation(self):
        with pytest.raises(ParameterError):
            gaussian_mi_analytic(1.0)


class TestGroundTruthField:
    def test_self_node_is_exactly_one(self, white_field):
        dom = white_field.domain
        dims = (dom.nx, dom.ny, dom.nz)
        grid = ground_truth_field(white_field, CorrelationMeasure("pearson"),
                                  "w", "w", (-1.0, -1.0, -1.0), dims)
        assert grid.values[0] == 1.0

    def test_white_noise_off_reference_bound(self, white_field):
        dom = white_field.domain
        dims = (dom.nx, dom.ny, dom.nz)
        grid = ground_truth_field(white_field, CorrelationMeasure("pearson"),
                                  "w", "w", (-1.0, -1.0, -1.0), dims)
        others = grid.values[1:]
        assert np.max(np.abs(others)) < 4.0 / np.sqrt(white_field.member_count)

    def test_degenerate_reference_maps_to_zero(self, caplog):
        dom = GridDomain(2, 2, 2)
        values = np.zeros((1, 3, 2, 2, 2), dtype=np.float32)
        values[0, :, 1] = np.arange(3)[:, None, None]  # constant at z=-1
        field = EnsembleField(dom, ("v",), values)
        with caplog.at_level(logging.WARNING, logger="ndf.measures"):
            grid = ground_truth_field(field, CorrelationMeasure("pearson"),
                                      "v", "v", (-1.0, -1.0, -1.0),
                                      (2, 2, 2))
        assert np.all(grid.values == 0.0)
        assert "degenerate" in caplog.text

    def test_mi_field_workers_equivalence(self):
        field = generate_synthetic(GridDomain(3, 3, 2), 40, ("v",),
                                   WhiteNoiseKernel(), seed=8)
        measure = CorrelationMeasure("ksg_mi", ksg_k=3)
        serial = ground_truth_field(field, measure, "v", "v", (0, 0, 0),
                                    (3, 3, 2), workers=1, chunk=4)
        parallel = ground_truth_field(field, measure, "v", "v", (0, 0, 0),
                                      (3, 3, 2), workers=2, chunk=4)
        assert np.array_equal(serial.values, parallel.values)

    def test_chunking_does_not_change_results(self, white_field):
        measure = CorrelationMeasure("pearson")
        a = ground_truth_field(white_field, measure, "w", "w", (0, 0, 0),
                               (5, 5, 4), chunk=7)
        b = ground_truth_field(white_field, measure, "w", "w", (0, 0, 0),
                               (5, 5, 4), chunk=100)
        assert np.array_equal(a.values, b.values)


class TestFieldGridFormat:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        grid = FieldGrid((4, 3, 2), rng.standard_normal(24).astype(np.float32))
        path = tmp_path / "field.ndfg"
        save_field_grid(grid, path)
        loaded = load_field_grid(path)
        assert loaded.dims == (4, 3, 2)
        assert np.array_equal(loaded.values, grid.values)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ndfg"
        path.write_bytes(b"NOPE" + b"\0" * 16)
        with pytest.raises(FormatError):
            load_field_grid(path)

    def test_dims_validation(self):
        with pytest.raises(ParameterError):
            FieldGrid((0, 2, 2), np.zeros(0, dtype=np.float32))
        with pytest.raises(ParameterError):
            FieldGrid((2, 2, 2), np.zeros(7, dtype=np.float32))
