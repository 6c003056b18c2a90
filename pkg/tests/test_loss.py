"""Triplet cost semantics, subgradient conventions, and the batch objective."""

import numpy as np
import pytest

from vtriplet import (
    ShapeError,
    UsageError,
    batch_objective,
    init_params,
    tiny_spec,
    triplet_cost,
    triplet_cost_grad,
)
from vtriplet import reference
from vtriplet.loss import regularization_term


class TestTripletCost:
    def test_coincident_descriptors_cost_one(self):
        h = np.array([0.3, -0.7, 1.1])
        assert triplet_cost(h, h, h, margin=1.0) == 1.0

    def test_satisfied_margin_clamps_to_zero(self):
        hi = np.array([0.0, 0.0])
        hj = np.array([0.0, 0.0])
        hk = np.array([3.0, 0.0])
        assert triplet_cost(hi, hj, hk, margin=1.0) == 0.0

    def test_hand_evaluated_quarter(self):
        hi = np.array([0.0, 0.0])
        hj = np.array([1.0, 0.0])
        hk = np.array([1.5, 0.0])
        assert triplet_cost(hi, hj, hk, margin=1.0) == pytest.approx(0.25, abs=1e-7)

    def test_clamp_boundary_is_exactly_zero(self):
        # dn == margin + dp exactly
        hi = np.array([0.0])
        hj = np.array([0.5])
        hk = np.array([1.5])
        assert triplet_cost(hi, hj, hk, margin=1.0) == 0.0

    def test_bounds_hold_on_random_sweep(self):
        rng = np.random.default_rng(30)
        for _ in range(500):
            hi, hj, hk = rng.uniform(-5, 5, (3, 8))
            c = triplet_cost(hi, hj, hk, margin=1.0)
            assert 0.0 <= c <= 1.0
            dn = np.linalg.norm(hi - hk)
            dp = np.linalg.norm(hi - hj)
            assert (c == 0.0) == (dn >= 1.0 + dp)

    def test_invariant_under_rigid_transform(self):
        rng = np.random.default_rng(31)
        hi, hj, hk = rng.uniform(-2, 2, (3, 6))
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        t = rng.uniform(-3, 3, 6)
        before = triplet_cost(hi, hj, hk, margin=1.0)
        after = triplet_cost(q @ hi + t, q @ hj + t, q @ hk + t, margin=1.0)
        assert after == pytest.approx(before, abs=1e-12)

    def test_monotone_as_negative_recedes(self):
        rng = np.random.default_rng(32)
        hi = rng.uniform(-1, 1, 4)
        hj = rng.uniform(-1, 1, 4)
        direction = rng.uniform(-1, 1, 4)
        direction /= np.linalg.norm(direction)
        costs = [triplet_cost(hi, hj, hi + r * direction, margin=1.0) for r in np.linspace(0, 6, 40)]
        assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ShapeError):
            triplet_cost(np.zeros(3), np.zeros(3), np.zeros(4), margin=1.0)


class TestTripletCostGrad:
    def test_clamped_region_gives_zero(self):
        hi = np.array([0.0, 0.0])
        hj = np.array([0.0, 0.0])
        hk = np.array([5.0, 0.0])
        for g in triplet_cost_grad(hi, hj, hk, margin=1.0):
            np.testing.assert_array_equal(g, 0.0)

    def test_matches_finite_differences(self):
        hi = np.array([0.0, 0.0])
        hj = np.array([1.0, 0.0])
        hk = np.array([1.5, 0.0])
        gi, gj, gk = triplet_cost_grad(hi, hj, hk, margin=1.0)
        fd_i = reference.central_difference(lambda v: triplet_cost(v, hj, hk, 1.0), hi, h=1e-4)
        fd_j = reference.central_difference(lambda v: triplet_cost(hi, v, hk, 1.0), hj, h=1e-4)
        fd_k = reference.central_difference(lambda v: triplet_cost(hi, hj, v, 1.0), hk, h=1e-4)
        assert reference.relative_error(gi, fd_i).max() < 1e-6
        assert reference.relative_error(gj, fd_j).max() < 1e-6
        assert reference.relative_error(gk, fd_k).max() < 1e-6

    def test_random_sweep_matches_finite_differences(self):
        rng = np.random.default_rng(33)
        checked = 0
        while checked < 25:
            hi, hj, hk = rng.uniform(-2, 2, (3, 5))
            c = triplet_cost(hi, hj, hk, margin=1.0)
            dn = np.linalg.norm(hi - hk)
            dp = np.linalg.norm(hi - hj)
            # stay clear of the clamp boundary and the coincident singularities
            if c < 1e-3 or dn < 1e-2 or dp < 1e-2 or abs(dn - (1.0 + dp)) < 1e-2:
                continue
            gi, gj, gk = triplet_cost_grad(hi, hj, hk, margin=1.0)
            fd_i = reference.central_difference(lambda v: triplet_cost(v, hj, hk, 1.0), hi, h=1e-4)
            fd_j = reference.central_difference(lambda v: triplet_cost(hi, v, hk, 1.0), hj, h=1e-4)
            fd_k = reference.central_difference(lambda v: triplet_cost(hi, hj, v, 1.0), hk, h=1e-4)
            assert reference.relative_error(gi, fd_i).max() < 1e-6
            assert reference.relative_error(gj, fd_j).max() < 1e-6
            assert reference.relative_error(gk, fd_k).max() < 1e-6
            checked += 1

    def test_one_dimensional_hand_derivation(self):
        # hi=0, hj=0.4, hk=0.9: dp=0.4, dn=0.9, s=1.4, unit directions -1.
        gi, gj, gk = triplet_cost_grad(np.array([0.0]), np.array([0.4]), np.array([0.9]), margin=1.0)
        assert gi[0] == pytest.approx(1 / 1.4 - 0.9 / 1.96, abs=1e-12)
        assert gj[0] == pytest.approx(0.9 / 1.96, abs=1e-12)
        assert gk[0] == pytest.approx(-1 / 1.4, abs=1e-12)

    def test_coincident_pair_singularity_is_bounded(self):
        hi = np.array([0.0, 0.0])
        gi, gj, gk = triplet_cost_grad(hi, hi, np.array([0.5, 0.0]), margin=1.0)
        assert np.isfinite(gi).all() and np.isfinite(gj).all() and np.isfinite(gk).all()
        np.testing.assert_array_equal(gj, 0.0)  # dp = 0 zeroes the similar-pair direction


class TestBatchObjective:
    def test_satisfied_batch_without_decay_is_zero(self):
        params = init_params(tiny_spec(), seed=40)
        far = np.array([10.0, 0.0])
        origin = np.zeros(2)
        triples = [(origin, origin, far)] * 4
        assert batch_objective(triples, params, margin=1.0, weight_decay=0.0) == 0.0

    def test_singleton_reduces_to_triplet_cost(self):
        params = init_params(tiny_spec(), seed=41)
        hi = np.array([0.0, 0.0])
        hj = np.array([1.0, 0.0])
        hk = np.array([1.5, 0.0])
        obj = batch_objective([(hi, hj, hk)], params, margin=1.0, weight_decay=0.0)
        assert obj == triplet_cost(hi, hj, hk, 1.0)

    def test_matches_independent_summation(self):
        rng = np.random.default_rng(42)
        params = init_params(tiny_spec(), seed=42)
        triples = [tuple(rng.uniform(-2, 2, (3, 6))) for _ in range(3)]
        lam = 0.0005
        expected = sum(triplet_cost(a, b, c, 1.0) for a, b, c in triples)
        squares = 0.0
        for lp in params.layers:
            if lp.weights is not None:
                squares += float((lp.weights.astype(np.float64) ** 2).sum())
        expected += lam * squares
        got = batch_objective(triples, params, margin=1.0, weight_decay=lam)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_empty_batch_rejected(self):
        params = init_params(tiny_spec(), seed=43)
        with pytest.raises(UsageError):
            batch_objective([], params, margin=1.0, weight_decay=0.0)

    def test_bias_decay_flag(self):
        params = init_params(tiny_spec(), seed=44)
        for lp in params.layers:
            if lp.bias is not None:
                lp.bias[:] = 1.0
        base = regularization_term(params, 0.1, include_biases=False)
        with_biases = regularization_term(params, 0.1, include_biases=True)
        n_biases = sum(lp.bias.size for lp in params.layers if lp.bias is not None)
        assert with_biases == pytest.approx(base + 0.1 * n_biases, rel=1e-9)
