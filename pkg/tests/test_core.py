import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgerec.core import (
    ConstraintSet,
    DemandMatrix,
    Ptm,
    Strategy,
    expected_hit,
    generate_demands,
    random_ptm,
    random_strategy,
    realized_hit,
    recommendation_ptm,
    update_demand_matrix,
)
from edgerec.errors import InvalidPtm, NoRecommendation


def e(F, j):
    x = np.zeros(F)
    x[j] = 1.0
    return x


class TestPtm:
    def test_rejects_bad_column_sum(self):
        with pytest.raises(InvalidPtm):
            Ptm(np.array([[0.5, 0.5], [0.4, 0.5]]))

    def test_rejects_negative(self):
        with pytest.raises(InvalidPtm):
            Ptm(np.array([[1.2, 0.5], [-0.2, 0.5]]))

    def test_tolerance_is_1e9(self):
        Ptm(np.array([[0.5 + 5e-10, 0.5], [0.5, 0.5]]))
        with pytest.raises(InvalidPtm):
            Ptm(np.array([[0.5 + 5e-9, 0.5], [0.5, 0.5]]))

    def test_csv_roundtrip(self, tmp_path):
        P = random_ptm(5, np.random.default_rng(3))
        path = tmp_path / "p.csv"
        P.to_csv(path)
        assert Ptm.from_csv(path) == P

    def test_csv_loader_validates(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.5,0.5\n0.6,0.5\n")
        with pytest.raises(InvalidPtm):
            Ptm.from_csv(path)

    def test_csv_not_square(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,0,0\n0,1,0\n")
        with pytest.raises(InvalidPtm):
            Ptm.from_csv(path)

    @given(st.integers(1, 12), st.integers(0, 2**31), st.floats(0.05, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_generators_column_stochastic(self, F, seed, conc):
        rng = np.random.default_rng(seed)
        for P in (random_ptm(F, rng, conc), recommendation_ptm(F, rng, 1.0, 0.3),
                  Ptm.uniform(F), Ptm.identity(F)):
            assert np.all(np.abs(P.entries.sum(axis=0) - 1) <= 1e-9)

    def test_read_only(self):
        P = Ptm.identity(3)
        with pytest.raises(ValueError):
            P.entries[0, 0] = 0.5


class TestConstraintSet:
    def test_budgets(self):
        cs = ConstraintSet(10, 2, 3)
        assert cs.p == pytest.approx(0.2) and cs.q == pytest.approx(0.3)
        with pytest.raises(ValueError):
            ConstraintSet(4, 5, 1)
        with pytest.raises(ValueError):
            ConstraintSet(4, 1, 0)

    def test_random_strategy_feasible_and_integral(self):
        cs = ConstraintSet(10, 3, 2)
        rng = np.random.default_rng(0)
        for _ in range(50):
            s = random_strategy(cs, rng)
            assert s.integral and cs.contains(s)
            assert s.u.sum() == 3 and s.v.sum() == 2


class TestGenerateDemands:
    def test_degenerate_column(self):
        F = 4
        P = np.full((F, F), 0.25)
        P[:, 2] = e(F, 0)
        d = generate_demands(Ptm(P), Strategy(np.zeros(F), e(F, 2)), 5, np.random.default_rng(1))
        assert d.counts.tolist() == [5, 0, 0, 0]

    def test_uniform_column_law_of_large_numbers(self):
        F, N = 4, 10**5
        d = generate_demands(Ptm.uniform(F), Strategy(np.zeros(F), e(F, 1)), N, np.random.default_rng(2))
        assert d.counts.sum() == N
        np.testing.assert_allclose(d.counts / N, 0.25, atol=0.01)

    def test_two_recommendations_mix_uniformly(self):
        P = Ptm(np.array([[0.7, 0.2], [0.3, 0.8]]))
        N = 10**5
        d = generate_demands(P, Strategy(np.zeros(2), np.ones(2)), N, np.random.default_rng(3))
        # analytic mixture mean 0.5 * 0.7 + 0.5 * 0.2
        assert abs(d.counts[0] / N - 0.45) <= 0.01

    def test_no_recommendation(self):
        with pytest.raises(NoRecommendation):
            generate_demands(Ptm.uniform(3), Strategy(np.zeros(3), np.zeros(3)), 5, np.random.default_rng(0))

    @given(st.integers(1, 8), st.integers(0, 200), st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_counts_sum_to_users(self, F, N, seed):
        rng = np.random.default_rng(seed)
        P = random_ptm(F, rng)
        s = random_strategy(ConstraintSet(F, 1, rng.integers(1, F + 1)), rng)
        d = generate_demands(P, s, N, rng)
        assert d.counts.sum() == N
        assert np.all(s.v[d.picks] == 1)
        assert np.array_equal(np.bincount(d.requests, minlength=F), d.counts)

    def test_frequency_converges_within_three_sigma(self):
        # N * slots = 2e5 draws from the analytic mixture mean
        F, N, slots = 5, 20, 10**4
        rng = np.random.default_rng(11)
        P = random_ptm(F, rng)
        v = np.zeros(F)
        v[[1, 3]] = 1
        s = Strategy(np.zeros(F), v)
        total = np.zeros(F)
        for t in range(slots):
            total += generate_demands(P, s, N, rng, slot=t).counts
        mean = P.entries @ v / v.sum()
        sd = np.sqrt(mean * (1 - mean) / (N * slots))
        assert np.all(np.abs(total / (N * slots) - mean) <= 3 * sd + 1e-12)

    def test_same_stream_consumption_for_any_strategy(self):
        P = random_ptm(6, np.random.default_rng(0))
        r1 = np.random.default_rng(5)
        r2 = np.random.default_rng(5)
        generate_demands(P, Strategy(np.zeros(6), e(6, 0)), 17, r1)
        generate_demands(P, Strategy(np.zeros(6), np.ones(6)), 17, r2)
        assert r1.random() == r2.random()


class TestExpectedHit:
    def test_identity_match(self):
        assert expected_hit(Ptm.identity(3), Strategy(e(3, 0), e(3, 0))) == 1.0

    def test_identity_orthogonal(self):
        assert expected_hit(Ptm.identity(3), Strategy(e(3, 0), e(3, 1))) == 0.0

    def test_zero_cache(self):
        P = random_ptm(5, np.random.default_rng(0))
        assert expected_hit(P, Strategy(np.zeros(5), np.ones(5))) == 0.0

    @given(st.integers(1, 8), st.floats(0, 1), st.integers(0, 2**31))
    @settings(max_examples=60, deadline=None)
    def test_bilinear_in_cache(self, F, a, seed):
        rng = np.random.default_rng(seed)
        P = random_ptm(F, rng)
        u = rng.random(F)
        v = rng.random(F)
        base = expected_hit(P, Strategy(u, v))
        assert expected_hit(P, Strategy(a * u, v)) == pytest.approx(a * base, rel=1e-12, abs=1e-15)

    def test_realized_hit(self):
        P = Ptm.identity(3)
        s = Strategy(e(3, 0), e(3, 0))
        d = generate_demands(P, s, 4, np.random.default_rng(0))
        assert realized_hit(d, s) == 1.0
        assert realized_hit(d, Strategy(e(3, 1), e(3, 0))) == 0.0


class TestDemandMatrix:
    def _slot(self, F, j, requests):
        from edgerec.core import DemandVector
        req = np.array(requests)
        return DemandVector(np.bincount(req, minlength=F), 0, len(req), req, np.full(len(req), j))

    def test_single_slot(self):
        dm = DemandMatrix(3, 5)
        # v = e_2 (index 1), all five users request file 1 (index 0)
        update_demand_matrix(dm, self._slot(3, 1, [0] * 5), e(3, 1))
        assert dm.alpha[0, 1] == 5 and dm.col_slots[1] == 1
        assert dm.alpha.sum() == 5 and dm.col_slots.sum() == 1

    def test_additive(self):
        dm = DemandMatrix(3, 5)
        for _ in range(2):
            update_demand_matrix(dm, self._slot(3, 1, [0] * 5), e(3, 1))
        assert dm.alpha[0, 1] == 10 and dm.col_slots[1] == 2

    def test_all_zero_recommendation_rejected(self):
        dm = DemandMatrix(3, 5)
        with pytest.raises(NoRecommendation):
            update_demand_matrix(dm, self._slot(3, 1, [0] * 5), np.zeros(3))

    def test_order_independent_within_slot(self):
        F = 4
        req = np.array([0, 3, 3, 1, 2, 0])
        picks = np.array([1, 2, 1, 2, 1, 2])
        from edgerec.core import DemandVector
        perm = np.random.default_rng(0).permutation(len(req))
        a = DemandVector(np.bincount(req, minlength=F), 0, 6, req, picks)
        b = DemandVector(np.bincount(req, minlength=F), 0, 6, req[perm], picks[perm])
        v = np.array([0, 1, 1, 0.0])
        dm1 = update_demand_matrix(DemandMatrix(F, 6), a, v)
        dm2 = update_demand_matrix(DemandMatrix(F, 6), b, v)
        assert np.array_equal(dm1.alpha, dm2.alpha)

    def test_column_totals_match_users_times_slots_single_recommendation(self):
        F, N = 5, 7
        rng = np.random.default_rng(4)
        P = random_ptm(F, rng)
        dm = DemandMatrix(F, N)
        cs = ConstraintSet(F, 2, 1)
        for t in range(40):
            s = random_strategy(cs, rng)
            update_demand_matrix(dm, generate_demands(P, s, N, rng, slot=t), s.v)
        assert np.array_equal(dm.alpha.sum(axis=0), N * dm.col_slots)
