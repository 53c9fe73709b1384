import math

import numpy as np
import pytest

from neswap.contingency import ContingencyTable, build_table
from neswap.mixtures import MixtureModel
from neswap.providers import ProviderConfig
from neswap.riskutility import (CSV_COLUMNS, PipelineContext, RiskUtilityPoint,
                                SweepConfig, TradeoffLine, data_risk,
                                data_utility, frontier, load_points_csv,
                                monte_carlo_measures, optimal_release,
                                save_points_csv, sweep)
from neswap.swapping import Release

from helpers import make_corpus


def point(du, dr, swaps=1, J=("A", "B"), N=1e10, **kw):
    return RiskUtilityPoint(release_id=f"{'+'.join(J)}|N={N:g}|s={swaps}",
                            swap_count=swaps, DU=du, DR=dr, J=J, N=N, **kw)


def singleton_table(n_singletons, extras=()):
    cells = {(f"v{i:03d}",): [f"c{i:03d}"] for i in range(n_singletons)}
    for j, size in enumerate(extras):
        cells[(f"big{j}",)] = [f"e{j}-{t}" for t in range(size)]
    return ContingencyTable(categories=["G"], cells=cells)


class TestRiskUtilityPoint:
    def test_bounds(self):
        with pytest.raises(ValueError, match="swap_count"):
            point(0.5, 0.5, swaps=-1)
        with pytest.raises(ValueError, match="DU and DR"):
            point(1.2, 0.5)
        with pytest.raises(ValueError, match="DU and DR"):
            point(0.5, -0.1)

    def test_zero_swaps_must_anchor(self):
        point(1.0, 1.0, swaps=0)
        with pytest.raises(ValueError, match="1, 1"):
            point(0.9, 1.0, swaps=0)

    def test_tradeoff_line(self):
        TradeoffLine(a=2.0, c=0.1)
        with pytest.raises(ValueError, match="positive"):
            TradeoffLine(a=0.0)


class TestDataRisk:
    def test_no_swaps_is_one(self):
        assert data_risk(singleton_table(10), set(), 0.7) == 1.0

    def test_worked_example(self):
        table = singleton_table(100)
        swapped = {"c000", "c001"}
        assert data_risk(table, swapped, 0.5) == 0.99

    def test_all_uniques_swapped_at_phat_one(self):
        table = singleton_table(5)
        swapped = {f"c{i:03d}" for i in range(5)}
        assert data_risk(table, swapped, 1.0) == 0.0

    def test_non_unique_swaps_do_not_reduce(self):
        table = singleton_table(4, extras=(3,))
        assert data_risk(table, {"e0-0", "e0-1"}, 0.9) == 1.0

    def test_lower_bound(self):
        table = singleton_table(7, extras=(2, 5))
        for p_hat in (0.0, 0.3, 1.0):
            for swapped in (set(), {"c000"}, {f"c{i:03d}" for i in range(7)}):
                dr = data_risk(table, swapped, p_hat)
                assert 1.0 - p_hat - 1e-12 <= dr <= 1.0

    def test_validation(self):
        with pytest.raises(ValueError, match="p_hat"):
            data_risk(singleton_table(3), set(), 1.5)
        with pytest.raises(ValueError, match="sample uniques"):
            data_risk(singleton_table(0, extras=(2, 2)), set(), 0.5)


class TestDataUtility:
    def setup_method(self):
        mu = np.zeros(3)
        mu[0] = 1.0
        self.model = MixtureModel(family="pkb", weights=[1.0], mus=mu[None, :],
                                  rhos=[0.5])
        # two points with t = 0.5: log density = -0.5*log(0.75) > 0
        x = np.array([0.5, math.sqrt(0.75), 0.0])
        self.pre = np.vstack([x, x])
        self.l = [0, 0]

    def test_identity_when_unchanged(self):
        assert data_utility(self.model, self.l, self.pre, self.pre.copy(), set()) == 1.0

    def test_lower_density_lowers_du(self):
        post = self.pre.copy()
        post[1] = np.array([0.4, math.sqrt(0.84), 0.0])   # t drops to 0.4
        du = data_utility(self.model, self.l, self.pre, post, {1})
        assert 0.0 < du < 1.0

    def test_incremental_identity(self):
        # DU == 1 + sum of per-point log-density deltas / pre log-likelihood
        rng = np.random.default_rng(0)
        from neswap.mixtures import pkb_log_density
        from helpers import orthonormal_centers, planted_points, cluster_model, sphere_uniform
        centers = orthonormal_centers(rng, 2, 6)
        model = cluster_model(centers, rho=0.6)
        labels = rng.integers(0, 2, size=30)
        pre = planted_points(rng, centers, labels, 0.2)
        post = pre.copy()
        swapped = {3, 11, 17}
        repl = sphere_uniform(rng, len(swapped), 6)
        for r, i in enumerate(sorted(swapped)):
            post[i] = repl[r]
        delta = sum(
            pkb_log_density(post[i], model.components[labels[i]])
            - pkb_log_density(pre[i], model.components[labels[i]])
            for i in swapped)
        from neswap.mixtures import conditional_log_likelihood
        ll_pre = conditional_log_likelihood(model, pre, labels)
        want = 1.0 + delta / ll_pre
        got = data_utility(model, labels, pre, post, swapped)
        assert got == pytest.approx(max(0.0, min(1.0, want)), abs=1e-12)

    def test_clamps_above_one_with_warning(self):
        post = self.pre.copy()
        post[0] = self.model.mus[0]            # at the mode: higher density
        with pytest.warns(UserWarning, match="exceeds 1"):
            du = data_utility(self.model, self.l, self.pre, post, {0})
        assert du == 1.0

    def test_clamps_below_zero_with_warning(self):
        post = self.pre.copy()
        post[0] = -self.model.mus[0]           # antipode: large negative log density
        with pytest.warns(UserWarning, match="below 0"):
            du = data_utility(self.model, self.l, self.pre, post, {0})
        assert du == 0.0

    def test_validation(self):
        with pytest.raises(ValueError, match="shapes"):
            data_utility(self.model, self.l, self.pre, self.pre[:1], set())
        post = self.pre.copy()
        post[0] = np.array([0.0, 1.0, 0.0])
        with pytest.raises(ValueError, match="outside the swapped"):
            data_utility(self.model, self.l, self.pre, post, {1})
        with pytest.raises(ValueError, match="out of range"):
            data_utility(self.model, self.l, self.pre, post, {5})
        flat = MixtureModel(family="pkb", weights=[1.0],
                            mus=self.model.mus, rhos=[0.0])
        with pytest.raises(ValueError, match="ratio undefined"):
            data_utility(flat, self.l, self.pre, self.pre.copy(), set())


class TestMonteCarlo:
    def build_ctx(self, rng_seed=0):
        rng = np.random.default_rng(rng_seed)
        corpus, model, memberships = make_corpus(rng, n_docs=6, chunks_per_doc=5)
        table = build_table(corpus)
        provider = ProviderConfig(kind="stub", d=corpus.d)
        return PipelineContext(corpus=corpus, table=table, model=model,
                               memberships=memberships, provider=provider,
                               population_size=1e10)

    def roles(self):
        return {"Organization": "S", "Person": "S", "Product": "F", "Location": "F"}

    def test_single_draw_equals_mean(self):
        ctx = self.build_ctx()
        rel = Release(swap_count=3, roles=self.roles(), seed=0)
        du, dr, draws = monte_carlo_measures(rel, 1, ctx)
        assert len(draws) == 1
        assert (du, dr) == draws[0]
        assert 0.0 <= du <= 1.0 and 0.0 <= dr <= 1.0

    def test_deterministic_and_mean_of_draws(self):
        ctx = self.build_ctx()
        rel = Release(swap_count=2, roles=self.roles(), seed=3)
        du1, dr1, draws1 = monte_carlo_measures(rel, 4, ctx)
        du2, dr2, draws2 = monte_carlo_measures(rel, 4, ctx)
        assert draws1 == draws2
        assert du1 == pytest.approx(sum(d for d, _ in draws1) / 4)
        assert dr1 == pytest.approx(sum(r for _, r in draws1) / 4)

    def test_draw_risk_never_below_floor(self):
        # DR >= 1 - p_hat regardless of which cells get swapped
        from neswap import ewens
        from neswap.contingency import frequency_counts, marginalize
        ctx = self.build_ctx(rng_seed=1)
        rel = Release(swap_count=5, roles=self.roles(), seed=1)
        _, _, draws = monte_carlo_measures(rel, 3, ctx)
        marginal = marginalize(ctx.table, sorted(rel.s_categories))
        counts = frequency_counts(marginal)
        params = ewens.fit_mle(counts)
        p_hat = ewens.pop_unique_ratio(params, ctx.population_size,
                                       counts.n, counts.s1)
        for du, dr in draws:
            assert dr >= 1.0 - p_hat - 1e-12
            assert 0.0 <= du <= 1.0

    def test_m_validation(self):
        ctx = self.build_ctx()
        rel = Release(swap_count=1, roles=self.roles())
        with pytest.raises(ValueError, match="M"):
            monte_carlo_measures(rel, 0, ctx)


class TestFrontier:
    def test_textbook_set(self):
        pts = [point(1.0, 1.0, swaps=0), point(0.95, 0.85), point(0.9, 0.8),
               point(0.9, 0.9)]
        front = frontier(pts)
        assert [(p.DU, p.DR) for p in front] == [(1.0, 1.0), (0.95, 0.85), (0.9, 0.8)]

    def test_single_point(self):
        pts = [point(0.5, 0.5)]
        assert frontier(pts) == pts

    def test_duplicates_survive(self):
        pts = [point(0.9, 0.8), point(0.9, 0.8), point(0.8, 0.9)]
        front = frontier(pts)
        assert [(p.DU, p.DR) for p in front] == [(0.9, 0.8), (0.9, 0.8)]

    @staticmethod
    def brute_force(points):
        out = []
        for p in points:
            dominated = any(
                q.DR <= p.DR and q.DU >= p.DU and (q.DR < p.DR or q.DU > p.DU)
                for q in points)
            if not dominated:
                out.append(p)
        return out

    def test_matches_brute_force_on_grid_points(self):
        rng = np.random.default_rng(2)
        grid = np.linspace(0.0, 1.0, 9)
        pts = [point(float(rng.choice(grid)), float(rng.choice(grid)))
               for _ in range(60)]
        front = frontier(pts)
        want = self.brute_force(pts)
        assert sorted((p.DU, p.DR) for p in front) == \
            sorted((p.DU, p.DR) for p in want)
        dus = [p.DU for p in front]
        assert dus == sorted(dus, reverse=True)

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="empty"):
            frontier([])


class TestOptimalRelease:
    def test_hand_check_unit_slope(self):
        pts = [point(1.0, 1.0, swaps=0), point(0.9, 0.7), point(0.5, 0.45)]
        # DR - DU: 0.0, -0.2, -0.05
        best = optimal_release(pts, TradeoffLine(a=1.0))
        assert (best.DU, best.DR) == (0.9, 0.7)

    def test_limits(self):
        pts = [point(1.0, 1.0, swaps=0), point(0.95, 0.85), point(0.9, 0.8)]
        steep = optimal_release(pts, TradeoffLine(a=1e9))
        assert steep.DU == 1.0                      # utility dominates
        shallow = optimal_release(pts, TradeoffLine(a=1e-9))
        assert shallow.DR == 0.8                    # risk dominates

    def test_tie_breaks(self):
        # equal objective: prefer higher DU, then fewer swaps
        a = point(0.8, 0.6, swaps=4)
        b = point(0.9, 0.7, swaps=2)
        assert optimal_release([a, b], TradeoffLine(a=1.0)) is b
        c = point(0.9, 0.7, swaps=1)
        assert optimal_release([a, b, c], TradeoffLine(a=1.0)) is c

    def test_dominated_points_never_win(self):
        pts = [point(1.0, 1.0, swaps=0), point(0.9, 0.8)]
        with_noise = pts + [point(0.9, 0.95), point(0.85, 0.8)]
        line = TradeoffLine(a=1.0)
        assert optimal_release(frontier(with_noise), line).release_id == \
            optimal_release(frontier(pts), line).release_id

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="no frontier"):
            optimal_release([], TradeoffLine(a=1.0))


class TestSweep:
    def build(self, rng_seed=0, **kw):
        rng = np.random.default_rng(rng_seed)
        corpus, model, memberships = make_corpus(rng, n_docs=6, chunks_per_doc=5)
        table = build_table(corpus)
        cfg = SweepConfig(
            s_eligible=["Organization", "Person", "Product"], subset_size=2,
            max_swaps=4, population_sizes=[1e6, 1e10],
            roles={"Location": "F"}, seed=0,
            provider=ProviderConfig(kind="stub", d=corpus.d),
            family="pkb", K=model.K, eps=0.0, **kw)
        return corpus, table, model, memberships, cfg

    def test_structure(self):
        corpus, table, model, memberships, cfg = self.build()
        points, report = sweep(corpus, table, model, memberships, cfg)
        assert set(report) <= {"Organization+Person", "Organization+Product",
                               "Person+Product"}
        ok = [j for j, rep in report.items() if rep["status"] == "ok"]
        assert ok, f"every subset skipped: {report}"
        by_group = {}
        for p in points:
            by_group.setdefault((p.J, p.N), []).append(p)
        for (J, N), grp in by_group.items():
            grp.sort(key=lambda p: p.swap_count)
            anchors = [p for p in grp if p.swap_count == 0]
            assert len(anchors) == 1
            assert (anchors[0].DU, anchors[0].DR) == (1.0, 1.0)
            drs = [p.DR for p in grp]
            assert all(x >= y - 1e-12 for x, y in zip(drs, drs[1:]))
            for p in grp:
                assert p.r == pytest.approx(2.0 * p.swap_count / corpus.n)
                assert p.family == "pkb" and p.K == model.K
                assert p.N in (1e6, 1e10)
            assert len(grp) <= cfg.max_swaps + 1

    def test_threads_agree(self):
        corpus, table, model, memberships, cfg = self.build()
        pts1, rep1 = sweep(corpus, table, model, memberships, cfg)
        corpus, table, model, memberships, cfg = self.build(threads=3)
        pts2, rep2 = sweep(corpus, table, model, memberships, cfg)
        assert pts1 == pts2
        assert rep1 == rep2

    def test_c_role_suppression_runs(self):
        corpus, table, model, memberships, cfg = self.build()
        cfg.roles = {"Location": "C"}
        points, report = sweep(corpus, table, model, memberships, cfg)
        assert any(rep["status"] == "ok" for rep in report.values())
        for p in points:
            assert 0.0 <= p.DU <= 1.0 and 0.0 <= p.DR <= 1.0

    def test_skips_subset_without_uniques(self):
        # every chunk shares one Organization and one Person value
        rng = np.random.default_rng(3)
        corpus, model, memberships = make_corpus(rng, n_docs=4, chunks_per_doc=3,
                                                 pool_size=1, p_counts=(0.0, 1.0))
        table = build_table(corpus)
        cfg = SweepConfig(s_eligible=["Organization", "Person"], subset_size=2,
                          max_swaps=2, population_sizes=[1e8],
                          roles={"Product": "U", "Location": "U"},
                          provider=ProviderConfig(kind="stub", d=corpus.d))
        points, report = sweep(corpus, table, model, memberships, cfg)
        assert points == []
        assert report["Organization+Person"]["status"] == "skipped"

    def test_validation(self):
        corpus, table, model, memberships, cfg = self.build()
        cfg.s_eligible = ["Organization", "Weather"]
        with pytest.raises(ValueError, match="not in corpus"):
            sweep(corpus, table, model, memberships, cfg)
        corpus, table, model, memberships, cfg = self.build()
        cfg.subset_size = 9
        with pytest.raises(ValueError, match="subset_size"):
            sweep(corpus, table, model, memberships, cfg)
        corpus, table, model, memberships, cfg = self.build()
        cfg.population_sizes = []
        with pytest.raises(ValueError, match="non-empty"):
            sweep(corpus, table, model, memberships, cfg)
        corpus, table, model, memberships, cfg = self.build()
        cfg.population_sizes = [10.0]
        with pytest.raises(ValueError, match="smaller than the sample"):
            sweep(corpus, table, model, memberships, cfg)


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        corpus_pts = [
            point(1.0, 1.0, swaps=0, J=("Organization", "Person"), N=1e6,
                  seed=3, family="pkb", K=5, eps=0.001),
            point(0.92, 0.84, swaps=2, J=("Organization", "Person"), N=1e6,
                  seed=3, r=0.25, family="pkb", K=5, eps=0.001),
            point(0.85, 0.6, swaps=4, J=("Person", "Product"), N=1e10,
                  seed=3, r=0.5, family="scauchy", K=2, eps=0.0),
        ]
        path = tmp_path / "points.csv"
        save_points_csv(corpus_pts, str(path))
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        back = load_points_csv(str(path))
        key = lambda p: (p.J, p.swap_count, p.r, p.DU, p.DR, p.seed, p.N,
                         p.family, p.K, p.eps)
        assert [key(p) for p in back] == [key(p) for p in corpus_pts]

    def test_missing_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("J,swap_count,r,DU\nA,1,0.1,0.9\n")
        with pytest.raises(ValueError, match="missing columns"):
            load_points_csv(str(path))
