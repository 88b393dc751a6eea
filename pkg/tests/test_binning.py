"""Grouping, histogram construction, sample weights, partition splitting."""

import math

import numpy as np
import pytest

from densfit.bayes_space import MixedDomain
from densfit.binning import (
    BinnedDesign,
    Observations,
    apply_sample_weights,
    bin_responses,
    build_binned_design,
    equidistant_cuts,
    group_by_covariates,
    nested_cuts,
    read_csv,
    split_partition,
)
from densfit.errors import (
    ConfigError,
    NonPositiveWeight,
    NotAPartition,
    ObservationOutsideDomain,
)

MIXED = MixedDomain(interval=(0.0, 1.0), atoms=[(0.0, 1.0), (1.0, 1.0)])


class TestGrouping:
    def test_all_distinct(self):
        cov = {"x": np.array([0.1, 0.2, 0.3])}
        combos, parts = group_by_covariates(cov, 3)
        assert len(combos) == 3
        assert all(len(p) == 1 for p in parts)

    def test_all_equal(self):
        cov = {"x": np.array([1.0, 1.0, 1.0])}
        combos, parts = group_by_covariates(cov, 3)
        assert len(combos) == 1
        assert parts[0].tolist() == [0, 1, 2]

    def test_two_unique_of_three(self):
        cov = {"g": np.array(["a", "b", "a"], dtype=object)}
        combos, parts = group_by_covariates(cov, 3)
        assert len(combos) == 2
        assert sorted(len(p) for p in parts) == [1, 2]

    def test_partition_covers_everything(self):
        rng = np.random.default_rng(0)
        cov = {
            "a": rng.integers(0, 3, 50).astype(float),
            "b": np.array(list(rng.choice(["u", "v"], 50)), dtype=object),
        }
        combos, parts = group_by_covariates(cov, 50)
        merged = sorted(int(i) for p in parts for i in p)
        assert merged == list(range(50))

    def test_exact_equality_no_epsilon_merge(self):
        cov = {"x": np.array([0.1, 0.1 + 1e-18, np.nextafter(0.1, 1.0)])}
        combos, parts = group_by_covariates(cov, 3)
        # adding 1e-18 is below half an ulp of 0.1; nextafter is one ulp away
        assert len(combos) == 2


class TestBinResponses:
    def test_counts_and_atoms(self):
        cuts = equidistant_cuts(MIXED, 4)
        y = np.array([0.0, 1.0, 0.1, 0.6, 0.61, 1.0])
        combo = bin_responses(MIXED, cuts, y)
        assert combo.counts[:4].tolist() == [1, 0, 2, 0]
        assert combo.counts[4:].tolist() == [1, 2]
        assert combo.total == 6

    def test_unique_observation_becomes_representative(self):
        cuts = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 1.0])
        combo = bin_responses(MIXED, cuts, np.array([0.37]))
        assert combo.midpoints[3] == 0.37
        assert combo.counts[3] == 1

    def test_two_distinct_values_fall_back_to_midpoint(self):
        cuts = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 1.0])
        combo = bin_responses(MIXED, cuts, np.array([0.31, 0.37]))
        assert combo.midpoints[3] == pytest.approx(0.35)
        assert combo.counts[3] == 2

    def test_repeated_identical_value_kept_as_representative(self):
        cuts = np.array([0.0, 0.5, 1.0])
        combo = bin_responses(MIXED, cuts, np.array([0.2, 0.2, 0.2]))
        assert combo.midpoints[0] == 0.2
        assert combo.counts[0] == 3

    def test_no_continuous_observations(self):
        cuts = equidistant_cuts(MIXED, 3)
        combo = bin_responses(MIXED, cuts, np.array([0.0, 0.0, 1.0]))
        assert combo.counts[:3].tolist() == [0, 0, 0]
        assert combo.counts[3:].tolist() == [2, 1]

    def test_atom_values_never_counted_in_bins(self):
        cuts = equidistant_cuts(MIXED, 10)
        y = np.concatenate([np.zeros(5), np.ones(4), np.array([0.05, 0.95])])
        combo = bin_responses(MIXED, cuts, y)
        assert combo.counts[:10].sum() == 2
        assert combo.counts[10] == 5 and combo.counts[11] == 4

    def test_last_bin_closed(self):
        dom = MixedDomain.continuous(0.0, 1.0)
        cuts = equidistant_cuts(dom, 4)
        combo = bin_responses(dom, cuts, np.array([1.0, 0.999]))
        assert combo.counts[3] == 2

    def test_outside_domain_raises(self):
        cuts = equidistant_cuts(MIXED, 4)
        with pytest.raises(ObservationOutsideDomain):
            bin_responses(MIXED, cuts, np.array([1.5]))

    def test_discrete_domain_rejects_non_atom(self):
        dom = MixedDomain.discrete([(0.0, 1.0), (1.0, 1.0)])
        with pytest.raises(ObservationOutsideDomain):
            bin_responses(dom, np.empty(0), np.array([0.5]))

    def test_widths_cover_interval(self):
        cuts = equidistant_cuts(MIXED, 100)
        combo = bin_responses(MIXED, cuts, np.array([0.5]))
        assert math.fsum(combo.widths[:100].tolist()) == pytest.approx(1.0, abs=1e-14)
        assert combo.widths[100:].tolist() == [1.0, 1.0]

    def test_representative_inside_cell(self):
        rng = np.random.default_rng(1)
        cuts = equidistant_cuts(MIXED, 13)
        y = rng.uniform(0, 1, 200)
        combo = bin_responses(MIXED, cuts, y)
        for g in range(13):
            assert cuts[g] <= combo.midpoints[g] <= cuts[g + 1]


class TestSampleWeights:
    def test_unit_weights_change_nothing(self):
        cuts = equidistant_cuts(MIXED, 5)
        combo = bin_responses(MIXED, cuts, np.array([0.1, 0.3, 1.0]))
        weighted = apply_sample_weights(combo, np.ones(3))
        np.testing.assert_array_equal(weighted.likelihood_weights, 1.0)
        np.testing.assert_array_equal(weighted.offsets, combo.offsets)

    def test_weighted_cell_example(self):
        cuts = np.array([0.0, 1.0])
        dom = MixedDomain.continuous(0.0, 1.0)
        combo = bin_responses(dom, cuts, np.array([0.2, 0.7]))
        weighted = apply_sample_weights(combo, np.array([2.0, 0.5]))
        assert weighted.likelihood_weights[0] == pytest.approx(1.25)
        assert weighted.likelihood_weights[0] * weighted.counts[0] == pytest.approx(2.5)

    def test_empty_cell_weight_one(self):
        cuts = equidistant_cuts(MIXED, 4)
        combo = bin_responses(MIXED, cuts, np.array([0.9]))
        weighted = apply_sample_weights(combo, np.array([3.0]))
        assert weighted.likelihood_weights[0] == 1.0  # empty bin
        assert weighted.likelihood_weights[3] == 3.0

    def test_total_effective_count_matches_weight_sum(self):
        rng = np.random.default_rng(2)
        cuts = equidistant_cuts(MIXED, 7)
        y = np.concatenate([rng.uniform(0, 1, 30), np.zeros(3), np.ones(2)])
        w = rng.uniform(0.5, 3.0, 35)
        combo = bin_responses(MIXED, cuts, y)
        weighted = apply_sample_weights(combo, w)
        assert weighted.effective_counts().sum() == pytest.approx(w.sum(), abs=1e-12)

    def test_nonpositive_weight_rejected(self):
        cuts = equidistant_cuts(MIXED, 4)
        combo = bin_responses(MIXED, cuts, np.array([0.5]))
        with pytest.raises(NonPositiveWeight):
            apply_sample_weights(combo, np.array([0.0]))

    def test_offsets_lose_log_weight(self):
        cuts = np.array([0.0, 1.0])
        dom = MixedDomain.continuous(0.0, 1.0)
        combo = bin_responses(dom, cuts, np.array([0.2, 0.7]))
        weighted = apply_sample_weights(combo, np.array([2.0, 0.5]))
        assert weighted.offsets[0] == pytest.approx(
            combo.offsets[0] - math.log(1.25), abs=1e-14
        )


class TestSplitPartition:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.cuts = equidistant_cuts(MIXED, 6)
        self.y = np.concatenate([rng.uniform(0, 1, 20), np.zeros(4), np.ones(3)])
        self.combo = bin_responses(MIXED, self.cuts, self.y, indices=np.arange(27))

    def test_trivial_partition_is_identity(self):
        parts = split_partition(self.combo, [np.arange(27)])
        np.testing.assert_array_equal(parts[0].counts, self.combo.counts)

    def test_singletons_have_unit_totals(self):
        parts = split_partition(self.combo, [np.array([i]) for i in range(27)])
        assert all(p.total == 1 for p in parts)

    def test_random_split_recombines(self):
        rng = np.random.default_rng(4)
        perm = rng.permutation(27)
        parts = split_partition(self.combo, [perm[:11], perm[11:]])
        np.testing.assert_array_equal(
            parts[0].counts + parts[1].counts, self.combo.counts
        )
        np.testing.assert_array_equal(parts[0].midpoints, self.combo.midpoints)

    def test_not_a_partition_rejected(self):
        with pytest.raises(NotAPartition):
            split_partition(self.combo, [np.arange(10)])
        with pytest.raises(NotAPartition):
            split_partition(self.combo, [np.arange(27), np.array([0])])


class TestBuildBinnedDesign:
    def test_full_pipeline_invariants(self):
        rng = np.random.default_rng(5)
        n = 120
        y = np.where(rng.random(n) < 0.2, rng.integers(0, 2, n).astype(float),
                     rng.uniform(0, 1, n))
        obs = Observations(
            y, {"g": np.array(list(rng.choice(["a", "b", "c"], n)), dtype=object)}
        )
        design = build_binned_design(obs, MIXED, num_bins=20)
        assert design.num_combos == 3
        assert sum(c.total for c in design.combos) == n
        design.validate()

    def test_export_rows_shape(self):
        obs = Observations(np.array([0.5, 0.0]), {"g": np.array(["a", "a"], dtype=object)})
        design = build_binned_design(obs, MIXED, num_bins=5)
        rows = list(design.export_rows())
        assert len(rows) == 7  # 5 bins + 2 atoms
        assert rows[0][0] == 0  # combo index

    def test_weights_flow_through(self):
        obs = Observations(
            np.array([0.5, 0.5, 0.0]),
            {"g": np.array(["a", "a", "a"], dtype=object)},
            weights=np.array([2.0, 1.0, 0.5]),
        )
        design = build_binned_design(obs, MIXED, num_bins=2)
        combo = design.combos[0]
        assert combo.likelihood_weights[1] == pytest.approx(1.5)
        assert combo.likelihood_weights[2] == pytest.approx(0.5)


class TestNestedCuts:
    def test_exact_nesting(self):
        cuts = nested_cuts(MIXED, [25, 50, 100, 200])
        fine = cuts[200]
        for g in (25, 50, 100):
            assert set(cuts[g].tolist()) <= set(fine.tolist())
            assert len(cuts[g]) == g + 1

    def test_non_divisor_rejected(self):
        with pytest.raises(ConfigError):
            nested_cuts(MIXED, [30, 100])


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text(
            "y,g,x,w\n0.5,a,1.0,2.0\n0.0,b,2.0,1.0\n1.0,a,1.0,0.5\n",
            encoding="utf-8",
        )
        obs = read_csv(path, "y", weight_col="w")
        assert obs.size == 3
        assert obs.covariates["g"].tolist() == ["a", "b", "a"]
        np.testing.assert_array_equal(obs.covariates["x"], [1.0, 2.0, 1.0])
        np.testing.assert_array_equal(obs.weights, [2.0, 1.0, 0.5])

    def test_missing_column(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_csv(path, "y")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_csv(path, "y")

    def test_header_only(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("y,x\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            read_csv(path, "y")
