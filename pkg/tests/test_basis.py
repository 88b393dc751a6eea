"""Basis construction: splines, constraints, embeddings, designs, penalties."""

import numpy as np
import pytest

from densfit.basis import (
    DesignBlock,
    ModelSpec,
    ResponseBasis,
    TermSpec,
    bspline_design,
    bspline_eval,
    blocks_from_meta,
    check_rank_conditions,
    constrain_zero_integral,
    covariate_design,
    design_row,
    difference_penalty,
    embed_mixed,
    make_knots,
    nullspace_transform,
    penalty_block,
    stacked_design,
    tensor_rows,
    term_slices,
    _build_continuous_part,
    _build_discrete_part,
)
from densfit.bayes_space import GridFunction, INTEGRAL_TOL, MixedDomain
from densfit.errors import (
    ConfigError,
    DegenerateBasis,
    NegativeSmoothing,
    OutOfSpan,
    UnknownLevel,
    WeightMismatch,
)

MIXED = MixedDomain(interval=(0.0, 1.0), atoms=[(0.0, 1.0), (1.0, 1.0)])
UNIT = MixedDomain.continuous(0.0, 1.0)


def naive_bspline(knots, degree, m, x):
    """Textbook recursive definition, used as the oracle."""
    if degree == 0:
        last = m + 1 == len(knots) - 1 or knots[m + 1] == knots[-1]
        if knots[m] <= x < knots[m + 1] or (last and x == knots[m + 1]):
            return 1.0
        return 0.0
    left = 0.0
    if knots[m + degree] > knots[m]:
        left = (x - knots[m]) / (knots[m + degree] - knots[m]) * naive_bspline(
            knots, degree - 1, m, x
        )
    right = 0.0
    if knots[m + degree + 1] > knots[m + 1]:
        right = (knots[m + degree + 1] - x) / (
            knots[m + degree + 1] - knots[m + 1]
        ) * naive_bspline(knots, degree - 1, m + 1, x)
    return left + right


def elimination_rank(matrix, tol=1e-9):
    """Row-reduction rank with partial pivoting, independent of numpy's SVD."""
    a = np.array(matrix, dtype=float)
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        pivot = rank + np.argmax(np.abs(a[rank:, c]))
        if abs(a[pivot, c]) < tol:
            continue
        a[[rank, pivot]] = a[[pivot, rank]]
        a[rank] /= a[rank, c]
        for r in range(rows):
            if r != rank:
                a[r] -= a[r, c] * a[rank]
        rank += 1
    return rank


class TestBsplines:
    def test_degree_zero_indicator(self):
        knots = make_knots(0.0, 1.0, 4, 0)
        vals = bspline_eval(knots, 0, 0.3)
        assert vals.tolist() == [0.0, 1.0, 0.0, 0.0]

    def test_partition_of_unity(self):
        for degree in (1, 2, 3):
            knots = make_knots(0.0, 1.0, 7, degree)
            for x in np.linspace(0, 1, 41):
                assert bspline_eval(knots, degree, x).sum() == pytest.approx(1.0, abs=1e-12)

    def test_nonnegative(self):
        knots = make_knots(-2.0, 3.0, 9, 3)
        vals = bspline_design(knots, 3, np.linspace(-2, 3, 101))
        assert np.all(vals >= -1e-15)

    def test_against_naive_recursion(self):
        rng = np.random.default_rng(0)
        for degree in (1, 2, 3):
            knots = make_knots(0.0, 1.0, 6 + degree, degree)
            num = len(knots) - degree - 1
            for x in rng.uniform(0, 1, 25):
                mine = bspline_eval(knots, degree, x)
                oracle = [naive_bspline(knots, degree, m, x) for m in range(num)]
                np.testing.assert_allclose(mine, oracle, atol=1e-12)

    def test_cubic_symmetry_at_center(self):
        knots = make_knots(0.0, 1.0, 7, 3)
        vals = bspline_eval(knots, 3, 0.5)
        np.testing.assert_allclose(vals, vals[::-1], atol=1e-12)

    def test_out_of_span(self):
        knots = make_knots(0.0, 1.0, 5, 2)
        with pytest.raises(OutOfSpan):
            bspline_eval(knots, 2, 1.2)

    def test_endpoints_evaluate(self):
        knots = make_knots(0.0, 1.0, 5, 3)
        assert bspline_eval(knots, 3, 0.0)[0] == pytest.approx(1.0)
        assert bspline_eval(knots, 3, 1.0)[-1] == pytest.approx(1.0)


class TestDifferencePenalty:
    def test_second_order_four_by_four(self):
        expected = np.array(
            [
                [1, -2, 1, 0],
                [-2, 5, -4, 1],
                [1, -4, 5, -2],
                [0, 1, -2, 1],
            ],
            dtype=float,
        )
        np.testing.assert_array_equal(difference_penalty(4, 2), expected)

    def test_positive_semidefinite(self):
        for size, order in [(4, 1), (6, 2), (8, 3)]:
            eigs = np.linalg.eigvalsh(difference_penalty(size, order))
            assert eigs.min() >= -1e-10

    def test_null_space_is_low_order_polynomials(self):
        p = difference_penalty(6, 2)
        coefs = np.arange(6, dtype=float)  # linear sequence
        assert coefs @ p @ coefs == pytest.approx(0.0, abs=1e-12)


class TestZeroIntegralConstraint:
    def test_constant_and_linear_on_unit_interval(self):
        raw = [
            GridFunction.constant(UNIT, 1.0),
            GridFunction.from_callable(UNIT, lambda x: x),
        ]
        constrained, z = constrain_zero_integral(raw)
        assert len(constrained) == 1
        assert z.shape == (2, 1)
        # hand QR of c = (1, 0.5): complement direction prop. to (-0.5, 1)
        target = GridFunction.from_callable(UNIT, lambda x: x - 0.5)
        got = constrained[0]
        scale = got.cont_values[-1] / target.cont_values[-1]
        np.testing.assert_allclose(got.cont_values, scale * target.cont_values, atol=1e-10)
        assert abs(got.integrate()) <= INTEGRAL_TOL

    def test_orthonormal_and_orthogonal_to_integrals(self):
        dom = UNIT
        raw = [
            GridFunction.from_callable(dom, fn)
            for fn in (lambda x: np.ones_like(x), np.cos, np.exp, lambda x: x**2)
        ]
        constrained, z = constrain_zero_integral(raw)
        c = np.array([f.integrate() for f in raw])
        np.testing.assert_allclose(z.T @ z, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(c @ z, 0.0, atol=1e-10)
        assert elimination_rank(z) == 3

    def test_atom_indicators(self):
        dom = MixedDomain.discrete([(0.0, 0.5), (1.0, 1.5), (2.0, 2.0)])
        raw = []
        for d in range(3):
            vals = np.zeros(3)
            vals[d] = 1.0
            raw.append(GridFunction(dom, np.empty(0), vals))
        constrained, z = constrain_zero_integral(raw)
        assert len(constrained) == 2
        for f in constrained:
            assert abs((dom.atom_weights * f.atom_values).sum()) <= 1e-12

    def test_span_preserved_for_already_constrained(self):
        dom = UNIT
        raw = [
            GridFunction.from_callable(dom, lambda x: x - 0.5),
            GridFunction.from_callable(dom, lambda x: np.ones_like(x)),
        ]
        constrained, z = constrain_zero_integral(raw)
        # the zero-integral member of the span must be reproducible
        target = raw[0].cont_values
        basis_mat = np.column_stack([f.cont_values for f in constrained])
        coef, *_ = np.linalg.lstsq(basis_mat, target, rcond=None)
        np.testing.assert_allclose(basis_mat @ coef, target, atol=1e-8)

    def test_zero_integral_vector_rejected(self):
        with pytest.raises(DegenerateBasis):
            nullspace_transform(np.zeros(3))


class TestResponseBasis:
    def test_mixed_counts(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=6)
        assert basis.cont_count == 6
        assert basis.disc_count == 2
        assert basis.size == 8

    def test_every_function_integrates_to_zero(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=6)
        for f in basis.functions:
            assert abs(f.integrate()) <= INTEGRAL_TOL

    def test_continuous_embedded_vanish_on_atoms(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=5)
        for f in basis.functions[:5]:
            np.testing.assert_array_equal(f.atom_values, 0.0)

    def test_discrete_embedded_constant_on_interval(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=5)
        for f in basis.functions[5:]:
            assert np.ptp(f.cont_values) == 0.0

    def test_discrete_integral_identity(self):
        # the interval value times its length plus weighted atom values is zero
        basis = ResponseBasis.mixed(MIXED, num_basis=5)
        for f in basis.functions[5:]:
            total = f.cont_values[0] * MIXED.interval_length + (
                MIXED.atom_weights * f.atom_values
            ).sum()
            assert total == pytest.approx(0.0, abs=1e-12)

    def test_weight_mismatch_rejected(self):
        cont = _build_continuous_part(MIXED, 5, 3, 2)
        disc = _build_discrete_part(np.array([1.0, 1.0, 0.5]), 2)
        with pytest.raises(WeightMismatch):
            embed_mixed(cont, disc, MIXED)

    def test_discrete_only_basis(self):
        dom = MixedDomain.discrete([(0.0, 1.0), (1.0, 1.0)])
        basis = ResponseBasis.discrete(dom)
        assert basis.size == 1
        f = basis.functions[0]
        assert abs((dom.atom_weights * f.atom_values).sum()) <= 1e-12

    def test_penalty_block_diagonal_and_psd(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=6)
        p = basis.penalty
        np.testing.assert_array_equal(p[:6, 6:], 0.0)
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.normal(size=8)
            assert v @ p @ v >= -1e-10

    def test_eval_matrix_matches_grid_functions(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=6)
        nodes = MIXED.grid[::100]
        mat = basis.eval_matrix(nodes, is_atom=np.zeros(len(nodes), bool))
        for m, f in enumerate(basis.functions):
            np.testing.assert_allclose(mat[:, m], f.cont_values[::100], atol=1e-12)
        atom_mat = basis.eval_matrix(MIXED.atom_locations, is_atom=np.ones(2, bool))
        for m, f in enumerate(basis.functions):
            np.testing.assert_allclose(atom_mat[:, m], f.atom_values, atol=1e-12)

    def test_expand_round_trip(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=6)
        rng = np.random.default_rng(2)
        coef = rng.normal(size=basis.size)
        g = basis.expand(coef)
        manual_cont = sum(c * f.cont_values for c, f in zip(coef, basis.functions))
        np.testing.assert_allclose(g.cont_values, manual_cont, atol=1e-14)
        assert abs(g.integrate()) <= INTEGRAL_TOL

    def test_response_degree_must_be_at_least_two(self):
        with pytest.raises(ValueError):
            ResponseBasis.continuous(UNIT, 5, degree=1)


class TestCovariateDesign:
    def make_table(self, n=40, seed=4):
        rng = np.random.default_rng(seed)
        return {
            "age": rng.uniform(20, 60, n),
            "region": np.array(list(rng.choice(["east", "west"], n)), dtype=object),
        }

    def test_intercept_column_of_ones(self):
        blocks = covariate_design([TermSpec("intercept")], self.make_table())
        np.testing.assert_array_equal(blocks[0].matrix, np.ones((40, 1)))

    def test_categorical_reference_row_zero(self):
        table = self.make_table()
        blocks = covariate_design(
            [TermSpec("categorical", covariate="region", reference="west")], table
        )
        rows = blocks[0].matrix
        for i, v in enumerate(table["region"]):
            if v == "west":
                np.testing.assert_array_equal(rows[i], 0.0)
            else:
                assert rows[i].sum() == 1.0

    def test_unknown_level_raises(self):
        blocks = covariate_design(
            [TermSpec("categorical", covariate="region", levels=("east", "west"))],
            self.make_table(),
        )
        with pytest.raises(UnknownLevel):
            blocks[0].row({"region": "north"})

    def test_smooth_centering_column_sums_vanish(self):
        table = self.make_table()
        blocks = covariate_design(
            [TermSpec("smooth", covariate="age", num_basis=6)], table
        )
        np.testing.assert_allclose(blocks[0].matrix.sum(axis=0), 0.0, atol=1e-10)
        assert blocks[0].ncols == 5  # one column absorbed by the constraint

    def test_smooth_rejects_too_few_unique_values(self):
        table = {"age": np.array([1.0, 2.0, 3.0] * 10)}
        with pytest.raises(DegenerateBasis):
            covariate_design([TermSpec("smooth", covariate="age", num_basis=6)], table)

    def test_by_smooth_per_level_centering(self):
        table = self.make_table()
        blocks = covariate_design(
            [
                TermSpec(
                    "smooth",
                    covariate="age",
                    num_basis=5,
                    by="region",
                    by_reference="west",
                )
            ],
            table,
        )
        np.testing.assert_allclose(blocks[0].matrix.sum(axis=0), 0.0, atol=1e-10)
        # rows of the reference level are all zero
        mask = np.array([v == "west" for v in table["region"]])
        np.testing.assert_array_equal(blocks[0].matrix[mask], 0.0)

    def test_full_rank_on_generated_data(self):
        table = self.make_table(n=80, seed=9)
        terms = [
            TermSpec("intercept"),
            TermSpec("categorical", covariate="region", reference="west"),
            TermSpec("smooth", covariate="age", num_basis=6),
        ]
        blocks = covariate_design(terms, table)
        design = stacked_design(blocks)
        k_x = design.shape[1]
        assert elimination_rank(design) == k_x
        assert np.linalg.matrix_rank(design) == k_x

    def test_design_row_matches_matrix(self):
        table = self.make_table()
        terms = [
            TermSpec("intercept"),
            TermSpec("categorical", covariate="region", reference="west"),
            TermSpec("smooth", covariate="age", num_basis=6),
        ]
        blocks = covariate_design(terms, table)
        design = stacked_design(blocks)
        for i in (0, 7, 23):
            row = design_row(blocks, {"age": table["age"][i], "region": table["region"][i]})
            np.testing.assert_allclose(row, design[i], atol=1e-12)

    def test_linear_term_centering(self):
        table = self.make_table()
        blocks = covariate_design(
            [TermSpec("linear", covariate="age", center=True)], table
        )
        assert blocks[0].matrix.sum() == pytest.approx(0.0, abs=1e-8)

    def test_blocks_from_meta_round_trip(self):
        table = self.make_table()
        terms = [
            TermSpec("intercept"),
            TermSpec("categorical", covariate="region", reference="west"),
            TermSpec("smooth", covariate="age", num_basis=6),
        ]
        blocks = covariate_design(terms, table)
        rebuilt = blocks_from_meta([b.meta for b in blocks])
        point = {"age": 33.3, "region": "east"}
        np.testing.assert_allclose(
            design_row(rebuilt, point), design_row(blocks, point), atol=1e-12
        )


class TestPenaltyAssembly:
    def test_zero_smoothing_gives_zero_matrix(self):
        p = penalty_block(difference_penalty(3, 2), difference_penalty(4, 2), 0.0, 0.0)
        np.testing.assert_array_equal(p, 0.0)

    def test_negative_smoothing_rejected(self):
        with pytest.raises(NegativeSmoothing):
            penalty_block(np.eye(2), np.eye(2), -1.0, 0.0)

    def test_psd(self):
        rng = np.random.default_rng(3)
        p = penalty_block(difference_penalty(3, 1), difference_penalty(4, 2), 0.7, 1.3)
        for _ in range(50):
            v = rng.normal(size=12)
            assert v @ p @ v >= -1e-10

    def test_kron_structure(self):
        px = difference_penalty(3, 1)
        py = difference_penalty(2, 1)
        p = penalty_block(px, py, 2.0, 0.0)
        np.testing.assert_allclose(p, 2.0 * np.kron(px, np.eye(2)), atol=1e-14)


class TestTensorRows:
    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(5)
        b_x = rng.normal(size=3)
        b_y = rng.normal(size=(7, 4))
        rows = tensor_rows(b_x, b_y)
        for g in range(7):
            for n in range(3):
                for m in range(4):
                    assert rows[g, n * 4 + m] == pytest.approx(b_x[n] * b_y[g, m])

    def test_term_slices(self):
        table = {"x": np.linspace(0, 1, 30)}
        blocks = covariate_design(
            [TermSpec("intercept"), TermSpec("smooth", covariate="x", num_basis=5)],
            table,
        )
        slices = term_slices(blocks, 4)
        assert slices[0] == slice(0, 4)
        assert slices[1] == slice(4, 4 + 4 * blocks[1].ncols)


class TestRankConditions:
    def test_duplicated_column_violates_covariate_condition(self):
        x = np.linspace(0, 1, 20)
        design = np.column_stack([np.ones(20), x, x])
        report = check_rank_conditions(design, [])
        assert not report.covariate_ok

    def test_single_cell_violates_response_condition(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=5)
        evals = basis.eval_matrix(np.array([0.5]), is_atom=np.array([False]))
        report = check_rank_conditions(np.ones((5, 1)), [evals])
        assert not report.response_ok

    def test_default_binning_satisfies_response_condition(self):
        basis = ResponseBasis.mixed(MIXED, num_basis=12)
        cuts = np.linspace(0, 1, 101)
        mids = np.concatenate([0.5 * (cuts[:-1] + cuts[1:]), MIXED.atom_locations])
        flags = np.concatenate([np.zeros(100, bool), np.ones(2, bool)])
        evals = basis.eval_matrix(mids, is_atom=flags)
        report = check_rank_conditions(np.ones((5, 1)), [evals])
        assert report.response_ok
        assert report.combo_required == basis.size + 1

    def test_summary_mentions_violations(self):
        report = check_rank_conditions(np.ones((4, 2)), [])
        assert "VIOLATED" in report.summary()


class TestModelSpec:
    CFG = {
        "response": {
            "column": "y",
            "interval": [0.0, 1.0],
            "atoms": [[0.0, 1.0], [1.0, 1.0]],
            "basis": {"cont_count": 6, "degree": 3, "penalty_order": 2},
            "grid_size": 201,
        },
        "terms": [
            {"kind": "intercept"},
            {"kind": "categorical", "covariate": "g", "reference": "a"},
            {"kind": "smooth", "covariate": "x", "count": 5},
        ],
    }

    def test_round_trip_build(self):
        spec = ModelSpec.from_config(self.CFG)
        domain = spec.build_domain()
        basis = spec.build_basis(domain)
        assert domain.num_atoms == 2
        assert basis.size == 8
        assert spec.covariate_columns() == ["g", "x"]

    def test_bad_kind_rejected(self):
        cfg = {"response": {"column": "y", "interval": [0, 1]},
               "terms": [{"kind": "mystery"}]}
        with pytest.raises(ConfigError):
            ModelSpec.from_config(cfg)

    def test_missing_covariate_rejected(self):
        cfg = {"response": {"column": "y", "interval": [0, 1]},
               "terms": [{"kind": "smooth"}]}
        with pytest.raises(ConfigError):
            ModelSpec.from_config(cfg)
