"""Simulation harness: binned sampling, error metrics, coverage experiments.

Responses are drawn directly over the cells of the binned design: because
fitting only sees counts, it suffices to sample from the bin representatives
united with the atoms, with cell probabilities equal to the reference-
measure integrals of the truth density over the cells.  Truths are given as
coefficient vectors over the model's own response basis so the true
coefficient images exist for coverage checks.

Random streams use the counter-based Philox generator; each replication
draws from an independent child stream spawned from (seed, replication).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import ResponseBasis, covariate_design, term_slices
from .bayes_space import BayesDensity, GridFunction
from .binning import Observations, build_binned_design, equidistant_cuts
from .errors import ZeroTruthNorm
from .fit import fit_poisson
from .inference import chi2_quantile, effect_transform, selector_matrix


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent, reproducible stream for one replication."""
    seq = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    return np.random.Generator(np.random.Philox(seq))


def _sq_norm(g: GridFunction) -> float:
    prod = GridFunction(g.domain, g.cont_values**2, g.atom_values**2)
    return prod.integrate()


def cell_probabilities(basis: ResponseBasis, coef: np.ndarray, cuts: np.ndarray,
                       nodes_per_bin: int = 33) -> np.ndarray:
    """Reference-measure integrals of the density over histogram bins and atoms.

    The density is exp of the clr expansion of ``coef``; each bin is
    integrated by Simpson's rule on its own subgrid, atoms contribute their
    weighted point values, and the vector is normalized to sum to one.
    """
    domain = basis.domain
    num_bins = max(len(cuts) - 1, 0)
    raw = np.zeros(num_bins + domain.num_atoms)
    w = np.ones(nodes_per_bin)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    for g in range(num_bins):
        nodes = np.linspace(cuts[g], cuts[g + 1], nodes_per_bin)
        vals = basis.eval_matrix(nodes, is_atom=np.zeros(len(nodes), bool)) @ coef
        h = (cuts[g + 1] - cuts[g]) / (nodes_per_bin - 1)
        raw[g] = (w * (h / 3.0)) @ np.exp(vals)
    if domain.num_atoms:
        atom_vals = basis.eval_matrix(
            domain.atom_locations, is_atom=np.ones(domain.num_atoms, bool)
        ) @ coef
        raw[num_bins:] = domain.atom_weights * np.exp(atom_vals)
    return raw / raw.sum()


def sample_binned(basis: ResponseBasis, coef: np.ndarray, count: int,
                  cuts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw responses from the bin midpoints and atoms of a truth density."""
    domain = basis.domain
    probs = cell_probabilities(basis, coef, cuts)
    values = np.concatenate([0.5 * (cuts[:-1] + cuts[1:]), domain.atom_locations])
    idx = rng.choice(len(values), size=count, p=probs)
    return values[idx]


def rel_mse(estimates, truths) -> float:
    """Ratio of summed squared distances to summed squared truth norms.

    Arguments are matched lists of densities or clr grid functions; the
    distance and norm are those of the density space.
    """
    if len(estimates) != len(truths):
        raise ValueError("estimate and truth lists must match")

    def _clr(obj):
        return obj.clr if isinstance(obj, BayesDensity) else obj

    num = 0.0
    den = 0.0
    for est, tru in zip(estimates, truths):
        e, t = _clr(est), _clr(tru)
        num += _sq_norm(t - e)
        den += _sq_norm(t)
    if den <= 0:
        raise ZeroTruthNorm("truth norms vanish; relMSE undefined")
    return num / den


# ---------------------------------------------------------------------------
# Scenarios


@dataclass
class SimScenario:
    """A complete synthetic-data experiment description."""

    basis: ResponseBasis
    terms: list
    combos: list  # covariate dicts; sampled uniformly
    theta_true: np.ndarray
    num_obs: int
    num_bins: int
    replications: int
    seed: int
    alpha: float = 0.95

    def combo_table(self) -> dict:
        table = {
            name: np.array([c[name] for c in self.combos], dtype=object)
            for name in self.combos[0]
        }
        for name in table:
            try:
                table[name] = table[name].astype(float)
            except (TypeError, ValueError):
                pass
        return table

    def combo_coefficients(self, blocks) -> list[np.ndarray]:
        """Response-basis coefficients of the true density per combination."""
        ky = self.basis.size
        return [
            effect_transform(blocks, ky, [b.index for b in blocks], combo)
            @ self.theta_true
            for combo in self.combos
        ]


def draw_dataset(scenario: SimScenario, blocks, rng) -> Observations:
    """One synthetic data set: uniform combos, binned response draws."""
    combo_ids = rng.integers(0, len(scenario.combos), size=scenario.num_obs)
    cuts = equidistant_cuts(scenario.basis.domain, scenario.num_bins)
    coefs = scenario.combo_coefficients(blocks)
    response = np.zeros(scenario.num_obs)
    for l in range(len(scenario.combos)):
        mask = combo_ids == l
        if mask.any():
            response[mask] = sample_binned(
                scenario.basis, coefs[l], int(mask.sum()), cuts, rng
            )
    names = list(scenario.combos[0])
    covariates = {}
    for name in names:
        col = np.array([scenario.combos[l][name] for l in combo_ids], dtype=object)
        try:
            col = col.astype(float)
        except (TypeError, ValueError):
            pass
        covariates[name] = col
    return Observations(response, covariates)


@dataclass
class CoverageResult:
    pointwise: dict       # term index -> coverage over combos x replications
    simultaneous: dict    # term index -> coverage over replications
    prediction: float
    rel_mse_prediction: list
    rel_mse_terms: dict   # term index -> per-replication relMSE
    failures: int
    replications: int


def coverage_experiment(scenario: SimScenario, fit_kwargs=None) -> CoverageResult:
    """Empirical coverage of pointwise and simultaneous regions plus relMSE.

    Pointwise regions (per combination, simultaneous over the domain) are
    checked against the true effect image; per-term regions over the whole
    coefficient block are checked against the true subvector.  Fit failures
    are counted and skipped.
    """
    fit_kwargs = fit_kwargs or {}
    blocks0 = covariate_design(scenario.terms, scenario.combo_table())
    ky = scenario.basis.size
    slices = term_slices(blocks0, ky)
    truth = scenario.theta_true
    coefs_true = scenario.combo_coefficients(blocks0)
    num_terms = len(blocks0)

    radius_pw = chi2_quantile(scenario.alpha, ky)
    radius_term = {
        j: chi2_quantile(scenario.alpha, slices[j].stop - slices[j].start)
        for j in range(num_terms)
    }

    pw_hits = {j: 0 for j in range(num_terms)}
    pw_total = {j: 0 for j in range(num_terms)}
    sim_hits = {j: 0 for j in range(num_terms)}
    pred_hits = 0
    pred_total = 0
    relmse_pred = []
    relmse_terms = {j: [] for j in range(num_terms)}
    failures = 0
    done = 0

    for rep in range(scenario.replications):
        rng = replication_rng(scenario.seed, rep)
        obs = draw_dataset(scenario, blocks0, rng)
        try:
            blocks = covariate_design(scenario.terms, obs.covariates)
            binned = build_binned_design(obs, scenario.basis.domain, scenario.num_bins)
            fit = fit_poisson(binned, scenario.basis, blocks, **fit_kwargs)
        except Exception:
            failures += 1
            continue
        done += 1

        for j in range(num_terms):
            s = selector_matrix(blocks, ky, j)
            vj = s @ fit.theta_cov @ s.T
            dj = s @ (truth - fit.theta)
            stat = float(dj @ np.linalg.solve(vj, dj))
            sim_hits[j] += stat <= radius_term[j]

            err_num = 0.0
            err_den = 0.0
            for combo in scenario.combos:
                a = effect_transform(blocks, ky, [j], combo)
                cov = a @ fit.theta_cov @ a.T
                diff = a @ (truth - fit.theta)
                stat = float(diff @ np.linalg.solve(cov, diff))
                pw_hits[j] += stat <= radius_pw
                pw_total[j] += 1
                err_num += _sq_norm(scenario.basis.expand(diff))
                err_den += _sq_norm(scenario.basis.expand(a @ truth))
            if err_den > 0:
                relmse_terms[j].append(err_num / err_den)

        err_num = 0.0
        err_den = 0.0
        for l, combo in enumerate(scenario.combos):
            a = effect_transform(blocks, ky, [b.index for b in blocks], combo)
            cov = a @ fit.theta_cov @ a.T
            diff = coefs_true[l] - a @ fit.theta
            stat = float(diff @ np.linalg.solve(cov, diff))
            pred_hits += stat <= radius_pw
            pred_total += 1
            err_num += _sq_norm(scenario.basis.expand(diff))
            err_den += _sq_norm(scenario.basis.expand(coefs_true[l]))
        relmse_pred.append(err_num / err_den)

    if done == 0:
        raise ZeroTruthNorm("all replications failed; nothing to summarize")
    return CoverageResult(
        pointwise={j: pw_hits[j] / pw_total[j] for j in pw_hits},
        simultaneous={j: sim_hits[j] / done for j in sim_hits},
        prediction=pred_hits / max(pred_total, 1),
        rel_mse_prediction=relmse_pred,
        rel_mse_terms=relmse_terms,
        failures=failures,
        replications=scenario.replications,
    )
