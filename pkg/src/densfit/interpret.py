"""Ceteris-paribus interpretation of fitted effects.

The log odds ratio between two domain points is the vertical difference of
the clr-transformed effect and does not depend on the remaining model
terms.  Any threshold on the clr effect splits the domain into a region
where perturbation with the effect raises probability mass and a region
where it lowers it.  Effects fitted against one reference coding can be
re-expressed against a reference value of a continuous covariate without
changing predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import DesignBlock, ResponseBasis
from .bayes_space import GridFunction
from .errors import MissingTerm
from .fit import FitResult
from .inference import EffectRegion, effect_region, effect_transform, _make_region


@dataclass
class ClrEffect:
    """A clr-level partial effect at fixed covariates."""

    values: GridFunction
    term_indices: tuple
    covariates: dict

    def at(self, y: float) -> float:
        return self.values.evaluate(y)


def effect_function(fit: FitResult, blocks: list[DesignBlock], basis: ResponseBasis,
                    term_indices, covariates: dict, signs=None) -> ClrEffect:
    """Materialize the clr effect of a term subset at fixed covariates."""
    a = effect_transform(blocks, basis.size, term_indices, covariates, signs)
    coef = a @ fit.theta
    per_term = isinstance(covariates, (list, tuple))
    shown = covariates[0] if per_term else covariates
    return ClrEffect(basis.expand(coef), tuple(term_indices), dict(shown))


def odds_ratio(effect: ClrEffect, s: float, t: float):
    """Infinitesimal odds ratio between domain points ``s`` and ``t``.

    Returns the pair (log odds ratio, odds ratio).
    """
    log_or = effect.at(s) - effect.at(t)
    return log_or, float(np.exp(log_or))


@dataclass
class MassShiftSets:
    """Threshold decomposition of the domain into gain and loss regions."""

    threshold: float
    plus_intervals: list
    plus_atoms: np.ndarray
    minus_intervals: list
    minus_atoms: np.ndarray


def _runs_to_intervals(grid: np.ndarray, mask: np.ndarray) -> list:
    intervals = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            intervals.append((float(grid[start]), float(grid[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(grid[start]), float(grid[-1])))
    return intervals


def mass_shift_sets(effect: ClrEffect, threshold: float) -> MassShiftSets:
    """Split the domain at a clr threshold into mass-gaining and mass-losing sets.

    The gain set collects all points where the clr effect is at least the
    threshold, reported as maximal grid intervals plus an atom membership
    mask; the loss set is the complement.
    """
    g = effect.values
    mask_grid = g.cont_values >= threshold
    plus_atoms = g.atom_values >= threshold
    grid = g.domain.grid
    return MassShiftSets(
        threshold=threshold,
        plus_intervals=_runs_to_intervals(grid, mask_grid),
        plus_atoms=plus_atoms,
        minus_intervals=_runs_to_intervals(grid, ~mask_grid),
        minus_atoms=~plus_atoms,
    )


# ---------------------------------------------------------------------------
# Reference-coding transforms


def _pair_terms(blocks: list[DesignBlock], covariate: str):
    """Match each smooth term in the covariate with its intercept-type term.

    A plain smooth pairs with the intercept; a group-specific smooth pairs
    with the categorical term over the same grouping variable.
    """
    pairs = {}
    for b in blocks:
        if b.term.kind != "smooth" or b.term.covariate != covariate:
            continue
        if b.term.by is None:
            partners = [c for c in blocks if c.term.kind == "intercept"]
        else:
            partners = [
                c
                for c in blocks
                if c.term.kind == "categorical"
                and c.term.covariate == b.term.by
                and c.term.by is None
            ]
        if not partners:
            raise MissingTerm(
                f"no intercept-type partner for smooth term {b.term.name()!r}"
            )
        pairs[b.index] = partners[0].index
    if not pairs:
        raise MissingTerm(f"model has no smooth term in {covariate!r}")
    return pairs


@dataclass
class TransformedEffect:
    term_index: int
    role: str  # "intercept-like" or "smooth"
    effect: ClrEffect
    region: EffectRegion | None  # None when degenerate (smooth at its reference)


def transform_reference(fit: FitResult, blocks: list[DesignBlock],
                        basis: ResponseBasis, covariate: str, ref_value: float,
                        covariates: dict, alpha: float = 0.95) -> list[TransformedEffect]:
    """Re-express effects relative to a reference value of a continuous covariate.

    Intercept-type effects absorb their paired smooth evaluated at the
    reference; smooth effects lose their own value there.  Predictions are
    unchanged; regions are rebuilt from the signed transform rows.
    """
    ky = basis.size
    pairs = _pair_terms(blocks, covariate)
    ref_cov = dict(covariates)
    ref_cov[covariate] = ref_value
    out = []

    def _region_or_none(coef, a):
        cov = a @ fit.theta_cov @ a.T
        if np.trace(cov) <= 1e-300:  # degenerate, e.g. a smooth at its reference
            return None
        return _make_region(coef, cov, alpha)

    for smooth_idx, partner_idx in pairs.items():
        a_int = effect_transform(
            blocks, ky, [partner_idx, smooth_idx], [covariates, ref_cov], signs=[1.0, 1.0]
        )
        coef = a_int @ fit.theta
        out.append(
            TransformedEffect(
                partner_idx,
                "intercept-like",
                ClrEffect(basis.expand(coef), (partner_idx, smooth_idx), dict(covariates)),
                _region_or_none(coef, a_int),
            )
        )
        a_sm = effect_transform(
            blocks, ky, [smooth_idx, smooth_idx], [covariates, ref_cov], signs=[1.0, -1.0]
        )
        coef = a_sm @ fit.theta
        out.append(
            TransformedEffect(
                smooth_idx,
                "smooth",
                ClrEffect(basis.expand(coef), (smooth_idx,), dict(covariates)),
                _region_or_none(coef, a_sm),
            )
        )
    return out


def predict_clr(fit: FitResult, blocks: list[DesignBlock], basis: ResponseBasis,
                covariates: dict) -> GridFunction:
    """Clr-level prediction: the sum of all partial effects at the covariates."""
    a = effect_transform(blocks, basis.size, [b.index for b in blocks], covariates)
    return basis.expand(a @ fit.theta)
