"""Reduction of raw observations to per-combination count vectors.

Observations sharing identical covariate values form one combination; the
responses of each combination are summarized by a histogram over the
interval (excluding exact atom matches) plus one count per atom.  Each cell
records its count, a representative point (the single observed value if the
cell contains exactly one distinct value, otherwise the midpoint), the cell
width under the reference measure, a likelihood weight, and a predictor
offset.  Sample weights enter through the cell weights and offsets so the
weighted-count likelihood is recovered exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bayes_space import MixedDomain
from .errors import (
    ConfigError,
    NonPositiveWeight,
    NotAPartition,
    ObservationOutsideDomain,
)


@dataclass
class Observations:
    """Raw data: one response per row plus covariate columns."""

    response: np.ndarray
    covariates: dict
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.response = np.asarray(self.response, dtype=float)
        n = len(self.response)
        for name, col in self.covariates.items():
            if len(col) != n:
                raise ConfigError(f"covariate {name!r} has length {len(col)} != {n}")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if len(self.weights) != n:
                raise ConfigError("weights length does not match responses")
            if np.any(self.weights <= 0):
                raise NonPositiveWeight("sample weights must be strictly positive")

    @property
    def size(self) -> int:
        return len(self.response)


def read_csv(path, response_col: str, weight_col: str | None = None) -> Observations:
    """Load observations from a comma-separated file with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ConfigError(f"{path}: empty file")
        if response_col not in reader.fieldnames:
            raise ConfigError(f"{path}: missing response column {response_col!r}")
        if weight_col and weight_col not in reader.fieldnames:
            raise ConfigError(f"{path}: missing weight column {weight_col!r}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    response = np.array([float(r[response_col]) for r in rows])
    weights = np.array([float(r[weight_col]) for r in rows]) if weight_col else None
    covariates = {}
    for name in reader.fieldnames:
        if name in (response_col, weight_col):
            continue
        raw = [r[name] for r in rows]
        try:
            covariates[name] = np.array([float(v) for v in raw])
        except ValueError:
            covariates[name] = np.array(raw, dtype=object)
    return Observations(response, covariates, weights)


def group_by_covariates(covariates: dict, n: int):
    """Unique covariate combinations and the index partition they induce.

    Equality is exact value equality; combinations are ordered by first
    appearance.
    """
    names = list(covariates)
    combos: list[dict] = []
    index_sets: list[list[int]] = []
    seen: dict = {}
    for i in range(n):
        key = tuple(covariates[name][i] for name in names)
        if key not in seen:
            seen[key] = len(combos)
            combos.append({name: covariates[name][i] for name in names})
            index_sets.append([])
        index_sets[seen[key]].append(i)
    return combos, [np.array(ix) for ix in index_sets]


def equidistant_cuts(domain: MixedDomain, num_bins: int) -> np.ndarray:
    if not domain.has_interval:
        return np.empty(0)
    a, b = domain.interval
    return np.linspace(a, b, num_bins + 1)


def nested_cuts(domain: MixedDomain, bin_counts) -> dict:
    """Cut points for several bin counts, exactly nested in the finest one."""
    finest = max(bin_counts)
    fine = equidistant_cuts(domain, finest)
    out = {}
    for g in bin_counts:
        if finest % g:
            raise ConfigError(f"{g} bins do not nest in {finest}")
        out[g] = fine[:: finest // g]
    return out


@dataclass
class BinnedCombo:
    """Count vector of one covariate combination over all cells.

    Cells are ordered: histogram bins first, atoms after.  ``offsets`` hold
    the fixed part of the Poisson predictor (log cell width minus log
    likelihood weight).
    """

    covariates: dict
    cuts: np.ndarray
    counts: np.ndarray
    midpoints: np.ndarray
    widths: np.ndarray
    likelihood_weights: np.ndarray
    offsets: np.ndarray
    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    cell_of_obs: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def num_bins(self) -> int:
        return max(len(self.cuts) - 1, 0)

    @property
    def num_cells(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def is_atom_cell(self) -> np.ndarray:
        flags = np.zeros(self.num_cells, dtype=bool)
        flags[self.num_bins :] = True
        return flags

    def effective_counts(self) -> np.ndarray:
        return self.likelihood_weights * self.counts


def _assign_bins(cuts: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Bin index per value for half-open bins, last bin closed."""
    idx = np.searchsorted(cuts, values, side="right") - 1
    idx[values == cuts[-1]] = len(cuts) - 2
    return idx


def bin_responses(domain: MixedDomain, cuts: np.ndarray, y: np.ndarray,
                  covariates: dict | None = None,
                  indices: np.ndarray | None = None) -> BinnedCombo:
    """Histogram plus atom counts for the responses of one combination."""
    y = np.asarray(y, dtype=float)
    num_bins = max(len(cuts) - 1, 0)
    d = domain.num_atoms
    num_cells = num_bins + d

    atom_cell = np.full(len(y), -1, dtype=int)
    for k, t in enumerate(domain.atom_locations):
        atom_cell[y == t] = num_bins + k
    cont_mask = atom_cell < 0

    if np.any(cont_mask):
        if not domain.has_interval:
            bad = y[cont_mask][0]
            raise ObservationOutsideDomain(f"{bad} is not an atom of a discrete domain")
        a, b = domain.interval
        yc = y[cont_mask]
        if np.any(yc < a) or np.any(yc > b):
            bad = yc[(yc < a) | (yc > b)][0]
            raise ObservationOutsideDomain(f"{bad} outside [{a}, {b}]")

    cell_of_obs = atom_cell.copy()
    counts = np.zeros(num_cells)
    midpoints = np.zeros(num_cells)
    widths = np.zeros(num_cells)

    if num_bins:
        midpoints[:num_bins] = 0.5 * (cuts[:-1] + cuts[1:])
        widths[:num_bins] = np.diff(cuts)
        if np.any(cont_mask):
            bins = _assign_bins(cuts, y[cont_mask])
            cell_of_obs[cont_mask] = bins
            for g in range(num_bins):
                vals = y[cont_mask][bins == g]
                counts[g] = len(vals)
                uniq = np.unique(vals)
                if len(uniq) == 1:
                    midpoints[g] = uniq[0]
    if d:
        midpoints[num_bins:] = domain.atom_locations
        widths[num_bins:] = domain.atom_weights
        for k in range(d):
            counts[num_bins + k] = np.count_nonzero(atom_cell == num_bins + k)

    with np.errstate(divide="ignore"):
        offsets = np.log(widths)
    return BinnedCombo(
        covariates=dict(covariates or {}),
        cuts=np.asarray(cuts, dtype=float),
        counts=counts,
        midpoints=midpoints,
        widths=widths,
        likelihood_weights=np.ones(num_cells),
        offsets=offsets,
        indices=np.asarray(indices if indices is not None else np.arange(len(y)), dtype=int),
        cell_of_obs=cell_of_obs,
    )


def apply_sample_weights(combo: BinnedCombo, weights: np.ndarray) -> BinnedCombo:
    """Attach likelihood weights and predictor offsets for weighted samples.

    ``weights`` holds one weight per observation of this combination, in the
    order of ``combo.indices``.  Each cell's weight is the ratio of weighted
    to unweighted count (one for empty cells); the predictor offset loses
    the log of that ratio so that the weighted-count likelihood is
    reproduced up to a constant.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise NonPositiveWeight("sample weights must be strictly positive")
    if len(weights) != len(combo.cell_of_obs):
        raise ConfigError("one weight per observation of the combo required")
    v = np.ones(combo.num_cells)
    for g in range(combo.num_cells):
        mask = combo.cell_of_obs == g
        if np.any(mask):
            v[g] = weights[mask].sum() / mask.sum()
    offsets = combo.offsets - np.log(v)
    return replace(combo, likelihood_weights=v, offsets=offsets)


def split_partition(combo: BinnedCombo, subsets: list[np.ndarray]) -> list[BinnedCombo]:
    """Recompute counts over a partition of the combo's observation indices.

    Cells (representatives, widths, weights, offsets) are shared; only the
    counts split.  Used for the histogram-splitting invariance check.
    """
    all_idx = np.concatenate([np.asarray(s, dtype=int) for s in subsets]) if subsets else np.empty(0, int)
    if sorted(all_idx.tolist()) != sorted(combo.indices.tolist()):
        raise NotAPartition("subsets must partition the combo's index set")
    if len(np.unique(all_idx)) != len(all_idx):
        raise NotAPartition("subsets overlap")
    pos = {int(i): p for p, i in enumerate(combo.indices)}
    out = []
    for subset in subsets:
        counts = np.zeros(combo.num_cells)
        for i in subset:
            counts[combo.cell_of_obs[pos[int(i)]]] += 1
        out.append(replace(combo, counts=counts, indices=np.asarray(subset, dtype=int),
                           cell_of_obs=np.array([combo.cell_of_obs[pos[int(i)]] for i in subset])))
    return out


@dataclass
class BinnedDesign:
    """All combinations of one data set, binned over shared or per-combo cells."""

    domain: MixedDomain
    combos: list[BinnedCombo]
    n_total: int

    @property
    def num_combos(self) -> int:
        return len(self.combos)

    def validate(self):
        total = sum(c.total for c in self.combos)
        if total != self.n_total:
            raise ConfigError(f"cell counts sum to {total}, expected {self.n_total}")
        for c in self.combos:
            if c.num_bins:
                width_sum = math.fsum(c.widths[: c.num_bins].tolist())
                if abs(width_sum - self.domain.interval_length) > 1e-12 * max(
                    1.0, self.domain.interval_length
                ):
                    raise ConfigError("bin widths do not cover the interval")

    def export_rows(self):
        """Audit rows (combo, cell, midpoint, width, count, weight, offset)."""
        for l, combo in enumerate(self.combos):
            for g in range(combo.num_cells):
                yield (
                    l,
                    g,
                    combo.midpoints[g],
                    combo.widths[g],
                    combo.counts[g],
                    combo.likelihood_weights[g],
                    combo.offsets[g],
                )


def build_binned_design(obs: Observations, domain: MixedDomain, num_bins: int = 100,
                        cuts: np.ndarray | None = None) -> BinnedDesign:
    """Full pipeline: group by covariates, bin each combination, apply weights."""
    if cuts is None:
        cuts = equidistant_cuts(domain, num_bins)
    combos, index_sets = group_by_covariates(obs.covariates, obs.size)
    binned = []
    for combo, idx in zip(combos, index_sets):
        bc = bin_responses(domain, cuts, obs.response[idx], combo, idx)
        if obs.weights is not None:
            bc = apply_sample_weights(bc, obs.weights[idx])
        binned.append(bc)
    design = BinnedDesign(domain, binned, obs.size)
    design.validate()
    return design
