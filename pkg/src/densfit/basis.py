"""Constrained basis systems over the response domain and the covariates.

The response basis starts from an unconstrained system (B-splines on the
interval, indicator functions on the atoms), is transformed to integrate to
zero against the reference measure via a QR-derived linear map, and in the
mixed case is assembled from a continuous and a discrete block through
embeddings: continuous-embedded functions vanish on the atoms, while
discrete-embedded functions are constant on the interval.  The discrete
block is built over the atoms plus one auxiliary point whose weight equals
the interval length.

Covariate terms (intercepts, reference-coded categoricals, linear effects,
penalized spline effects, optionally group-specific) produce per-term design
blocks; identifiability constraints are absorbed by reparameterization.
Tensor-product design rows are Kronecker products of a covariate row with
the response basis evaluated at a domain point, giving the coefficient
layout term-major, covariate index next, response index fastest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bayes_space import GridFunction, MixedDomain
from .errors import (
    ConfigError,
    DegenerateBasis,
    NegativeSmoothing,
    OutOfSpan,
    UnknownLevel,
    WeightMismatch,
)

# ---------------------------------------------------------------------------
# B-splines


def make_knots(a: float, b: float, num_basis: int, degree: int) -> np.ndarray:
    """Clamped knot vector with equally spaced interior knots."""
    if num_basis < degree + 1:
        raise ValueError("num_basis must be at least degree + 1")
    interior = np.linspace(a, b, num_basis - degree + 1)[1:-1]
    return np.concatenate([np.full(degree + 1, a), interior, np.full(degree + 1, b)])


def bspline_eval(knots: np.ndarray, degree: int, x: float) -> np.ndarray:
    """All B-spline basis values at ``x`` via the Cox-de Boor recursion."""
    knots = np.asarray(knots, dtype=float)
    num_basis = len(knots) - degree - 1
    lo, hi = knots[degree], knots[num_basis]
    if not lo <= x <= hi:
        raise OutOfSpan(f"{x} outside the knot span [{lo}, {hi}]")
    # span index with the right endpoint folded into the last interval
    span = int(np.searchsorted(knots, x, side="right") - 1)
    span = min(max(span, degree), num_basis - 1)

    vals = np.zeros(degree + 1)
    vals[0] = 1.0
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    for d in range(1, degree + 1):
        left[d] = x - knots[span + 1 - d]
        right[d] = knots[span + d] - x
        saved = 0.0
        for r in range(d):
            denom = right[r + 1] + left[d - r]
            temp = vals[r] / denom
            vals[r] = saved + right[r + 1] * temp
            saved = left[d - r] * temp
        vals[d] = saved

    out = np.zeros(num_basis)
    out[span - degree : span + 1] = vals
    return out


def bspline_design(knots: np.ndarray, degree: int, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    return np.array([bspline_eval(knots, degree, x) for x in xs])


def difference_penalty(size: int, order: int) -> np.ndarray:
    """Penalty matrix D'D for coefficient differences of the given order."""
    if order < 0:
        raise ValueError("penalty order must be nonnegative")
    if order == 0:
        return np.eye(size)
    order = min(order, size - 1)
    if order == 0:
        return np.eye(size)
    d = np.diff(np.eye(size), n=order, axis=0)
    return d.T @ d


# ---------------------------------------------------------------------------
# Zero-integral constraint


def nullspace_transform(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane orthogonal to ``c`` via full QR."""
    c = np.asarray(c, dtype=float).reshape(-1, 1)
    scale = np.abs(c).max()
    if scale <= 0 or not np.isfinite(scale):
        raise DegenerateBasis("integral vector is zero; constraint undefined")
    q, _ = np.linalg.qr(c, mode="complete")
    return q[:, 1:]


def constrain_zero_integral(raw: list[GridFunction]):
    """Transform raw functions to a zero-integral system.

    Returns the constrained functions together with the transform matrix
    ``Z`` whose columns are orthonormal and orthogonal to the vector of raw
    integrals.
    """
    c = np.array([f.integrate() for f in raw])
    z = nullspace_transform(c)
    out = []
    for m in range(z.shape[1]):
        cont = sum(z[j, m] * raw[j].cont_values for j in range(len(raw)))
        atom = sum(z[j, m] * raw[j].atom_values for j in range(len(raw)))
        out.append(GridFunction(raw[0].domain, cont, atom))
    return out, z


# ---------------------------------------------------------------------------
# Response basis


@dataclass
class ContinuousBasisPart:
    """Zero-integral spline system on the interval."""

    knots: np.ndarray
    degree: int
    transform: np.ndarray  # (K+1) x K
    penalty: np.ndarray  # K x K

    @property
    def size(self) -> int:
        return self.transform.shape[1]

    def eval(self, xs) -> np.ndarray:
        return bspline_design(self.knots, self.degree, xs) @ self.transform


@dataclass
class DiscreteBasisPart:
    """Zero-integral indicator system on weighted atoms.

    ``values[d, m]`` is the m-th constrained function at the d-th atom; in
    the mixed case the last row belongs to the auxiliary atom standing in
    for the interval.
    """

    weights: np.ndarray
    values: np.ndarray
    penalty: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[1]


def _build_continuous_part(domain, num_basis, degree, penalty_order):
    if degree < 2:
        raise ValueError("response spline degree must be at least 2")
    a, b = domain.interval
    knots = make_knots(a, b, num_basis + 1, degree)
    raw_grid = bspline_design(knots, degree, domain.grid)
    integrals = domain._simpson @ raw_grid
    z = nullspace_transform(integrals)
    pen = z.T @ difference_penalty(num_basis + 1, penalty_order) @ z
    return ContinuousBasisPart(knots, degree, z, pen)


def _build_discrete_part(weights, penalty_order):
    weights = np.asarray(weights, dtype=float)
    z = nullspace_transform(weights)
    pen = z.T @ difference_penalty(len(weights), penalty_order) @ z
    return DiscreteBasisPart(weights, z, pen)


class ResponseBasis:
    """Zero-integral basis over the mixed domain with its penalty matrix."""

    def __init__(self, domain: MixedDomain, cont_part, disc_part):
        self.domain = domain
        self.cont_part = cont_part
        self.disc_part = disc_part
        self.cont_count = 0 if cont_part is None else cont_part.size
        self.disc_count = 0 if disc_part is None else disc_part.size
        self.functions = self._materialize()
        self._grid_matrix = (
            np.column_stack([f.cont_values for f in self.functions])
            if domain.has_interval
            else np.empty((0, self.size))
        )
        self._atom_matrix = (
            np.column_stack([f.atom_values for f in self.functions])
            if domain.num_atoms
            else np.empty((0, self.size))
        )
        self._check_conditioning()

    # -- constructors

    @classmethod
    def continuous(cls, domain, num_basis, degree=3, penalty_order=2):
        if not domain.has_interval or domain.num_atoms:
            raise ValueError("continuous basis needs an atom-free interval domain")
        part = _build_continuous_part(domain, num_basis, degree, penalty_order)
        return cls(domain, part, None)

    @classmethod
    def discrete(cls, domain, penalty_order=2):
        if domain.has_interval:
            raise ValueError("discrete basis needs a purely discrete domain")
        if domain.num_atoms < 2:
            raise DegenerateBasis("need at least two atoms for a nontrivial basis")
        part = _build_discrete_part(domain.atom_weights, penalty_order)
        return cls(domain, None, part)

    @classmethod
    def mixed(cls, domain, num_basis, degree=3, penalty_order=2, disc_penalty_order=2):
        if not (domain.has_interval and domain.num_atoms):
            raise ValueError("mixed basis needs an interval and atoms")
        cont = _build_continuous_part(domain, num_basis, degree, penalty_order)
        weights = np.append(domain.atom_weights, domain.interval_length)
        disc = _build_discrete_part(weights, disc_penalty_order)
        return embed_mixed(cont, disc, domain)

    @classmethod
    def for_domain(cls, domain, num_basis=8, degree=3, penalty_order=2, disc_penalty_order=2):
        if domain.has_interval and domain.num_atoms:
            return cls.mixed(domain, num_basis, degree, penalty_order, disc_penalty_order)
        if domain.has_interval:
            return cls.continuous(domain, num_basis, degree, penalty_order)
        return cls.discrete(domain, disc_penalty_order)

    # -- structure

    @property
    def size(self) -> int:
        return self.cont_count + self.disc_count

    @property
    def penalty(self) -> np.ndarray:
        blocks = []
        if self.cont_part is not None:
            blocks.append(self.cont_part.penalty)
        if self.disc_part is not None:
            blocks.append(self.disc_part.penalty)
        out = np.zeros((self.size, self.size))
        at = 0
        for blk in blocks:
            k = blk.shape[0]
            out[at : at + k, at : at + k] = blk
            at += k
        return out

    def _materialize(self):
        domain = self.domain
        fns = []
        if self.cont_part is not None:
            grid_vals = self.cont_part.eval(domain.grid)
            for m in range(self.cont_count):
                fns.append(
                    GridFunction(domain, grid_vals[:, m], np.zeros(domain.num_atoms))
                )
        if self.disc_part is not None:
            vals = self.disc_part.values
            mixed = domain.has_interval
            for m in range(self.disc_count):
                const = vals[-1, m] if mixed else 0.0
                atom_vals = vals[: domain.num_atoms, m]
                fns.append(
                    GridFunction(
                        domain, np.full(domain.grid_size, const), atom_vals.copy()
                    )
                )
        return fns

    def _check_conditioning(self):
        gram = np.zeros((self.size, self.size))
        for i in range(self.size):
            for j in range(i + 1):
                prod = GridFunction(
                    self.domain,
                    self.functions[i].cont_values * self.functions[j].cont_values,
                    self.functions[i].atom_values * self.functions[j].atom_values,
                )
                gram[i, j] = gram[j, i] = prod.integrate()
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= 1e-12 * max(eigs[-1], 1.0):
            raise DegenerateBasis("response basis functions are numerically dependent")

    # -- evaluation

    def eval_matrix(self, points, is_atom=None) -> np.ndarray:
        """Basis values at arbitrary domain points, one row per point.

        ``is_atom`` marks points that belong to the discrete part; by
        default a point is discrete iff it exactly equals an atom location.
        """
        points = np.asarray(points, dtype=float)
        n = len(points)
        if is_atom is None:
            is_atom = np.array(
                [self.domain.atom_index(p) is not None for p in points], dtype=bool
            )
        else:
            is_atom = np.asarray(is_atom, dtype=bool)
        out = np.zeros((n, self.size))
        kc = self.cont_count
        cont_idx = np.nonzero(~is_atom)[0]
        if cont_idx.size:
            if self.cont_part is None:
                raise OutOfSpan("domain has no continuous part")
            out[cont_idx, :kc] = self.cont_part.eval(points[cont_idx])
            if self.disc_part is not None:
                out[cont_idx, kc:] = self.disc_part.values[-1]
        atom_idx = np.nonzero(is_atom)[0]
        if atom_idx.size and self.disc_part is not None:
            for i in atom_idx:
                d = self.domain.atom_index(points[i])
                if d is None:
                    raise OutOfSpan(f"{points[i]} flagged as atom but is none")
                out[i, kc:] = self.disc_part.values[d]
        return out

    def expand(self, coefficients) -> GridFunction:
        """Linear combination of basis functions as a grid function."""
        c = np.asarray(coefficients, dtype=float)
        cont = self._grid_matrix @ c if self.domain.has_interval else np.empty(0)
        atom = self._atom_matrix @ c if self.domain.num_atoms else np.empty(0)
        return GridFunction(self.domain, cont, atom)

    def gram_matrix(self) -> np.ndarray:
        gram = np.zeros((self.size, self.size))
        for i in range(self.size):
            for j in range(i + 1):
                prod = GridFunction(
                    self.domain,
                    self.functions[i].cont_values * self.functions[j].cont_values,
                    self.functions[i].atom_values * self.functions[j].atom_values,
                )
                gram[i, j] = gram[j, i] = prod.integrate()
        return gram


def embed_mixed(cont_part: ContinuousBasisPart, disc_part: DiscreteBasisPart, domain):
    """Assemble a mixed response basis from its continuous and discrete blocks.

    The discrete block must have been built over the atoms plus the
    auxiliary point whose weight equals the interval length.
    """
    if disc_part.values.shape[0] != domain.num_atoms + 1:
        raise WeightMismatch("discrete block must cover the atoms plus one auxiliary point")
    if abs(disc_part.weights[-1] - domain.interval_length) > 1e-12:
        raise WeightMismatch(
            f"auxiliary weight {disc_part.weights[-1]} != interval length "
            f"{domain.interval_length}"
        )
    return ResponseBasis(domain, cont_part, disc_part)


# ---------------------------------------------------------------------------
# Covariate terms


@dataclass(frozen=True)
class TermSpec:
    """One partial effect of the additive model."""

    kind: str  # intercept | categorical | linear | smooth
    covariate: str | None = None
    levels: tuple | None = None
    reference: object | None = None
    num_basis: int = 10
    degree: int = 3
    penalty_order: int = 2
    by: str | None = None
    by_levels: tuple | None = None
    by_reference: object | None = None
    center: bool | None = None
    label: str | None = None

    def name(self) -> str:
        if self.label:
            return self.label
        parts = [self.kind]
        if self.covariate:
            parts.append(self.covariate)
        if self.by:
            parts.append(f"by:{self.by}")
        return "_".join(parts)


@dataclass
class DesignBlock:
    """Per-term covariate design with its marginal penalty and row builder."""

    term: TermSpec
    index: int
    matrix: np.ndarray
    penalty: np.ndarray
    meta: dict

    @property
    def ncols(self) -> int:
        return self.matrix.shape[1]

    def row(self, covariates: dict) -> np.ndarray:
        return design_row_from_meta(self.meta, covariates)


def _as_levels(column, declared):
    if declared is not None:
        return list(declared)
    seen = []
    for v in column:
        if v not in seen:
            seen.append(v)
    return sorted(seen, key=str)


def _category_columns(column, levels, reference):
    cols = [lv for lv in levels if lv != reference]
    mat = np.zeros((len(column), len(cols)))
    for i, v in enumerate(column):
        if v not in levels:
            raise UnknownLevel(f"value {v!r} not among levels {levels}")
        if v != reference:
            mat[i, cols.index(v)] = 1.0
    return mat, cols


def _smooth_raw(meta, xs):
    knots = np.asarray(meta["knots"])
    return bspline_design(knots, meta["degree"], xs)


def design_row_from_meta(meta: dict, covariates: dict) -> np.ndarray:
    """Design row for one term at a single covariate point."""
    kind = meta["kind"]
    if kind == "intercept":
        base = np.ones(1)
    elif kind == "categorical":
        v = covariates[meta["covariate"]]
        levels, ref = meta["levels"], meta["reference"]
        if v not in levels:
            raise UnknownLevel(f"value {v!r} not among levels {levels}")
        cols = [lv for lv in levels if lv != ref]
        base = np.zeros(len(cols))
        if v != ref:
            base[cols.index(v)] = 1.0
    elif kind == "linear":
        x = float(covariates[meta["covariate"]])
        base = np.array([x - meta.get("shift", 0.0)])
    elif kind == "smooth":
        x = float(covariates[meta["covariate"]])
        raw = _smooth_raw(meta, [x])[0]
        base = raw  # per-level transforms applied below for grouped terms
    else:
        raise ConfigError(f"unknown term kind {kind!r}")

    if meta.get("by") is None:
        if kind == "smooth" and meta.get("transform") is not None:
            base = base @ np.asarray(meta["transform"])
        return base

    bv = covariates[meta["by"]]
    by_levels, by_ref = meta["by_levels"], meta["by_reference"]
    if bv not in by_levels:
        raise UnknownLevel(f"value {bv!r} not among levels {by_levels}")
    active = [lv for lv in by_levels if lv != by_ref]
    pieces = []
    for lv in active:
        if kind == "smooth" and meta.get("transforms") is not None:
            z = np.asarray(meta["transforms"][str(lv)])
            block = base @ z if bv == lv else np.zeros(z.shape[1])
        else:
            block = base if bv == lv else np.zeros(len(base))
        pieces.append(block)
    return np.concatenate(pieces)


def _build_block(term: TermSpec, index: int, table: dict, n: int) -> DesignBlock:
    center = term.center
    if center is None:
        center = term.kind == "smooth"

    meta = {"kind": term.kind, "covariate": term.covariate, "by": term.by}

    if term.kind == "intercept":
        base = np.ones((n, 1))
        base_pen = np.zeros((1, 1))
    elif term.kind == "categorical":
        col = list(table[term.covariate])
        levels = _as_levels(col, term.levels)
        ref = term.reference if term.reference is not None else levels[0]
        if ref not in levels:
            raise UnknownLevel(f"reference {ref!r} not among levels {levels}")
        base, _ = _category_columns(col, levels, ref)
        base_pen = np.zeros((base.shape[1],) * 2)
        meta.update(levels=levels, reference=ref)
    elif term.kind == "linear":
        col = np.asarray(table[term.covariate], dtype=float)
        shift = float(col.mean()) if center else 0.0
        base = (col - shift).reshape(-1, 1)
        base_pen = np.zeros((1, 1))
        meta.update(shift=shift)
    elif term.kind == "smooth":
        col = np.asarray(table[term.covariate], dtype=float)
        uniq = np.unique(col)
        if len(uniq) < term.num_basis:
            raise DegenerateBasis(
                f"smooth term on {term.covariate!r}: {len(uniq)} unique values "
                f"cannot support {term.num_basis} basis functions"
            )
        knots = make_knots(uniq.min(), uniq.max(), term.num_basis, term.degree)
        base = _smooth_raw({"knots": knots, "degree": term.degree}, col)
        base_pen = difference_penalty(term.num_basis, term.penalty_order)
        meta.update(knots=knots.tolist(), degree=term.degree)
    else:
        raise ConfigError(f"unknown term kind {term.kind!r}")

    if term.by is None:
        if term.kind == "smooth" and center:
            z = nullspace_transform(base.sum(axis=0))
            meta["transform"] = z.tolist()
            matrix = base @ z
            penalty = z.T @ base_pen @ z
        else:
            meta["transform"] = None
            matrix = base
            penalty = base_pen
        return DesignBlock(term, index, matrix, penalty, meta)

    by_col = list(table[term.by])
    by_levels = _as_levels(by_col, term.by_levels)
    by_ref = term.by_reference if term.by_reference is not None else by_levels[0]
    if by_ref not in by_levels:
        raise UnknownLevel(f"reference {by_ref!r} not among levels {by_levels}")
    meta.update(by_levels=by_levels, by_reference=by_ref)
    active = [lv for lv in by_levels if lv != by_ref]
    mats, pens = [], []
    transforms = {}
    for lv in active:
        mask = np.array([v == lv for v in by_col], dtype=float)
        block = base * mask[:, None]
        if term.kind == "smooth" and center:
            colsum = block.sum(axis=0)
            z = nullspace_transform(colsum)
            transforms[str(lv)] = z.tolist()
            block = block @ z
            pens.append(z.T @ base_pen @ z)
        else:
            pens.append(base_pen)
        mats.append(block)
    if term.kind == "smooth" and center:
        meta["transforms"] = transforms
    else:
        meta["transforms"] = None
    matrix = np.hstack(mats)
    penalty = np.zeros((matrix.shape[1],) * 2)
    at = 0
    for p in pens:
        k = p.shape[0]
        penalty[at : at + k, at : at + k] = p
        at += k
    return DesignBlock(term, index, matrix, penalty, meta)


def covariate_design(terms: list[TermSpec], table: dict) -> list[DesignBlock]:
    """Build all per-term design blocks from an observation table."""
    lengths = {len(v) for v in table.values()}
    if len(lengths) > 1:
        raise ConfigError("covariate columns have differing lengths")
    n = lengths.pop() if lengths else 0
    blocks = [_build_block(t, j, table, n) for j, t in enumerate(terms)]
    for b in blocks:
        b.meta["ncols"] = b.ncols
        b.meta["name"] = b.term.name()
    return blocks


def blocks_from_meta(metas: list[dict]) -> list[DesignBlock]:
    """Rebuild design blocks (row builders only) from serialized metadata."""
    blocks = []
    for j, meta in enumerate(metas):
        term = TermSpec(
            kind=meta["kind"],
            covariate=meta.get("covariate"),
            levels=tuple(meta["levels"]) if meta.get("levels") else None,
            reference=meta.get("reference"),
            by=meta.get("by"),
            by_levels=tuple(meta["by_levels"]) if meta.get("by_levels") else None,
            by_reference=meta.get("by_reference"),
            degree=meta.get("degree", 3),
            label=meta.get("name"),
        )
        ncols = meta["ncols"]
        blocks.append(
            DesignBlock(term, j, np.zeros((0, ncols)), np.zeros((ncols, ncols)), meta)
        )
    return blocks


def stacked_design(blocks: list[DesignBlock]) -> np.ndarray:
    return np.hstack([b.matrix for b in blocks])


def design_row(blocks: list[DesignBlock], covariates: dict) -> np.ndarray:
    return np.concatenate([b.row(covariates) for b in blocks])


# ---------------------------------------------------------------------------
# Penalties


def penalty_block(p_x: np.ndarray, p_y: np.ndarray, xi_x: float, xi_y: float) -> np.ndarray:
    """Tensor penalty for one term: covariate and response roughness combined."""
    if xi_x < 0 or xi_y < 0:
        raise NegativeSmoothing("smoothing parameters must be nonnegative")
    kx, ky = p_x.shape[0], p_y.shape[0]
    out = np.zeros((kx * ky, kx * ky))
    if xi_x:
        out += xi_x * np.kron(p_x, np.eye(ky))
    if xi_y:
        out += xi_y * np.kron(np.eye(kx), p_y)
    return out


def assemble_penalty(blocks: list[DesignBlock], p_y: np.ndarray, xi) -> np.ndarray:
    """Full block-diagonal penalty over the stacked coefficient vector.

    ``xi`` maps a term index to a ``(xi_x, xi_y)`` pair; missing terms are
    unpenalized.
    """
    ky = p_y.shape[0]
    k = sum(b.ncols for b in blocks) * ky
    out = np.zeros((k, k))
    at = 0
    for b in blocks:
        size = b.ncols * ky
        xi_x, xi_y = xi.get(b.index, (0.0, 0.0)) if xi else (0.0, 0.0)
        if xi_x or xi_y:
            out[at : at + size, at : at + size] = penalty_block(b.penalty, p_y, xi_x, xi_y)
        at += size
    return out


def term_slices(blocks: list[DesignBlock], ky: int) -> list[slice]:
    """Coefficient slice per term in the stacked layout."""
    out, at = [], 0
    for b in blocks:
        size = b.ncols * ky
        out.append(slice(at, at + size))
        at += size
    return out


def tensor_rows(b_x_row: np.ndarray, b_y_matrix: np.ndarray) -> np.ndarray:
    """Rows of the tensor design: Kronecker of one covariate row with each
    response-basis row."""
    return np.einsum("n,gm->gnm", b_x_row, b_y_matrix).reshape(
        b_y_matrix.shape[0], len(b_x_row) * b_y_matrix.shape[1]
    )


# ---------------------------------------------------------------------------
# Rank diagnostics


@dataclass
class RankReport:
    covariate_rank: int
    covariate_required: int
    combo_ranks: list
    combo_required: int

    @property
    def covariate_ok(self) -> bool:
        return self.covariate_rank >= self.covariate_required

    @property
    def response_ok(self) -> bool:
        return all(r >= self.combo_required for r in self.combo_ranks)

    def summary(self) -> str:
        lines = [
            f"covariate design rank {self.covariate_rank} / {self.covariate_required}: "
            + ("ok" if self.covariate_ok else "VIOLATED"),
            f"response rank needed per combo: {self.combo_required}",
        ]
        for l, r in enumerate(self.combo_ranks):
            flag = "ok" if r >= self.combo_required else "VIOLATED"
            lines.append(f"  combo {l}: rank {r} -> {flag}")
        return "\n".join(lines)


def check_rank_conditions(design: np.ndarray, combo_basis_evals: list[np.ndarray]) -> RankReport:
    """Rank diagnostics for the covariate design and the per-combo response
    evaluations (the latter augmented with a constant column)."""
    cov_rank = int(np.linalg.matrix_rank(design)) if design.size else 0
    combo_ranks = []
    combo_required = 0
    for mat in combo_basis_evals:
        aug = np.hstack([mat, np.ones((mat.shape[0], 1))])
        combo_required = aug.shape[1]
        combo_ranks.append(int(np.linalg.matrix_rank(aug)))
    return RankReport(cov_rank, design.shape[1], combo_ranks, combo_required)


# ---------------------------------------------------------------------------
# Model specification (config ingestion)


@dataclass
class ModelSpec:
    """Declarative model description: response domain, basis, and terms."""

    response_column: str
    interval: tuple | None
    atoms: list  # [(location, weight), ...]
    cont_count: int
    degree: int
    penalty_order: int
    disc_penalty_order: int
    grid_size: int
    terms: list = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: dict) -> "ModelSpec":
        try:
            resp = cfg["response"]
            column = resp["column"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"response section malformed: {exc}") from exc
        interval = tuple(resp["interval"]) if resp.get("interval") else None
        atoms = [tuple(a) for a in resp.get("atoms", [])]
        basis_cfg = resp.get("basis", {})
        terms = []
        for raw in cfg.get("terms", []):
            kind = raw.get("kind")
            if kind not in ("intercept", "categorical", "linear", "smooth"):
                raise ConfigError(f"unknown term kind {kind!r}")
            if kind != "intercept" and "covariate" not in raw:
                raise ConfigError(f"term {kind!r} needs a covariate")
            terms.append(
                TermSpec(
                    kind=kind,
                    covariate=raw.get("covariate"),
                    levels=tuple(raw["levels"]) if raw.get("levels") else None,
                    reference=raw.get("reference"),
                    num_basis=int(raw.get("count", 10)),
                    degree=int(raw.get("degree", 3)),
                    penalty_order=int(raw.get("penalty_order", 2)),
                    by=raw.get("by"),
                    by_levels=tuple(raw["by_levels"]) if raw.get("by_levels") else None,
                    by_reference=raw.get("by_reference"),
                    center=raw.get("center"),
                    label=raw.get("label"),
                )
            )
        if not terms:
            raise ConfigError("model needs at least one term")
        return cls(
            response_column=column,
            interval=interval,
            atoms=atoms,
            cont_count=int(basis_cfg.get("cont_count", 8)),
            degree=int(basis_cfg.get("degree", 3)),
            penalty_order=int(basis_cfg.get("penalty_order", 2)),
            disc_penalty_order=int(basis_cfg.get("disc_penalty_order", 2)),
            grid_size=int(resp.get("grid_size", 1001)),
            terms=terms,
        )

    def build_domain(self) -> MixedDomain:
        return MixedDomain(interval=self.interval, atoms=self.atoms, grid_size=self.grid_size)

    def build_basis(self, domain: MixedDomain) -> ResponseBasis:
        return ResponseBasis.for_domain(
            domain,
            num_basis=self.cont_count,
            degree=self.degree,
            penalty_order=self.penalty_order,
            disc_penalty_order=self.disc_penalty_order,
        )

    def covariate_columns(self) -> list[str]:
        cols = []
        for t in self.terms:
            for c in (t.covariate, t.by):
                if c and c not in cols:
                    cols.append(c)
        return cols
