"""Vector-space operations for densities on mixed domains.

A mixed domain is an interval ``[a, b]`` together with finitely many
weighted atoms; its reference measure is Lebesgue measure on the interval
plus weighted Dirac measures at the atoms.  Densities with respect to this
measure (up to positive scaling) form a Hilbert space whose addition is
pointwise multiplication (perturbation) and whose scalar multiplication is
pointwise powering.  The centered log-ratio (clr) transform maps densities
isometrically onto the subspace of functions that integrate to zero, where
all operations become ordinary linear algebra.  This module keeps densities
in their clr representation and materializes probability densities only on
demand.

Functions are represented on a fixed quadrature grid over the interval plus
one value per atom.  Integration uses composite Simpson weights on the grid
(odd node count) and exact weighted sums over the atoms.
"""

from __future__ import annotations

import warnings
from collections.abc import Iterable, Sequence

import numpy as np

from .errors import DomainMismatch, NonPositiveDensity

DEFAULT_GRID_SIZE = 1001
#: quadrature tolerance for smooth integrands at the default grid size
INTEGRAL_TOL = 1e-8
#: clr values are clamped to this magnitude before exponentiation
CLR_CLAMP = 700.0


def simpson_weights(nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson weights for a uniform grid with an odd node count."""
    n = len(nodes)
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson rule needs an odd number of nodes >= 3")
    h = (nodes[-1] - nodes[0]) / (n - 1)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


class MixedDomain:
    """Interval-plus-atoms domain with its quadrature grid.

    Parameters
    ----------
    interval : (a, b) or None
        Continuous part; ``None`` for purely discrete domains.
    atoms : sequence of (location, weight)
        Discrete part; weights must be positive, locations distinct.
    grid_size : int
        Number of quadrature nodes on the interval (odd, >= 3).
    """

    def __init__(self, interval=None, atoms=(), grid_size=DEFAULT_GRID_SIZE):
        if interval is None and len(atoms) == 0:
            raise ValueError("domain needs an interval, atoms, or both")
        if interval is not None:
            a, b = float(interval[0]), float(interval[1])
            if not a < b:
                raise ValueError(f"interval endpoints must satisfy a < b, got [{a}, {b}]")
            self.interval = (a, b)
            if grid_size < 3 or grid_size % 2 == 0:
                raise ValueError("grid_size must be odd and >= 3")
            self.grid = np.linspace(a, b, grid_size)
            self._simpson = simpson_weights(self.grid)
        else:
            self.interval = None
            self.grid = np.empty(0)
            self._simpson = np.empty(0)

        atoms = sorted((float(t), float(w)) for t, w in atoms)
        locs = [t for t, _ in atoms]
        if len(set(locs)) != len(locs):
            raise ValueError("atom locations must be distinct")
        if any(w <= 0 for _, w in atoms):
            raise ValueError("atom weights must be positive")
        self.atom_locations = np.array(locs)
        self.atom_weights = np.array([w for _, w in atoms])

    @classmethod
    def continuous(cls, a, b, grid_size=DEFAULT_GRID_SIZE):
        return cls(interval=(a, b), grid_size=grid_size)

    @classmethod
    def discrete(cls, atoms):
        return cls(interval=None, atoms=atoms)

    @property
    def has_interval(self) -> bool:
        return self.interval is not None

    @property
    def num_atoms(self) -> int:
        return len(self.atom_locations)

    @property
    def grid_size(self) -> int:
        return len(self.grid)

    @property
    def interval_length(self) -> float:
        return 0.0 if self.interval is None else self.interval[1] - self.interval[0]

    @property
    def total_mass(self) -> float:
        return self.interval_length + float(self.atom_weights.sum())

    def atom_index(self, y: float):
        """Index of the atom exactly equal to ``y``, or None."""
        hits = np.nonzero(self.atom_locations == y)[0]
        return int(hits[0]) if hits.size else None

    def contains(self, y: float) -> bool:
        if self.atom_index(y) is not None:
            return True
        return self.has_interval and self.interval[0] <= y <= self.interval[1]

    def same_as(self, other: "MixedDomain") -> bool:
        return (
            self.interval == other.interval
            and self.grid_size == other.grid_size
            and np.array_equal(self.atom_locations, other.atom_locations)
            and np.array_equal(self.atom_weights, other.atom_weights)
        )

    def __repr__(self):
        return (
            f"MixedDomain(interval={self.interval}, atoms={self.num_atoms}, "
            f"grid_size={self.grid_size})"
        )


def _check_same_domain(f1, f2):
    if not f1.domain.same_as(f2.domain):
        raise DomainMismatch("operands live on different domains")


class GridFunction:
    """Real function on a mixed domain: grid values plus atom values."""

    def __init__(self, domain: MixedDomain, cont_values, atom_values):
        self.domain = domain
        self.cont_values = np.asarray(cont_values, dtype=float)
        self.atom_values = np.asarray(atom_values, dtype=float)
        if len(self.cont_values) != domain.grid_size:
            raise ValueError("cont_values length does not match the grid")
        if len(self.atom_values) != domain.num_atoms:
            raise ValueError("atom_values length does not match the atoms")

    @classmethod
    def zeros(cls, domain: MixedDomain) -> "GridFunction":
        return cls(domain, np.zeros(domain.grid_size), np.zeros(domain.num_atoms))

    @classmethod
    def constant(cls, domain: MixedDomain, value: float) -> "GridFunction":
        return cls(
            domain,
            np.full(domain.grid_size, float(value)),
            np.full(domain.num_atoms, float(value)),
        )

    @classmethod
    def from_callable(cls, domain: MixedDomain, fn) -> "GridFunction":
        cont = fn(domain.grid) if domain.has_interval else np.empty(0)
        atoms = fn(domain.atom_locations) if domain.num_atoms else np.empty(0)
        return cls(domain, np.asarray(cont, dtype=float), np.asarray(atoms, dtype=float))

    def integrate(self) -> float:
        """Integral against the reference measure (Simpson + atom weights)."""
        total = 0.0
        if self.domain.has_interval:
            total += float(self.domain._simpson @ self.cont_values)
        if self.domain.num_atoms:
            total += float(self.domain.atom_weights @ self.atom_values)
        return total

    def is_clr_level(self, tol: float = INTEGRAL_TOL) -> bool:
        return abs(self.integrate()) <= tol

    def evaluate(self, y: float) -> float:
        """Value at a single point: exact at atoms, linear interpolation on the grid."""
        idx = self.domain.atom_index(y)
        if idx is not None:
            return float(self.atom_values[idx])
        if not self.domain.has_interval or not (
            self.domain.interval[0] <= y <= self.domain.interval[1]
        ):
            from .errors import OutOfDomain

            raise OutOfDomain(f"{y} is neither in the interval nor an atom")
        return float(np.interp(y, self.domain.grid, self.cont_values))

    # linear structure (used pervasively at clr level)
    def __add__(self, other):
        _check_same_domain(self, other)
        return GridFunction(
            self.domain,
            self.cont_values + other.cont_values,
            self.atom_values + other.atom_values,
        )

    def __sub__(self, other):
        _check_same_domain(self, other)
        return GridFunction(
            self.domain,
            self.cont_values - other.cont_values,
            self.atom_values - other.atom_values,
        )

    def __mul__(self, scalar: float):
        return GridFunction(
            self.domain, self.cont_values * scalar, self.atom_values * scalar
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def to_table(self) -> list[tuple[float, float]]:
        """(node, value) rows: grid nodes first, atoms after."""
        rows = list(zip(self.domain.grid.tolist(), self.cont_values.tolist()))
        rows += list(zip(self.domain.atom_locations.tolist(), self.atom_values.tolist()))
        return rows

    @classmethod
    def from_table(cls, domain: MixedDomain, rows: Iterable[Sequence[float]]):
        values = np.array([float(r[1]) for r in rows])
        q = domain.grid_size
        if len(values) != q + domain.num_atoms:
            raise ValueError("row count does not match the domain")
        return cls(domain, values[:q], values[q:])


class BayesDensity:
    """Equivalence class of positive densities, stored via its clr transform."""

    def __init__(self, clr_fn: GridFunction, clamped: bool = False):
        self.domain = clr_fn.domain
        self.clr = clr_fn
        self.clamped = clamped

    @classmethod
    def neutral(cls, domain: MixedDomain) -> "BayesDensity":
        """The class of constant densities, i.e. the additive neutral element."""
        return cls(GridFunction.zeros(domain))

    @classmethod
    def from_values(cls, values: GridFunction) -> "BayesDensity":
        return inv_clr(clr(values))

    def pdf(self) -> GridFunction:
        """Probability-density representative exp(clr) normalized to mass one."""
        c = np.clip(self.clr.cont_values, -CLR_CLAMP, CLR_CLAMP)
        a = np.clip(self.clr.atom_values, -CLR_CLAMP, CLR_CLAMP)
        raw = GridFunction(self.domain, np.exp(c), np.exp(a))
        mass = raw.integrate()
        return GridFunction(self.domain, raw.cont_values / mass, raw.atom_values / mass)


def clr(density_values: GridFunction) -> GridFunction:
    """Centered log-ratio: log f minus its mean against the reference measure."""
    if np.any(density_values.cont_values <= 0) or np.any(density_values.atom_values <= 0):
        raise NonPositiveDensity("clr requires strictly positive values")
    log_f = GridFunction(
        density_values.domain,
        np.log(density_values.cont_values),
        np.log(density_values.atom_values),
    )
    mean = log_f.integrate() / density_values.domain.total_mass
    return GridFunction(
        density_values.domain, log_f.cont_values - mean, log_f.atom_values - mean
    )


def inv_clr(g: GridFunction) -> BayesDensity:
    """Inverse clr transform; values are clamped to avoid overflow."""
    clamped = bool(
        np.any(np.abs(g.cont_values) > CLR_CLAMP) or np.any(np.abs(g.atom_values) > CLR_CLAMP)
    )
    if clamped:
        warnings.warn("clr values clamped to +-700 before exponentiation", RuntimeWarning)
        g = GridFunction(
            g.domain,
            np.clip(g.cont_values, -CLR_CLAMP, CLR_CLAMP),
            np.clip(g.atom_values, -CLR_CLAMP, CLR_CLAMP),
        )
    return BayesDensity(g, clamped=clamped)


def perturb(f1: BayesDensity, f2: BayesDensity) -> BayesDensity:
    """Addition of the density space: pointwise product, i.e. clr-level sum."""
    _check_same_domain(f1, f2)
    return BayesDensity(f1.clr + f2.clr)


def power(alpha: float, f: BayesDensity) -> BayesDensity:
    """Scalar multiplication of the density space: pointwise power."""
    return BayesDensity(f.clr * float(alpha))


def inner_product(f1: BayesDensity, f2: BayesDensity) -> float:
    """Hilbert-space inner product: L2 product of the clr representatives."""
    _check_same_domain(f1, f2)
    prod = GridFunction(
        f1.domain,
        f1.clr.cont_values * f2.clr.cont_values,
        f1.clr.atom_values * f2.clr.atom_values,
    )
    return prod.integrate()


def norm(f: BayesDensity) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def integrate(g: GridFunction, domain: MixedDomain | None = None) -> float:
    """Integral of ``g`` against the reference measure of its domain."""
    if domain is not None and not g.domain.same_as(domain):
        raise DomainMismatch("function does not live on the given domain")
    return g.integrate()
