"""Legendre polynomial chaos surrogates on the joint parameter/design cube.

Multi-output expansions are built over the standardized hypercube
[-1, 1]^n_s (the first n_theta dimensions standardize the model
parameters, the remaining ones the design variables) by non-intrusive
spectral projection with Clenshaw-Curtis quadrature, either full tensor
or isotropic Smolyak.  Evaluation and analytic differentiation with
respect to the design variables are vectorized over parameter batches.

Conventions used throughout:

* unnormalized Legendre polynomials, psi_n(1) = 1, so that under the
  uniform density on [-1, 1] the basis norms are E[psi_n^2] = 1/(2n+1);
* quadrature weights absorb the uniform density and sum to one, so the
  projection formula needs no separate density factor;
* total-order index sets in graded lexicographic order (ascending total
  degree, ties broken lexicographically with earlier dimensions ranked
  higher), which fixes the coefficient layout for serialization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

DOMAIN_TOL = 1e-9          # allowed excursion of standardized inputs
CLAMP_TOL = 1e-12          # allowed excursion of raw Legendre arguments
DEFAULT_POINT_BUDGET = 10**7


class PointBudgetError(ValueError):
    """A requested quadrature rule would exceed the point budget."""


@dataclass(frozen=True)
class AffineMap:
    """Affine change of variable x = gamma + delta * xi, xi in [-1, 1]."""

    gamma: float
    delta: float

    def __post_init__(self):
        if self.delta == 0.0:
            raise ValueError("affine map needs delta != 0")

    def to_standard(self, x):
        return (np.asarray(x, dtype=float) - self.gamma) / self.delta

    def to_physical(self, xi):
        return self.gamma + self.delta * np.asarray(xi, dtype=float)


def box_maps(pairs) -> list[AffineMap]:
    """Affine maps sending [-1, 1] onto the intervals [lo, hi] of a box."""
    out = []
    for lo, hi in pairs:
        lo, hi = float(lo), float(hi)
        if not (hi > lo):
            raise ValueError(f"degenerate interval ({lo}, {hi})")
        out.append(AffineMap(gamma=0.5 * (hi + lo), delta=0.5 * (hi - lo)))
    return out


# ---------------------------------------------------------------------------
# multi-index sets


class IndexSet:
    """Ordered set of multi-indices defining a total-order basis."""

    def __init__(self, indices: np.ndarray, degree: int, dimension: int):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 2 or indices.shape[1] != dimension:
            raise ValueError("indices must be a [n_terms, dimension] array")
        if (indices < 0).any():
            raise ValueError("multi-index entries must be non-negative")
        self.indices = indices
        self.degree = int(degree)
        self.dimension = int(dimension)
        # E[Psi_b^2] = prod_j 1/(2 b_j + 1), available in closed form.
        self.norm_sq = np.prod(1.0 / (2.0 * indices + 1.0), axis=1)

    def __len__(self) -> int:
        return self.indices.shape[0]

    def total_orders(self) -> np.ndarray:
        return self.indices.sum(axis=1)


def _compositions(total: int, parts: int):
    """All non-negative integer tuples of length `parts` summing to `total`,
    in descending lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def total_order_index_set(n_s: int, p: int) -> IndexSet:
    """Every multi-index b in N_0^n_s with |b|_1 <= p, graded lexicographic.

    The cardinality is binomial(p + n_s, n_s).
    """
    if n_s < 1:
        raise ValueError("stochastic dimension must be at least 1")
    if p < 0:
        raise ValueError("degree must be non-negative")
    rows = []
    for total in range(p + 1):
        rows.extend(_compositions(total, n_s))
    return IndexSet(np.array(rows, dtype=np.int64), degree=p, dimension=n_s)


# ---------------------------------------------------------------------------
# univariate Legendre values and derivatives


def _check_xi(xi: float) -> float:
    if not np.isfinite(xi):
        raise ValueError("xi must be finite")
    if abs(xi) > 1.0 + CLAMP_TOL:
        raise ValueError(f"xi={xi!r} outside [-1, 1]")
    return min(1.0, max(-1.0, float(xi)))


def legendre_value(n: int, xi: float) -> float:
    """psi_n(xi) by the three-term recurrence, psi_n(1) = 1."""
    if n < 0:
        raise ValueError("polynomial order must be non-negative")
    xi = _check_xi(xi)
    if n == 0:
        return 1.0
    p_prev, p = 1.0, xi
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * xi * p - (k - 1) * p_prev) / k
    return p


def legendre_derivative(n: int, xi: float) -> float:
    """d psi_n / d xi by differentiating the three-term recurrence.

    The recurrence
        psi_n' = ((2n-1)/n) (psi_{n-1} + xi psi_{n-1}') - ((n-1)/n) psi_{n-2}'
    stays finite at xi = +-1, unlike the classical form divided by
    (1 - xi^2).
    """
    if n < 0:
        raise ValueError("polynomial order must be non-negative")
    xi = _check_xi(xi)
    if n == 0:
        return 0.0
    p_prev, p = 1.0, xi          # psi_0, psi_1
    d_prev, d = 0.0, 1.0         # psi_0', psi_1'
    for k in range(2, n + 1):
        p_next = ((2 * k - 1) * xi * p - (k - 1) * p_prev) / k
        d_next = ((2 * k - 1) / k) * (p + xi * d) - ((k - 1) / k) * d_prev
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return d


def _legendre_tables(n_max: int, xi: np.ndarray, derivatives: bool = False):
    """Vectorized psi_0..psi_{n_max} (and optionally derivatives) at `xi`.

    Returns V with V[..., n] = psi_n(xi), plus D likewise when requested.
    """
    xi = np.asarray(xi, dtype=float)
    V = np.empty(xi.shape + (n_max + 1,))
    V[..., 0] = 1.0
    if n_max >= 1:
        V[..., 1] = xi
    for k in range(2, n_max + 1):
        V[..., k] = ((2 * k - 1) * xi * V[..., k - 1] - (k - 1) * V[..., k - 2]) / k
    if not derivatives:
        return V
    D = np.empty_like(V)
    D[..., 0] = 0.0
    if n_max >= 1:
        D[..., 1] = 1.0
    for k in range(2, n_max + 1):
        D[..., k] = ((2 * k - 1) / k) * (V[..., k - 1] + xi * D[..., k - 1]) \
            - ((k - 1) / k) * D[..., k - 2]
    return V, D


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in [-1, 1]^n_s with weights normalized to the uniform density."""

    nodes: np.ndarray    # [n_points, n_s]
    weights: np.ndarray  # [n_points], summing to 1

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("node/weight count mismatch")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]


def _node_from_fraction(num: int, den: int) -> float:
    """cos(pi * num/den) with the symmetric points snapped exactly."""
    if 2 * num == den:
        return 0.0
    if num == 0:
        return 1.0
    if num == den:
        return -1.0
    return float(np.cos(np.pi * num / den))


def _cc_points_1d(level: int):
    """1-D Clenshaw-Curtis nodes as exact angle fractions plus weights.

    Nodes are cos(pi * num / den); representing them by the reduced
    fraction (num, den) lets nested rules share nodes exactly, so Smolyak
    merging never relies on floating-point coincidence.  Weights are for
    the uniform density on [-1, 1] (they sum to one).  The schedule is
    1 point at level 0 and 2^level + 1 points beyond.
    """
    if level < 0:
        raise ValueError("level must be non-negative")
    if level == 0:
        return [(1, 2)], np.array([0.0]), np.array([1.0])
    n_iv = 2 ** level  # number of intervals; n_iv + 1 nodes, n_iv even
    ks = np.arange(n_iv + 1)
    fracs = []
    for k in ks:
        g = math.gcd(int(k), n_iv) if k > 0 else n_iv
        fracs.append((int(k) // g, n_iv // g) if k > 0 else (0, 1))
    theta = np.pi * ks / n_iv
    nodes = np.array([_node_from_fraction(n, d) for n, d in fracs])
    # Closed-rule weights from the cosine-series integral
    #   int_0^pi cos(j t) sin t dt = 2/(1 - j^2) for even j, 0 for odd j.
    base = np.full(n_iv + 1, 0.5)
    for m in range(1, n_iv // 2):
        base += np.cos(2 * m * theta) / (1.0 - 4.0 * m * m)
    base += 0.5 * np.cos(n_iv * theta) / (1.0 - float(n_iv) ** 2)
    w = (4.0 / n_iv) * base
    w[0] *= 0.5
    w[-1] *= 0.5
    return fracs, nodes, w / 2.0  # absorb the 1/2 uniform density


def clenshaw_curtis_1d(level: int) -> QuadratureRule:
    """Nested 1-D Clenshaw-Curtis rule at the given level."""
    _, nodes, weights = _cc_points_1d(level)
    return QuadratureRule(nodes.reshape(-1, 1), weights)


def tensor_quadrature(levels, point_budget: int = DEFAULT_POINT_BUDGET) -> QuadratureRule:
    """Full tensor product of 1-D Clenshaw-Curtis rules, one level per dim."""
    levels = [int(l) for l in levels]
    if not levels:
        raise ValueError("need at least one level")
    sizes = [1 if l == 0 else 2 ** l + 1 for l in levels]
    total = math.prod(sizes)
    if total > point_budget:
        raise PointBudgetError(f"tensor rule has {total} points (budget {point_budget})")
    rules = [_cc_points_1d(l) for l in levels]
    grids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[2] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.ones(total)
    for wg in wgrids:
        weights = weights * wg.ravel()
    return QuadratureRule(nodes, weights)


def smolyak_quadrature(n_s: int, level: int,
                       point_budget: int = DEFAULT_POINT_BUDGET) -> QuadratureRule:
    """Isotropic Smolyak combination of nested Clenshaw-Curtis rules.

    Uses the telescoping form, summing tensor products of the difference
    rules Delta_l = U_l - U_{l-1} over all multi-levels with |l|_1 <= level.
    Nodes shared between constituent tensor rules are merged by their
    exact angle fractions and their weights summed.
    """
    if n_s < 1:
        raise ValueError("stochastic dimension must be at least 1")
    if level < 0:
        raise ValueError("level must be non-negative")
    one_d = [_cc_points_1d(l) for l in range(level + 1)]
    # difference rules as {fraction: (node, delta weight)}
    diffs = []
    for l in range(level + 1):
        fracs, nodes, w = one_d[l]
        entry = {f: [x, wi] for f, x, wi in zip(fracs, nodes, w)}
        if l > 0:
            for f, _, wi in zip(*one_d[l - 1]):
                entry[f][1] -= wi
        diffs.append({f: (v[0], v[1]) for f, v in entry.items()})

    budget_used = 0
    merged: dict[tuple, float] = {}
    coords: dict[tuple, tuple] = {}
    for lvec in _compositions_up_to(level, n_s):
        size = math.prod(len(diffs[l]) for l in lvec)
        budget_used += size
        if budget_used > point_budget:
            raise PointBudgetError(
                f"Smolyak construction exceeds point budget {point_budget}")
        dim_items = [sorted(diffs[l].items()) for l in lvec]
        _accumulate_tensor(dim_items, merged, coords)
    keys = sorted(merged.keys())
    nodes = np.array([coords[k] for k in keys], dtype=float)
    weights = np.array([merged[k] for k in keys], dtype=float)
    return QuadratureRule(nodes.reshape(len(keys), n_s), weights)


def _compositions_up_to(level: int, parts: int):
    for total in range(level + 1):
        yield from _compositions(total, parts)


def _accumulate_tensor(dim_items, merged, coords):
    """Add one tensor product of difference rules into the merged node map."""
    idx = [0] * len(dim_items)
    sizes = [len(items) for items in dim_items]
    while True:
        key = tuple(dim_items[j][idx[j]][0] for j in range(len(dim_items)))
        w = 1.0
        pt = []
        for j, i in enumerate(idx):
            node, dw = dim_items[j][i][1]
            w *= dw
            pt.append(node)
        merged[key] = merged.get(key, 0.0) + w
        coords[key] = tuple(pt)
        for j in reversed(range(len(idx))):
            idx[j] += 1
            if idx[j] < sizes[j]:
                break
            idx[j] = 0
        else:
            return


# ---------------------------------------------------------------------------
# expansions


class PCExpansion:
    """Multi-output Legendre expansion with affine input maps.

    Coefficients are stored as a [n_outputs, n_terms] matrix against the
    index set's term ordering.  When `log_space` is set the stored series
    represents ln G_c and evaluation exponentiates.
    """

    def __init__(self, index_set: IndexSet, coefficients: np.ndarray,
                 maps, log_space: bool = False):
        coefficients = np.atleast_2d(np.asarray(coefficients, dtype=float))
        if coefficients.shape[1] != len(index_set):
            raise ValueError("coefficient columns must match the index set size")
        maps = list(maps)
        if len(maps) != index_set.dimension:
            raise ValueError("need one affine map per stochastic dimension")
        self.index_set = index_set
        self.coefficients = coefficients
        self.maps = maps
        self.log_space = bool(log_space)
        self._gamma = np.array([m.gamma for m in maps])
        self._delta = np.array([m.delta for m in maps])

    # -- basic properties

    @property
    def dimension(self) -> int:
        return self.index_set.dimension

    @property
    def degree(self) -> int:
        return self.index_set.degree

    @property
    def n_outputs(self) -> int:
        return self.coefficients.shape[0]

    # -- standardization

    def _standardize(self, values: np.ndarray, dims: slice) -> np.ndarray:
        xi = (values - self._gamma[dims]) / self._delta[dims]
        worst = np.max(np.abs(xi), initial=0.0)
        if worst > 1.0 + DOMAIN_TOL:
            raise ValueError(
                f"input outside expansion domain (|xi| up to {worst:.3e})")
        return np.clip(xi, -1.0, 1.0)

    def _split_input(self, thetas, d):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        d = np.atleast_1d(np.asarray(d, dtype=float))
        n_theta = thetas.shape[1]
        if n_theta + d.size != self.dimension:
            raise ValueError("theta and design dimensions must sum to n_s")
        xi_t = self._standardize(thetas, slice(0, n_theta))
        xi_d = self._standardize(d, slice(n_theta, self.dimension))
        return xi_t, xi_d, n_theta

    def basis_at(self, xi: np.ndarray) -> np.ndarray:
        """Basis matrix [n_points, n_terms] at standardized points."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        idx = self.index_set.indices
        out = np.ones((xi.shape[0], len(self.index_set)))
        for j in range(self.dimension):
            V = _legendre_tables(int(idx[:, j].max(initial=0)), xi[:, j])
            out *= V[:, idx[:, j]]
        return out

    # -- evaluation

    def evaluate_many(self, thetas, d) -> np.ndarray:
        """Model outputs at a batch of parameter points sharing one design."""
        values, _ = self._eval_core(thetas, d, want_gradient=False)
        return values

    def evaluate(self, theta, d) -> np.ndarray:
        return self.evaluate_many(np.atleast_2d(theta), d)[0]

    def gradient_wrt_design_many(self, thetas, d) -> np.ndarray:
        """Design-space Jacobians [k, n_outputs, n_d] at a parameter batch."""
        _, grads = self._eval_core(thetas, d, want_gradient=True)
        return grads

    def gradient_wrt_design(self, theta, d) -> np.ndarray:
        return self.gradient_wrt_design_many(np.atleast_2d(theta), d)[0]

    def value_and_gradient_many(self, thetas, d):
        """Values and design Jacobians sharing one basis evaluation."""
        return self._eval_core(thetas, d, want_gradient=True, want_value=True)

    def _eval_core(self, thetas, d, want_gradient: bool, want_value: bool = True):
        xi_t, xi_d, n_theta = self._split_input(thetas, d)
        idx = self.index_set.indices
        n_terms = len(self.index_set)
        k = xi_t.shape[0]

        # theta-dependent part of each basis term
        psi_theta = np.ones((k, n_terms))
        for j in range(n_theta):
            V = _legendre_tables(int(idx[:, j].max(initial=0)), xi_t[:, j])
            psi_theta *= V[:, idx[:, j]]

        # design part collapses to per-term scalars since d is shared
        n_d = self.dimension - n_theta
        dvals = []
        dders = []
        for a in range(n_d):
            col = n_theta + a
            V, D = _legendre_tables(int(idx[:, col].max(initial=0)),
                                    np.array([xi_d[a]]), derivatives=True)
            dvals.append(V[0, idx[:, col]])
            dders.append(D[0, idx[:, col]])
        dfac = np.ones(n_terms)
        for v in dvals:
            dfac = dfac * v

        values = None
        plain = None
        if want_value or self.log_space:
            plain = psi_theta @ (self.coefficients * dfac).T
            values = np.exp(plain) if self.log_space else plain
        if not want_gradient:
            return values, None

        grads = np.empty((k, self.n_outputs, n_d))
        for a in range(n_d):
            term = dders[a] / self._delta[n_theta + a]
            for b in range(n_d):
                if b != a:
                    term = term * dvals[b]
            grads[:, :, a] = psi_theta @ (self.coefficients * term).T
        if self.log_space:
            grads = grads * values[:, :, None]
        return values, grads

    # -- serialization

    def to_json_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "degree": self.degree,
            "ordering": "grlex",
            "maps": [{"gamma": m.gamma, "delta": m.delta} for m in self.maps],
            "outputs": self.n_outputs,
            "log_space": self.log_space,
            "coefficients": [[float(v) for v in row] for row in self.coefficients],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PCExpansion":
        if doc.get("ordering") != "grlex":
            raise ValueError(f"unsupported term ordering {doc.get('ordering')!r}")
        index_set = total_order_index_set(int(doc["dimension"]), int(doc["degree"]))
        coeffs = np.asarray(doc["coefficients"], dtype=float)
        if coeffs.shape != (int(doc["outputs"]), len(index_set)):
            raise ValueError("coefficient matrix shape disagrees with header")
        maps = [AffineMap(float(m["gamma"]), float(m["delta"])) for m in doc["maps"]]
        return cls(index_set, coeffs, maps, log_space=bool(doc["log_space"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "PCExpansion":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def project(model_evaluator, index_set: IndexSet, rule: QuadratureRule,
            maps, n_theta: int, log_space: bool = False,
            chunk: int = 1 << 22) -> PCExpansion:
    """Non-intrusive spectral projection of a model onto the basis.

    Coefficients are G_{c,b} = sum_q w_q f_c(x_q) Psi_b(xi_q) / E[Psi_b^2]
    with f_c the model output (or its log when `log_space`) at the
    physically mapped quadrature node x_q, and analytic denominators.

    `model_evaluator(theta, d)` must return the n_y outputs at one
    physical point; nodes are split as (theta, d) = (x[:n_theta], x[n_theta:]).
    """
    maps = list(maps)
    if rule.dimension != index_set.dimension or len(maps) != index_set.dimension:
        raise ValueError("rule, index set and maps must share one dimension")
    if not (0 <= n_theta <= index_set.dimension):
        raise ValueError("invalid parameter dimension split")
    gamma = np.array([m.gamma for m in maps])
    delta = np.array([m.delta for m in maps])
    phys = gamma + delta * rule.nodes

    rows = []
    for q in range(rule.n_points):
        out = np.atleast_1d(np.asarray(
            model_evaluator(phys[q, :n_theta], phys[q, n_theta:]), dtype=float))
        if not np.isfinite(out).all():
            raise ValueError(
                f"model returned non-finite output at node {phys[q]}")
        if log_space and (out <= 0.0).any():
            raise ValueError(
                f"log-space projection needs positive outputs; got {out} "
                f"at node {phys[q]}")
        rows.append(out)
    F = np.array(rows)
    if log_space:
        F = np.log(F)

    n_terms = len(index_set)
    coeffs = np.zeros((F.shape[1], n_terms))
    weighted = rule.weights[:, None] * F
    block = max(1, chunk // max(1, n_terms))
    tmp = PCExpansion(index_set, np.zeros((1, n_terms)), maps, log_space=False)
    for start in range(0, rule.n_points, block):
        sl = slice(start, min(start + block, rule.n_points))
        psi = tmp.basis_at(rule.nodes[sl])
        coeffs += weighted[sl].T @ psi
    coeffs /= index_set.norm_sq[None, :]
    return PCExpansion(index_set, coeffs, maps, log_space=log_space)
