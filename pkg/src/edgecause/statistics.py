"""Network statistics g(a, x) and their change statistics for edge toggles.

Term families: edges, nodecov, absdiff, nodematch (dyadic), gwesp (edgewise
shared partners, triadic), and the between-block variants betweenedges /
betweennodecov used by the local-dependence model.  When a block membership
is supplied, the plain terms restrict to within-block dyads and gwesp is
computed on the within-block subgraph; between* terms cover cross-block dyads.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .network import Network


class CovariateTable:
    """Per-unit covariate columns keyed by name."""

    def __init__(self, columns: dict):
        if not columns:
            self._n = 0
            self._cols = {}
            return
        self._cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
        lengths = {len(v) for v in self._cols.values()}
        if len(lengths) != 1:
            raise ValidationError("covariate columns must have equal length")
        self._n = lengths.pop()

    @property
    def n(self) -> int:
        return self._n

    @property
    def names(self):
        return list(self._cols)

    def column(self, name: str) -> np.ndarray:
        if name not in self._cols:
            raise ValidationError(f"unknown covariate column '{name}'")
        return self._cols[name]

    def is_integer_valued(self, name: str) -> bool:
        v = self.column(name)
        return bool(np.all(np.isfinite(v)) and np.all(v == np.round(v)))

    def standardized(self) -> "CovariateTable":
        """Zero-mean unit-variance copy of non-integer columns; integer columns pass through."""
        out = {}
        for name, v in self._cols.items():
            if self.is_integer_valued(name):
                out[name] = v.copy()
            else:
                sd = v.std()
                if sd == 0:
                    raise ValidationError(f"covariate '{name}' is constant; cannot standardize")
                out[name] = (v - v.mean()) / sd
        return CovariateTable(out)


@dataclass(frozen=True)
class Edges:
    name = "edges"


@dataclass(frozen=True)
class NodeCov:
    column: str

    @property
    def name(self):
        return f"nodecov.{self.column}"


@dataclass(frozen=True)
class AbsDiff:
    column: str

    @property
    def name(self):
        return f"absdiff.{self.column}"


@dataclass(frozen=True)
class NodeMatch:
    column: str

    @property
    def name(self):
        return f"nodematch.{self.column}"


@dataclass(frozen=True)
class Gwesp:
    decay: float = 0.3
    name_prefix = "gwesp"

    @property
    def name(self):
        return f"gwesp.{self.decay:g}"


@dataclass(frozen=True)
class BetweenEdges:
    name = "betweenedges"


@dataclass(frozen=True)
class BetweenNodeCov:
    column: str

    @property
    def name(self):
        return f"betweennodecov.{self.column}"


_BETWEEN = (BetweenEdges, BetweenNodeCov)


class StatisticSpec:
    """Ordered list of statistic terms; vector order equals declaration order."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        if sum(isinstance(t, Edges) for t in self.terms) > 1:
            raise ValidationError("at most one edges term is allowed")
        for t in self.terms:
            if isinstance(t, Gwesp) and not math.isfinite(t.decay):
                raise ValidationError("gwesp decay must be finite")

    @property
    def dim(self) -> int:
        return len(self.terms)

    @property
    def names(self):
        return [t.name for t in self.terms]

    @property
    def has_gwesp(self) -> bool:
        return any(isinstance(t, Gwesp) for t in self.terms)

    @property
    def is_dyad_independent(self) -> bool:
        return not self.has_gwesp

    def has_between_terms(self) -> bool:
        return any(isinstance(t, _BETWEEN) for t in self.terms)

    def within_indices(self):
        """Positions of non-between terms (the per-block components)."""
        return [k for k, t in enumerate(self.terms) if not isinstance(t, _BETWEEN)]

    def validate(self, cov: CovariateTable, blocks=None):
        for t in self.terms:
            if isinstance(t, (NodeCov, AbsDiff, NodeMatch, BetweenNodeCov)):
                cov.column(t.column)
            if isinstance(t, NodeMatch) and not cov.is_integer_valued(t.column):
                raise ValidationError(
                    f"nodematch requires a categorical (integer-coded) column, "
                    f"'{t.column}' is continuous"
                )
            if isinstance(t, _BETWEEN) and blocks is None:
                raise ValidationError(f"{t.name} term requires a block membership")
        return self

    def __repr__(self):
        return f"StatisticSpec({', '.join(self.names)})"


def term_from_config(rec: dict):
    """One term from a {"term": ..., "covariate"?, "decay"?} record."""
    kind = rec.get("term")
    if kind == "edges":
        return Edges()
    if kind == "nodecov":
        return NodeCov(rec["covariate"])
    if kind == "absdiff":
        return AbsDiff(rec["covariate"])
    if kind == "nodematch":
        return NodeMatch(rec["covariate"])
    if kind == "gwesp":
        return Gwesp(float(rec.get("decay", 0.3)))
    if kind == "betweenedges":
        return BetweenEdges()
    if kind == "betweennodecov":
        return BetweenNodeCov(rec["covariate"])
    raise ValidationError(f"unknown statistic term '{kind}'")


def _dyad_term_values(term, cov: CovariateTable, blocks, ii, jj):
    """Vectorized per-dyad contribution of one dyadic term over dyads (ii, jj)."""
    if blocks is not None:
        same = np.asarray(blocks)[ii] == np.asarray(blocks)[jj]
    else:
        same = np.ones(len(ii), dtype=bool)
    if isinstance(term, Edges):
        return same.astype(float)
    if isinstance(term, NodeCov):
        x = cov.column(term.column)
        return same * (x[ii] + x[jj])
    if isinstance(term, AbsDiff):
        x = cov.column(term.column)
        return same * np.abs(x[ii] - x[jj])
    if isinstance(term, NodeMatch):
        x = cov.column(term.column)
        return same * (x[ii] == x[jj]).astype(float)
    if isinstance(term, BetweenEdges):
        return (~same).astype(float)
    if isinstance(term, BetweenNodeCov):
        x = cov.column(term.column)
        return (~same) * (x[ii] + x[jj])
    raise TypeError(f"{term} is not a dyadic term")


def gwesp_weight_table(max_partners: int, decay: float, n: int) -> np.ndarray:
    """Per-edge contribution w[L] for an edge with L shared partners.

    w[L] = sum_{k=1}^{min(L, n-2)} (-e^decay)^{-(k-1)} C(L, k); the k=1 term
    alone reproduces the triangle count times three when summed over edges.
    """
    base = -math.exp(decay)
    w = np.zeros(max_partners + 1)
    for L in range(1, max_partners + 1):
        kmax = min(L, n - 2)
        w[L] = sum(base ** (-(k - 1)) * math.comb(L, k) for k in range(1, kmax + 1))
    return w


def _gwesp_value(dense: np.ndarray, decay: float) -> float:
    """GWESP of a dense 0/1 symmetric matrix via shared-partner counts."""
    n = dense.shape[0]
    if n < 3:
        return 0.0
    a = dense.astype(np.int64)
    shared = a @ a  # shared[i, j] = number of common neighbors
    iu, ju = np.nonzero(np.triu(a, k=1))
    if len(iu) == 0:
        return 0.0
    L = shared[iu, ju]
    w = gwesp_weight_table(int(L.max()) if len(L) else 0, decay, n)
    return float(w[L].sum())


def _within_dense(dense: np.ndarray, blocks) -> np.ndarray:
    w = np.asarray(blocks)
    mask = w[:, None] == w[None, :]
    return dense * mask


def compute_statistics(net: Network, cov: CovariateTable, spec: StatisticSpec, blocks=None) -> np.ndarray:
    """Full statistic vector g(a, x) in term-declaration order."""
    spec.validate(cov, blocks)
    e = net.edges()
    ii = e[:, 0] if len(e) else np.array([], dtype=np.int64)
    jj = e[:, 1] if len(e) else np.array([], dtype=np.int64)
    out = np.zeros(spec.dim)
    dense = None
    for k, term in enumerate(spec.terms):
        if isinstance(term, Gwesp):
            if dense is None:
                dense = net.to_dense()
                if blocks is not None:
                    dense = _within_dense(dense, blocks)
            out[k] = _gwesp_value(dense, term.decay)
        else:
            out[k] = _dyad_term_values(term, cov, blocks, ii, jj).sum()
    return out


def change_statistics(net: Network, cov: CovariateTable, spec: StatisticSpec, dyad, blocks=None) -> np.ndarray:
    """g(a^{ij+}, x) - g(a^{ij-}, x), computed incrementally per term."""
    i, j = int(dyad[0]), int(dyad[1])
    if i == j:
        raise ValidationError("change statistic needs a dyad with i != j")
    spec.validate(cov, blocks)
    ii = np.array([i])
    jj = np.array([j])
    out = np.zeros(spec.dim)
    dense = None
    for k, term in enumerate(spec.terms):
        if isinstance(term, Gwesp):
            if blocks is not None and np.asarray(blocks)[i] != np.asarray(blocks)[j]:
                out[k] = 0.0
                continue
            if dense is None:
                dense = net.to_dense()
                if blocks is not None:
                    dense = _within_dense(dense, blocks)
            out[k] = gwesp_change(dense, i, j, term.decay)
        else:
            out[k] = _dyad_term_values(term, cov, blocks, ii, jj)[0]
    return out


def gwesp_change(dense: np.ndarray, i: int, j: int, decay: float, weights=None) -> float:
    """GWESP difference from toggling dyad (i, j) on, given the rest of `dense`.

    The state of entry (i, j) in `dense` is ignored: shared-partner counts are
    taken in the network without that edge.  Only dyads touching i or j
    change: the (i, j) edge itself enters with weight w(L_ij), and each common
    neighbor k bumps the counts of edges (i, k) and (j, k) by one.

    `weights` may carry a precomputed gwesp_weight_table covering the largest
    shared-partner count plus one (the samplers pass one to avoid rebuilds).
    """
    n = dense.shape[0]
    if n < 3:
        return 0.0
    row_i = dense[i].astype(bool)
    row_j = dense[j].astype(bool)
    row_i[j] = False  # counts are taken in a^{ij-}
    row_j[i] = False
    common = np.nonzero(row_i & row_j)[0]
    L_ij = len(common)
    if len(common) == 0:
        w = weights if weights is not None else gwesp_weight_table(L_ij, decay, n)
        return float(w[L_ij])
    L_ik = np.array([np.count_nonzero(row_i & dense[k].astype(bool)) for k in common])
    L_jk = np.array([np.count_nonzero(row_j & dense[k].astype(bool)) for k in common])
    if weights is None:
        top = int(max(L_ij, L_ik.max() + 1, L_jk.max() + 1))
        weights = gwesp_weight_table(top, decay, n)
    w = weights
    delta = w[L_ij] + (w[L_ik + 1] - w[L_ik]).sum() + (w[L_jk + 1] - w[L_jk]).sum()
    return float(delta)


def dyad_change_matrix(cov: CovariateTable, spec: StatisticSpec, dyads: np.ndarray, blocks=None) -> np.ndarray:
    """(m, d) change statistics for dyadic terms; gwesp columns are zero.

    For dyad-independent specs this matrix fully determines the model: the
    statistic vector of any network is the column sum over its present dyads.
    """
    spec.validate(cov, blocks)
    m = len(dyads)
    ii = dyads[:, 0] if m else np.array([], dtype=np.int64)
    jj = dyads[:, 1] if m else np.array([], dtype=np.int64)
    out = np.zeros((m, spec.dim))
    for k, term in enumerate(spec.terms):
        if isinstance(term, Gwesp):
            continue
        out[:, k] = _dyad_term_values(term, cov, blocks, ii, jj)
    return out
