"""Adjacency structures, eligibility constraints, and neighborhood systems.

Units are indexed 0..n-1 throughout the API; the CSV readers in `io` convert
from the 1-based ids used in data files.  All container types here are
immutable after construction and safe to share across workers.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Above this size the adjacency is kept as a packed upper-triangle bitset.
DENSE_LIMIT = 512


def _triu_index(n: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Linear index of pair (i, j), i < j, in row-major upper-triangle order."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - (i * (i + 1)) // 2 + (j - i - 1)


class Network:
    """Simple undirected binary graph on n units.

    Invariants: the adjacency matrix is symmetric with zero diagonal.  Dense
    uint8 storage up to DENSE_LIMIT units, packed upper-triangle bits beyond.
    """

    __slots__ = ("n", "_dense", "_packed")

    def __init__(self, n: int, _dense=None, _packed=None):
        if n < 1:
            raise ValidationError(f"need at least one unit, got n={n}")
        self.n = int(n)
        self._dense = _dense
        self._packed = _packed
        if _dense is None and _packed is None:
            if n <= DENSE_LIMIT:
                self._dense = np.zeros((n, n), dtype=np.uint8)
            else:
                self._packed = np.zeros(((n * (n - 1) // 2) + 7) // 8, dtype=np.uint8)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Network":
        """Build from an iterable of unordered pairs; rejects self-loops."""
        pairs = []
        for pair in edges:
            i, j = int(pair[0]), int(pair[1])
            if i == j:
                raise ValidationError(f"self-loop edge ({i}, {j}) is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i}, {j}) out of range for n={n}")
            pairs.append((min(i, j), max(i, j)))
        net = cls(n)
        if not pairs:
            return net
        arr = np.array(pairs, dtype=np.int64)
        if net._dense is not None:
            net._dense[arr[:, 0], arr[:, 1]] = 1
            net._dense[arr[:, 1], arr[:, 0]] = 1
        else:
            lin = _triu_index(n, arr[:, 0], arr[:, 1])
            bits = np.zeros(n * (n - 1) // 2, dtype=np.uint8)
            bits[lin] = 1
            net._packed = np.packbits(bits)
        return net

    @classmethod
    def from_dense(cls, a) -> "Network":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValidationError("adjacency must be a square matrix")
        if not np.array_equal(a, a.T):
            raise ValidationError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValidationError("adjacency must have zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise ValidationError("adjacency entries must be 0/1")
        n = a.shape[0]
        if n <= DENSE_LIMIT:
            return cls(n, _dense=a.astype(np.uint8).copy())
        iu, ju = np.triu_indices(n, k=1)
        net = cls(n, _packed=np.packbits(a[iu, ju].astype(np.uint8)))
        return net

    def to_dense(self) -> np.ndarray:
        """Materialize the full symmetric uint8 matrix (copy)."""
        if self._dense is not None:
            return self._dense.copy()
        n = self.n
        bits = np.unpackbits(self._packed)[: n * (n - 1) // 2]
        a = np.zeros((n, n), dtype=np.uint8)
        iu, ju = np.triu_indices(n, k=1)
        a[iu, ju] = bits
        a[ju, iu] = bits
        return a

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        if self._dense is not None:
            return bool(self._dense[i, j])
        lo, hi = (i, j) if i < j else (j, i)
        lin = int(_triu_index(self.n, np.int64(lo), np.int64(hi)))
        return bool((self._packed[lin >> 3] >> (7 - (lin & 7))) & 1)

    def edges(self) -> np.ndarray:
        """(m, 2) array of edges with i < j, lexicographic order."""
        if self._dense is not None:
            iu, ju = np.nonzero(np.triu(self._dense, k=1))
            return np.column_stack([iu, ju]).astype(np.int64)
        n = self.n
        bits = np.unpackbits(self._packed)[: n * (n - 1) // 2]
        iu, ju = np.triu_indices(n, k=1)
        keep = bits == 1
        return np.column_stack([iu[keep], ju[keep]]).astype(np.int64)

    def edge_count(self) -> int:
        if self._dense is not None:
            return int(self._dense.sum()) // 2
        n = self.n
        return int(np.unpackbits(self._packed)[: n * (n - 1) // 2].sum())

    def degrees(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.sum(axis=1).astype(np.int64)
        deg = np.zeros(self.n, dtype=np.int64)
        e = self.edges()
        if len(e):
            np.add.at(deg, e[:, 0], 1)
            np.add.at(deg, e[:, 1], 1)
        return deg

    def __eq__(self, other):
        return (
            isinstance(other, Network)
            and self.n == other.n
            and np.array_equal(self.to_dense(), other.to_dense())
        )

    def __repr__(self):
        return f"Network(n={self.n}, edges={self.edge_count()})"


def build_network(n: int, edges) -> Network:
    """Construct a Network from unordered pairs (alias of Network.from_edges)."""
    return Network.from_edges(n, edges)


class RestrictedSpace:
    """Eligibility sets U_i: unit pairs allowed to form an edge.

    Networks with any edge outside the eligible dyad list have probability
    zero under the constrained model.
    """

    __slots__ = ("n", "dyads", "_index", "_eligible")

    def __init__(self, n: int, dyads: np.ndarray):
        self.n = int(n)
        dyads = np.asarray(dyads, dtype=np.int64).reshape(-1, 2)
        if len(dyads):
            if np.any(dyads[:, 0] >= dyads[:, 1]):
                raise ValidationError("dyads must be stored with i < j")
            if dyads.min() < 0 or dyads.max() >= n:
                raise ValidationError("dyad index out of range")
        order = np.lexsort((dyads[:, 1], dyads[:, 0])) if len(dyads) else np.array([], dtype=np.int64)
        self.dyads = dyads[order]
        self._index = {(int(i), int(j)): k for k, (i, j) in enumerate(self.dyads)}
        self._eligible = None

    @classmethod
    def complete(cls, n: int) -> "RestrictedSpace":
        iu, ju = np.triu_indices(n, k=1)
        return cls(n, np.column_stack([iu, ju]))

    @classmethod
    def from_pairs(cls, n: int, pairs) -> "RestrictedSpace":
        uniq = sorted({(min(i, j), max(i, j)) for i, j in pairs})
        for i, j in uniq:
            if i == j:
                raise ValidationError(f"pair ({i}, {j}) is a self-loop")
        return cls(n, np.array(uniq, dtype=np.int64).reshape(-1, 2))

    @property
    def n_dyads(self) -> int:
        return len(self.dyads)

    def dyad_index(self, i: int, j: int):
        """Position of (i, j) in the dyad list, or None if ineligible."""
        return self._index.get((min(i, j), max(i, j)))

    def is_eligible(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._index

    def eligible_sets(self):
        """Per-unit sorted arrays U_i."""
        if self._eligible is None:
            sets = [[] for _ in range(self.n)]
            for i, j in self.dyads:
                sets[i].append(j)
                sets[j].append(i)
            self._eligible = [np.array(sorted(s), dtype=np.int64) for s in sets]
        return self._eligible

    def contains(self, net: Network) -> bool:
        """True when every edge of `net` joins an eligible pair."""
        for i, j in net.edges():
            if (int(i), int(j)) not in self._index:
                return False
        return True


def eligibility_from_distance(distances, cutoff: float) -> RestrictedSpace:
    """U_i = { j != i : d_ij < cutoff } (strict inequality)."""
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValidationError("distance matrix must be square")
    if not np.allclose(d, d.T, rtol=0.0, atol=1e-12):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(d < 0):
        raise ValidationError("distances must be nonnegative")
    if cutoff <= 0:
        # strict inequality: cutoff 0 leaves every pair ineligible
        return RestrictedSpace(d.shape[0], np.empty((0, 2), dtype=np.int64))
    n = d.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    keep = d[iu, ju] < cutoff
    return RestrictedSpace(n, np.column_stack([iu[keep], ju[keep]]))


def pairwise_distances(locations) -> np.ndarray:
    loc = np.asarray(locations, dtype=float)
    diff = loc[:, None, :] - loc[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


@dataclass(frozen=True)
class NeighborhoodSystem:
    """Exclusion neighborhoods N_i; each contains its owner."""

    members: tuple  # tuple of sorted int64 arrays

    def __post_init__(self):
        for i, mem in enumerate(self.members):
            if i not in mem:
                raise ValidationError(f"neighborhood of unit {i} must contain the unit itself")

    @property
    def n(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.members[i]

    @classmethod
    def from_sets(cls, sets) -> "NeighborhoodSystem":
        return cls(tuple(np.array(sorted(set(map(int, s))), dtype=np.int64) for s in sets))


def knn_neighborhoods(distances, l: int, within=None) -> NeighborhoodSystem:
    """N_i = unit i plus its l-1 nearest neighbors, ties broken by lower index.

    `within` optionally restricts candidates per unit (e.g. same-block units);
    it maps unit -> boolean mask or index array.
    """
    d = np.asarray(distances, dtype=float)
    n = d.shape[0]
    if l < 1:
        raise ValidationError(f"neighborhood size must be >= 1, got {l}")
    sets = []
    for i in range(n):
        if within is None:
            cand = np.arange(n)
        else:
            cand = np.asarray(within(i))
            if cand.dtype == bool:
                cand = np.nonzero(cand)[0]
        cand = cand[cand != i]
        take = l - 1
        if take > len(cand):
            raise ValidationError(
                f"neighborhood size {l} exceeds available candidates for unit {i}"
            )
        # stable sort on (distance, index) implements the lower-index tie-break
        order = np.lexsort((cand, d[i, cand]))
        sets.append(np.concatenate([[i], cand[order[:take]]]))
    return NeighborhoodSystem.from_sets(sets)


@dataclass(frozen=True)
class DependenceSystem:
    """Dependence neighborhoods R_i; symmetric by construction."""

    dep: tuple  # tuple of sorted int64 arrays

    def __post_init__(self):
        sets = [set(map(int, r)) for r in self.dep]
        for i, r in enumerate(sets):
            for j in r:
                if i not in sets[j]:
                    raise ValidationError(
                        f"dependence sets must be symmetric: {j} in R_{i} but {i} not in R_{j}"
                    )

    @property
    def n(self) -> int:
        return len(self.dep)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.dep[i]

    def sizes(self) -> np.ndarray:
        return np.array([len(r) for r in self.dep], dtype=np.int64)


def dependence_from_overlap(nbhds: NeighborhoodSystem) -> DependenceSystem:
    """R_i = { j : |N_i ∩ N_j| >= 2 }, the Bernoulli-model rule."""
    n = nbhds.n
    owners = [[] for _ in range(n)]  # owners[u] = units whose neighborhood contains u
    for i in range(n):
        for u in nbhds[i]:
            owners[u].append(i)
    member_sets = [set(map(int, nbhds[i])) for i in range(n)]
    dep = []
    for i in range(n):
        cand = set()
        for u in nbhds[i]:
            cand.update(owners[u])
        r = sorted(
            j for j in cand if len(member_sets[i] & member_sets[j]) >= 2
        )
        dep.append(np.array(r, dtype=np.int64))
    return DependenceSystem(tuple(dep))


def dependence_from_blocks(membership) -> DependenceSystem:
    """R_i = all units sharing unit i's block label."""
    w = np.asarray(membership)
    groups = {}
    for i, lab in enumerate(w):
        groups.setdefault(lab, []).append(i)
    dep = tuple(np.array(groups[lab], dtype=np.int64) for lab in w)
    return DependenceSystem(dep)


@dataclass(frozen=True)
class LocalAdjacency:
    """Subnetwork adjacency over N_i, rows/cols in `members` order."""

    owner: int
    members: np.ndarray
    sub: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = len(self.members)
        if self.sub.shape != (k, k):
            raise ValidationError("local adjacency shape must match member count")
        if not np.array_equal(self.sub, self.sub.T) or np.any(np.diag(self.sub) != 0):
            raise ValidationError("local adjacency must be symmetric with zero diagonal")


def local_subnetwork(net: Network, nbhds: NeighborhoodSystem, i: int) -> LocalAdjacency:
    members = nbhds[i]
    dense = net.to_dense()
    sub = dense[np.ix_(members, members)].copy()
    return LocalAdjacency(owner=i, members=members, sub=sub)


def edge_count(a_i: LocalAdjacency) -> int:
    """Number of edges in the local subnetwork."""
    return int(a_i.sub.sum()) // 2


def local_dyad_indices(space: RestrictedSpace, nbhds: NeighborhoodSystem):
    """Per unit, the indices (into space.dyads) of eligible dyads inside N_i."""
    out = []
    for i in range(nbhds.n):
        mem = nbhds[i]
        idx = []
        for a in range(len(mem)):
            for b in range(a + 1, len(mem)):
                k = space.dyad_index(int(mem[a]), int(mem[b]))
                if k is not None:
                    idx.append(k)
        out.append(np.array(sorted(idx), dtype=np.int64))
    return out
