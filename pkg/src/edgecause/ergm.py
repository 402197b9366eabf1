"""Constrained exponential random graph model: probability weights,
Metropolis-Hastings sampling on the restricted space, exact small-model
enumeration, pseudo-likelihood initialization, and Monte Carlo maximum
likelihood fitting.

The sampler layer exploits two exact factorizations: a dyad whose conditional
log odds never depends on the rest of the network is an independent Bernoulli
draw, and under the block-structured model the within-block subgraphs are
mutually independent.  The public `mh_sample` always runs the literal
single-chain toggle kernel; the internal samplers used for fitting and for
denominator estimation draw the independent parts exactly and run separate
chains per block, which is distributionally identical and much faster.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .errors import DegeneracyError, EnumerationError, ValidationError
from .network import Network, RestrictedSpace, local_dyad_indices
from .statistics import (
    CovariateTable,
    Gwesp,
    StatisticSpec,
    _gwesp_value,
    _within_dense,
    change_statistics,
    compute_statistics,
    dyad_change_matrix,
    gwesp_change,
    gwesp_weight_table,
)

ENUMERATION_LIMIT = 22


@dataclass(frozen=True)
class BlockStructure:
    """Block membership for the local-dependence model.

    `per_block_eta` optionally overrides the within-block components of the
    model's eta vector, one row per block; when absent a single shared
    within-block parameter vector is used.
    """

    membership: np.ndarray
    per_block_eta: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "membership", np.asarray(self.membership, dtype=np.int64))
        if self.membership.min() < 0:
            raise ValidationError("block labels must be nonnegative integers")

    @property
    def n_blocks(self) -> int:
        return int(self.membership.max()) + 1


@dataclass(frozen=True)
class SamplerConfig:
    burn_in: int
    thin: int
    n_draws: int
    seed: int

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.n_draws < 1:
            raise ValidationError("sampler config needs burn_in >= 0, thin >= 1, n_draws >= 1")


@dataclass
class FitConfig:
    """MCMC-MLE hyperparameters; burn-in and thinning scale with dyad count."""

    draws: int = 5000
    burn_mult: float = 10.0
    thin_mult: float = 1.0
    trust_radius: float = 0.5
    tol: float = 1e-4
    max_iters: int = 30
    seed: int = 0


@dataclass
class FitResult:
    eta_hat: np.ndarray
    se: np.ndarray
    iterations: int
    converged: bool
    stat_mean: np.ndarray
    stat_cov: np.ndarray

    def __post_init__(self):
        if np.any(self.se < 0):
            raise ValidationError("reported standard errors must be nonnegative")


class ErgmModel:
    """Statistic spec + parameters + restricted sample space (+ blocks)."""

    def __init__(self, spec: StatisticSpec, eta, space: RestrictedSpace,
                 cov: CovariateTable, blocks: BlockStructure = None):
        self.spec = spec
        self.eta = np.asarray(eta, dtype=float)
        self.space = space
        self.cov = cov
        self.blocks = blocks
        if self.eta.shape != (spec.dim,):
            raise ValidationError(
                f"eta has length {self.eta.shape}, spec dimension is {spec.dim}"
            )
        membership = blocks.membership if blocks is not None else None
        if membership is not None and len(membership) != space.n:
            raise ValidationError("block membership length must equal the unit count")
        spec.validate(cov, membership)
        if blocks is not None and blocks.per_block_eta is not None:
            want = (blocks.n_blocks, len(spec.within_indices()))
            got = np.asarray(blocks.per_block_eta).shape
            if got != want:
                raise ValidationError(f"per-block eta must have shape {want}, got {got}")
        self._cache = {}

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def membership(self):
        return self.blocks.membership if self.blocks is not None else None

    @property
    def is_dyad_independent(self) -> bool:
        return self.spec.is_dyad_independent

    def with_eta(self, eta) -> "ErgmModel":
        return ErgmModel(self.spec, eta, self.space, self.cov, self.blocks)

    # -- per-dyad bookkeeping -------------------------------------------------

    def dyadic_change_matrix(self) -> np.ndarray:
        """(m, d) state-independent change statistics (gwesp columns zero)."""
        if "delta" not in self._cache:
            self._cache["delta"] = dyad_change_matrix(
                self.cov, self.spec, self.space.dyads, self.membership
            )
        return self._cache["delta"]

    def eta_for_dyad(self, i: int, j: int) -> np.ndarray:
        """Effective parameter vector for dyad (i, j) under per-block overrides."""
        b = self.blocks
        if b is None or b.per_block_eta is None:
            return self.eta
        w = b.membership
        if w[i] != w[j]:
            return self.eta
        eta = self.eta.copy()
        eta[self.spec.within_indices()] = b.per_block_eta[w[i]]
        return eta

    def dyad_logodds_constant(self) -> np.ndarray:
        """Per-dyad conditional log odds from the dyadic terms alone."""
        if "lo_const" not in self._cache:
            delta = self.dyadic_change_matrix()
            b = self.blocks
            if b is None or b.per_block_eta is None:
                lo = delta @ self.eta
            else:
                lo = delta @ self.eta
                win = self.spec.within_indices()
                w = b.membership
                d = self.space.dyads
                same = w[d[:, 0]] == w[d[:, 1]]
                for lab in range(b.n_blocks):
                    rows = same & (w[d[:, 0]] == lab)
                    if rows.any():
                        lo[rows] = delta[np.ix_(np.nonzero(rows)[0], win)] @ b.per_block_eta[lab]
            self._cache["lo_const"] = lo
        return self._cache["lo_const"]

    def gwesp_terms(self):
        """[(term index, decay, eta coefficient resolver)] for gwesp terms."""
        return [(k, t.decay) for k, t in enumerate(self.spec.terms) if isinstance(t, Gwesp)]


def log_weight(model: ErgmModel, net: Network) -> float:
    """eta . g(a, x) when the network lies in the restricted space, else -inf."""
    if net.n != model.n:
        raise ValidationError(f"network has {net.n} units, model expects {model.n}")
    if not model.space.contains(net):
        return -math.inf
    b = model.blocks
    if b is None or b.per_block_eta is None:
        g = compute_statistics(net, model.cov, model.spec, model.membership)
        return float(model.eta @ g)
    # per-block parameters: within-block weights sum plus between-dyad terms
    win = model.spec.within_indices()
    between = [k for k in range(model.spec.dim) if k not in win]
    total = 0.0
    dense = net.to_dense()
    w = b.membership
    for lab in range(b.n_blocks):
        members = np.nonzero(w == lab)[0]
        sub = Network.from_dense(dense[np.ix_(members, members)])
        sub_cov = CovariateTable(
            {name: model.cov.column(name)[members] for name in model.cov.names}
        )
        g_w = compute_statistics(sub, sub_cov, StatisticSpec([model.spec.terms[k] for k in win]))
        total += float(b.per_block_eta[lab] @ g_w)
    if between:
        g_all = compute_statistics(net, model.cov, model.spec, w)
        total += float(model.eta[between] @ g_all[between])
    return total


def conditional_logodds(model: ErgmModel, net: Network, dyad) -> float:
    """Log odds of the edge at `dyad` given the rest of the network."""
    i, j = int(dyad[0]), int(dyad[1])
    if not model.space.is_eligible(i, j):
        raise ValidationError(f"ineligible dyad ({i}, {j})")
    delta = change_statistics(net, model.cov, model.spec, (i, j), model.membership)
    return float(model.eta_for_dyad(i, j) @ delta)


@dataclass
class LocalDistribution:
    """Probability table over the eligible dyad configurations inside N_i."""

    owner: int
    dyad_pairs: np.ndarray  # (s, 2) unit pairs
    configs: np.ndarray     # (C, s) 0/1 rows
    probs: np.ndarray       # (C,)

    def edge_counts(self) -> np.ndarray:
        return self.configs.sum(axis=1).astype(np.int64) if self.configs.size else np.zeros(len(self.probs), dtype=np.int64)


# ---------------------------------------------------------------------------
# Metropolis-Hastings sampling
# ---------------------------------------------------------------------------


def _state_from_network(model: ErgmModel, net: Network) -> int:
    state = 0
    for i, j in net.edges():
        k = model.space.dyad_index(int(i), int(j))
        if k is None:
            raise ValidationError(f"start network has ineligible edge ({i}, {j})")
        state |= 1 << int(k)
    return state


def _network_from_state(model: ErgmModel, state: int) -> Network:
    on = [k for k in range(model.space.n_dyads) if (state >> k) & 1]
    return Network.from_edges(model.n, model.space.dyads[on]) if on else Network(model.n)


def _mh_run(model: ErgmModel, cfg: SamplerConfig, start: Network, on_draw):
    """Literal uniform-dyad-toggle chain; calls on_draw(state_int) per retained draw."""
    m = model.space.n_dyads
    rng_local = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    if m == 0:
        warnings.warn("restricted space has no eligible dyads; returning copies of the start network")
        for _ in range(cfg.n_draws):
            on_draw(0)
        return
    state = _state_from_network(model, start)
    lo_const = model.dyad_logodds_constant()
    gw = model.gwesp_terms()
    dyads = model.space.dyads
    total = cfg.burn_in + cfg.n_draws * cfg.thin

    if not gw:
        p_add = np.minimum(1.0, np.exp(lo_const)).tolist()
        p_rem = np.minimum(1.0, np.exp(-lo_const)).tolist()
        done = 0
        next_draw = cfg.burn_in + cfg.thin
        while done < total:
            batch = min(1_000_000, total - done)
            ks = rng_local.integers(0, m, size=batch).tolist()
            us = rng_local.random(size=batch).tolist()
            for t in range(batch):
                k = ks[t]
                bit = 1 << k
                if state & bit:
                    if us[t] < p_rem[k]:
                        state ^= bit
                else:
                    if us[t] < p_add[k]:
                        state ^= bit
                done += 1
                if done == next_draw:
                    on_draw(state)
                    next_draw += cfg.thin
        return

    # dependent terms present: maintain the dense (block-masked) adjacency
    dense = start.to_dense().astype(bool)
    membership = model.membership
    if membership is not None:
        dense = _within_dense(dense.astype(np.uint8), membership).astype(bool)
        full = start.to_dense().astype(bool)
    else:
        full = dense
    wtab = {decay: gwesp_weight_table(model.n - 2, decay, model.n) for _, decay in gw}
    eta_gw = {}
    done = 0
    next_draw = cfg.burn_in + cfg.thin
    ks = rng_local.integers(0, m, size=total)
    us = rng_local.random(size=total)
    for t in range(total):
        k = int(ks[t])
        i, j = int(dyads[k, 0]), int(dyads[k, 1])
        lo = lo_const[k]
        within = membership is None or membership[i] == membership[j]
        if within:
            key = (i, j)
            eta_d = eta_gw.get(key)
            if eta_d is None:
                eta_d = model.eta_for_dyad(i, j)
                eta_gw[key] = eta_d
            for pos, decay in gw:
                lo += eta_d[pos] * gwesp_change(dense, i, j, decay, wtab[decay])
        bit = 1 << k
        if state & bit:
            accept = us[t] < min(1.0, math.exp(-lo))
            if accept:
                state ^= bit
                full[i, j] = full[j, i] = False
                if within:
                    dense[i, j] = dense[j, i] = False
        else:
            accept = us[t] < min(1.0, math.exp(lo))
            if accept:
                state ^= bit
                full[i, j] = full[j, i] = True
                if within:
                    dense[i, j] = dense[j, i] = True
        done += 1
        if done == next_draw:
            on_draw(state)
            next_draw += cfg.thin


def mh_sample(model: ErgmModel, cfg: SamplerConfig, start: Network = None) -> list:
    """Markov chain of networks in the restricted space (uniform dyad toggles)."""
    if start is None:
        start = Network(model.n)
    draws = []
    _mh_run(model, cfg, start, lambda s: draws.append(_network_from_state(model, s)))
    return draws


def mh_sample_states(model: ErgmModel, cfg: SamplerConfig, start: Network = None) -> np.ndarray:
    """Same chain as mh_sample, returning dyad bitmasks (requires <= 63 dyads)."""
    if model.space.n_dyads > 63:
        raise ValidationError("bitmask states support at most 63 eligible dyads")
    if start is None:
        start = Network(model.n)
    out = np.empty(cfg.n_draws, dtype=np.uint64)
    pos = [0]

    def keep(s):
        out[pos[0]] = s
        pos[0] += 1

    _mh_run(model, cfg, start, keep)
    return out


# ---------------------------------------------------------------------------
# Decomposed (exact-where-possible) sampling used by fitting and weights
# ---------------------------------------------------------------------------


def _decompose_dyads(model: ErgmModel):
    """Split eligible dyads into an independent set and per-block dependent groups."""
    m = model.space.n_dyads
    if not model.spec.has_gwesp:
        return np.arange(m), []
    membership = model.membership
    dyads = model.space.dyads
    if membership is None:
        return np.array([], dtype=np.int64), [(None, np.arange(m))]
    same = membership[dyads[:, 0]] == membership[dyads[:, 1]]
    indep = np.nonzero(~same)[0]
    groups = []
    for lab in np.unique(membership):
        rows = np.nonzero(same & (membership[dyads[:, 0]] == lab))[0]
        if len(rows):
            groups.append((int(lab), rows))
    return indep, groups


class _BlockChain:
    """MH chain over one dependent dyad group, tracking gwesp values."""

    def __init__(self, model: ErgmModel, rows: np.ndarray, rng: np.random.Generator,
                 burn: int, thin: int):
        self.rows = rows
        self.rng = rng
        self.thin = max(1, thin)
        dyads = model.space.dyads[rows]
        units = np.unique(dyads)
        remap = {int(u): a for a, u in enumerate(units)}
        self.n_local = len(units)
        self.pairs = np.array([[remap[int(i)], remap[int(j)]] for i, j in dyads], dtype=np.int64)
        self.lo_const = model.dyad_logodds_constant()[rows]
        self.gw = model.gwesp_terms()
        nloc = max(self.n_local, 3)
        self.wtab = {decay: gwesp_weight_table(nloc - 2, decay, nloc) for _, decay in self.gw}
        i0, j0 = int(dyads[0, 0]), int(dyads[0, 1])
        eta = model.eta_for_dyad(i0, j0)
        self.gw_coef = [(pos, decay, eta[pos]) for pos, decay in self.gw]
        self.dense = np.zeros((self.n_local, self.n_local), dtype=bool)
        self.state = np.zeros(len(rows), dtype=bool)
        self.gw_value = np.zeros(len(self.gw))
        self._advance(burn)

    def _advance(self, steps: int):
        mloc = len(self.rows)
        ks = self.rng.integers(0, mloc, size=steps)
        us = self.rng.random(size=steps)
        for t in range(steps):
            k = int(ks[t])
            a, b = int(self.pairs[k, 0]), int(self.pairs[k, 1])
            lo = self.lo_const[k]
            deltas = []
            for idx, (pos, decay, coef) in enumerate(self.gw_coef):
                d = gwesp_change(self.dense, a, b, decay, self.wtab[decay])
                deltas.append(d)
                lo += coef * d
            if self.state[k]:
                if us[t] < min(1.0, math.exp(-lo)):
                    self.state[k] = False
                    self.dense[a, b] = self.dense[b, a] = False
                    for idx in range(len(deltas)):
                        self.gw_value[idx] -= deltas[idx]
            else:
                if us[t] < min(1.0, math.exp(lo)):
                    self.state[k] = True
                    self.dense[a, b] = self.dense[b, a] = True
                    for idx in range(len(deltas)):
                        self.gw_value[idx] += deltas[idx]

    def draw(self):
        self._advance(self.thin)
        return self.state.copy(), self.gw_value.copy()


def sample_dyad_chunks(model: ErgmModel, n_draws: int, rng: np.random.Generator,
                       chunk: int = 512, burn_mult: float = 10.0, thin_mult: float = 1.0):
    """Yield (B, gw) chunks of draws from the model.

    B is a (c, m) boolean dyad-indicator matrix; gw is a (c, n_gwesp_terms)
    array of gwesp statistic values (总 across blocks) or None when the spec
    has no gwesp term.  Independent dyads are exact Bernoulli draws; dependent
    groups are per-block MH chains with burn-in/thinning scaled to group size.
    """
    m = model.space.n_dyads
    indep, groups = _decompose_dyads(model)
    lo = model.dyad_logodds_constant()
    p_ind = expit(lo[indep]) if len(indep) else None
    chains = []
    for lab, rows in groups:
        sub_rng = np.random.default_rng(rng.spawn(1)[0])
        burn = int(round(burn_mult * len(rows)))
        thin = max(1, int(round(thin_mult * len(rows))))
        chains.append((rows, _BlockChain(model, rows, sub_rng, burn, thin)))
    n_gw = len(model.gwesp_terms())
    remaining = n_draws
    while remaining > 0:
        c = min(chunk, remaining)
        B = np.zeros((c, m), dtype=bool)
        if len(indep):
            B[:, indep] = rng.random((c, len(indep))) < p_ind
        gw = np.zeros((c, n_gw)) if n_gw else None
        for rows, ch in chains:
            for r in range(c):
                s, g = ch.draw()
                B[r, rows] = s
                if n_gw:
                    gw[r] += g
        yield B, gw
        remaining -= c


def sample_statistics(model: ErgmModel, n_draws: int, rng: np.random.Generator,
                      chunk: int = 512, burn_mult: float = 10.0, thin_mult: float = 1.0) -> np.ndarray:
    """(n_draws, d) statistic vectors of model draws."""
    delta = model.dyadic_change_matrix().astype(np.float64)
    gw_pos = [pos for pos, _ in model.gwesp_terms()]
    out = np.empty((n_draws, model.spec.dim))
    at = 0
    for B, gw in sample_dyad_chunks(model, n_draws, rng, chunk, burn_mult, thin_mult):
        c = B.shape[0]
        out[at:at + c] = B.astype(np.float64) @ delta
        if gw is not None:
            out[at:at + c, gw_pos] = gw
        at += c
    return out


# ---------------------------------------------------------------------------
# Exact enumeration
# ---------------------------------------------------------------------------


class ExactDistribution:
    """Exact probability table over all networks of an enumerable model."""

    def __init__(self, model: ErgmModel, probs: np.ndarray):
        self.model = model
        self.probs = probs
        self.n_dyads = model.space.n_dyads

    def bits(self, states) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        return ((states[:, None] >> np.arange(self.n_dyads)[None, :]) & 1).astype(np.uint8)

    def marginal(self, dyad_subset) -> np.ndarray:
        """Probability table over the 2^s configurations of a dyad subset."""
        sub = np.asarray(dyad_subset, dtype=np.int64)
        K = len(self.probs)
        out = np.zeros(1 << len(sub))
        chunk = 1 << 18
        for lo_i in range(0, K, chunk):
            hi = min(K, lo_i + chunk)
            states = np.arange(lo_i, hi, dtype=np.int64)
            key = np.zeros(hi - lo_i, dtype=np.int64)
            for t, d in enumerate(sub):
                key |= ((states >> int(d)) & 1) << t
            out += np.bincount(key, weights=self.probs[lo_i:hi], minlength=len(out))
        return out

    def local_marginal(self, nbhds, i: int) -> LocalDistribution:
        from .network import local_dyad_indices as _ldi  # local import avoids cycle confusion

        sub = _ldi(self.model.space, nbhds)[i]
        probs = self.marginal(sub)
        s = len(sub)
        configs = ((np.arange(1 << s)[:, None] >> np.arange(s)[None, :]) & 1).astype(np.uint8)
        return LocalDistribution(
            owner=i,
            dyad_pairs=self.model.space.dyads[sub],
            configs=configs,
            probs=probs,
        )

    def edge_marginals(self) -> np.ndarray:
        """P(dyad d present) for every eligible dyad."""
        K = len(self.probs)
        out = np.zeros(self.n_dyads)
        chunk = 1 << 18
        for lo_i in range(0, K, chunk):
            hi = min(K, lo_i + chunk)
            states = np.arange(lo_i, hi, dtype=np.int64)
            p = self.probs[lo_i:hi]
            for d in range(self.n_dyads):
                mask = ((states >> d) & 1).astype(bool)
                out[d] += p[mask].sum()
        return out

    def expectation(self, values) -> float:
        return float(np.asarray(values) @ self.probs)


def exact_distribution(model: ErgmModel, limit: int = ENUMERATION_LIMIT) -> ExactDistribution:
    """Brute-force normalization over every network in the restricted space."""
    m = model.space.n_dyads
    if m > limit:
        raise EnumerationError(m, limit)
    K = 1 << m
    lo_const = model.dyad_logodds_constant()
    has_gw = model.spec.has_gwesp
    logw = np.empty(K)
    chunk = 1 << 16
    gw = model.gwesp_terms()
    membership = model.membership
    for lo_i in range(0, K, chunk):
        hi = min(K, lo_i + chunk)
        states = np.arange(lo_i, hi, dtype=np.int64)
        bits = ((states[:, None] >> np.arange(m)[None, :]) & 1).astype(np.float64)
        logw[lo_i:hi] = bits @ lo_const
        if has_gw:
            dyads = model.space.dyads
            for r, st in enumerate(states):
                dense = np.zeros((model.n, model.n), dtype=np.uint8)
                on = [k for k in range(m) if (int(st) >> k) & 1]
                for k in on:
                    i, j = dyads[k]
                    dense[i, j] = dense[j, i] = 1
                if membership is not None:
                    dense = _within_dense(dense, membership)
                for pos, decay in gw:
                    val = _gwesp_value(dense, decay)
                    if model.blocks is not None and model.blocks.per_block_eta is not None:
                        # evaluate per block against its own coefficient
                        total = 0.0
                        for lab in range(model.blocks.n_blocks):
                            members = np.nonzero(membership == lab)[0]
                            sub = dense[np.ix_(members, members)]
                            total += model.blocks.per_block_eta[lab][
                                model.spec.within_indices().index(pos)
                            ] * _gwesp_value(sub, decay)
                        logw[lo_i + r] += total
                    else:
                        logw[lo_i + r] += model.eta[pos] * val
    norm = logsumexp(logw)
    return ExactDistribution(model, np.exp(logw - norm))


def local_marginal(model: ErgmModel, i: int, nbhds, cfg: SamplerConfig = None,
                   method: str = "auto") -> LocalDistribution:
    """Distribution of the local treatment A_i, exact or from MH draws."""
    if method not in ("auto", "exact", "mc"):
        raise ValidationError(f"unknown method '{method}'")
    if method == "exact" or (method == "auto" and model.space.n_dyads <= ENUMERATION_LIMIT):
        return exact_distribution(model).local_marginal(nbhds, i)
    if cfg is None:
        raise ValidationError("Monte Carlo local marginal needs a SamplerConfig")
    sub = local_dyad_indices(model.space, nbhds)[i]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    rows = []
    for B, _ in sample_dyad_chunks(model, cfg.n_draws, rng):
        rows.append(B[:, sub])
    allrows = np.vstack(rows).astype(np.uint8)
    configs, counts = np.unique(allrows, axis=0, return_counts=True)
    return LocalDistribution(
        owner=i,
        dyad_pairs=model.space.dyads[sub],
        configs=configs,
        probs=counts / counts.sum(),
    )


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def change_matrix_at(observed: Network, cov: CovariateTable, spec: StatisticSpec,
                     space: RestrictedSpace, membership=None) -> np.ndarray:
    """(m, d) change statistics of every eligible dyad at the observed network."""
    X = dyad_change_matrix(cov, spec, space.dyads, membership)
    if spec.has_gwesp:
        dense = observed.to_dense()
        if membership is not None:
            dense = _within_dense(dense, membership)
        dense = dense.astype(bool)
        n = observed.n
        wtabs = {}
        for pos, term in enumerate(spec.terms):
            if not isinstance(term, Gwesp):
                continue
            if term.decay not in wtabs:
                wtabs[term.decay] = gwesp_weight_table(max(1, n - 2), term.decay, n)
            for k, (i, j) in enumerate(space.dyads):
                if membership is not None and membership[i] != membership[j]:
                    continue
                X[k, pos] = gwesp_change(dense, int(i), int(j), term.decay, wtabs[term.decay])
    return X


def _observed_dyad_vector(observed: Network, space: RestrictedSpace) -> np.ndarray:
    y = np.zeros(space.n_dyads)
    for i, j in observed.edges():
        k = space.dyad_index(int(i), int(j))
        if k is None:
            raise ValidationError(f"observed network has ineligible edge ({i}, {j})")
        y[k] = 1.0
    return y


def mple(spec: StatisticSpec, observed: Network, space: RestrictedSpace,
         cov: CovariateTable, membership=None) -> np.ndarray:
    """Maximum pseudo-likelihood estimate: logistic regression of edge
    indicators on change statistics over all eligible dyads, by damped Newton."""
    if space.n_dyads == 0:
        raise ValidationError("pseudo-likelihood needs at least one eligible dyad")
    X = change_matrix_at(observed, cov, spec, space, membership)
    y = _observed_dyad_vector(observed, space)
    if np.all(y == y[0]):
        direction = np.linalg.lstsq(X, np.sign(y - 0.5), rcond=None)[0]
        nrm = np.linalg.norm(direction)
        direction = direction / nrm if nrm > 0 else direction
        raise DegeneracyError(
            "degenerate pseudo-likelihood: all eligible dyads are "
            + ("present" if y[0] == 1 else "absent"),
            direction=direction,
        )
    eta = np.zeros(spec.dim)
    ll = _logistic_loglik(X, y, eta)
    for _ in range(200):
        p = expit(X @ eta)
        grad = X.T @ (y - p)
        if np.linalg.norm(grad) <= 1e-8:
            return eta
        W = p * (1 - p)
        H = (X * W[:, None]).T @ X
        H.flat[:: spec.dim + 1] += 1e-12
        step = np.linalg.solve(H, grad)
        scale = 1.0
        for _ in range(60):
            cand = eta + scale * step
            cand_ll = _logistic_loglik(X, y, cand)
            if cand_ll >= ll:
                break
            scale *= 0.5
        eta = eta + scale * step
        ll = _logistic_loglik(X, y, eta)
        if np.linalg.norm(eta) > 30:
            margins = (2 * y - 1) * (X @ eta)
            if margins.min() > 0:
                raise DegeneracyError(
                    "degenerate pseudo-likelihood: perfect separation",
                    direction=eta / np.linalg.norm(eta),
                )
    p = expit(X @ eta)
    grad = X.T @ (y - p)
    if np.linalg.norm(grad) > 1e-8:
        raise DegeneracyError("pseudo-likelihood Newton failed to converge")
    return eta


def _logistic_loglik(X, y, eta):
    z = X @ eta
    return float(y @ z - np.logaddexp(0.0, z).sum())


def mcmc_mle(spec: StatisticSpec, observed: Network, space: RestrictedSpace,
             cov: CovariateTable, init=None, config: FitConfig = None,
             blocks: BlockStructure = None) -> FitResult:
    """Monte Carlo maximum likelihood via iterated importance sampling.

    Each round draws statistics at the current parameter, maximizes the
    sampled log-likelihood ratio inside a trust region, and stops when the
    step is below tolerance or indistinguishable from Monte Carlo noise.
    """
    config = config or FitConfig()
    membership = blocks.membership if blocks is not None else None
    if not space.contains(observed):
        raise ValidationError("observed network lies outside the restricted space")
    if init is None:
        eta0 = mple(spec, observed, space, cov, membership)
    else:
        eta0 = np.asarray(init, dtype=float).copy()
    g_obs = compute_statistics(observed, cov, spec, membership)
    base = ErgmModel(spec, eta0, space, cov, blocks)
    M = config.draws
    hull_misses = 0
    converged = False
    iterations = 0
    for it in range(config.max_iters):
        iterations = it + 1
        from .rng import derive_rng

        rng = derive_rng(config.seed, "mcmc-mle-iter", it)
        G = sample_statistics(base.with_eta(eta0), M, rng,
                              burn_mult=config.burn_mult, thin_mult=config.thin_mult)
        outside = (g_obs < G.min(axis=0)) | (g_obs > G.max(axis=0))
        if outside.all():
            hull_misses += 1
            if hull_misses >= 3:
                raise DegeneracyError(
                    "model degeneracy suspected: observed statistics outside the "
                    "simulated range in every coordinate for 3 consecutive iterations"
                )
        else:
            hull_misses = 0
        delta, S_w = _maximize_ratio(G, g_obs, config.trust_radius)
        step = float(np.linalg.norm(delta))
        noise = _step_noise(S_w, M)
        eta0 = eta0 + delta
        if step <= max(config.tol, 3.0 * noise):
            converged = True
            break
    from .rng import derive_rng

    rng = derive_rng(config.seed, "mcmc-mle-final", 0)
    G = sample_statistics(base.with_eta(eta0), M, rng,
                          burn_mult=config.burn_mult, thin_mult=config.thin_mult)
    S = np.cov(G.T) if spec.dim > 1 else np.array([[G.var(ddof=1)]])
    S = np.atleast_2d(S)
    Sinv = np.linalg.pinv(S)
    se = np.sqrt(np.clip(np.diag(Sinv), 0.0, None))
    return FitResult(
        eta_hat=eta0,
        se=se,
        iterations=iterations,
        converged=converged,
        stat_mean=G.mean(axis=0),
        stat_cov=S,
    )


def _maximize_ratio(G: np.ndarray, g_obs: np.ndarray, radius: float):
    """Maximize d . g_obs - log mean exp(G d) over the ball |d| <= radius."""
    d = np.zeros(G.shape[1])
    S_w = None
    clipped = 0
    for _ in range(60):
        z = G @ d
        z -= z.max()
        wts = np.exp(z)
        wts /= wts.sum()
        mean_w = wts @ G
        grad = g_obs - mean_w
        centered = G - mean_w
        S_w = (centered * wts[:, None]).T @ centered
        if np.linalg.norm(grad) < 1e-10 * max(1.0, np.linalg.norm(g_obs)):
            break
        H = S_w.copy()
        H.flat[:: H.shape[0] + 1] += 1e-10 * max(1.0, np.trace(S_w) / H.shape[0])
        step = np.linalg.solve(H, grad)
        d = d + step
        nrm = np.linalg.norm(d)
        if nrm > radius:
            d *= radius / nrm
            clipped += 1
            if clipped >= 2:
                break
    return d, S_w


def _step_noise(S_w: np.ndarray, M: int) -> float:
    """Monte Carlo scale of the update: parameter noise of an M-sample score."""
    if S_w is None:
        return 0.0
    inv = np.linalg.pinv(S_w)
    tr = float(np.trace(inv))
    return math.sqrt(max(tr, 0.0) / M)
