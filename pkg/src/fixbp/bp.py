"""Loopy belief propagation with a fully synchronous update schedule.

Messages live on directed edges and are kept normalized at all times;
the per-step normalizers are recorded so converged runs can be checked
against the polynomial fixed-point system.  State order is index
0 <-> +1, index 1 <-> -1 for spin models and the literal {0, 1} states
for factor graphs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product as iproduct

import numpy as np

from .model import FactorGraph, PairwiseModel


@dataclass(frozen=True)
class MessageSet:
    """Normalized messages mu[(i,j)] = (mu(+1), mu(-1)) plus normalizers."""

    edges: tuple  # directed edges, canonical sorted order
    values: np.ndarray  # shape (len(edges), 2), rows sum to 1
    alphas: np.ndarray | None = None  # shape (len(edges),)

    def as_dict(self):
        return {e: (float(v[0]), float(v[1])) for e, v in zip(self.edges, self.values)}

    def alpha_dict(self):
        if self.alphas is None:
            return {}
        return {e: float(a) for e, a in zip(self.edges, self.alphas)}

    def flat(self):
        return self.values.reshape(-1)


def uniform_messages(model):
    d = model.directed_edges()
    return MessageSet(edges=tuple(d), values=np.full((len(d), 2), 0.5))


def random_messages(model, seed):
    """Uniform messages perturbed by seeded noise (stays in (0,1))."""
    d = model.directed_edges()
    rng = np.random.default_rng(seed)
    plus = rng.uniform(0.05, 0.95, size=len(d))
    return MessageSet(edges=tuple(d), values=np.column_stack([plus, 1.0 - plus]))


def messages_from_dict(model, mu):
    d = tuple(model.directed_edges())
    vals = np.array([mu[e] for e in d], dtype=np.float64)
    return MessageSet(edges=d, values=vals)


class _Compiled:
    """Per-model precomputation for the synchronous update."""

    def __init__(self, model):
        self.model = model
        self.dedges = tuple(model.directed_edges())
        self.index = {e: k for k, e in enumerate(self.dedges)}
        n_d = len(self.dedges)
        # W[d, a, b] = Phi_{ij}(x_i=s_a, x_j=s_b) * Phi_i(s_a), s_0=+1, s_1=-1
        self.W = np.empty((n_d, 2, 2))
        spin = (1.0, -1.0)
        for k, (i, j) in enumerate(self.dedges):
            J = model.coupling(i, j)
            th = model.fields[i]
            for a in range(2):
                for b in range(2):
                    self.W[k, a, b] = math.exp(J * spin[a] * spin[b] + th * spin[a])
        # incoming[k] = indices of edges (l -> i) with l != j for edge k=(i -> j)
        adj = model.adjacency()
        flat = []
        starts = []
        for (i, j) in self.dedges:
            starts.append(len(flat))
            inc = [self.index[(l, i)] for l in adj[i] if l != j]
            flat.extend(inc if inc else [n_d])  # n_d = dummy row of ones
        self.flat_inc = np.array(flat, dtype=np.int64)
        self.starts = np.array(starts, dtype=np.int64)

    def step(self, values):
        """One synchronous sweep; returns (new_values, alphas)."""
        ext = np.vstack([values, np.ones((1, 2))])
        prods = np.multiply.reduceat(ext[self.flat_inc], self.starts, axis=0)
        unnorm = np.einsum("dab,da->db", self.W, prods)
        sums = unnorm.sum(axis=1)
        return unnorm / sums[:, None], 1.0 / sums


_COMPILED_CACHE = {}


def _compiled(model):
    key = id(model)
    hit = _COMPILED_CACHE.get(key)
    if hit is None or hit.model is not model:
        hit = _Compiled(model)
        _COMPILED_CACHE.clear()
        _COMPILED_CACHE[key] = hit
    return hit


def bp_step(model, msgs):
    """One fully synchronous update of every directed-edge message."""
    comp = _compiled(model)
    vals, alphas = comp.step(msgs.values)
    return MessageSet(edges=msgs.edges, values=vals, alphas=alphas)


@dataclass(frozen=True)
class BpOptions:
    max_iters: int = 10_000
    tolerance: float = 1e-10
    damping: float = 0.0
    init: object = "uniform"  # "uniform" | ("random", seed) | MessageSet
    cycle_window: int = 64
    cycle_quant: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must lie in [0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class BpRun:
    status: str  # "converged" | "max_iters" | "limit_cycle"
    iterations: int
    final_messages: MessageSet
    residual_history: list = field(repr=False)
    cycle_period: int | None = None


def _initial_messages(model, init):
    if isinstance(init, MessageSet):
        return init
    if init == "uniform":
        return uniform_messages(model)
    if isinstance(init, tuple) and init and init[0] == "random":
        return random_messages(model, init[1])
    raise ValueError(f"unknown init {init!r}")


def run_bp(model, opts=BpOptions()):
    """Iterate damped synchronous BP until convergence, cycle, or budget."""
    comp = _compiled(model)
    msgs = _initial_messages(model, opts.init)
    values = msgs.values.copy()
    eps = opts.damping
    history = []
    seen = {}
    alphas = None
    status, period, n = "max_iters", None, 0
    for n in range(1, opts.max_iters + 1):
        new_vals, alphas = comp.step(values)
        if eps:
            new_vals = (1.0 - eps) * new_vals + eps * values
        residual = float(np.max(np.abs(new_vals - values))) if values.size else 0.0
        history.append(residual)
        values = new_vals
        if residual < opts.tolerance:
            status = "converged"
            break
        key = np.round(values / opts.cycle_quant).astype(np.int64).tobytes()
        prev = seen.get(key)
        if prev is not None and n - prev >= 2:
            status, period = "limit_cycle", n - prev
            break
        seen[key] = n
        if len(seen) > opts.cycle_window:
            cutoff = n - opts.cycle_window
            seen = {k: v for k, v in seen.items() if v > cutoff}
    final = MessageSet(edges=msgs.edges, values=values, alphas=alphas)
    return BpRun(status=status, iterations=n, final_messages=final,
                 residual_history=history, cycle_period=period)


def bp_residual(model, msgs):
    """Sup-norm change of one undamped step from the given messages."""
    comp = _compiled(model)
    new_vals, _ = comp.step(msgs.values)
    if not msgs.values.size:
        return 0.0
    return float(np.max(np.abs(new_vals - msgs.values)))


def beliefs(model, msgs):
    """Per-node P(X_i = +1) from the incoming-message product."""
    comp = _compiled(model)
    n = model.node_count
    log_b = np.zeros((n, 2))
    theta = np.array([model.fields[i] for i in range(n)])
    log_b[:, 0] = theta
    log_b[:, 1] = -theta
    with np.errstate(divide="ignore"):
        logv = np.log(msgs.values)
    for k, (i, j) in enumerate(comp.dedges):
        log_b[j] += logv[k]
    log_b -= log_b.max(axis=1, keepdims=True)
    b = np.exp(log_b)
    return b[:, 0] / b.sum(axis=1)


def pairwise_beliefs(model, msgs):
    """Per-undirected-edge joint tables, index [state_i][state_j], 0 <-> +1."""
    comp = _compiled(model)
    idx = comp.index
    adj = model.adjacency()
    spin = (1.0, -1.0)
    out = {}
    for (i, j) in model.edges:
        J = model.couplings[(i, j)]
        tab = np.empty((2, 2))
        for a in range(2):
            for b in range(2):
                tab[a, b] = math.exp(
                    J * spin[a] * spin[b]
                    + model.fields[i] * spin[a]
                    + model.fields[j] * spin[b]
                )
        prod_i = np.ones(2)
        for k in adj[i]:
            if k != j:
                prod_i *= msgs.values[idx[(k, i)]]
        prod_j = np.ones(2)
        for l in adj[j]:
            if l != i:
                prod_j *= msgs.values[idx[(l, j)]]
        tab *= prod_i[:, None] * prod_j[None, :]
        out[(i, j)] = tab / tab.sum()
    return out


# -- factor-graph BP ---------------------------------------------------------


@dataclass(frozen=True)
class FactorMessageSet:
    """q: variable->factor messages (normalized); r: factor->variable
    (unnormalized sum-product); alphas: q normalizers."""

    q: dict
    r: dict
    alphas: dict = field(default_factory=dict)

    def flat_q(self):
        keys = sorted(self.q)
        return np.concatenate([self.q[k] for k in keys])


def uniform_factor_messages(fg):
    q = {}
    r = {}
    for a, (vs, _table) in enumerate(fg.factors):
        for v in vs:
            q[(v, a)] = np.array([0.5, 0.5])
            r[(a, v)] = np.array([0.5, 0.5])
    return FactorMessageSet(q=q, r=r)


def _variable_factors(fg):
    nb = [[] for _ in range(fg.variable_count)]
    for a, (vs, _table) in enumerate(fg.factors):
        for v in vs:
            nb[v].append(a)
    return nb


def factor_bp_step(fg, msgs):
    """One sweep: r-update from old q, then q-update from the new r."""
    new_r = {}
    for a, (vs, table) in enumerate(fg.factors):
        arr = np.array(table, dtype=np.float64).reshape((2,) * len(vs))
        for pos, v in enumerate(vs):
            acc = np.zeros(2)
            for states in iproduct((0, 1), repeat=len(vs)):
                w = arr[states]
                if w == 0.0:
                    continue
                p = w
                for pos2, v2 in enumerate(vs):
                    if pos2 != pos:
                        p *= msgs.q[(v2, a)][states[pos2]]
                acc[states[pos]] += p
            new_r[(a, v)] = acc
    nb = _variable_factors(fg)
    new_q = {}
    alphas = {}
    for (v, a) in msgs.q:
        prod = np.ones(2)
        for b in nb[v]:
            if b != a:
                prod *= new_r[(b, v)]
        s = prod.sum()
        if s <= 0.0:
            raise FloatingPointError(
                f"variable {v} -> factor {a} message lost all mass"
            )
        new_q[(v, a)] = prod / s
        alphas[(v, a)] = 1.0 / s
    return FactorMessageSet(q=new_q, r=new_r, alphas=alphas)


def run_factor_bp(fg, opts=BpOptions(), init=None):
    """Damped synchronous factor-graph BP on the q messages."""
    msgs = init if init is not None else uniform_factor_messages(fg)
    eps = opts.damping
    history = []
    seen = {}
    status, period, n = "max_iters", None, 0
    for n in range(1, opts.max_iters + 1):
        new = factor_bp_step(fg, msgs)
        if eps:
            new = FactorMessageSet(
                q={k: (1 - eps) * v + eps * msgs.q[k] for k, v in new.q.items()},
                r=new.r,
                alphas=new.alphas,
            )
        residual = max(
            float(np.max(np.abs(new.q[k] - msgs.q[k]))) for k in new.q
        ) if new.q else 0.0
        history.append(residual)
        msgs = new
        if residual < opts.tolerance:
            status = "converged"
            break
        key = np.round(msgs.flat_q() / opts.cycle_quant).astype(np.int64).tobytes()
        prev = seen.get(key)
        if prev is not None and n - prev >= 2:
            status, period = "limit_cycle", n - prev
            break
        seen[key] = n
        if len(seen) > opts.cycle_window:
            cutoff = n - opts.cycle_window
            seen = {k: v for k, v in seen.items() if v > cutoff}
    return BpRun(status=status, iterations=n, final_messages=msgs,
                 residual_history=history, cycle_period=period)


def factor_beliefs(fg, msgs):
    """Per-variable P(X_i = 1) from the product of incoming r messages."""
    nb = _variable_factors(fg)
    out = np.empty(fg.variable_count)
    for v in range(fg.variable_count):
        prod = np.ones(2)
        for a in nb[v]:
            prod *= msgs.r[(a, v)]
        out[v] = prod[1] / prod.sum()
    return out
