"""Binary pairwise models (Ising form) and generic factor graphs.

A pairwise model stores couplings J on undirected edges and local fields
theta on nodes; spins take values in {-1, +1} and the inverse temperature
is fixed at 1.  Factor graphs store dense non-negative tables over binary
variables in {0, 1} and are used for the coding experiments.  Potentials
are kept in log-domain parameters (J, theta) and exponentiated on demand
so that downstream polynomial coefficients are reproducible bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

SPIN_STATES = (1, -1)  # canonical state order: index 0 <-> +1, index 1 <-> -1


class ModelError(ValueError):
    """Invalid model definition or model file."""


def _check_finite(name, value):
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class PairwiseModel:
    """Undirected binary model with edge couplings and node fields.

    Attributes:
        node_count: number of nodes N.
        edges: tuple of (i, j) pairs with i < j, no duplicates.
        couplings: map (i, j) -> J_ij.
        fields: map node -> theta_i.
    """

    node_count: int
    edges: tuple
    couplings: dict = field(hash=False)
    fields: dict = field(hash=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise ModelError("node_count must be positive")
        seen = set()
        for (i, j) in self.edges:
            if i == j:
                raise ModelError(f"self-loop on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ModelError(f"edge ({i},{j}) out of range")
            if i > j:
                raise ModelError(f"edge ({i},{j}) must be stored with i < j")
            if (i, j) in seen:
                raise ModelError(f"duplicate edge ({i},{j})")
            seen.add((i, j))
        if set(self.couplings) != seen:
            raise ModelError("couplings must cover exactly the edge set")
        if set(self.fields) != set(range(self.node_count)):
            raise ModelError("fields must cover exactly the node set")
        for e, j_val in self.couplings.items():
            _check_finite(f"coupling {e}", j_val)
        for i, th in self.fields.items():
            _check_finite(f"field {i}", th)

    # -- structure helpers -------------------------------------------------

    def neighbors(self, i):
        """Sorted neighbor list of node i."""
        out = [b for (a, b) in self.edges if a == i]
        out += [a for (a, b) in self.edges if b == i]
        return sorted(out)

    def adjacency(self):
        """List of sorted neighbor lists, one per node."""
        adj = [[] for _ in range(self.node_count)]
        for (i, j) in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return [sorted(a) for a in adj]

    def directed_edges(self):
        """All directed edges (i, j), both orientations, sorted."""
        out = []
        for (i, j) in self.edges:
            out.append((i, j))
            out.append((j, i))
        return sorted(out)

    def coupling(self, i, j):
        return self.couplings[(i, j) if i < j else (j, i)]

    def degree(self, i):
        return len(self.neighbors(i))


@dataclass(frozen=True)
class FactorGraph:
    """Factor graph over binary variables in {0, 1}.

    factors: tuple of (variable index tuple, table) where the table is a
    flat tuple of non-negative reals indexed by the joint state in
    lexicographic order (last variable fastest).
    """

    variable_count: int
    factors: tuple

    def __post_init__(self):
        if self.variable_count < 1:
            raise ModelError("variable_count must be positive")
        for k, (vs, table) in enumerate(self.factors):
            if len(set(vs)) != len(vs):
                raise ModelError(f"factor {k} repeats a variable")
            for v in vs:
                if not (0 <= v < self.variable_count):
                    raise ModelError(f"factor {k} references variable {v} out of range")
            if len(table) != 2 ** len(vs):
                raise ModelError(
                    f"factor {k} table length {len(table)} != 2^{len(vs)}"
                )
            if not any(t > 0 for t in table):
                raise ModelError(f"factor {k} table is identically zero")
            for t in table:
                _check_finite(f"factor {k} entry", t)
                if t < 0:
                    raise ModelError(f"factor {k} has negative entry {t}")

    @property
    def variable_cardinalities(self):
        return [2] * self.variable_count

    def factor_value(self, k, states):
        """Table entry of factor k for the given full assignment (0/1 list)."""
        vs, table = self.factors[k]
        idx = 0
        for v in vs:
            idx = 2 * idx + states[v]
        return table[idx]


# -- constructors ----------------------------------------------------------


def build_grid(rows, cols, couplings=None, fields=None):
    """4-neighbor lattice with rows*cols nodes.

    couplings/fields may be a scalar (applied uniformly), a map, or None
    (zero).  Nodes are numbered row-major.
    """
    if rows < 1 or cols < 1:
        raise ModelError("rows and cols must be positive")
    n = rows * cols
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    edges = tuple(sorted(edges))
    return PairwiseModel(
        node_count=n,
        edges=edges,
        couplings=_expand_edge_map(couplings, edges),
        fields=_expand_node_map(fields, n),
    )


def build_complete(n, J=0.0, theta=0.0):
    """Fully connected model on n nodes with uniform parameters."""
    if n < 1:
        raise ModelError("n must be positive")
    edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
    return PairwiseModel(
        node_count=n,
        edges=edges,
        couplings={e: float(J) for e in edges},
        fields={i: float(theta) for i in range(n)},
    )


def build_tree(n, parents, couplings=None, fields=None):
    """Tree on n nodes given parents[i] for i >= 1 (node 0 is the root)."""
    if len(parents) != n - 1:
        raise ModelError("parents must have length n-1")
    edges = []
    for i, p in enumerate(parents, start=1):
        if not (0 <= p < i):
            raise ModelError(f"parent of node {i} must be an earlier node")
        edges.append((min(i, p), max(i, p)))
    edges = tuple(sorted(edges))
    return PairwiseModel(
        node_count=n,
        edges=edges,
        couplings=_expand_edge_map(couplings, edges),
        fields=_expand_node_map(fields, n),
    )


def _expand_edge_map(couplings, edges):
    if couplings is None:
        return {e: 0.0 for e in edges}
    if isinstance(couplings, (int, float)):
        return {e: float(couplings) for e in edges}
    got = {tuple(sorted(e)): float(v) for e, v in couplings.items()}
    if set(got) != set(edges):
        raise ModelError("coupling map does not match the edge set")
    return got


def _expand_node_map(fields, n):
    if fields is None:
        return {i: 0.0 for i in range(n)}
    if isinstance(fields, (int, float)):
        return {i: float(fields) for i in range(n)}
    got = {int(i): float(v) for i, v in fields.items()}
    if set(got) != set(range(n)):
        raise ModelError("field map does not match the node set")
    return got


# -- evaluation ------------------------------------------------------------


def log_weight(model, assignment):
    """Log of the unnormalized Boltzmann weight of a +-1 assignment."""
    if len(assignment) != model.node_count:
        raise ModelError("assignment length mismatch")
    s = 0.0
    for (i, j), J in model.couplings.items():
        s += J * assignment[i] * assignment[j]
    for i, th in model.fields.items():
        s += th * assignment[i]
    return s


def unnormalized_weight(model, assignment):
    """exp(sum_ij J x_i x_j + sum_i theta_i x_i); strictly positive."""
    return math.exp(log_weight(model, assignment))


def to_factor_graph(model):
    """Pairwise model as a factor graph over spins.

    Variables keep the spin interpretation with state index 0 <-> -1 and
    1 <-> +1 (so tables read [f(-1), f(+1)], matching the {0,1} ordering
    used for generic factor graphs).  One unary factor per node and one
    pairwise factor per undirected edge; the product of factor values
    equals unnormalized_weight for every assignment.
    """
    factors = []
    for i in range(model.node_count):
        th = model.fields[i]
        factors.append(((i,), (math.exp(-th), math.exp(th))))
    for (i, j) in model.edges:
        J = model.couplings[(i, j)]
        # table order over (x_i, x_j) in {0:-1, 1:+1}^2: (--, -+, +-, ++)
        table = (math.exp(J), math.exp(-J), math.exp(-J), math.exp(J))
        factors.append(((i, j), table))
    return FactorGraph(variable_count=model.node_count, factors=tuple(factors))


# -- file I/O ---------------------------------------------------------------


def model_to_dict(model):
    if isinstance(model, FactorGraph):
        return {
            "kind": "factor_graph",
            "vars": model.variable_count,
            "factors": [
                {"vars": list(vs), "table": list(table)}
                for vs, table in model.factors
            ],
        }
    return {
        "kind": "custom",
        "nodes": model.node_count,
        "edges": [[i, j, model.couplings[(i, j)]] for (i, j) in model.edges],
        "fields": [model.fields[i] for i in range(model.node_count)],
    }


def model_from_dict(data):
    kind = data.get("kind")
    if kind == "factor_graph":
        factors = []
        for f in data["factors"]:
            table = [_reject_nonfinite(x) for x in f["table"]]
            factors.append((tuple(int(v) for v in f["vars"]), tuple(table)))
        return FactorGraph(variable_count=int(data["vars"]), factors=tuple(factors))
    if kind in ("grid", "complete", "custom"):
        n = int(data["nodes"])
        edges = []
        couplings = {}
        for (i, j, J) in data["edges"]:
            e = (min(int(i), int(j)), max(int(i), int(j)))
            edges.append(e)
            couplings[e] = _reject_nonfinite(J)
        fields_list = [_reject_nonfinite(x) for x in data["fields"]]
        if len(fields_list) != n:
            raise ModelError("fields list length must equal node count")
        return PairwiseModel(
            node_count=n,
            edges=tuple(sorted(edges)),
            couplings=couplings,
            fields={i: v for i, v in enumerate(fields_list)},
        )
    raise ModelError(f"unknown model kind {kind!r}")


def _reject_nonfinite(x):
    v = float(x)
    if not math.isfinite(v):
        raise ModelError(f"non-finite value {x!r} in model file")
    return v


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def random_model(structure, K, rng):
    """Copy of a structure with parameters drawn i.i.d. uniform(-K, K)."""
    rng = np.random.default_rng(rng)
    couplings = {e: float(rng.uniform(-K, K)) for e in structure.edges}
    fields = {i: float(rng.uniform(-K, K)) for i in range(structure.node_count)}
    return PairwiseModel(
        node_count=structure.node_count,
        edges=structure.edges,
        couplings=couplings,
        fields=fields,
    )
