"""Sparse polynomial systems whose positive real roots are BP fixed points.

For a pairwise model every directed edge (i -> j) contributes three
unknowns (mu_ij(+1), mu_ij(-1), alpha_ij) and three equations: two
residuals

    -mu_ij(x_j) + alpha_ij * sum_{x_i} Phi_ij(x_i,x_j) Phi_i(x_i)
                  * prod_{k in N(i)\\j} mu_ki(x_i)

and one normalization mu_ij(+1) + mu_ij(-1) - 1.  Coefficients are the
exponentiated potentials; every residual has exactly three monomials no
matter how dense the graph is.  Factor-graph systems do the same for the
variable-to-factor messages with the factor-to-variable messages
eliminated by substitution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np

from .model import FactorGraph, ModelError

MAX_FACTOR_ARITY = 8


@dataclass(frozen=True)
class PolynomialSystem:
    """Square sparse system: equations are tuples of (coeff, exponent tuple)."""

    var_names: tuple
    equations: tuple
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_vars(self):
        return len(self.var_names)

    @property
    def num_equations(self):
        return len(self.equations)

    def __post_init__(self):
        n = len(self.var_names)
        for m, eq in enumerate(self.equations):
            for coeff, exp in eq:
                if coeff == 0:
                    raise ValueError(f"equation {m} stores a zero coefficient")
                if len(exp) != n:
                    raise ValueError(f"equation {m} exponent length != {n}")

    def supports(self):
        """Deduplicated exponent-vector support of every equation."""
        return [sorted({exp for _c, exp in eq}) for eq in self.equations]


@dataclass(frozen=True)
class SystemStats:
    num_equations: int
    degree_profile: dict  # total degree -> equation count
    total_degree: int  # product of equation degrees (exact big integer)


def _collect(terms):
    """Merge like monomials and drop exact zeros."""
    acc = {}
    for coeff, exp in terms:
        acc[exp] = acc.get(exp, 0.0) + coeff
    return tuple((c, e) for e, c in sorted(acc.items()) if c != 0)


# -- pairwise construction ---------------------------------------------------


def _pairwise_layout(model):
    dedges = sorted(model.directed_edges())
    names = []
    for (i, j) in dedges:
        names.append(f"mu_{i}_{j}_p")
        names.append(f"mu_{i}_{j}_m")
    for (i, j) in dedges:
        names.append(f"a_{i}_{j}")
    mu_idx = {(e, s): 2 * k + s for k, e in enumerate(dedges) for s in (0, 1)}
    alpha_idx = {e: 2 * len(dedges) + k for k, e in enumerate(dedges)}
    return dedges, tuple(names), mu_idx, alpha_idx


def build_bp_system(model):
    """Fixed-point system of the synchronous BP map (messages + normalizers)."""
    dedges, names, mu_idx, alpha_idx = _pairwise_layout(model)
    nvars = len(names)
    adj = model.adjacency()
    spin = (1.0, -1.0)
    equations = []
    for (i, j) in dedges:
        J = model.coupling(i, j)
        th = model.fields[i]
        incoming = [(k, i) for k in adj[i] if k != j]
        for s_j in (0, 1):  # state of x_j: 0 <-> +1, 1 <-> -1
            terms = []
            exp = [0] * nvars
            exp[mu_idx[((i, j), s_j)]] = 1
            terms.append((-1.0 + 0.0j, tuple(exp)))
            for s_i in (0, 1):
                coeff = math.exp(J * spin[s_i] * spin[s_j] + th * spin[s_i])
                exp = [0] * nvars
                exp[alpha_idx[(i, j)]] = 1
                for e_in in incoming:
                    exp[mu_idx[(e_in, s_i)]] = 1
                terms.append((coeff + 0.0j, tuple(exp)))
            equations.append(_collect(terms))
        exp_p = [0] * nvars
        exp_p[mu_idx[((i, j), 0)]] = 1
        exp_m = [0] * nvars
        exp_m[mu_idx[((i, j), 1)]] = 1
        equations.append(
            _collect([
                (1.0 + 0.0j, tuple(exp_p)),
                (1.0 + 0.0j, tuple(exp_m)),
                (-1.0 + 0.0j, (0,) * nvars),
            ])
        )
    return PolynomialSystem(
        var_names=names,
        equations=tuple(equations),
        meta={"kind": "pairwise_bp", "dedges": dedges},
    )


# -- factor-graph construction -----------------------------------------------


def _r_polynomial(fg, a, v, y, q_idx, nvars):
    """Terms of r_{f_a -> v}(y) after substituting the q messages.

    Factors of arity 1 give a single constant term; zero table entries
    are dropped.
    """
    vs, table = fg.factors[a]
    arr = np.array(table, dtype=np.float64).reshape((2,) * len(vs))
    pos = vs.index(v)
    others = [w for w in vs if w != v]
    terms = []
    for states in iproduct((0, 1), repeat=len(others)):
        full = list(states)
        full.insert(pos, y)
        w = arr[tuple(full)]
        if w == 0.0:
            continue
        exp = [0] * nvars
        for wvar, s in zip(others, states):
            exp[q_idx[((wvar, a), s)]] += 1
        terms.append((w + 0.0j, tuple(exp)))
    return terms


def _poly_mul(terms_a, terms_b):
    out = []
    for ca, ea in terms_a:
        for cb, eb in terms_b:
            out.append((ca * cb, tuple(x + y for x, y in zip(ea, eb))))
    return out


def build_factor_bp_system(fg):
    """Square system in the q messages (and their normalizers) only.

    Messages toward arity-1 factors are never consumed by any update and
    carry no unknowns.
    """
    for a, (vs, _t) in enumerate(fg.factors):
        if len(vs) > MAX_FACTOR_ARITY:
            raise ModelError(
                f"factor {a} arity {len(vs)} exceeds cap {MAX_FACTOR_ARITY}"
            )
    arity = [len(vs) for vs, _t in fg.factors]
    qedges = sorted(
        (v, a) for a, (vs, _t) in enumerate(fg.factors) for v in vs if arity[a] >= 2
    )
    names = []
    for (v, a) in qedges:
        names.append(f"q_{v}_{a}_0")
        names.append(f"q_{v}_{a}_1")
    for (v, a) in qedges:
        names.append(f"a_{v}_{a}")
    nvars = len(names)
    q_idx = {(e, s): 2 * k + s for k, e in enumerate(qedges) for s in (0, 1)}
    alpha_idx = {e: 2 * len(qedges) + k for k, e in enumerate(qedges)}
    nb = [[] for _ in range(fg.variable_count)]
    for a, (vs, _t) in enumerate(fg.factors):
        for v in vs:
            nb[v].append(a)
    equations = []
    for (v, a) in qedges:
        for y in (0, 1):
            exp = [0] * nvars
            exp[alpha_idx[(v, a)]] = 1
            prod = [(1.0 + 0.0j, tuple(exp))]
            for b in nb[v]:
                if b == a:
                    continue
                prod = _poly_mul(prod, _r_polynomial(fg, b, v, y, q_idx, nvars))
            exp = [0] * nvars
            exp[q_idx[((v, a), y)]] = 1
            terms = [(-1.0 + 0.0j, tuple(exp))] + prod
            equations.append(_collect(terms))
        exp0 = [0] * nvars
        exp0[q_idx[((v, a), 0)]] = 1
        exp1 = [0] * nvars
        exp1[q_idx[((v, a), 1)]] = 1
        equations.append(
            _collect([
                (1.0 + 0.0j, tuple(exp0)),
                (1.0 + 0.0j, tuple(exp1)),
                (-1.0 + 0.0j, (0,) * nvars),
            ])
        )
    return PolynomialSystem(
        var_names=tuple(names),
        equations=tuple(equations),
        meta={"kind": "factor_bp", "qedges": qedges},
    )


# -- evaluation and statistics ----------------------------------------------


def residual(system, point):
    """Value of every equation at the point (complex vector)."""
    x = np.asarray(point, dtype=np.complex128)
    if x.shape != (system.num_vars,):
        raise ValueError(
            f"point has length {x.shape}, system has {system.num_vars} variables"
        )
    out = np.zeros(system.num_equations, dtype=np.complex128)
    for m, eq in enumerate(system.equations):
        total = 0.0 + 0.0j
        for coeff, exp in eq:
            term = coeff
            for k, e in enumerate(exp):
                if e == 1:
                    term = term * x[k]
                elif e > 1:
                    term = term * x[k] ** e
            total += term
        out[m] = total
    return out


def max_residual(system, point):
    return float(np.max(np.abs(residual(system, point))))


def stats(system):
    """Equation count, total-degree profile, and Bezout-style product."""
    profile = {}
    total = 1
    for eq in system.equations:
        deg = max(sum(exp) for _c, exp in eq)
        profile[deg] = profile.get(deg, 0) + 1
        total *= max(deg, 1)
    return SystemStats(
        num_equations=system.num_equations,
        degree_profile=dict(sorted(profile.items())),
        total_degree=total,
    )


# -- solution <-> message conversion ------------------------------------------


def solution_to_messages(system, point):
    """Positive real solution vector -> message arrays keyed by edge.

    Returns (messages, alphas) where messages maps a directed edge (or
    q-edge) to its renormalized (state0, state1) pair.
    """
    kind = system.meta.get("kind")
    if kind == "pairwise_bp":
        edges = system.meta["dedges"]
    elif kind == "factor_bp":
        edges = system.meta["qedges"]
    else:
        raise ValueError("system does not carry message metadata")
    x = np.real(np.asarray(point))
    msgs = {}
    alphas = {}
    ne = len(edges)
    for k, e in enumerate(edges):
        p, m = x[2 * k], x[2 * k + 1]
        msgs[e] = np.array([p, m]) / (p + m)
        alphas[e] = x[2 * ne + k]
    return msgs, alphas


# -- file format ---------------------------------------------------------------


def write_system(system, path):
    """Text format: header, variable-name line, one line per equation."""
    with open(path, "w") as fh:
        fh.write(f"# fixbp polynomial system: {system.num_equations} equations, "
                 f"{system.num_vars} variables\n")
        fh.write("vars " + " ".join(system.var_names) + "\n")
        for eq in system.equations:
            parts = []
            for coeff, exp in eq:
                exps = " ".join(str(e) for e in exp)
                parts.append(f"{coeff.real!r} {coeff.imag!r} : {exps}")
            fh.write(" ; ".join(parts) + "\n")


def read_system(path):
    var_names = None
    equations = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("vars "):
                var_names = tuple(line.split()[1:])
                continue
            if var_names is None:
                raise ValueError("system file must declare variables first")
            eq = []
            for part in line.split(";"):
                head, _, tail = part.partition(":")
                re_s, im_s = head.split()
                exp = tuple(int(t) for t in tail.split())
                if len(exp) != len(var_names):
                    raise ValueError("exponent vector length mismatch")
                eq.append((complex(float(re_s), float(im_s)), exp))
            equations.append(tuple(eq))
    if var_names is None:
        raise ValueError("missing variable declaration line")
    return PolynomialSystem(var_names=var_names, equations=tuple(equations))
