"""Newton polytopes, lifted lower hulls, and mixed-cell enumeration.

The root count of a sparse square system equals the mixed volume of its
Newton polytopes.  A random integer lifting of every support induces a
subdivision of the Minkowski sum; the mixed cells are the selections of
one support edge per equation that lie on the lifted lower hull, and
their volumes (edge-matrix determinants) sum to the mixed volume.

Feasibility of a candidate cell is decided exactly: the lower-hull
conditions form equalities/strict inequalities in the hull normal
``gamma`` which are maintained in rational arithmetic during a
depth-first search, so no floating-point tolerance enters the
combinatorial stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_ZERO = Fraction(0)


class DegenerateLiftingError(RuntimeError):
    """The lifting produced a tie (non-fine subdivision); retry with a new one."""


@dataclass(frozen=True)
class MixedCell:
    """One lower-hull cell: a support-point pair per equation plus its data."""

    edges: tuple  # per equation: (point_a, point_b) exponent tuples
    gamma: tuple  # hull normal, Fractions
    volume: int  # |det| of the edge-difference matrix


@dataclass(frozen=True)
class MixedCellDecomposition:
    lifting: tuple  # per equation: dict exponent tuple -> lifting value
    cells: tuple
    total_volume: int


def newton_supports(system):
    """Deduplicated monomial support of every equation."""
    return system.supports()


# -- exact linear state for the DFS -------------------------------------------


class _LinearState:
    """Solved equalities, strict inequalities, and interval bounds on gamma.

    solved[v] = (pairs, const): gamma_v = const + sum c*gamma_u over pairs;
    referenced variables may themselves be solved later, reduce() resolves
    chains transitively.  Pending entries are (pairs, const) meaning
    const + sum c*gamma_u > 0 with >= 2 free variables; single-variable
    inequalities live in the strict bound maps lo/hi.  Bound propagation
    through pending entries gives cheap exact infeasibility detection.
    """

    __slots__ = ("solved", "pending", "lo", "hi", "tied", "_dirty")

    def __init__(self):
        self.solved = {}
        self.pending = []
        self.lo = {}  # var -> strict lower bound
        self.hi = {}  # var -> strict upper bound
        self.tied = False
        self._dirty = set()

    def copy(self):
        st = _LinearState.__new__(_LinearState)
        st.solved = dict(self.solved)
        st.pending = list(self.pending)
        st.lo = dict(self.lo)
        st.hi = dict(self.hi)
        st.tied = self.tied
        st._dirty = set()
        return st

    def reduce(self, pairs, const):
        """Substitute solved variables; returns (pairs over free vars, const)."""
        out = {}
        stack = list(pairs)
        solved = self.solved
        while stack:
            v, c = stack.pop()
            hit = solved.get(v)
            if hit is None:
                out[v] = out.get(v, _ZERO) + c
            else:
                s_pairs, s_const = hit
                const = const + c * s_const
                for u, cu in s_pairs:
                    stack.append((u, c * cu))
        return tuple((v, c) for v, c in out.items() if c != 0), const

    def eval_if_determined(self, pairs, const):
        pairs, const = self.reduce(pairs, const)
        if pairs:
            return None
        return const

    def add_equality(self, pairs, const):
        """Add const + sum pairs = 0.  Returns False if inconsistent."""
        pairs, const = self.reduce(pairs, const)
        if not pairs:
            return const == 0
        v0, c0 = pairs[0]
        expr_pairs = tuple((u, -c / c0) for u, c in pairs[1:])
        expr_const = -const / c0
        self.solved[v0] = (expr_pairs, expr_const)
        # existing bounds on the pivot become inequalities on its expression
        lo = self.lo.pop(v0, None)
        hi = self.hi.pop(v0, None)
        if not self._resettle_pending(v0):
            return False
        if lo is not None and not self._settle(expr_pairs, expr_const - lo):
            return False
        if hi is not None and not self._settle(
            tuple((u, -c) for u, c in expr_pairs), hi - expr_const
        ):
            return False
        return self._propagate()

    def add_inequality(self, pairs, const):
        """Add const + sum pairs > 0.  Returns False if impossible; an exact
        tie is recorded and reported only if the branch survives."""
        if not self._settle(*self.reduce(pairs, const)):
            return False
        return self._propagate()

    def _settle(self, pairs, const):
        """File an already-reduced strict inequality in the right store.

        Pruning is deliberately conservative: an exactly-empty interval
        (lo == hi) is kept alive so a potentially degenerate lifting is
        caught by the tie check at a leaf instead of silently dropped.
        """
        if not pairs:
            if const == 0:
                self.tied = True
                return True
            return const > 0
        if len(pairs) == 1:
            v, c = pairs[0]
            bound = -const / c
            if c > 0:
                if v in self.hi and self.hi[v] < bound:
                    return False
                if bound > self.lo.get(v, bound - 1):
                    self.lo[v] = bound
                    self._dirty.add(v)
            else:
                if v in self.lo and self.lo[v] > bound:
                    return False
                if bound < self.hi.get(v, bound + 1):
                    self.hi[v] = bound
                    self._dirty.add(v)
            return True
        self.pending.append((pairs, const))
        self._dirty.update(v for v, _c in pairs)
        return True

    def _resettle_pending(self, pivot):
        kept = []
        for pairs, const in self.pending:
            if any(v == pivot for v, _c in pairs):
                if not self._settle(*self.reduce(pairs, const)):
                    return False
            else:
                kept.append((pairs, const))
        self.pending = kept
        return True

    def _propagate(self, max_rounds=4):
        """Tighten interval bounds through pending entries touching changed
        variables; worst-case contributions of the other variables give a
        valid strict bound on each variable in turn."""
        for _ in range(max_rounds):
            if not self._dirty:
                return True
            dirty, self._dirty = self._dirty, set()
            for pairs, const in self.pending:
                if not any(v in dirty for v, _c in pairs):
                    continue
                for k, (v, c) in enumerate(pairs):
                    s = const
                    ok = True
                    for k2, (u, cu) in enumerate(pairs):
                        if k2 == k:
                            continue
                        b = self.hi.get(u) if cu > 0 else self.lo.get(u)
                        if b is None:
                            ok = False
                            break
                        s += cu * b
                    if not ok:
                        continue
                    bound = -s / c
                    if c > 0:
                        if bound > self.lo.get(v, bound - 1):
                            if v in self.hi and self.hi[v] < bound:
                                return False
                            self.lo[v] = bound
                            self._dirty.add(v)
                    else:
                        if bound < self.hi.get(v, bound + 1):
                            if v in self.lo and self.lo[v] > bound:
                                return False
                            self.hi[v] = bound
                            self._dirty.add(v)
        self._dirty.clear()
        return True


def _exact_det(rows):
    """|det| of an integer matrix; float fast path, Bareiss fallback."""
    n = len(rows)
    if n == 0:
        return 1
    arr = np.array(rows, dtype=np.float64)
    d = np.linalg.det(arr)
    r = round(d)
    if abs(d - r) < 1e-6 * max(1.0, abs(d)) and abs(d) < 1e12:
        return abs(r)
    m = [[int(x) for x in row] for row in rows]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k] != 0:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return abs(m[n - 1][n - 1])


def _lp_feasible(state):
    """Float LP relaxation of the pending strict inequalities.

    Maximizes the worst slack; returns False only for a clearly infeasible
    region so that exact arithmetic remains the sole arbiter of acceptance.
    """
    pending = state.pending
    if not pending:
        return True
    vars_used = sorted({v for pairs, _c in pending for v, _cc in pairs})
    col = {v: k for k, v in enumerate(vars_used)}
    nv = len(vars_used)
    a_ub = np.zeros((len(pending), nv + 1))
    b_ub = np.empty(len(pending))
    for r, (pairs, const) in enumerate(pending):
        for v, c in pairs:
            a_ub[r, col[v]] = -float(c)
        a_ub[r, nv] = 1.0
        b_ub[r] = float(const)
    cost = np.zeros(nv + 1)
    cost[nv] = -1.0
    bounds = [(None, None)] * nv + [(None, 1.0)]
    res = _linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 2:
        return False
    if res.status == 0 and -res.fun < -1e-9:
        return False
    return True


def _linprog(*args, **kwargs):
    global _scipy_linprog
    if _scipy_linprog is None:
        from scipy.optimize import linprog as _lp
        _scipy_linprog = _lp
    return _scipy_linprog(*args, **kwargs)


_scipy_linprog = None


class _Enumerator:
    """Depth-first enumeration of mixed cells for one fixed lifting."""

    def __init__(self, supports, liftings, order):
        self.supports = supports
        self.liftings = liftings
        self.order = order
        self.m_eqs = len(supports)
        self.nvars = len(supports[0][0]) if supports and supports[0] else 0
        # per equation/point: sparse (var, Fraction) coefficient pairs
        self.pt_pairs = [
            [
                tuple((k, Fraction(p[k])) for k in range(self.nvars) if p[k])
                for p in pts
            ]
            for pts in supports
        ]
        self.pt_lift = [
            [Fraction(liftings[m][p]) for p in pts]
            for m, pts in enumerate(supports)
        ]
        self.cells = []
        self.nodes = 0
        self.lp_calls = 0

    def run(self):
        self.chosen = {}
        viable = {
            m: [
                (a, b)
                for a in range(len(self.supports[m]))
                for b in range(a + 1, len(self.supports[m]))
            ]
            for m in self.order
        }
        self._descend(viable, _LinearState())
        return self.cells

    # -- helpers -------------------------------------------------------------

    def _pair_constraints(self, m, a_idx, b_idx):
        """Equality for the edge and strict inequalities for other points."""
        pa = dict(self.pt_pairs[m][a_idx])
        pb = self.pt_pairs[m][b_idx]
        eq = dict(pa)
        for v, c in pb:
            eq[v] = eq.get(v, _ZERO) - c
        eq_pairs = tuple((v, c) for v, c in eq.items() if c != 0)
        eq_const = self.pt_lift[m][a_idx] - self.pt_lift[m][b_idx]
        ineqs = []
        for idx, pc in enumerate(self.pt_pairs[m]):
            if idx == a_idx or idx == b_idx:
                continue
            diff = dict(pc)
            for v, c in pa.items():
                diff[v] = diff.get(v, _ZERO) - c
            ineqs.append(
                (
                    tuple((v, c) for v, c in diff.items() if c != 0),
                    self.pt_lift[m][idx] - self.pt_lift[m][a_idx],
                )
            )
        return (eq_pairs, eq_const), ineqs

    def _apply_choice(self, state, m, a_idx, b_idx):
        """Exact constraint update for choosing edge (a,b) in equation m."""
        (eq_pairs, eq_const), ineqs = self._pair_constraints(m, a_idx, b_idx)
        ok = state.add_equality(eq_pairs, eq_const)
        for pr, const in ineqs:
            if not ok:
                return False
            ok = state.add_inequality(pr, const)
        return ok

    def _leaf(self, state):
        if state.tied:
            raise DegenerateLiftingError("lifted points tie on a surviving cell")
        gamma = [None] * self.nvars
        for v in range(self.nvars):
            hit = state.solved.get(v)
            if hit is None:
                return  # rank-deficient selection: zero volume
            pairs, const = state.reduce(hit[0], hit[1])
            if pairs:
                return
            gamma[v] = const
        rows = [None] * self.m_eqs
        edges = [None] * self.m_eqs
        for m, (a_idx, b_idx) in self.chosen.items():
            pa, pb = self.supports[m][a_idx], self.supports[m][b_idx]
            edges[m] = (pa, pb)
            rows[m] = [pa[k] - pb[k] for k in range(self.nvars)]
        vol = _exact_det(rows)
        if vol == 0:
            return
        self.cells.append(
            MixedCell(edges=tuple(edges), gamma=tuple(gamma), volume=vol)
        )

    def _descend(self, viable, state):
        """viable: equation -> candidate edges still consistent one level up.

        Re-verifies every candidate against the exact state (viability is
        monotone down a branch), applies forced choices, prunes empty
        equations, then branches on the most constrained equation.
        """
        self.nodes += 1
        forced = []
        while True:
            progress = False
            for m in list(viable):
                kept = []
                for (a_idx, b_idx) in viable[m]:
                    st = state.copy()
                    if self._apply_choice(st, m, a_idx, b_idx):
                        kept.append((a_idx, b_idx))
                if not kept:
                    for f in forced:
                        del self.chosen[f]
                    return  # no lower-hull edge left for this support
                if len(kept) == 1:
                    a_idx, b_idx = kept[0]
                    self._apply_choice(state, m, a_idx, b_idx)
                    self.chosen[m] = (a_idx, b_idx)
                    forced.append(m)
                    del viable[m]
                    progress = True
                else:
                    viable[m] = kept
            if not progress:
                break

        if not viable:
            try:
                self._leaf(state)
            finally:
                for f in forced:
                    del self.chosen[f]
            return

        m = min(viable, key=lambda k: len(viable[k]))
        for (a_idx, b_idx) in viable[m]:
            st = state.copy()
            if not self._apply_choice(st, m, a_idx, b_idx):
                continue
            self.lp_calls += 1
            if not _lp_feasible(st):
                continue
            child = {k: list(v) for k, v in viable.items() if k != m}
            self.chosen[m] = (a_idx, b_idx)
            self._descend(child, st)
            del self.chosen[m]
        for f in forced:
            del self.chosen[f]


def _default_order(supports, meta=None):
    """Equation processing order for the DFS.

    Systems built from models carry an interleaving hint: the three
    equations of one directed edge are visited together (normalization
    first) so the hull normal gets pinned locally and later equations hit
    the forced-choice fast path.  Other systems are ordered by support
    size.
    """
    m_eqs = len(supports)
    if meta and meta.get("kind") in ("pairwise_bp", "factor_bp") and m_eqs % 3 == 0:
        order = []
        for e in range(m_eqs // 3):
            order.extend([3 * e + 2, 3 * e, 3 * e + 1])
        return order
    return sorted(range(m_eqs), key=lambda m: (len(supports[m]), m))


def mixed_cells(supports, liftings, order=None):
    """Enumerate all mixed cells of the lifted subdivision.

    supports: per equation, list of exponent tuples.
    liftings: per equation, dict exponent tuple -> integer lifting value.
    Raises DegenerateLiftingError when the lifting is not generic enough.
    """
    if not supports:
        return MixedCellDecomposition(lifting=(), cells=(), total_volume=1)
    if order is None:
        order = _default_order(supports)
    enum = _Enumerator(supports, liftings, order)
    cells = enum.run()
    total = sum(c.volume for c in cells)
    return MixedCellDecomposition(
        lifting=tuple(dict(l) for l in liftings),
        cells=tuple(sorted(cells, key=lambda c: c.edges)),
        total_volume=total,
    )


def random_lifting(supports, rng, span=64):
    """Independent integer lifting values in [0, span) for every point."""
    return [{p: int(rng.integers(0, span)) for p in pts} for pts in supports]


def bkk_bound(system, seed, max_retries=16, span=64):
    """Mixed volume of the system's Newton polytopes (the sparse root count).

    Deterministic for a given seed; degenerate liftings are retried with
    fresh values drawn from the same seed stream.
    """
    supports = newton_supports(system)
    order = _default_order(supports, getattr(system, "meta", None))
    rng = np.random.default_rng(seed)
    last = None
    for _attempt in range(max_retries):
        lifting = random_lifting(supports, rng, span=span)
        try:
            decomp = mixed_cells(supports, lifting, order=order)
        except DegenerateLiftingError as exc:
            last = exc
            continue
        return decomp.total_volume, decomp
    raise DegenerateLiftingError(
        f"no generic lifting found after {max_retries} attempts"
    ) from last
