"""Mixed-integer linear programs: model container and exact solvers.

Three solve routes share one sealed array representation:

* ``solve_lp``      -- bounded revised simplex on the continuous relaxation,
                       two-phase (artificial variables) when the all-slack
                       start is infeasible.
* ``solve_mip``     -- best-first branch and bound on the integer variables,
                       branching on the most fractional one.  Every node is
                       solved from scratch; no warm starts, cuts or presolve.
* ``brute_force_solve`` -- exhaustive enumeration of the integer grid with a
                       residual LP per assignment.  Intended as an
                       independent oracle for the branch-and-bound route on
                       small instances.

Maximization throughout.  Models are immutable once sealed; solves never
mutate the model, so distinct models can be solved concurrently.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np

from ._simplex import (
    KERNEL_ITER_LIMIT,
    KERNEL_OPTIMAL,
    KERNEL_SINGULAR,
    KERNEL_UNBOUNDED,
    simplex_kernel,
)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NODE_LIMIT = "node-limit"
STATUS_FAILURE = "solver-failure"

SENSE_LE = "<="
SENSE_EQ = "="
SENSE_GE = ">="
_SENSES = (SENSE_LE, SENSE_EQ, SENSE_GE)


class ModelError(ValueError):
    """Raised for malformed models or contract violations at solve time."""


@dataclass
class SolverConfig:
    feasibility_tol: float = 1e-7
    integrality_tol: float = 1e-6
    node_limit: int = 100_000
    time_limit_s: float = 30.0
    max_lp_iterations: int = 0  # 0 = derive from model size
    # accept an incumbent once the best bound is within this relative gap of
    # it; 0 demands exact closure
    gap_rel: float = 0.0


@dataclass
class Solution:
    status: str
    values: np.ndarray | None
    objective: float | None
    iterations: int = 0
    nodes: int = 0


class LinearModel:
    """Incrementally built LP/MIP, maximization sense.

    Variables carry finite lower bounds (upper bounds may be +inf) and an
    objective coefficient; constraints are sparse rows with sense <=, = or >=.
    ``seal()`` freezes the model and builds the CSC arrays the solvers use;
    further mutation raises.
    """

    def __init__(self):
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._integer: list[bool] = []
        self._obj: list[float] = []
        # row definitions in insertion order; "one" chunks hold a single
        # merged coefficient list, "bulk" chunks hold CSR arrays
        self._chunks: list[tuple] = []
        self._n_rows = 0
        self._sealed: _Sealed | None = None

    # -- construction --

    @property
    def n_variables(self) -> int:
        return len(self._lb)

    @property
    def n_constraints(self) -> int:
        return self._n_rows

    @property
    def lb(self) -> np.ndarray:
        return np.asarray(self._lb, dtype=float)

    @property
    def ub(self) -> np.ndarray:
        return np.asarray(self._ub, dtype=float)

    @property
    def obj(self) -> np.ndarray:
        return np.asarray(self._obj, dtype=float)

    @property
    def integer_mask(self) -> np.ndarray:
        return np.asarray(self._integer, dtype=bool)

    def add_variable(self, lb: float = 0.0, ub: float = math.inf,
                     integer: bool = False, obj: float = 0.0) -> int:
        if self._sealed is not None:
            raise ModelError("model is sealed")
        if not math.isfinite(lb):
            raise ModelError(f"lower bound must be finite, got {lb}")
        if math.isnan(ub) or ub < lb:
            raise ModelError(f"bad bounds [{lb}, {ub}]")
        if not math.isfinite(obj):
            raise ModelError(f"objective coefficient must be finite, got {obj}")
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._integer.append(bool(integer))
        self._obj.append(float(obj))
        return len(self._lb) - 1

    def add_variables(self, lb, ub, integer, obj) -> int:
        """Bulk variant of add_variable for array inputs; returns the first id."""
        if self._sealed is not None:
            raise ModelError("model is sealed")
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        obj = np.asarray(obj, dtype=float)
        integer = np.asarray(integer, dtype=bool)
        if not (lb.shape == ub.shape == obj.shape == integer.shape):
            raise ModelError("bulk variable arrays must share one shape")
        if not np.all(np.isfinite(lb)) or not np.all(np.isfinite(obj)):
            raise ModelError("lower bounds and objective coefficients must be finite")
        if np.any(np.isnan(ub)) or np.any(ub < lb):
            raise ModelError("bad bounds in bulk variable block")
        first = len(self._lb)
        self._lb.extend(lb.tolist())
        self._ub.extend(ub.tolist())
        self._integer.extend(integer.tolist())
        self._obj.extend(obj.tolist())
        return first

    def add_constraint(self, coeffs, sense: str, rhs: float) -> int:
        if self._sealed is not None:
            raise ModelError("model is sealed")
        if sense not in _SENSES:
            raise ModelError(f"sense must be one of {_SENSES}, got {sense!r}")
        if not math.isfinite(rhs):
            raise ModelError(f"rhs must be finite, got {rhs}")
        merged: dict[int, float] = {}
        for var, coef in coeffs:
            if not 0 <= var < len(self._lb):
                raise ModelError(f"unknown variable id {var}")
            if not math.isfinite(coef):
                raise ModelError(f"coefficient must be finite, got {coef}")
            merged[var] = merged.get(var, 0.0) + float(coef)
        self._chunks.append(("one", sorted(merged.items()), sense, float(rhs)))
        self._n_rows += 1
        return self._n_rows - 1

    def add_constraints(self, indptr, cols, vals, senses, rhs) -> int:
        """Bulk CSR block of constraint rows; returns the first row id.

        Row k of the block has coefficients ``vals[indptr[k]:indptr[k+1]]``
        on variables ``cols[...]``.  Duplicate (row, variable) entries are
        summed at seal time.
        """
        if self._sealed is not None:
            raise ModelError("model is sealed")
        indptr = np.asarray(indptr, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        rhs = np.asarray(rhs, dtype=np.float64)
        n_rows = len(rhs)
        if len(indptr) != n_rows + 1 or indptr[0] != 0 or indptr[-1] != len(cols):
            raise ModelError("bulk constraint indptr does not span the arrays")
        if len(cols) != len(vals):
            raise ModelError("bulk constraint cols/vals length mismatch")
        if np.any(np.diff(indptr) < 0):
            raise ModelError("bulk constraint indptr must be non-decreasing")
        if len(cols) and (cols.min() < 0 or cols.max() >= len(self._lb)):
            raise ModelError("bulk constraint references an unknown variable")
        if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(rhs)):
            raise ModelError("bulk constraint values must be finite")
        senses = list(senses)
        if len(senses) != n_rows:
            raise ModelError("bulk constraint senses length mismatch")
        for s in senses:
            if s not in _SENSES:
                raise ModelError(f"sense must be one of {_SENSES}, got {s!r}")
        self._chunks.append(("bulk", indptr, cols, vals, senses, rhs))
        first = self._n_rows
        self._n_rows += n_rows
        return first

    # -- sealed array form --

    def seal(self) -> "_Sealed":
        if self._sealed is None:
            self._sealed = _Sealed.build(self)
        return self._sealed

    @property
    def lb(self) -> np.ndarray:
        return self.seal().lb

    @property
    def ub(self) -> np.ndarray:
        return self.seal().ub

    @property
    def obj(self) -> np.ndarray:
        return self.seal().obj

    @property
    def integer_mask(self) -> np.ndarray:
        return self.seal().integer

    def iter_rows(self):
        for chunk in self._chunks:
            if chunk[0] == "one":
                _, coeffs, sense, rhs = chunk
                yield list(coeffs), sense, rhs
            else:
                _, indptr, cols, vals, senses, rhs = chunk
                for k in range(len(rhs)):
                    lo, hi = indptr[k], indptr[k + 1]
                    yield (list(zip(cols[lo:hi].tolist(), vals[lo:hi].tolist())),
                           senses[k], float(rhs[k]))


@dataclass
class _Sealed:
    """Frozen CSC arrays plus kernel scaffolding shared by all solves."""

    n: int
    m: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    senses: list[str]
    rhs: np.ndarray
    obj: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    # full matrix including slack columns, used directly by the kernel
    full_indptr: np.ndarray = field(repr=False, default=None)
    full_indices: np.ndarray = field(repr=False, default=None)
    full_data: np.ndarray = field(repr=False, default=None)
    slack_lb: np.ndarray = field(repr=False, default=None)
    slack_ub: np.ndarray = field(repr=False, default=None)

    @staticmethod
    def build(model: LinearModel) -> "_Sealed":
        n = model.n_variables
        m = model.n_constraints
        row_parts = []
        col_parts = []
        val_parts = []
        one_rows: list[int] = []
        one_cols: list[int] = []
        one_vals: list[float] = []
        senses: list[str] = []
        rhs_parts = []
        r0 = 0
        for chunk in model._chunks:
            if chunk[0] == "one":
                _, coeffs, sense, rv = chunk
                senses.append(sense)
                rhs_parts.append(rv)
                for var, coef in coeffs:
                    if coef != 0.0:
                        one_rows.append(r0)
                        one_cols.append(var)
                        one_vals.append(coef)
                r0 += 1
            else:
                _, indptr_b, cols_b, vals_b, senses_b, rhs_b = chunk
                k = len(rhs_b)
                keep = vals_b != 0.0
                rows_b = np.repeat(np.arange(r0, r0 + k, dtype=np.int64),
                                   np.diff(indptr_b))
                row_parts.append(rows_b[keep])
                col_parts.append(cols_b[keep])
                val_parts.append(vals_b[keep])
                senses.extend(senses_b)
                rhs_parts.extend(rhs_b.tolist())
                r0 += k
        if one_rows:
            row_parts.append(np.asarray(one_rows, dtype=np.int64))
            col_parts.append(np.asarray(one_cols, dtype=np.int64))
            val_parts.append(np.asarray(one_vals, dtype=np.float64))
        rhs = np.asarray(rhs_parts, dtype=np.float64)
        if row_parts:
            rows_a = np.concatenate(row_parts)
            cols_a = np.concatenate(col_parts)
            vals_a = np.concatenate(val_parts)
        else:
            rows_a = np.empty(0, dtype=np.int64)
            cols_a = np.empty(0, dtype=np.int64)
            vals_a = np.empty(0, dtype=np.float64)
        order = np.lexsort((rows_a, cols_a)) if len(rows_a) else np.empty(0, dtype=np.int64)
        rows_a = rows_a[order]
        cols_a = cols_a[order]
        vals_a = vals_a[order]
        if len(rows_a):
            # sum duplicate (row, col) entries: the kernel requires each
            # column to carry at most one entry per row
            first = np.ones(len(rows_a), dtype=bool)
            first[1:] = (cols_a[1:] != cols_a[:-1]) | (rows_a[1:] != rows_a[:-1])
            if not first.all():
                starts = np.flatnonzero(first)
                vals_a = np.add.reduceat(vals_a, starts)
                rows_a = rows_a[starts]
                cols_a = cols_a[starts]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, cols_a + 1, 1)
        np.cumsum(indptr, out=indptr)
        sealed = _Sealed(
            n=n, m=m,
            indptr=indptr, indices=rows_a, data=vals_a,
            senses=senses, rhs=rhs,
            obj=np.asarray(model._obj, dtype=np.float64),
            lb=np.asarray(model._lb, dtype=np.float64),
            ub=np.asarray(model._ub, dtype=np.float64),
            integer=np.asarray(model._integer, dtype=bool),
        )
        sealed._attach_slacks()
        for arr in (sealed.indptr, sealed.indices, sealed.data, sealed.rhs,
                    sealed.obj, sealed.lb, sealed.ub, sealed.integer):
            arr.setflags(write=False)
        return sealed

    def _attach_slacks(self):
        n, m = self.n, self.m
        nnz = len(self.data)
        self.full_indptr = np.empty(n + m + 1, dtype=np.int64)
        self.full_indptr[:n + 1] = self.indptr
        self.full_indptr[n + 1:] = nnz + 1 + np.arange(m, dtype=np.int64)
        self.full_indices = np.concatenate([self.indices, np.arange(m, dtype=np.int64)])
        self.full_data = np.concatenate([self.data, np.ones(m)])
        slack_lb = np.zeros(m)
        slack_ub = np.zeros(m)
        for i, sense in enumerate(self.senses):
            if sense == SENSE_LE:
                slack_lb[i], slack_ub[i] = 0.0, math.inf
            elif sense == SENSE_EQ:
                slack_lb[i], slack_ub[i] = 0.0, 0.0
            else:
                slack_lb[i], slack_ub[i] = -math.inf, 0.0
        self.slack_lb = slack_lb
        self.slack_ub = slack_ub


def _default_max_iter(cfg: SolverConfig, m: int) -> int:
    if cfg.max_lp_iterations > 0:
        return cfg.max_lp_iterations
    return 50_000 + 20 * m


def _solve_arrays(sealed: _Sealed, lb: np.ndarray, ub: np.ndarray,
                  rhs: np.ndarray, cfg: SolverConfig) -> tuple[str, np.ndarray | None, float, int]:
    """Two-phase simplex on the sealed structure with the given bounds/rhs.

    Returns (status, structural x, objective, iterations).
    """
    n, m = sealed.n, sealed.m
    if np.any(lb > ub + 1e-12):
        return STATUS_INFEASIBLE, None, 0.0, 0
    if m == 0:
        # box problem: each variable sits at whichever bound its sign prefers
        x = np.where(sealed.obj > 0, ub, lb)
        x = np.where(sealed.obj == 0, lb, x)
        if np.any(np.isinf(x)):
            return STATUS_UNBOUNDED, None, 0.0, 0
        return STATUS_OPTIMAL, x, float(sealed.obj @ x), 0
    if n == 0:
        ok = True
        for i, sense in enumerate(sealed.senses):
            r = rhs[i]
            if sense == SENSE_LE and r < -cfg.feasibility_tol:
                ok = False
            elif sense == SENSE_GE and r > cfg.feasibility_tol:
                ok = False
            elif sense == SENSE_EQ and abs(r) > cfg.feasibility_tol:
                ok = False
        if not ok:
            return STATUS_INFEASIBLE, None, 0.0, 0
        return STATUS_OPTIMAL, np.zeros(0), 0.0, 0

    lbf = np.concatenate([lb, sealed.slack_lb])
    ubf = np.concatenate([ub, sealed.slack_ub])
    max_iter = _default_max_iter(cfg, m)
    bland_after = max(200, 2 * m)
    refactor_every = 256

    # slack-basis start: structural variables at lower bound
    xN = lb.copy()
    slack0 = rhs.copy()
    nz = np.flatnonzero(xN)
    for j in nz:
        for k in range(sealed.indptr[j], sealed.indptr[j + 1]):
            slack0[sealed.indices[k]] -= sealed.data[k] * xN[j]
    viol = (slack0 < lbf[n:] - cfg.feasibility_tol) | (slack0 > ubf[n:] + cfg.feasibility_tol)

    iters_total = 0
    if not viol.any():
        basis = np.arange(n, n + m, dtype=np.int64)
        vstat = np.zeros(n + m, dtype=np.int8)
        vstat[n:] = 2
        c2 = np.concatenate([sealed.obj, np.zeros(m)])
        status, iters, x_full, _ = simplex_kernel(
            m, n + m, sealed.full_indptr, sealed.full_indices, sealed.full_data,
            c2, lbf, ubf, rhs, basis, vstat,
            1e-9, max_iter, bland_after, refactor_every)
        iters_total += iters
    else:
        art_rows = np.flatnonzero(viol)
        n_art = len(art_rows)
        art_sign = np.where(slack0[art_rows] > 0, 1.0, -1.0)
        fi = np.concatenate([sealed.full_indptr,
                             sealed.full_indptr[-1] + 1 + np.arange(n_art, dtype=np.int64)])
        fx = np.concatenate([sealed.full_indices, art_rows.astype(np.int64)])
        fd = np.concatenate([sealed.full_data, art_sign])
        lb1 = np.concatenate([lbf, np.zeros(n_art)])
        ub1 = np.concatenate([ubf, np.full(n_art, math.inf)])
        c1 = np.zeros(n + m + n_art)
        c1[n + m:] = -1.0
        vstat = np.zeros(n + m + n_art, dtype=np.int8)
        basis = np.arange(n, n + m, dtype=np.int64)
        vstat[n:n + m] = 2
        for t, i in enumerate(art_rows):
            # violated slack parks at its zero bound; the artificial goes basic
            vstat[n + i] = 1 if sealed.senses[i] == SENSE_GE else 0
            basis[i] = n + m + t
            vstat[n + m + t] = 2
        status, iters, x_full, obj1 = simplex_kernel(
            m, n + m + n_art, fi, fx, fd, c1, lb1, ub1, rhs, basis, vstat,
            1e-9, max_iter, bland_after, refactor_every)
        iters_total += iters
        if status != KERNEL_OPTIMAL:
            return (STATUS_FAILURE, None, 0.0, iters_total)
        if obj1 < -max(cfg.feasibility_tol, 1e-9) * max(1.0, np.abs(rhs).max()):
            return STATUS_INFEASIBLE, None, 0.0, iters_total
        # phase 2: real objective, artificials pinned to zero
        c2 = np.concatenate([sealed.obj, np.zeros(m + n_art)])
        ub1 = ub1.copy()
        ub1[n + m:] = 0.0
        status, iters, x_full, _ = simplex_kernel(
            m, n + m + n_art, fi, fx, fd, c2, lb1, ub1, rhs, basis, vstat,
            1e-9, max_iter, bland_after, refactor_every)
        iters_total += iters

    if status == KERNEL_UNBOUNDED:
        return STATUS_UNBOUNDED, None, 0.0, iters_total
    if status in (KERNEL_ITER_LIMIT, KERNEL_SINGULAR):
        return STATUS_FAILURE, None, 0.0, iters_total

    x = x_full[:n].copy()
    obj = float(sealed.obj @ x)

    # independent feasibility re-check before the solution may be called optimal
    tol = cfg.feasibility_tol * 10.0
    scale = 1.0 + np.abs(rhs).max() if m else 1.0
    if np.any(x < lb - tol) or np.any(x > ub + tol):
        return STATUS_FAILURE, None, 0.0, iters_total
    ax = np.zeros(m)
    for j in np.flatnonzero(x):
        for k in range(sealed.indptr[j], sealed.indptr[j + 1]):
            ax[sealed.indices[k]] += sealed.data[k] * x[j]
    for i, sense in enumerate(sealed.senses):
        if sense == SENSE_LE and ax[i] > rhs[i] + tol * scale:
            return STATUS_FAILURE, None, 0.0, iters_total
        if sense == SENSE_GE and ax[i] < rhs[i] - tol * scale:
            return STATUS_FAILURE, None, 0.0, iters_total
        if sense == SENSE_EQ and abs(ax[i] - rhs[i]) > tol * scale:
            return STATUS_FAILURE, None, 0.0, iters_total
    return STATUS_OPTIMAL, x, obj, iters_total


def solve_lp(model: LinearModel, config: SolverConfig | None = None) -> Solution:
    """Solve the continuous relaxation (integrality flags ignored)."""
    cfg = config or SolverConfig()
    sealed = model.seal()
    status, x, obj, iters = _solve_arrays(sealed, sealed.lb.copy(), sealed.ub.copy(),
                                          sealed.rhs.copy(), cfg)
    if status != STATUS_OPTIMAL:
        return Solution(status, None, None, iterations=iters)
    return Solution(STATUS_OPTIMAL, x, obj, iterations=iters)


def _fractional_int(x: np.ndarray, int_ids: np.ndarray, tol: float) -> int:
    """Most fractional integer variable, ties by lowest id; -1 if none."""
    if len(int_ids) == 0:
        return -1
    xs = x[int_ids]
    frac = xs - np.floor(xs)
    dist = np.minimum(frac, 1.0 - frac)
    k = int(np.argmax(dist))  # argmax takes the first = lowest variable id
    if dist[k] <= tol:
        return -1
    return int(int_ids[k])


def _round_repair(sealed: _Sealed, root_lb: np.ndarray, root_ub: np.ndarray,
                  cfg: SolverConfig, int_ids: np.ndarray,
                  x_root: np.ndarray) -> tuple[np.ndarray | None, float, int]:
    """Integer-feasible point from the relaxation by rounding and re-solving.

    Fixes every integer variable at a rounded value and re-optimizes the
    continuous rest.  Tries rounding down first (which can only relax <=
    rows driven by integer activity, so it tends to stay feasible), then
    nearest.  Returns (values, objective, iterations) of the best feasible
    variant, or (None, -inf, iters).
    """
    best_x, best_obj = None, -math.inf
    iters_total = 0
    floor_v = np.clip(np.floor(x_root[int_ids] + 1e-9),
                      root_lb[int_ids], root_ub[int_ids])
    near_v = np.clip(np.rint(x_root[int_ids]), root_lb[int_ids], root_ub[int_ids])
    variants = [floor_v]
    if not np.array_equal(near_v, floor_v):
        variants.append(near_v)
    for xi in variants:
        lb_f = root_lb.copy()
        ub_f = root_ub.copy()
        lb_f[int_ids] = xi
        ub_f[int_ids] = xi
        status, x_f, obj_f, iters = _solve_arrays(sealed, lb_f, ub_f,
                                                  sealed.rhs.copy(), cfg)
        iters_total += iters
        if status == STATUS_OPTIMAL and obj_f > best_obj:
            best_x, best_obj = x_f, obj_f
    return best_x, best_obj, iters_total


def solve_mip(model: LinearModel, config: SolverConfig | None = None) -> Solution:
    """Best-first branch and bound over the integer variables."""
    cfg = config or SolverConfig()
    sealed = model.seal()
    int_ids = np.flatnonzero(sealed.integer)
    if len(int_ids) and not np.all(np.isfinite(sealed.ub[int_ids])):
        raise ModelError("integer variables need finite upper bounds for branching")

    deadline = time.monotonic() + cfg.time_limit_s
    total_iters = 0
    nodes_solved = 0

    root_lb = sealed.lb.copy()
    root_ub = sealed.ub.copy()

    status, x, obj, iters = _solve_arrays(sealed, root_lb, root_ub, sealed.rhs.copy(), cfg)
    total_iters += iters
    nodes_solved += 1
    if status in (STATUS_INFEASIBLE, STATUS_UNBOUNDED, STATUS_FAILURE):
        return Solution(status, None, None, iterations=total_iters, nodes=nodes_solved)

    best_x = None
    best_obj = -math.inf
    root_frac = _fractional_int(x, int_ids, cfg.integrality_tol)
    if root_frac >= 0:
        # seed the incumbent by rounding the relaxation and re-optimizing the
        # continuous variables; an incumbent matching the root bound proves
        # optimality without opening the tree at all
        rx, robj, riters = _round_repair(sealed, root_lb, root_ub, cfg,
                                         int_ids, x)
        total_iters += riters
        if rx is not None:
            best_x, best_obj = rx, robj
            accept = max(1e-7, 1e-10 * abs(obj), cfg.gap_rel * abs(robj))
            if robj >= obj - accept:
                values = rx.copy()
                values[int_ids] = np.rint(values[int_ids])
                return Solution(STATUS_OPTIMAL, values, float(sealed.obj @ values),
                                total_iters, nodes_solved)

    counter = 0
    # heap entries: (-bound, counter, bound-change path)
    heap = [(-obj, counter, ((), x, obj))]
    hit_budget = False

    def prune_tol() -> float:
        if best_obj == -math.inf:
            return 1e-9
        return max(1e-9, cfg.gap_rel * abs(best_obj))

    while heap:
        neg_bound, _, (path, x_node, obj_node) = heappop(heap)
        bound = -neg_bound
        if bound <= best_obj + prune_tol():
            continue
        frac = _fractional_int(x_node, int_ids, cfg.integrality_tol)
        if frac < 0:
            if obj_node > best_obj + 1e-9:
                best_obj = obj_node
                best_x = x_node
            continue
        if nodes_solved >= cfg.node_limit or time.monotonic() > deadline:
            hit_budget = True
            break
        v = x_node[frac]
        for child in ((frac, "ub", math.floor(v)), (frac, "lb", math.ceil(v))):
            child_path = path + (child,)
            lb_c = root_lb.copy()
            ub_c = root_ub.copy()
            for var, side, val in child_path:
                if side == "ub":
                    ub_c[var] = min(ub_c[var], val)
                else:
                    lb_c[var] = max(lb_c[var], val)
            status, x_c, obj_c, iters = _solve_arrays(sealed, lb_c, ub_c, sealed.rhs.copy(), cfg)
            total_iters += iters
            nodes_solved += 1
            if status == STATUS_FAILURE:
                return Solution(STATUS_FAILURE, None, None, total_iters, nodes_solved)
            if status != STATUS_OPTIMAL:
                continue
            if obj_c <= best_obj + prune_tol():
                continue
            counter += 1
            heappush(heap, (-obj_c, counter, (child_path, x_c, obj_c)))

    if best_x is None:
        if hit_budget:
            return Solution(STATUS_NODE_LIMIT, None, None, total_iters, nodes_solved)
        return Solution(STATUS_INFEASIBLE, None, None, total_iters, nodes_solved)

    values = best_x.copy()
    if len(int_ids):
        values[int_ids] = np.rint(values[int_ids])
    objective = float(sealed.obj @ values)
    status_out = STATUS_NODE_LIMIT if hit_budget else STATUS_OPTIMAL
    return Solution(status_out, values, objective, total_iters, nodes_solved)


def brute_force_solve(model: LinearModel, max_enum: int = 100_000,
                      config: SolverConfig | None = None) -> Solution:
    """Enumerate every integer assignment, solving a residual LP for each.

    Refuses instances whose integer grid exceeds ``max_enum`` points.  Slow
    by design; exists as an independent check on ``solve_mip``.
    """
    cfg = config or SolverConfig()
    sealed = model.seal()
    int_ids = np.flatnonzero(sealed.integer)
    cont_ids = np.flatnonzero(~sealed.integer)
    if len(int_ids) == 0:
        return solve_lp(model, config)
    if not np.all(np.isfinite(sealed.ub[int_ids])):
        raise ModelError("integer variables need finite upper bounds to enumerate")
    lo = np.ceil(sealed.lb[int_ids] - 1e-9).astype(np.int64)
    hi = np.floor(sealed.ub[int_ids] + 1e-9).astype(np.int64)
    counts = np.maximum(hi - lo + 1, 0)
    n_points = math.prod(int(c) for c in counts)
    if n_points == 0:
        return Solution(STATUS_INFEASIBLE, None, None)
    if n_points > max_enum:
        raise ModelError(f"integer grid has {n_points} points, over the {max_enum} cap")

    # residual model over the continuous variables only
    sub = LinearModel()
    for j in cont_ids:
        sub.add_variable(sealed.lb[j], sealed.ub[j], False, sealed.obj[j])
    cont_pos = {int(j): k for k, j in enumerate(cont_ids)}
    int_pos = {int(j): k for k, j in enumerate(int_ids)}
    # per row: integer-variable coefficient vector and continuous support
    int_coef_rows = []
    mixed_row_map = []  # sub-model row -> original row
    for r, (coeffs, sense, rhs) in enumerate(model.iter_rows()):
        int_part = [(int_pos[v], c) for v, c in coeffs if v in int_pos]
        cont_part = [(cont_pos[v], c) for v, c in coeffs if v in cont_pos]
        if cont_part:
            sub.add_constraint(cont_part, sense, rhs)
            mixed_row_map.append(r)
        int_coef_rows.append((int_part, sense, rhs, bool(cont_part)))
    sub_sealed = sub.seal()

    best_obj = -math.inf
    best_assign = None
    best_cont = None
    obj_int = sealed.obj[int_ids]
    n_checked = 0
    for idx in np.ndindex(*[int(c) for c in counts]):
        assign = lo + np.asarray(idx, dtype=np.int64)
        n_checked += 1
        # rows without continuous support are checked directly
        ok = True
        rhs_eff = sub_sealed.rhs.copy()
        sub_r = 0
        for int_part, sense, rhs, has_cont in int_coef_rows:
            s = 0.0
            for pos, coef in int_part:
                s += coef * assign[pos]
            if has_cont:
                rhs_eff[sub_r] = rhs - s
                sub_r += 1
            else:
                if sense == SENSE_LE and s > rhs + cfg.feasibility_tol:
                    ok = False
                    break
                if sense == SENSE_GE and s < rhs - cfg.feasibility_tol:
                    ok = False
                    break
                if sense == SENSE_EQ and abs(s - rhs) > cfg.feasibility_tol:
                    ok = False
                    break
        if not ok:
            continue
        base = float(obj_int @ assign)
        if len(cont_ids):
            status, x_c, obj_c, _ = _solve_arrays(sub_sealed, sub_sealed.lb.copy(),
                                                  sub_sealed.ub.copy(), rhs_eff, cfg)
            if status != STATUS_OPTIMAL:
                continue
            total = base + obj_c
        else:
            x_c = np.zeros(0)
            total = base
        if total > best_obj + 1e-12:
            best_obj = total
            best_assign = assign.copy()
            best_cont = x_c

    if best_assign is None:
        return Solution(STATUS_INFEASIBLE, None, None, nodes=n_checked)
    values = np.zeros(sealed.n)
    values[int_ids] = best_assign
    if len(cont_ids):
        values[cont_ids] = best_cont
    return Solution(STATUS_OPTIMAL, values, float(best_obj), nodes=n_checked)


# -- plain-text dump/load for failing-instance reports --

def dump_model(model: LinearModel) -> str:
    """Serialize to the line format ``var <id> <lb> <ub> <int|cont> <obj>`` /
    ``row <sense> <rhs> <id:coef>...`` with full float precision."""
    out = []
    for j in range(model.n_variables):
        kind = "int" if model._integer[j] else "cont"
        out.append(f"var {j} {model._lb[j]!r} {model._ub[j]!r} {kind} {model._obj[j]!r}")
    for coeffs, sense, rhs in model.iter_rows():
        terms = " ".join(f"{v}:{c!r}" for v, c in coeffs)
        out.append(f"row {sense} {rhs!r} {terms}".rstrip())
    return "\n".join(out) + "\n"


def load_model(text: str) -> LinearModel:
    model = LinearModel()
    expect = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "var":
                vid = int(parts[1])
                if vid != expect:
                    raise ValueError(f"variable ids must be dense, expected {expect}")
                expect += 1
                model.add_variable(float(parts[2]), float(parts[3]),
                                  parts[4] == "int", float(parts[5]))
            elif parts[0] == "row":
                coeffs = []
                for term in parts[3:]:
                    v, c = term.split(":")
                    coeffs.append((int(v), float(c)))
                model.add_constraint(coeffs, parts[1], float(parts[2]))
            else:
                raise ValueError(f"unknown record {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ModelError(f"bad model line {lineno}: {line!r} ({exc})") from exc
    return model
