"""Abstraction of continuous linear agents into weighted transition systems.

Each agent ``xdot = A x + B u`` with ``u`` boxed in ``[-u_max, u_max]^m`` is
abstracted over a labeled rectangular partition: for every pair of cells
sharing an open facet we synthesize an affine state-feedback controller that
drives every point of the source cell through that facet, and we bound the
crossing time from above.  The bound becomes the transition weight of the
resulting WTS.

Controller synthesis is a linear program.  The closed loop under
``u(x) = F x + g`` is ``xdot = (A + B F) x + (B g)``, affine in ``x``, so a
velocity constraint that holds at all ``2^p`` vertices of a cell holds on the
whole cell; the LP therefore only enforces vertex instances of:

* exit-direction speed at least ``eps`` everywhere in the cell,
* inward speed at least ``eps`` at every non-exit facet, and
* the input box bound,

while maximizing the minimum exit-direction speed over the vertices.

The worst-case crossing time solves the scalar comparison dynamics
``ydot = alpha y + C + beta`` where ``alpha`` is the closed-loop diagonal
entry of the exit direction, ``beta`` the constant term, and ``C`` the
minimum of the cross terms over the cell.  Integrating from the coordinate of
the facet opposite the exit to the exit facet gives

    T = ln((alpha x1 + C + beta) / (alpha x0 + C + beta)) / alpha

with the continuous limit ``(x1 - x0) / (C + beta)`` as ``alpha -> 0``.  The
bound is tight when the cross terms vanish and conservative otherwise.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, VelocityVanishes
from .geometry import Partition, Rectangle
from .jsonio import dump_path
from .lp import solve_lp

logger = logging.getLogger(__name__)

DEFAULT_EPS = 0.05
DEFAULT_A_TOL = 1e-8


@dataclass(frozen=True)
class LinearAgent:
    """Continuous-time agent ``xdot = A x + B u`` with per-coordinate input bound."""

    A: tuple
    B: tuple
    x0: tuple
    u_max: float
    id: int = 0

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError("B must have one row per state")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive")
        object.__setattr__(self, "A", tuple(map(tuple, A.tolist())))
        object.__setattr__(self, "B", tuple(map(tuple, B.tolist())))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def n(self) -> int:
        return len(self.A)

    @property
    def m(self) -> int:
        return len(self.B[0])

    def a_mat(self) -> np.ndarray:
        return np.asarray(self.A, dtype=float)

    def b_mat(self) -> np.ndarray:
        return np.asarray(self.B, dtype=float)


@dataclass(frozen=True)
class AffineController:
    """Affine feedback for one facet crossing.

    ``K = B F`` and ``c = B g`` are the closed-loop contributions of the input
    ``u(x) = F x + g``; the closed loop is ``xdot = (A + K) x + c``.  ``speed``
    is the LP objective: the minimum exit-direction velocity over the source
    cell vertices.
    """

    K: tuple
    c: tuple
    source: int
    target: int
    direction: int
    sign: int
    F: tuple | None = None      # input gain; absent on reloaded controllers
    g: tuple | None = None
    speed: float = float("nan")

    def k_mat(self) -> np.ndarray:
        return np.asarray(self.K, dtype=float)

    def c_vec(self) -> np.ndarray:
        return np.asarray(self.c, dtype=float)

    def closed_loop(self, A: np.ndarray):
        return A + self.k_mat(), self.c_vec()


@dataclass
class WtsTransition:
    src: int
    dst: int
    sigma: str
    weight: float
    controller: AffineController


@dataclass
class WTS:
    """Weighted transition system over partition cells.

    States are cell ids; each transition carries the controller that realizes
    it and the worst-case crossing time as a strictly positive weight.
    """

    agent_id: int
    states: list                 # Rectangle per state, index == id
    init: tuple                  # ids of cells containing x0
    labels: dict                 # id -> frozenset of propositions
    transitions: list            # WtsTransition, sorted by (src, dst)
    ap: frozenset                # declared proposition universe

    def out_edges(self, state: int):
        return [t for t in self.transitions if t.src == state]

    def edge(self, src: int, dst: int):
        for t in self.transitions:
            if t.src == src and t.dst == dst:
                return t
        return None

    @property
    def size(self) -> int:
        return len(self.states)


def min_cross_term(Astar, cell: Rectangle, i: int) -> float:
    """Minimum over the cell of the off-diagonal velocity contribution in row ``i``.

    Each term ``Astar[i, j] * x_j`` is linear in one coordinate, so its minimum
    sits at ``a_j`` for a positive coefficient and ``b_j`` for a negative one.
    """
    Astar = np.asarray(Astar, dtype=float)
    total = 0.0
    for j in range(cell.dim):
        if j == i:
            continue
        coeff = Astar[i, j]
        if coeff > 0:
            total += coeff * cell.a[j]
        elif coeff < 0:
            total += coeff * cell.b[j]
    return float(total)


def max_transition_time(Astar, Bstar, cell: Rectangle, i: int, sign: int,
                        a_tol: float = DEFAULT_A_TOL) -> float:
    """Worst-case time to cross the exit facet of ``cell`` in direction ``i``.

    Decreasing transitions are handled by reflecting coordinate ``i``, which
    negates the constant and cross terms but keeps the diagonal entry.
    Raises VelocityVanishes when the worst-case velocity is not strictly
    positive over the travel range (the transition must be rejected).
    """
    Astar = np.asarray(Astar, dtype=float)
    Bstar = np.asarray(Bstar, dtype=float)
    alpha = Astar[i, i]
    if sign > 0:
        C = min_cross_term(Astar, cell, i)
        beta = Bstar[i]
        x0, x1 = cell.a[i], cell.b[i]
    else:
        C = min_cross_term(-Astar, cell, i)
        beta = -Bstar[i]
        x0, x1 = -cell.b[i], -cell.a[i]

    v0 = alpha * x0 + C + beta
    v1 = alpha * x1 + C + beta
    if min(v0, v1) <= 0:
        raise VelocityVanishes(
            f"worst-case exit velocity non-positive on cell {cell.id} "
            f"direction {i} sign {sign}: v0={v0:.3g} v1={v1:.3g}")
    if abs(alpha) < a_tol:
        return float((x1 - x0) / (C + beta))
    return float(np.log(v1 / v0) / alpha)


def _velocity_coeffs(agent: LinearAgent, vertex: np.ndarray, j: int):
    """LP row pieces for velocity component j at a vertex.

    Returns (coeffs over [F row-major, g, t], constant) with
    ``w_j = const + coeffs . vars`` and t untouched.
    """
    n, m = agent.n, agent.m
    A, B = agent.a_mat(), agent.b_mat()
    row = np.zeros(n * m + m + 1)
    for q in range(m):
        for r in range(n):
            row[q * n + r] = B[j, q] * vertex[r]
        row[n * m + q] = B[j, q]
    return row, float(A[j] @ vertex)


def synthesize_controller(agent: LinearAgent, part: Partition, source: int,
                          target: int, eps: float = DEFAULT_EPS,
                          require_speed: float | None = None) -> AffineController:
    """Solve the facet-crossing LP for one transition.

    ``require_speed`` adds the extra constraint ``objective >= require_speed``;
    it exists so callers can certify optimality (demanding more speed than the
    optimum must be infeasible).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    key = (min(source, target), max(source, target))
    axis = part.adjacency.get(key)
    if axis is None or key in part.blocked_facets:
        raise Infeasible(f"cells {source} and {target} share no open facet")
    cell = part.cells[source]
    sign = 1 if part.cells[target].a[axis] >= cell.a[axis] else -1
    n, m = agent.n, agent.m
    nvar = n * m + m + 1
    t_col = nvar - 1

    rows, rhs = [], []

    def add(row, bound):
        rows.append(row)
        rhs.append(bound)

    vertices = list(cell.vertices())
    for v in vertices:
        coeffs, const = _velocity_coeffs(agent, v, axis)
        # t <= s * w_i(v): the objective tracks the slowest vertex
        row = np.zeros(nvar)
        row[:t_col] = -sign * coeffs[:t_col]
        row[t_col] = 1.0
        add(row, sign * const)
        # hard robustness floor s * w_i(v) >= eps
        row = np.zeros(nvar)
        row[:t_col] = -sign * coeffs[:t_col]
        add(row, sign * const - eps)
        # input box, per coordinate
        for q in range(m):
            u_row = np.zeros(nvar)
            for r in range(n):
                u_row[q * n + r] = v[r]
            u_row[n * m + q] = 1.0
            add(u_row.copy(), agent.u_max)
            add(-u_row, agent.u_max)
    # containment: inward speed at every non-exit facet, at that facet's vertices
    for j in range(n):
        if j == axis:
            continue
        for v in vertices:
            coeffs, const = _velocity_coeffs(agent, v, j)
            row = np.zeros(nvar)
            if abs(v[j] - cell.b[j]) < 1e-12:      # upper facet: w_j <= -eps
                row[:t_col] = coeffs[:t_col]
                add(row, -eps - const)
            else:                                   # lower facet: w_j >= eps
                row[:t_col] = -coeffs[:t_col]
                add(row, const - eps)
    if require_speed is not None:
        row = np.zeros(nvar)
        row[t_col] = -1.0
        add(row, -require_speed)

    c_obj = np.zeros(nvar)
    c_obj[t_col] = 1.0
    res = solve_lp(c_obj, np.array(rows), np.array(rhs))
    if not res.ok:
        raise Infeasible(
            f"no admissible controller for {source}->{target} "
            f"(direction {axis}, sign {sign:+d}) under u_max={agent.u_max}, eps={eps}")

    F = res.x[:n * m].reshape(m, n)
    g = res.x[n * m:n * m + m]
    B = agent.b_mat()
    K = B @ F
    c_vec = B @ g
    return AffineController(
        K=tuple(map(tuple, K.tolist())), c=tuple(c_vec.tolist()),
        source=source, target=target, direction=axis, sign=sign,
        F=tuple(map(tuple, F.tolist())), g=tuple(g.tolist()),
        speed=float(res.value))


def verify_controller(agent: LinearAgent, part: Partition,
                      ctrl: AffineController, eps: float,
                      tol: float = 1e-7) -> bool:
    """Re-check every vertex constraint of a synthesized controller."""
    cell = part.cells[ctrl.source]
    A = agent.a_mat()
    Astar, Bstar = ctrl.closed_loop(A)
    F = np.asarray(ctrl.F)
    g = np.asarray(ctrl.g)
    for v in cell.vertices():
        w = Astar @ v + Bstar
        if ctrl.sign * w[ctrl.direction] < eps - tol:
            return False
        u = F @ v + g
        if np.any(np.abs(u) > agent.u_max + tol):
            return False
        for j in range(cell.dim):
            if j == ctrl.direction:
                continue
            if abs(v[j] - cell.b[j]) < 1e-12 and w[j] > -eps + tol:
                return False
            if abs(v[j] - cell.a[j]) < 1e-12 and w[j] < eps - tol:
                return False
    return True


def build_wts(agent: LinearAgent, part: Partition, eps: float = DEFAULT_EPS,
              a_tol: float = DEFAULT_A_TOL) -> WTS:
    """Abstract one agent over a partition.

    Every unblocked facet pair is attempted in both directions; pairs whose
    controller LP is infeasible are dropped (the controller must guarantee the
    transition, so nothing weaker is usable) with a diagnostics log entry.
    """
    if not part.bounds.contains(agent.x0):
        raise ValueError(f"agent {agent.id} starts outside the workspace")
    init = tuple(part.cells_containing(agent.x0))
    if not init:
        raise ValueError(f"agent {agent.id} initial state matches no cell")

    pairs = []
    for (i, j) in sorted(part.adjacency):
        if (i, j) in part.blocked_facets:
            continue
        pairs.extend([(i, j), (j, i)])
    pairs.sort()

    A = agent.a_mat()
    transitions = []
    for src, dst in pairs:
        try:
            ctrl = synthesize_controller(agent, part, src, dst, eps)
        except Infeasible as exc:
            logger.info("agent %d: dropping %d->%d: %s", agent.id, src, dst, exc)
            continue
        Astar, Bstar = ctrl.closed_loop(A)
        weight = max_transition_time(Astar, Bstar, part.cells[src],
                                     ctrl.direction, ctrl.sign, a_tol)
        sigma = f"u{src}_{dst}"
        transitions.append(WtsTransition(src, dst, sigma, weight, ctrl))

    wts = WTS(agent_id=agent.id, states=list(part.cells), init=init,
              labels=dict(part.labels), transitions=transitions, ap=part.ap)
    if not any(t.src in init for t in transitions):
        logger.warning("agent %d: initial cell(s) %s have no outgoing transitions",
                       agent.id, init)
    return wts


def wts_to_dict(wts: WTS) -> dict:
    return {
        "agent": wts.agent_id,
        "states": [
            {"id": r.id, "a": list(r.a), "b": list(r.b),
             "labels": sorted(wts.labels[r.id])}
            for r in wts.states],
        "initial": sorted(wts.init),
        "ap": sorted(wts.ap),
        "transitions": [
            {"src": t.src, "dst": t.dst, "direction": t.controller.direction,
             "sign": t.controller.sign,
             "K": [v for row in t.controller.K for v in row],
             "c": list(t.controller.c),
             "weight": t.weight}
            for t in wts.transitions],
    }


def save_wts(wts: WTS, path) -> None:
    dump_path(wts_to_dict(wts), path)
