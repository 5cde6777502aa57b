"""Closed-loop continuous validation of synthesized plans.

Each planned facet crossing integrates ``xdot = (A + K) x + c`` with
classical fixed-step RK4; the crossing instant is bracketed by the sign
change of the exit coordinate and refined by bisection on the flow.  Every
crossing is logged against its worst-case bound: an actual time above the
bound aborts the run, because it falsifies the abstraction.

Agents move in lockstep: all depart a joint step together, early arrivals
hold their position (frozen, an explicit modeling idealization; several of
these systems have no equilibrium input) until the collective worst-case
departure time.  After crossing a facet the agent continues briefly under the
old controller until it is a small margin inside the new cell, which keeps
controller switches off the facet itself.
"""

from dataclasses import dataclass, field

import numpy as np

from .abstraction import LinearAgent, WTS
from .errors import BoundViolated, Escape
from .geometry import Partition
from .synthesis import Plan

DEFAULT_STEP = 1e-4
DEFAULT_MARGIN = 0.02
BOUND_TOL = 1e-6
CROSSING_REFINE = 1e-10
GEOM_SLACK = 1e-6


def rk4_step(Astar, Bstar, x, h):
    """One classical Runge-Kutta step of the affine field ``Astar x + Bstar``."""
    k1 = Astar @ x + Bstar
    k2 = Astar @ (x + 0.5 * h * k1) + Bstar
    k3 = Astar @ (x + 0.5 * h * k2) + Bstar
    k4 = Astar @ (x + h * k3) + Bstar
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _refine_crossing(Astar, Bstar, x0, axis, sign, facet, h):
    """Bisect the step [0, h] from x0 for the facet-plane crossing time."""
    lo, hi = 0.0, h
    while hi - lo > CROSSING_REFINE:
        mid = 0.5 * (lo + hi)
        xm = rk4_step(Astar, Bstar, x0, mid)
        if sign * (xm[axis] - facet) >= 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    return t, rk4_step(Astar, Bstar, x0, t)


def integrate_to_crossing(Astar, Bstar, x, cell, axis, sign, h,
                          t_limit, check_containment=True):
    """Integrate until the exit facet is crossed; returns (time, state).

    Raises Escape if the trajectory leaves the source cell through any other
    facet, and BoundViolated if no crossing happens by ``t_limit``.
    """
    Astar = np.asarray(Astar, dtype=float)
    Bstar = np.asarray(Bstar, dtype=float)
    x = np.asarray(x, dtype=float)
    facet = cell.b[axis] if sign > 0 else cell.a[axis]
    t = 0.0
    while True:
        if sign * (x[axis] - facet) >= 0.0:
            return t, x
        if t > t_limit:
            raise BoundViolated(
                f"no crossing of axis {axis} facet after {t:.6g} "
                f"(limit {t_limit:.6g})")
        x_next = rk4_step(Astar, Bstar, x, h)
        if sign * (x_next[axis] - facet) >= 0.0:
            dt, x_cross = _refine_crossing(Astar, Bstar, x, axis, sign, facet, h)
            return t + dt, x_cross
        if check_containment:
            for j in range(len(x_next)):
                if j == axis:
                    lo_ok = x_next[j] >= cell.a[j] - GEOM_SLACK if sign > 0 \
                        else x_next[j] <= cell.b[j] + GEOM_SLACK
                    if not lo_ok:
                        raise Escape(
                            f"left through the facet opposite the exit "
                            f"(axis {axis}, x={x_next.tolist()})")
                elif not cell.a[j] - GEOM_SLACK <= x_next[j] <= cell.b[j] + GEOM_SLACK:
                    raise Escape(
                        f"left through a non-exit facet (axis {j}, "
                        f"x={x_next.tolist()})")
        t += h
        x = x_next


def crossing_sweep(Astar, Bstar, cell, axis, sign, starts, h):
    """Crossing times for a batch of start states (vectorized RK4 sweep).

    Brackets every trajectory's facet crossing in one joint integration, then
    bisects each row.  Used by the soundness sweeps, where hundreds of starts
    share one controller.
    """
    Astar = np.asarray(Astar, dtype=float)
    Bstar = np.asarray(Bstar, dtype=float)
    X = np.asarray(starts, dtype=float).copy()
    n = X.shape[0]
    facet = cell.b[axis] if sign > 0 else cell.a[axis]
    times = np.full(n, np.nan)
    bracket_state = np.zeros_like(X)
    bracket_time = np.zeros(n)
    active = np.ones(n, dtype=bool)
    width = cell.b[axis] - cell.a[axis]
    t_limit = 1000.0 * width  # generous; callers compare against their bound
    t = 0.0

    def step_all(Y, h):
        k1 = Y @ Astar.T + Bstar
        k2 = (Y + 0.5 * h * k1) @ Astar.T + Bstar
        k3 = (Y + 0.5 * h * k2) @ Astar.T + Bstar
        k4 = (Y + h * k3) @ Astar.T + Bstar
        return Y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    already = sign * (X[:, axis] - facet) >= 0.0
    times[already] = 0.0
    active &= ~already
    while active.any():
        if t > t_limit:
            raise BoundViolated(f"sweep exceeded safety limit {t_limit}")
        X_next = step_all(X, h)
        crossed = active & (sign * (X_next[:, axis] - facet) >= 0.0)
        bracket_state[crossed] = X[crossed]
        bracket_time[crossed] = t
        active &= ~crossed
        X = X_next
        t += h
        for i in np.flatnonzero(crossed):
            dt, _ = _refine_crossing(Astar, Bstar, bracket_state[i],
                                     axis, sign, facet, h)
            times[i] = bracket_time[i] + dt
    return times


def switching_monitor(x, axis: int, sign: int, facet: float,
                      margin: float) -> bool:
    """True once the state is at least ``margin`` past the facet, inside the
    next cell; with margin 0 the switch fires exactly at the facet."""
    return sign * (x[axis] - facet) >= margin


@dataclass
class AgentTrace:
    agent_id: int
    samples: list = field(default_factory=list)   # (t, state tuple, sigma)


@dataclass
class Trajectory:
    agents: list                                   # AgentTrace per agent
    crossings: list = field(default_factory=list)  # dicts, Table-1 style rows

    def max_excess(self) -> float:
        """Largest (actual - bound) over all crossings; negative when sound."""
        return max((c["actual"] - c["bound"] for c in self.crossings),
                   default=float("-inf"))


def simulate(plan: Plan, agents: list, part: Partition, wts_list: list,
             h: float = DEFAULT_STEP, margin: float = DEFAULT_MARGIN,
             sample_every: int = 20) -> Trajectory:
    """Integrate every agent through the plan's joint steps.

    ``agents`` and ``wts_list`` are aligned with ``plan.agents``; controllers
    are looked up in the WTS by the plan's input names.  ``margin`` is the
    post-crossing advance as a fraction of the target cell's width along the
    exit axis.  Samples are recorded every ``sample_every`` RK4 steps plus at
    every crossing and joint boundary.
    """
    traces = [AgentTrace(ap.agent_id, [(0.0, tuple(ag.x0), "init")])
              for ap, ag in zip(plan.agents, agents)]
    crossings = []
    positions = [np.asarray(ag.x0, dtype=float) for ag in agents]

    by_sigma = [{t.sigma: t for t in w.transitions} for w in wts_list]

    for k in range(plan.steps):
        t_depart = plan.times[k]
        t_end = plan.times[k + 1]
        for idx, (ap, ag) in enumerate(zip(plan.agents, agents)):
            sigma = ap.sigmas[k]
            if sigma == "stay":
                traces[idx].samples.append(
                    (t_end, tuple(positions[idx]), "stay"))
                continue
            wt = by_sigma[idx][sigma]
            ctrl = wt.controller
            cell = part.cells[wt.src]
            target = part.cells[wt.dst]
            Astar, Bstar = ctrl.closed_loop(ag.a_mat())
            facet = cell.b[ctrl.direction] if ctrl.sign > 0 else cell.a[ctrl.direction]
            bound = wt.weight

            x = positions[idx]
            t_local = 0.0
            steps_since = 0
            crossed_at = None
            while True:
                if ctrl.sign * (x[ctrl.direction] - facet) >= 0.0:
                    crossed_at = t_local
                    break
                if t_local > bound + BOUND_TOL:
                    raise BoundViolated(
                        f"agent {ap.agent_id} step {k} ({sigma}): still inside "
                        f"after {t_local:.6g} > bound {bound:.6g}")
                x_next = rk4_step(Astar, Bstar, x, h)
                if ctrl.sign * (x_next[ctrl.direction] - facet) >= 0.0:
                    dt, x_next = _refine_crossing(
                        Astar, Bstar, x, ctrl.direction, ctrl.sign, facet, h)
                    crossed_at = t_local + dt
                    x = x_next
                    break
                for j in range(len(x_next)):
                    if j == ctrl.direction:
                        inside = x_next[j] >= cell.a[j] - GEOM_SLACK \
                            if ctrl.sign > 0 else x_next[j] <= cell.b[j] + GEOM_SLACK
                    else:
                        inside = cell.a[j] - GEOM_SLACK <= x_next[j] <= cell.b[j] + GEOM_SLACK
                    if not inside:
                        raise Escape(
                            f"agent {ap.agent_id} step {k} ({sigma}) left the "
                            f"source cell through axis {j} at {x_next.tolist()}")
                x = x_next
                t_local += h
                steps_since += 1
                if steps_since >= sample_every:
                    traces[idx].samples.append(
                        (t_depart + t_local, tuple(x), sigma))
                    steps_since = 0

            actual = crossed_at
            if actual > bound + BOUND_TOL:
                raise BoundViolated(
                    f"agent {ap.agent_id} step {k} ({sigma}): crossing took "
                    f"{actual:.9g} > bound {bound:.9g} + {BOUND_TOL}")
            crossings.append({
                "agent": ap.agent_id, "step": k, "src": wt.src, "dst": wt.dst,
                "depart": t_depart, "bound": bound, "actual": actual})
            traces[idx].samples.append((t_depart + actual, tuple(x), sigma))

            # advance a margin into the new cell under the old controller,
            # then hold until the collective departure
            depth = margin * target.width(ctrl.direction)
            window = t_end - t_depart
            t_adv = actual
            while (not switching_monitor(x, ctrl.direction, ctrl.sign, facet, depth)
                   and t_adv + h <= window):
                x = rk4_step(Astar, Bstar, x, h)
                t_adv += h
                if not target.contains(x, tol=GEOM_SLACK):
                    raise Escape(
                        f"agent {ap.agent_id} step {k}: margin advance left "
                        f"the target cell at {x.tolist()}")
            positions[idx] = x
            traces[idx].samples.append((t_end, tuple(x), sigma))

    return Trajectory(agents=traces, crossings=crossings)


# --- artifacts --------------------------------------------------------------

def write_trajectory_csv(trace: AgentTrace, dim: int, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"x{i + 1}" for i in range(dim))
        fh.write(f"t,{cols},controller\n")
        for t, x, sigma in trace.samples:
            xs = ",".join(format(v, ".12g") for v in x)
            fh.write(f"{format(t, '.12g')},{xs},{sigma}\n")


def write_crossings_csv(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("agent,step,src,dst,depart,bound,actual\n")
        for c in traj.crossings:
            fh.write(f"{c['agent']},{c['step']},{c['src']},{c['dst']},"
                     f"{format(c['depart'], '.12g')},{format(c['bound'], '.12g')},"
                     f"{format(c['actual'], '.12g')}\n")


def render_svg(part: Partition, traj: Trajectory, scale: float = 160.0) -> str:
    """Plain SVG of the partition with walls, labels, and each agent's path."""
    b = part.bounds
    w = (b.b[0] - b.a[0]) * scale
    h = (b.b[1] - b.a[1]) * scale

    def xy(p):
        return ((p[0] - b.a[0]) * scale,
                h - (p[1] - b.a[1]) * scale)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" '
             f'height="{h:.0f}" viewBox="0 0 {w:.0f} {h:.0f}">',
             f'<rect width="{w:.0f}" height="{h:.0f}" fill="white" stroke="black"/>']
    for cell in part.cells:
        x0, y0 = xy((cell.a[0], cell.b[1]))
        parts.append(
            f'<rect x="{x0:.1f}" y="{y0:.1f}" '
            f'width="{cell.width(0) * scale:.1f}" height="{cell.width(1) * scale:.1f}" '
            f'fill="none" stroke="#bbbbbb"/>')
        if part.labels[cell.id]:
            cx, cy = xy(((cell.a[0] + cell.b[0]) / 2, (cell.a[1] + cell.b[1]) / 2))
            text = ",".join(sorted(part.labels[cell.id]))
            parts.append(f'<text x="{cx:.1f}" y="{cy:.1f}" font-size="12" '
                         f'fill="#888888" text-anchor="middle">{text}</text>')
    for (i, j) in sorted(part.blocked_facets):
        axis = part.adjacency[(i, j)]
        plane = max(part.cells[i].a[axis], part.cells[j].a[axis])
        other = 1 - axis
        lo = max(part.cells[i].a[other], part.cells[j].a[other])
        hi = min(part.cells[i].b[other], part.cells[j].b[other])
        p1 = (plane, lo) if axis == 0 else (lo, plane)
        p2 = (plane, hi) if axis == 0 else (hi, plane)
        (x1, y1), (x2, y2) = xy(p1), xy(p2)
        parts.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" '
                     f'y2="{y2:.1f}" stroke="black" stroke-width="4"/>')
    colors = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400"]
    for idx, trace in enumerate(traj.agents):
        pts = " ".join(f"{xy((s[1][0], s[1][1]))[0]:.1f},{xy((s[1][0], s[1][1]))[1]:.1f}"
                       for s in trace.samples)
        color = colors[idx % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        x0, y0 = xy((trace.samples[0][1][0], trace.samples[0][1][1]))
        parts.append(f'<circle cx="{x0:.1f}" cy="{y0:.1f}" r="5" fill="{color}"/>')
    parts.append("</svg>")
    return "\n".join(parts)
