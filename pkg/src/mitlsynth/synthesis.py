"""Accepting-run search, projection to per-agent plans, and verification.

The searcher is a Dijkstra variant: relaxing an edge additionally computes
every referenced clock's value by walking the predecessor chain back to the
most recent state whose reset bit is set and summing edge weights, then
rejects the relaxation if a guard or the target invariant fails.  A lasso is
assembled from a shortest clock-feasible prefix to an accepting state plus a
shortest clock-feasible cycle through it.

Keeping one predecessor per state makes the search incomplete: a longer
prefix can be clock-feasible where the shorter one is not, so the searcher
can report false negatives (never false positives; every returned run replays
exactly).  ``oracle_search`` enumerates simple-path lassos with exact
valuations and is the ground truth on small instances.
"""

import heapq
from dataclasses import dataclass, field

from .automata import STAY, GlobalBWTS, ProductBWTS
from .errors import DepthExceeded, NoAcceptingRun
from .mitl import Formula, TimedWord, evaluate, holds
from .tba import cc_sat


@dataclass(frozen=True)
class TimedRun:
    """Lasso witness: states with cumulative times; the cycle starts at
    ``lasso_start`` and the final state re-enters ``states[lasso_start]``."""

    states: tuple
    times: tuple
    lasso_start: int
    trans: tuple = ()           # transition index per step

    def __post_init__(self):
        if self.times and self.times[0] != 0.0:
            raise ValueError("runs start at time 0")
        for a, b in zip(self.times, self.times[1:]):
            if not a < b:
                raise ValueError("timestamps must be strictly increasing")
        if self.states[-1] != self.states[self.lasso_start]:
            raise ValueError("final state must close the cycle")

    @property
    def total_time(self) -> float:
        return self.times[-1]


@dataclass
class AgentPlan:
    agent_id: int
    cells: list                 # visited cells, length steps + 1
    sigmas: list                # controller id or "stay" per step
    departures: list            # collective departure time per step
    worst_arrivals: list        # departure + this agent's own bound


@dataclass
class Plan:
    """Unrolled lasso: lockstep joint steps plus per-agent schedules."""

    collective: TimedRun
    times: list                 # collective timestamps, length steps + 1
    agents: list                # AgentPlan per agent
    horizon: float

    @property
    def steps(self) -> int:
        return len(self.times) - 1


# --- clock plumbing ---------------------------------------------------------


def _zero_values(g: GlobalBWTS):
    return [[0.0] * m for m in g.clock_counts]


def _initial_feasible(g: GlobalBWTS, sid: int) -> bool:
    zeros = _zero_values(g)
    return all(cc_sat([(c, r, k)], [zeros[ns][c]])
               for ns, c, r, k in g.invariants[sid])


def _check(ns_constraints, value_of) -> bool:
    for ns, c, rel, k in ns_constraints:
        if not cc_sat([(0, rel, k)], [value_of(ns, c)]):
            return False
    return True


class _Chain:
    """Predecessor chains for the reset-bit walk.

    The cycle phase stacks its own predecessor map on top of the prefix map:
    walking back past the cycle's root continues into the prefix.  Once the
    walk has descended into an outer chain it never climbs back, so shared
    state ids between the two trees cannot short-circuit it.
    """

    def __init__(self, g: GlobalBWTS, preds):
        self.g = g
        self.preds = preds      # list of dicts state -> (prev_state, trans_idx)

    def value_at_entry(self, src: int, weight: float, ns: int, clock: int) -> float:
        """Pre-reset clock value when entering a successor of ``src`` via an
        edge of the given weight: edge weights summed back to the last reset."""
        total = weight
        cur = src
        level = 0
        while not self.g.states[cur].z[ns][clock]:
            hit = None
            for lvl in range(level, len(self.preds)):
                hit = self.preds[lvl].get(cur)
                if hit is not None:
                    level = lvl
                    break
            if hit is None:
                break
            prev, ti = hit
            total += self.g.trans[ti].weight
            cur = prev
        return total

    def edge_feasible(self, ti: int) -> bool:
        t = self.g.trans[ti]
        pre = {}

        def value(ns, c):
            if (ns, c) not in pre:
                pre[(ns, c)] = self.value_at_entry(t.src, t.weight, ns, c)
            return pre[(ns, c)]

        if not _check(t.guards, value):
            return False
        zbits = self.g.states[t.dst].z

        def post(ns, c):
            return 0.0 if zbits[ns][c] else value(ns, c)

        return _check(self.g.invariants[t.dst], post)


def _dijkstra(g: GlobalBWTS, sources: dict, context_pred=None, skip_dst=None):
    """Clock-checked Dijkstra from ``sources`` (state -> start distance).

    ``context_pred`` supplies the predecessor chain below the sources (used
    by the cycle phase, which also sets ``skip_dst`` to its anchor: edges
    closing the cycle are evaluated separately, never relaxed).
    """
    dist, pred = {}, {}
    chain = _Chain(g, [pred] + ([context_pred] if context_pred else []))
    heap = [(d, s) for s, d in sorted(sources.items())]
    heapq.heapify(heap)
    seen = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in seen:
            continue
        seen.add(u)
        for ti in g.out_edges(u):
            t = g.trans[ti]
            if t.dst in seen or t.dst == skip_dst:
                continue
            nd = d + t.weight
            if t.dst in dist and dist[t.dst] <= nd:
                continue
            if not chain.edge_feasible(ti):
                continue
            dist[t.dst] = nd
            pred[t.dst] = (u, ti)
            heapq.heappush(heap, (nd, t.dst))
    return dist, pred


def _path_from(pred, sources, state):
    states, trans = [state], []
    while states[0] not in sources:
        prev, ti = pred[states[0]]
        states.insert(0, prev)
        trans.insert(0, ti)
    return states, trans


def find_accepting_run(g: GlobalBWTS) -> TimedRun:
    """Shortest-prefix accepting lasso under the reset-bit clock check.

    Accepting states are tried in order of clock-feasible prefix cost (ties
    by id); the first one through which a clock-feasible cycle closes wins.
    Raises NoAcceptingRun with a message distinguishing plain unreachability
    from clock infeasibility.
    """
    if not g.states:
        raise NoAcceptingRun("empty product")
    sources = {s: 0.0 for s in g.init if _initial_feasible(g, s)}
    dist, pred = _dijkstra(g, sources)
    for s in sources:
        dist.setdefault(s, 0.0)

    candidates = sorted((dist[a], a) for a in g.accepting if a in dist)
    if not candidates:
        if _graph_reaches_accepting(g):
            raise NoAcceptingRun(
                "accepting states exist but every path to them is "
                "clock-infeasible (this may be a false negative of the "
                "predecessor-walk search; try the exhaustive oracle)")
        raise NoAcceptingRun("no accepting state is reachable")

    for _, anchor in candidates:
        prefix_states, prefix_trans = _path_from(pred, sources, anchor)
        prefix_pred = {}
        for k, s in enumerate(prefix_states[1:], start=1):
            prefix_pred[s] = (prefix_states[k - 1], prefix_trans[k - 1])
        cdist, cpred = _dijkstra(g, {anchor: 0.0}, context_pred=prefix_pred,
                                 skip_dst=anchor)
        cdist[anchor] = 0.0
        chain = _Chain(g, [cpred, prefix_pred])
        best = None
        for u in cdist:
            for ti in g.out_edges(u):
                t = g.trans[ti]
                if t.dst != anchor:
                    continue
                if not chain.edge_feasible(ti):
                    continue
                cand = (cdist[u] + t.weight, u, ti)
                if best is None or cand < best:
                    best = cand
        if best is None:
            continue
        _, u, closing = best
        cyc_states, cyc_trans = _path_from(cpred, {anchor}, u)
        states = prefix_states + cyc_states[1:] + [anchor]
        trans = prefix_trans + cyc_trans + [closing]
        times = [0.0]
        for ti in trans:
            times.append(times[-1] + g.trans[ti].weight)
        return TimedRun(tuple(states), tuple(times),
                        lasso_start=len(prefix_states) - 1, trans=tuple(trans))

    raise NoAcceptingRun(
        "accepting states are reachable but no clock-feasible cycle closes "
        "through any of them")


def _graph_reaches_accepting(g: GlobalBWTS) -> bool:
    seen = set(g.init)
    frontier = list(g.init)
    while frontier:
        nxt = []
        for s in frontier:
            for ti in g.out_edges(s):
                d = g.trans[ti].dst
                if d not in seen:
                    seen.add(d)
                    nxt.append(d)
        frontier = nxt
    return bool(seen & g.accepting)


# --- exhaustive oracle ------------------------------------------------------


def oracle_search(g: GlobalBWTS, depth: int | None = None):
    """First clock-feasible accepting lasso in depth-first lexicographic order.

    Exact clock valuations are carried along the path (no predecessor-walk
    approximation).  Returns None when the instance provably has no accepting
    lasso within the depth bound; raises DepthExceeded when a branch was cut
    before the search could decide.
    """
    if depth is None:
        depth = 2 * g.size
    truncated = False

    def values_after(resets, t, trans):
        new = []
        zbits = g.states[trans.dst].z
        for ns, row in enumerate(resets):
            new.append(tuple(t if zbits[ns][c] else row[c]
                             for c in range(len(row))))
        return tuple(new)

    def feasible(trans, resets, t_entry):
        def pre(ns, c):
            return t_entry - resets[ns][c]
        if not _check(trans.guards, pre):
            return False
        zbits = g.states[trans.dst].z

        def post(ns, c):
            return 0.0 if zbits[ns][c] else t_entry - resets[ns][c]
        return _check(g.invariants[trans.dst], post)

    def dfs(path, trans_taken, times, resets_stack, on_path):
        nonlocal truncated
        sid, t_now = path[-1], times[-1]
        for ti in g.out_edges(sid):
            tr = g.trans[ti]
            t_entry = t_now + tr.weight
            if not feasible(tr, resets_stack[-1], t_entry):
                continue
            if tr.dst in on_path:
                j = path.index(tr.dst)
                cycle = path[j:]
                if any(s in g.accepting for s in cycle):
                    states = path + [tr.dst]
                    return TimedRun(tuple(states), tuple(times + [t_entry]),
                                    lasso_start=j,
                                    trans=tuple(trans_taken + [ti]))
                continue
            if len(path) >= depth:
                truncated = True
                continue
            path.append(tr.dst)
            trans_taken.append(ti)
            times.append(t_entry)
            resets_stack.append(values_after(resets_stack[-1], t_entry, tr))
            on_path.add(tr.dst)
            hit = dfs(path, trans_taken, times, resets_stack, on_path)
            if hit:
                return hit
            on_path.discard(path.pop())
            trans_taken.pop()
            times.pop()
            resets_stack.pop()
        return None

    for start in sorted(g.init):
        if not _initial_feasible(g, start):
            continue
        zero = tuple(tuple(0.0 for _ in range(m)) for m in g.clock_counts)
        hit = dfs([start], [], [0.0], [zero], {start})
        if hit:
            return hit
    if truncated:
        raise DepthExceeded(f"no lasso within depth {depth}; deeper ones may exist")
    return None


def replay_run(g: GlobalBWTS, run: TimedRun) -> bool:
    """Exact re-check of every guard and invariant along a returned lasso."""
    if run.states[0] not in g.init or not _initial_feasible(g, run.states[0]):
        return False
    resets = tuple(tuple(0.0 for _ in range(m)) for m in g.clock_counts)
    t_now = 0.0
    for k, ti in enumerate(run.trans):
        tr = g.trans[ti]
        if tr.src != run.states[k] or tr.dst != run.states[k + 1]:
            return False
        t_entry = t_now + tr.weight

        def pre(ns, c):
            return t_entry - resets[ns][c]
        if not _check(tr.guards, pre):
            return False
        zbits = g.states[tr.dst].z

        def post(ns, c):
            return 0.0 if zbits[ns][c] else t_entry - resets[ns][c]
        if not _check(g.invariants[tr.dst], post):
            return False
        resets = tuple(tuple(t_entry if zbits[ns][c] else resets[ns][c]
                             for c in range(len(resets[ns])))
                       for ns in range(len(resets)))
        t_now = t_entry
    return True


# --- projection -------------------------------------------------------------


def project(run: TimedRun, g: GlobalBWTS, pb: ProductBWTS,
            horizon: float = 0.0) -> Plan:
    """Unroll the lasso and split it into per-agent schedules.

    All agents depart each step together at the collective timestamp; an
    agent whose own bound is smaller than the joint step simply waits (its
    worst-case arrival is recorded separately).  The cycle is repeated until
    the unrolled duration extends at least ``horizon`` past the prefix, so
    every bounded obligation falls inside the checked window.
    """
    step_trans = list(run.trans)
    prefix_end = run.times[run.lasso_start]
    cycle_trans = step_trans[run.lasso_start:]
    cycle_dur = run.total_time - prefix_end
    laps = 1
    if cycle_trans and horizon > 0:
        while prefix_end + laps * cycle_dur < prefix_end + horizon:
            laps += 1
    unrolled = step_trans[:run.lasso_start] + cycle_trans * laps

    times = [0.0]
    for ti in unrolled:
        times.append(times[-1] + g.trans[ti].weight)

    n_agents = len(pb.components)
    agents = []
    for a in range(n_agents):
        comp = pb.components[a]
        first = g.states[run.states[0]]
        combo = pb.states[first.pb]
        cells = [comp.states[combo[a]][0]]
        sigmas, departures, arrivals = [], [], []
        for k, ti in enumerate(unrolled):
            pt = pb.trans[g.trans[ti].pb_t]
            lt = comp.trans[pt.parts[a]]
            cells.append(comp.states[lt.dst][0])
            sigmas.append(lt.sigma)
            departures.append(times[k])
            arrivals.append(times[k] + lt.weight)
        agents.append(AgentPlan(comp.agent_id, cells, sigmas,
                                departures, arrivals))
    return Plan(collective=run, times=times, agents=agents, horizon=horizon)


# --- verification -----------------------------------------------------------


def agent_word(plan: Plan, agent_index: int, labels) -> TimedWord:
    ap = plan.agents[agent_index]
    return TimedWord(tuple(labels[c] for c in ap.cells), tuple(plan.times))


def collective_word(plan: Plan, labels_per_agent) -> TimedWord:
    letters = []
    for k in range(len(plan.times)):
        letter = set()
        for idx, ap in enumerate(plan.agents):
            cell_labels = labels_per_agent[idx][ap.cells[k]]
            letter |= cell_labels
            letter |= {f"{l}@{ap.agent_id}" for l in cell_labels}
        letters.append(frozenset(letter))
    return TimedWord(tuple(letters), tuple(plan.times))


def verify_plan(plan: Plan, labels_per_agent: list,
                local_formulas: list, global_formula: Formula | None) -> list:
    """Check every formula on the words the plan produces.

    Words use the collective (worst-case) timestamps, which is the
    conservative choice: agents never arrive later than these.  Implication
    conjuncts are verified as recurring obligations, matching what the
    compiled automata enforce.  Returns one report entry per formula.
    """
    report = []
    for idx, ap in enumerate(plan.agents):
        phi = local_formulas[idx]
        if phi is None:
            report.append({"scope": f"agent {ap.agent_id}", "formula": None,
                           "holds": None, "note": "explicit automaton, no formula"})
            continue
        w = agent_word(plan, idx, labels_per_agent[idx])
        report.append({"scope": f"agent {ap.agent_id}", "formula": str(phi),
                       "holds": holds(w, phi)})
    if global_formula is not None:
        w = collective_word(plan, labels_per_agent)
        report.append({"scope": "global", "formula": str(global_formula),
                       "holds": holds(w, global_formula)})
    else:
        report.append({"scope": "global", "formula": None, "holds": None,
                       "note": "explicit automaton, no formula"})
    return report


def all_pass(report: list) -> bool:
    return all(entry["holds"] is not False for entry in report)
