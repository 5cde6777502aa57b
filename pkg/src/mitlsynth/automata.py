"""The three layered products behind the synthesis pipeline.

* local product: one agent's WTS crossed with its specification automaton,
* agent product: synchronous product of all local products (every agent takes
  a step on every joint transition; the joint weight is the slowest agent's),
* global product: the agent product crossed with the team automaton, extended
  with per-clock reset flags and the generalized-Buchi alternation flag.

Clock bookkeeping: instead of carrying clock valuations in the state (which
would multiply the state count by (C_max+1)^M), every global state stores one
bit per clock saying "this clock was reset on the transition that entered
this state"; initial states carry all-ones because clocks start at zero.  A
clock's value along a path is then the sum of edge weights back to the most
recent set bit, which is what the search computes.

Transitions additionally carry the guard of the automaton edge they embed.
The source papers drop guards from the product and keep only location
invariants; enforcing both (guard on pre-reset values, target invariant on
post-reset values) strictly reduces accepted runs to genuinely time-feasible
ones.

Joint moves include a per-agent "stay" step of small positive duration.
Without it the synchronous product would force every agent to cross a facet
at every joint step, which makes unequal-length itineraries (one agent waits
in a room while another repositions) unrepresentable.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product as iproduct

from .abstraction import WTS
from .errors import AlphabetMismatch, EmptyProduct
from .tba import TBA

DEFAULT_STAY_WEIGHT = 0.01
STAY = "stay"


# --- local product --------------------------------------------------------

@dataclass(frozen=True)
class LocalTrans:
    src: int
    dst: int
    weight: float
    sigma: str                  # WTS input, or "stay"
    guard: tuple                # automaton edge guard, this agent's clocks
    resets: frozenset           # clocks reset on this transition


@dataclass
class LocalBWTS:
    """Product of one agent's WTS with its specification automaton."""

    agent_id: int
    states: list                # (cell_id, location_id) per state id
    init: tuple
    accepting: frozenset
    labels: list                # full cell label set per state
    invariants: list            # location invariant per state
    trans: list                 # LocalTrans
    clock_count: int
    ap: frozenset

    @property
    def size(self) -> int:
        return len(self.states)

    def out_edges(self, state: int):
        return [i for i, t in enumerate(self.trans) if t.src == state]

    def reset_set(self, clock: int) -> frozenset:
        """Def-8 style C_i: transitions on which ``clock`` is reset."""
        return frozenset((t.src, t.dst) for t in self.trans if clock in t.resets)


def _reachable(n_states, init, trans):
    seen = set(init)
    out = {}
    for i, t in enumerate(trans):
        out.setdefault(t.src, []).append(i)
    frontier = sorted(seen)
    while frontier:
        nxt = []
        for s in frontier:
            for i in out.get(s, []):
                d = trans[i].dst
                if d not in seen:
                    seen.add(d)
                    nxt.append(d)
        frontier = sorted(nxt)
    return seen


def local_product(wts: WTS, tba: TBA, stay_weight: float = DEFAULT_STAY_WEIGHT,
                  allow_stay: bool = True, prune: bool = True) -> LocalBWTS:
    """Cross a WTS with a specification automaton.

    States are (cell, location) pairs whose labels are compatible; moves pair
    a WTS facet transition with an automaton edge whose target matches the
    destination cell, and keep the WTS weight.  A stay move repeats the cell
    (the automaton still steps, re-reading the same letter) and costs
    ``stay_weight``.
    """
    if not tba.alphabet <= wts.ap:
        raise AlphabetMismatch(
            f"automaton uses propositions {sorted(tba.alphabet - wts.ap)} "
            f"the transition system never declares")

    pairs = []
    for cell in range(wts.size):
        for loc in tba.locations:
            if tba.matches(loc, wts.labels[cell]):
                pairs.append((cell, loc.id))
    index = {p: i for i, p in enumerate(pairs)}

    init = tuple(sorted(
        index[(cell, lid)]
        for cell in wts.init for lid in tba.initial_ids()
        if (cell, lid) in index))
    if not init:
        raise EmptyProduct(
            f"agent {wts.agent_id}: no automaton location matches the "
            f"initial cell labels")

    trans = []
    for (cell, lid), sid in index.items():
        for e in tba.out_edges(lid):
            target_loc = tba.locations[e.dst]
            # facet moves
            for wt in wts.out_edges(cell):
                dest = (wt.dst, e.dst)
                if dest in index and tba.matches(target_loc, wts.labels[wt.dst]):
                    trans.append(LocalTrans(sid, index[dest], wt.weight,
                                            wt.sigma, e.guard, e.resets))
            # stay move: same cell, same letter
            if allow_stay and (cell, e.dst) in index \
                    and tba.matches(target_loc, wts.labels[cell]):
                trans.append(LocalTrans(sid, index[(cell, e.dst)], stay_weight,
                                        STAY, e.guard, e.resets))

    if prune:
        keep = _reachable(len(pairs), init, trans)
    else:
        keep = set(range(len(pairs)))
    order = sorted(keep)
    remap = {old: new for new, old in enumerate(order)}
    states = [pairs[old] for old in order]
    accepting_locs = tba.accepting_ids()
    return LocalBWTS(
        agent_id=wts.agent_id,
        states=states,
        init=tuple(sorted(remap[s] for s in init if s in keep)),
        accepting=frozenset(i for i, (c, l) in enumerate(states)
                            if l in accepting_locs),
        labels=[wts.labels[c] for c, _ in states],
        invariants=[tba.locations[l].invariant for _, l in states],
        trans=sorted(
            (LocalTrans(remap[t.src], remap[t.dst], t.weight, t.sigma,
                        t.guard, t.resets)
             for t in trans if t.src in keep and t.dst in keep),
            key=lambda t: (t.src, t.dst, t.sigma, t.guard, sorted(t.resets))),
        clock_count=tba.clocks,
        ap=wts.ap)


# --- agent product --------------------------------------------------------

@dataclass(frozen=True)
class ProductTrans:
    src: int
    dst: int
    weight: float               # max over agents
    parts: tuple                # per-agent index into that component's trans


@dataclass
class ProductBWTS:
    """Synchronous product of the local products."""

    components: list            # LocalBWTS per agent
    states: list                # tuple of component state ids per state id
    init: tuple
    accepting: frozenset
    labels: list                # union of component labels, plus agent-qualified
    trans: list                 # ProductTrans
    out: dict

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def clock_counts(self) -> list:
        return [c.clock_count for c in self.components]

    def out_edges(self, state: int):
        return self.out.get(state, [])


def _qualified_labels(components, combo):
    plain, qualified = set(), set()
    for comp, sid in zip(components, combo):
        labels = comp.labels[sid]
        plain |= labels
        qualified |= {f"{ap}@{comp.agent_id}" for ap in labels}
    return frozenset(plain | qualified)


def agent_product(components: list, prune: bool = True) -> ProductBWTS:
    """Def-9 style synchronous product; every agent moves on every step."""
    if not components:
        raise ValueError("need at least one local product")

    comp_out = []
    for comp in components:
        by_src = {}
        for i, t in enumerate(comp.trans):
            by_src.setdefault(t.src, []).append(i)
        comp_out.append(by_src)

    init_combos = sorted(iproduct(*[c.init for c in components]))

    def successors(combo):
        choice_lists = []
        for k, comp in enumerate(components):
            choice_lists.append(comp_out[k].get(combo[k], []))
        for choice in iproduct(*choice_lists):
            dest = tuple(components[k].trans[choice[k]].dst
                         for k in range(len(components)))
            weight = max(components[k].trans[choice[k]].weight
                         for k in range(len(components)))
            yield dest, weight, choice

    if prune:
        seen = set(init_combos)
        frontier = list(init_combos)
        edges_raw = []
        while frontier:
            nxt = []
            for combo in sorted(frontier):
                for dest, weight, choice in successors(combo):
                    edges_raw.append((combo, dest, weight, choice))
                    if dest not in seen:
                        seen.add(dest)
                        nxt.append(dest)
            frontier = nxt
        combos = sorted(seen)
    else:
        combos = sorted(iproduct(*[range(c.size) for c in components]))
        edges_raw = []
        for combo in combos:
            for dest, weight, choice in successors(combo):
                edges_raw.append((combo, dest, weight, choice))

    index = {c: i for i, c in enumerate(combos)}
    trans = sorted(
        (ProductTrans(index[src], index[dst], w, choice)
         for src, dst, w, choice in edges_raw if dst in index),
        key=lambda t: (t.src, t.dst, t.parts))
    out = {}
    for i, t in enumerate(trans):
        out.setdefault(t.src, []).append(i)

    return ProductBWTS(
        components=list(components),
        states=combos,
        init=tuple(sorted(index[c] for c in init_combos)),
        accepting=frozenset(
            i for i, combo in enumerate(combos)
            if all(combo[k] in components[k].accepting
                   for k in range(len(components)))),
        labels=[_qualified_labels(components, c) for c in combos],
        trans=trans,
        out=out)


# --- global product -------------------------------------------------------

@dataclass(frozen=True)
class GlobalState:
    pb: int                     # agent-product state
    loc: int                    # team automaton location
    z: tuple                    # (Z_0, Z_1..Z_N): reset-on-entry bit vectors
    flag: int                   # generalized-Buchi alternation flag, 1 or 2


@dataclass(frozen=True)
class GlobalTrans:
    src: int
    dst: int
    weight: float
    guards: tuple               # ((namespace, clock, rel, const), ...)
    pb_t: int                   # agent-product transition index
    g_edge: int                 # team automaton edge index


@dataclass
class GlobalBWTS:
    """Agent product crossed with the team automaton, with flag bookkeeping.

    Namespace 0 is the team automaton's clocks; namespace k >= 1 is agent k's
    (positional, matching ``clock_counts``).  ``z`` bits mark clocks reset on
    the entering transition; the alternation flag flips 1 -> 2 when leaving a
    product-accepting state and 2 -> 1 when leaving a team-accepting
    location, so any accepting cycle witnesses both Buchi conditions.
    """

    states: list                # GlobalState per id
    init: tuple
    accepting: frozenset
    labels: list
    invariants: list            # ((namespace, clock, rel, const), ...) per state
    trans: list                 # GlobalTrans
    out: dict
    clock_counts: list          # [M_G, M_1, .., M_N]

    @property
    def size(self) -> int:
        return len(self.states)

    def out_edges(self, state: int):
        return self.out.get(state, [])


def _flag_step(flag: int, src_accepting_product: bool,
               src_accepting_team: bool) -> int:
    if flag == 1 and src_accepting_product:
        return 2
    if flag == 2 and src_accepting_team:
        return 1
    return flag


def global_product(pb: ProductBWTS, gtba: TBA, prune: bool = True) -> GlobalBWTS:
    """Cross the agent product with the team automaton."""
    universe = set()
    for comp in pb.components:
        universe |= comp.ap
        universe |= {f"{ap}@{comp.agent_id}" for ap in comp.ap}
    if not gtba.alphabet <= universe:
        raise AlphabetMismatch(
            f"team automaton uses propositions "
            f"{sorted(gtba.alphabet - universe)} no agent declares")

    n_agents = len(pb.components)
    counts = [gtba.clocks] + pb.clock_counts
    team_accepting = gtba.accepting_ids()

    def ones(m):
        return (1,) * m

    init_states = []
    for q in pb.init:
        for lid in gtba.initial_ids():
            if not gtba.matches(gtba.locations[lid], pb.labels[q]):
                continue
            for flag in (1, 2):
                init_states.append(GlobalState(
                    q, lid, tuple(ones(m) for m in counts), flag))
    if not init_states:
        raise EmptyProduct(
            "no team automaton location matches the initial joint labels")

    def successors(gs: GlobalState):
        src_acc_prod = gs.pb in pb.accepting
        src_acc_team = gs.loc in team_accepting
        flag2 = _flag_step(gs.flag, src_acc_prod, src_acc_team)
        for ti in pb.out_edges(gs.pb):
            pt = pb.trans[ti]
            for ei, e in enumerate(gtba.edges):
                if e.src != gs.loc:
                    continue
                if not gtba.matches(gtba.locations[e.dst], pb.labels[pt.dst]):
                    continue
                z0 = tuple(1 if k in e.resets else 0 for k in range(counts[0]))
                zs = [z0]
                guards = [(0, c, r, k) for c, r, k in e.guard]
                for a in range(n_agents):
                    lt = pb.components[a].trans[pt.parts[a]]
                    zs.append(tuple(1 if k in lt.resets else 0
                                    for k in range(counts[a + 1])))
                    guards.extend((a + 1, c, r, k) for c, r, k in lt.guard)
                yield (GlobalState(pt.dst, e.dst, tuple(zs), flag2),
                       pt.weight, tuple(guards), ti, ei)

    if prune:
        seen = {gs: None for gs in init_states}
        frontier = list(dict.fromkeys(init_states))
        edges_raw = []
        while frontier:
            nxt = []
            for gs in frontier:
                for dest, w, guards, ti, ei in successors(gs):
                    edges_raw.append((gs, dest, w, guards, ti, ei))
                    if dest not in seen:
                        seen[dest] = None
                        nxt.append(dest)
            frontier = nxt
        all_states = list(seen)
    else:
        all_states = []
        zspace = list(iproduct(*[list(iproduct(*[(0, 1)] * m)) for m in counts]))
        for q in range(pb.size):
            for loc in gtba.locations:
                if not gtba.matches(loc, pb.labels[q]):
                    continue
                for z in zspace:
                    for flag in (1, 2):
                        all_states.append(GlobalState(q, loc.id, z, flag))
        edges_raw = []
        statespace = set(all_states)
        for gs in all_states:
            for dest, w, guards, ti, ei in successors(gs):
                if dest in statespace:
                    edges_raw.append((gs, dest, w, guards, ti, ei))

    order = sorted(all_states, key=lambda s: (s.pb, s.loc, s.z, s.flag))
    index = {s: i for i, s in enumerate(order)}
    trans = sorted(
        (GlobalTrans(index[src], index[dst], w, guards, ti, ei)
         for src, dst, w, guards, ti, ei in edges_raw),
        key=lambda t: (t.src, t.dst, t.pb_t, t.g_edge))
    out = {}
    for i, t in enumerate(trans):
        out.setdefault(t.src, []).append(i)

    invariants = []
    for gs in order:
        inv = [(0, c, r, k) for c, r, k in gtba.locations[gs.loc].invariant]
        combo = pb.states[gs.pb]
        for a, comp in enumerate(pb.components):
            inv.extend((a + 1, c, r, k) for c, r, k in comp.invariants[combo[a]])
        invariants.append(tuple(inv))

    return GlobalBWTS(
        states=order,
        init=tuple(sorted(index[s] for s in init_states)),
        accepting=frozenset(
            i for i, s in enumerate(order)
            if s.flag == 1 and s.pb in pb.accepting),
        labels=[pb.labels[s.pb] for s in order],
        invariants=invariants,
        trans=trans,
        out=out,
        clock_counts=counts)


# --- state-count arithmetic ------------------------------------------------

def state_bound(wts_sizes, tba_sizes, clock_counts, gtba_size: int,
                g_clock_count: int) -> int:
    """Worst-case global product size: prod(T_i * A_i * 2^M_i) * A_G * 2^M_G * 2."""
    total = 1
    for t, a, m in zip(wts_sizes, tba_sizes, clock_counts, strict=True):
        total *= t * a * (2 ** m)
    return total * gtba_size * (2 ** g_clock_count) * 2


def x2_state_bound(wts_sizes, tba_sizes, clock_counts, c_maxes,
                   gtba_size: int, g_clock_count: int, c_max_g: int) -> int:
    """Bound for the valuation-carrying construction this design replaces.

    Clock values are integers in [0, C_max], so each clock contributes a
    factor (C_max + 1) instead of 2.
    """
    total = 1
    for t, a, m, c in zip(wts_sizes, tba_sizes, clock_counts, c_maxes,
                          strict=True):
        total *= t * a * ((c + 1) ** m)
    return total * gtba_size * ((c_max_g + 1) ** g_clock_count) * 2


def savings_ratio(clock_counts, c_maxes, g_clock_count: int,
                  c_max_g: int) -> Fraction:
    """How many times smaller the reset-flag construction is."""
    num = 1
    for m, c in zip(clock_counts, c_maxes, strict=True):
        num *= (c + 1) ** m
    num *= (c_max_g + 1) ** g_clock_count
    den = 2 ** (sum(clock_counts) + g_clock_count)
    return Fraction(num, den)
