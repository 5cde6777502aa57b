"""Timed Buchi automata: pattern compiler, file loader, acceptance checking.

Locations are state-labeled.  A location carries a positive set ``pos`` and a
negative set ``neg`` of propositions: it can read any letter that contains
all of ``pos`` and none of ``neg`` (after restricting the letter to the
automaton's alphabet).  This partial labeling is what lets the standard
three-location "reach within b" automaton exist; insisting on one exact
letter per location would force a location per alphabet subset and make the
products explode.

Timing semantics, used consistently here and by the product search:

* an edge is taken at the timestamp of the position it enters; its guard is
  checked on the pre-reset clock values,
* resets apply at that timestamp,
* the target location's invariant is checked on the post-reset values,
* the initial location's invariant is checked at time 0 on the zero valuation.

Finite words are accepted when some run ends in a location marked
``finite_accepting``, i.e. a location with no pending timed obligation.
"""

import json
import random
import zlib
from dataclasses import dataclass, field, replace
from itertools import product as iproduct

from . import mitl
from .errors import (DanglingReference, SchemaError, UnsupportedFragment)
from .jsonio import dump_path
from .mitl import (Always, And, Atom, Eventually, Formula, Implies, Not, Or,
                   TimedWord, TrueF, Until)

RELS = ("<", "<=", ">", ">=")


def cc_sat(constraint, values) -> bool:
    """Evaluate a conjunction of ``clock rel const`` atoms on clock values."""
    for clock, rel, const in constraint:
        v = values[clock]
        if rel == "<" and not v < const:
            return False
        if rel == "<=" and not v <= const:
            return False
        if rel == ">" and not v > const:
            return False
        if rel == ">=" and not v >= const:
            return False
    return True


@dataclass(frozen=True)
class Location:
    id: int
    pos: frozenset
    neg: frozenset
    invariant: tuple = ()
    accepting: bool = False
    initial: bool = False
    finite_accepting: bool | None = None

    def final_ok(self) -> bool:
        return self.accepting if self.finite_accepting is None else self.finite_accepting


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    guard: tuple = ()
    resets: frozenset = frozenset()


@dataclass
class TBA:
    locations: list
    edges: list
    clocks: int
    alphabet: frozenset
    out: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.out = {}
        for e in self.edges:
            self.out.setdefault(e.src, []).append(e)

    @property
    def size(self) -> int:
        return len(self.locations)

    def initial_ids(self):
        return [l.id for l in self.locations if l.initial]

    def accepting_ids(self):
        return frozenset(l.id for l in self.locations if l.accepting)

    def matches(self, loc: Location, letter: frozenset) -> bool:
        restricted = frozenset(letter) & self.alphabet
        return loc.pos <= restricted and not (loc.neg & restricted)

    def out_edges(self, loc_id: int):
        return self.out.get(loc_id, [])


# --- boolean cubes -------------------------------------------------------

def _is_propositional(phi: Formula) -> bool:
    if isinstance(phi, (TrueF, Atom)):
        return True
    if isinstance(phi, Not):
        return _is_propositional(phi.child)
    if isinstance(phi, (And, Or, Implies)):
        return _is_propositional(phi.left) and _is_propositional(phi.right)
    return False


def _eval_bool(phi: Formula, assignment: dict) -> bool:
    if isinstance(phi, TrueF):
        return True
    if isinstance(phi, Atom):
        return assignment[phi.name]
    if isinstance(phi, Not):
        return not _eval_bool(phi.child, assignment)
    if isinstance(phi, And):
        return _eval_bool(phi.left, assignment) and _eval_bool(phi.right, assignment)
    if isinstance(phi, Or):
        return _eval_bool(phi.left, assignment) or _eval_bool(phi.right, assignment)
    if isinstance(phi, Implies):
        return (not _eval_bool(phi.left, assignment)) or _eval_bool(phi.right, assignment)
    raise UnsupportedFragment(f"{phi} is not propositional")


def cubes(phi: Formula) -> list:
    """Prime implicant cubes of a propositional formula as (pos, neg) pairs.

    Minterms over the formula's atoms are merged pairwise until fixpoint;
    the surviving maximal cubes cover exactly the satisfying assignments
    (overlap is fine, the automata are nondeterministic anyway).
    """
    names = sorted(mitl.atoms(phi))
    minterms = set()
    for bits in iproduct([False, True], repeat=len(names)):
        assignment = dict(zip(names, bits))
        if _eval_bool(phi, assignment):
            minterms.add(tuple(zip(names, bits)))
    if not names:
        return [(frozenset(), frozenset())] if _eval_bool(phi, {}) else []

    current = {frozenset(m) for m in minterms}
    primes = set()
    while current:
        merged_away, nxt = set(), set()
        items = sorted(current, key=sorted)
        for a in items:
            for b in items:
                diff = a ^ b
                if len(diff) == 2 and len({v for v, _ in diff}) == 1:
                    nxt.add(a & b)
                    merged_away.add(a)
                    merged_away.add(b)
        primes |= current - merged_away
        current = nxt
    out = []
    for cube in sorted(primes, key=sorted):
        pos = frozenset(v for v, bit in cube if bit)
        neg = frozenset(v for v, bit in cube if not bit)
        out.append((pos, neg))
    return out


# --- pattern compiler ----------------------------------------------------

class _Builder:
    def __init__(self, alphabet):
        self.locs = []
        self.edges = []
        self.alphabet = frozenset(alphabet)

    def loc(self, pos=(), neg=(), accepting=False, initial=False,
            finite_accepting=None, invariant=()):
        lid = len(self.locs)
        self.locs.append(Location(lid, frozenset(pos), frozenset(neg),
                                  tuple(invariant), accepting, initial,
                                  finite_accepting))
        return lid

    def edge(self, src, dst, guard=(), resets=()):
        self.edges.append(Edge(src, dst, tuple(guard), frozenset(resets)))

    def build(self, clocks):
        return TBA(self.locs, self.edges, clocks, self.alphabet)


def _timed_interval(phi):
    if phi.lo != 0.0:
        raise UnsupportedFragment(
            f"only [0,b] windows can be compiled, got [{phi.lo},{phi.hi}]")
    return phi.hi


def _compile_eventually(phi: Eventually) -> TBA:
    b = _timed_interval(phi)
    if not _is_propositional(phi.child):
        raise UnsupportedFragment("operand of F must be propositional")
    bld = _Builder(mitl.atoms(phi))
    wait = bld.loc(initial=True)
    hits = [bld.loc(pos, neg, accepting=True, initial=True)
            for pos, neg in cubes(phi.child)]
    done = bld.loc(accepting=True)
    bld.edge(wait, wait)
    for h in hits:
        bld.edge(wait, h, guard=[(0, "<=", b)])
        bld.edge(h, done)
    bld.edge(done, done)
    return bld.build(1)


def _compile_always(phi: Always) -> TBA:
    b = _timed_interval(phi)
    if not _is_propositional(phi.child):
        raise UnsupportedFragment("operand of G must be propositional")
    bld = _Builder(mitl.atoms(phi))
    guards = [bld.loc(pos, neg, initial=True) for pos, neg in cubes(phi.child)]
    free = bld.loc(accepting=True)
    for g1 in guards:
        for g2 in guards:
            bld.edge(g1, g2, guard=[(0, "<=", b)])
        bld.edge(g1, free, guard=[(0, ">", b)])
    bld.edge(free, free)
    return bld.build(1)


def _compile_until(phi: Until) -> TBA:
    b = _timed_interval(phi)
    if not (_is_propositional(phi.left) and _is_propositional(phi.right)):
        raise UnsupportedFragment("operands of U must be propositional")
    bld = _Builder(mitl.atoms(phi))
    waits = [bld.loc(pos, neg, initial=True) for pos, neg in cubes(phi.left)]
    hits = [bld.loc(pos, neg, accepting=True, initial=True)
            for pos, neg in cubes(phi.right)]
    done = bld.loc(accepting=True)
    for w1 in waits:
        for w2 in waits:
            bld.edge(w1, w2)
        for h in hits:
            bld.edge(w1, h, guard=[(0, "<=", b)])
    for h in hits:
        bld.edge(h, done)
    bld.edge(done, done)
    return bld.build(1)


def _compile_response(phi: Implies) -> TBA:
    """``beta1 -> F[0,b] beta2`` as a recurring obligation.

    Every position satisfying beta1 (and not already discharged by beta2)
    arms the clock; the automaton must reach a beta2 position within ``b`` of
    each arming.  Later beta1 positions while armed do not re-reset: the
    earliest deadline is the binding one.
    """
    if not isinstance(phi.right, Eventually):
        raise UnsupportedFragment("response must be 'prop -> F[0,b] prop'")
    b = _timed_interval(phi.right)
    beta1, beta2 = phi.left, phi.right.child
    if not (_is_propositional(beta1) and _is_propositional(beta2)):
        raise UnsupportedFragment("response operands must be propositional")
    bld = _Builder(mitl.atoms(phi))
    idle_n = [bld.loc(pos, neg, accepting=True, initial=True)
              for pos, neg in cubes(Not(beta1))]
    idle_d = [bld.loc(pos, neg, accepting=True, initial=True)
              for pos, neg in cubes(beta2)]
    armed = [bld.loc(pos, neg, initial=True)
             for pos, neg in cubes(Not(beta2))]
    idle = idle_n + idle_d
    for i1 in idle:
        for i2 in idle:
            bld.edge(i1, i2)
        for a in armed:
            bld.edge(i1, a, resets=[0])
    for a1 in armed:
        for a2 in armed:
            bld.edge(a1, a2, guard=[(0, "<=", b)])
        for d in idle_d:  # discharge must land on a beta2-asserting location
            bld.edge(a1, d, guard=[(0, "<=", b)])
    return bld.build(1)


def _conjoin(t1: TBA, t2: TBA) -> TBA:
    """Flag product of two pattern automata (generalized-Buchi flattening).

    The flag tracks which component's accepting set is owed next: it flips
    1 -> 2 when leaving an l1-accepting state and 2 -> 1 when leaving an
    l2-accepting state, and the product accepts at flag-1 states whose first
    component accepts.  Any accepting cycle therefore visits both components'
    accepting sets.
    """
    shift = t1.clocks
    pairs = {}
    locs, edges = [], []
    for l1 in t1.locations:
        for l2 in t2.locations:
            pos = l1.pos | l2.pos
            neg = l1.neg | l2.neg
            if pos & neg:
                continue
            inv = tuple(l1.invariant) + tuple(
                (c + shift, r, k) for c, r, k in l2.invariant)
            for f in (1, 2):
                lid = len(locs)
                pairs[(l1.id, l2.id, f)] = lid
                locs.append(Location(
                    lid, pos, neg, inv,
                    accepting=(f == 1 and l1.accepting),
                    initial=(l1.initial and l2.initial),
                    finite_accepting=(l1.final_ok() and l2.final_ok())))
    for e1 in t1.edges:
        for e2 in t2.edges:
            for f in (1, 2):
                src = pairs.get((e1.src, e2.src, f))
                if src is None:
                    continue
                sl1 = t1.locations[e1.src]
                sl2 = t2.locations[e2.src]
                if f == 1 and sl1.accepting:
                    f2 = 2
                elif f == 2 and sl2.accepting:
                    f2 = 1
                else:
                    f2 = f
                dst = pairs.get((e1.dst, e2.dst, f2))
                if dst is None:
                    continue
                guard = tuple(e1.guard) + tuple(
                    (c + shift, r, k) for c, r, k in e2.guard)
                resets = frozenset(e1.resets) | frozenset(
                    c + shift for c in e2.resets)
                edges.append(Edge(src, dst, guard, resets))
    return TBA(locs, edges, t1.clocks + t2.clocks, t1.alphabet | t2.alphabet)


def _prune(tba: TBA) -> TBA:
    """Drop locations unreachable from the initial set; reindex densely."""
    seen = set(tba.initial_ids())
    frontier = sorted(seen)
    while frontier:
        nxt = []
        for lid in frontier:
            for e in tba.out_edges(lid):
                if e.dst not in seen:
                    seen.add(e.dst)
                    nxt.append(e.dst)
        frontier = sorted(nxt)
    keep = sorted(seen)
    remap = {old: new for new, old in enumerate(keep)}
    locs = [replace(tba.locations[old], id=remap[old]) for old in keep]
    edges = sorted(
        (Edge(remap[e.src], remap[e.dst], e.guard, e.resets)
         for e in tba.edges if e.src in seen and e.dst in seen),
        key=lambda e: (e.src, e.dst, e.guard, sorted(e.resets)))
    return TBA(locs, list(dict.fromkeys(edges)), tba.clocks, tba.alphabet)


def minimize(tba: TBA) -> TBA:
    """Quotient by syntactic forward bisimulation.

    Locations with identical labels, invariants and flags whose outgoing
    edges agree up to target block are merged; this preserves the accepted
    language and keeps the downstream products small.
    """
    def key(loc):
        return (loc.pos, loc.neg, loc.invariant, loc.accepting,
                loc.initial, loc.final_ok())

    block = {}
    for loc in tba.locations:
        block[loc.id] = key(loc)
    while True:
        sig = {}
        for loc in tba.locations:
            edges = frozenset((e.guard, e.resets, block[e.dst])
                              for e in tba.out_edges(loc.id))
            sig[loc.id] = (block[loc.id], edges)
        if len(set(sig.values())) == len(set(block.values())):
            block = sig
            break
        block = sig

    # classes ordered by their smallest member id (hash-order independent)
    first = {}
    for loc in tba.locations:
        first.setdefault(block[loc.id], loc.id)
    classes = sorted(first, key=first.get)
    index = {cls: i for i, cls in enumerate(classes)}
    rep = {}
    for loc in tba.locations:
        rep.setdefault(index[block[loc.id]], loc)
    locs = [replace(rep[i], id=i) for i in range(len(classes))]
    edges = sorted(
        {Edge(index[block[e.src]], index[block[e.dst]], e.guard, e.resets)
         for e in tba.edges},
        key=lambda e: (e.src, e.dst, e.guard, sorted(e.resets)))
    return TBA(locs, edges, tba.clocks, tba.alphabet)


def compile_formula(phi: Formula, validate: bool = True,
                    samples: int = 1000, seed: int = 0) -> TBA:
    """Translate a fragment formula into a TBA.

    Supported shapes: ``F[0,b] p``, ``G[0,b] p``, ``p U[0,b] q``, the
    recurring response ``p -> F[0,b] q``, and a conjunction of two of these
    (propositional operands throughout).  Anything else raises
    UnsupportedFragment; callers can supply an explicit automaton file
    instead.

    When ``validate`` is set the result is checked against the satisfaction
    oracle on ``samples`` random finite words before being returned.
    """
    tba = _compile(phi)
    tba = minimize(_prune(tba))
    if validate:
        mismatches = validate_against_oracle(tba, phi, samples=samples, seed=seed)
        if mismatches:
            w, got, want = mismatches[0]
            raise RuntimeError(
                f"compiled automaton for {mitl.fmt(phi)!r} disagrees with the "
                f"oracle on {w} (automaton={got}, oracle={want})")
    return tba


def _compile(phi: Formula) -> TBA:
    if isinstance(phi, TrueF):
        bld = _Builder(frozenset())
        top = bld.loc(accepting=True, initial=True)
        bld.edge(top, top)
        return bld.build(0)
    if isinstance(phi, Eventually):
        return _compile_eventually(phi)
    if isinstance(phi, Always):
        return _compile_always(phi)
    if isinstance(phi, Until):
        return _compile_until(phi)
    if isinstance(phi, Implies):
        return _compile_response(phi)
    if isinstance(phi, And):
        left, right = phi.left, phi.right
        if isinstance(left, And) or isinstance(right, And):
            raise UnsupportedFragment("at most two patterns may be conjoined")
        return _conjoin(_compile(left), _compile(right))
    raise UnsupportedFragment(f"cannot compile {mitl.fmt(phi)!r}")


# --- finite-word acceptance ----------------------------------------------

def accepts_finite(tba: TBA, w: TimedWord) -> bool:
    """Explicit clock simulation over all nondeterministic runs.

    Clock values are tracked as last-reset timestamps, so the state space per
    position is finite and memoizable.  The word is accepted when some run
    survives to the last position and ends in a finite-accepting location.
    """
    if len(w) == 0:
        return False
    states = set()
    zero = (0.0,) * tba.clocks
    for lid in tba.initial_ids():
        loc = tba.locations[lid]
        if tba.matches(loc, w.letters[0]) and cc_sat(loc.invariant, zero):
            states.add((lid, zero))
    for pos in range(1, len(w)):
        t = w.times[pos]
        letter = w.letters[pos]
        nxt = set()
        for lid, resets in states:
            for e in tba.out_edges(lid):
                target = tba.locations[e.dst]
                if not tba.matches(target, letter):
                    continue
                values = [t - r for r in resets]
                if not cc_sat(e.guard, values):
                    continue
                new_resets = tuple(t if k in e.resets else resets[k]
                                   for k in range(tba.clocks))
                post = [t - r for r in new_resets]
                if not cc_sat(target.invariant, post):
                    continue
                nxt.add((e.dst, new_resets))
        states = nxt
        if not states:
            return False
    return any(tba.locations[lid].final_ok() for lid, _ in states)


# --- oracle cross-validation ---------------------------------------------

def sample_words(alphabet, n: int, rng: random.Random, tmax: float,
                 max_len: int = 12) -> list:
    """Random finite timed words: random letters, sorted distinct timestamps."""
    alphabet = sorted(alphabet)
    out = []
    for _ in range(n):
        length = rng.randint(1, max_len)
        letters = [frozenset(p for p in alphabet if rng.random() < 0.45)
                   for _ in range(length)]
        times = [0.0]
        while len(times) < length:
            t = rng.uniform(1e-4, tmax)
            if all(abs(t - s) > 1e-9 for s in times):
                times.append(t)
        times.sort()
        out.append(TimedWord(tuple(letters), tuple(times)))
    return out


def validate_against_oracle(tba: TBA, phi: Formula, samples: int = 1000,
                            seed: int = 0) -> list:
    """Compare automaton acceptance with the satisfaction oracle.

    Returns the list of disagreements (word, automaton verdict, oracle
    verdict); empty means full agreement.
    """
    base = zlib.crc32(mitl.fmt(phi).encode()) & 0xFFFFFFFF
    rng = random.Random(base ^ seed)
    tmax = max(2.0 * mitl.max_bound(phi), 1.0)
    bad = []
    for w in sample_words(mitl.atoms(phi), samples, rng, tmax):
        got = accepts_finite(tba, w)
        want = mitl.holds(w, phi)
        if got != want:
            bad.append((w, got, want))
    return bad


# --- file format ----------------------------------------------------------

def tba_from_dict(doc: dict) -> TBA:
    """Build a TBA from its JSON document; validates shape and references."""
    if not isinstance(doc, dict):
        raise SchemaError("automaton document must be an object")
    for field_name in ("locations", "edges", "clocks"):
        if field_name not in doc:
            raise SchemaError(f"missing field {field_name!r}")
    clocks = doc["clocks"]
    if not isinstance(clocks, int) or clocks < 0:
        raise SchemaError("clocks must be a nonnegative integer")

    def parse_constraint(items, what):
        out = []
        for item in items:
            if not (isinstance(item, (list, tuple)) and len(item) == 3):
                raise SchemaError(f"{what} atoms must be [clock, rel, const]")
            clock, rel, const = item
            if not isinstance(clock, int):
                raise SchemaError(f"{what} clock must be an integer")
            if clock >= clocks or clock < 0:
                raise DanglingReference(
                    f"{what} names clock {clock} of a {clocks}-clock automaton")
            if rel not in RELS:
                raise SchemaError(f"unknown relation {rel!r}")
            out.append((clock, rel, float(const)))
        return tuple(out)

    raw_locs = doc["locations"]
    if not raw_locs:
        raise SchemaError("automaton has no locations")
    ids = {}
    locs = []
    for raw in raw_locs:
        if "id" not in raw:
            raise SchemaError("location without id")
        if raw["id"] in ids:
            raise SchemaError(f"duplicate location id {raw['id']!r}")
        lid = len(locs)
        ids[raw["id"]] = lid
        locs.append(Location(
            lid,
            pos=frozenset(raw.get("labels", [])),
            neg=frozenset(raw.get("neg_labels", [])),
            invariant=parse_constraint(raw.get("invariant", []), "invariant"),
            accepting=bool(raw.get("accepting", False)),
            initial=bool(raw.get("initial", False)),
            finite_accepting=raw.get("finite_accepting")))
    edges = []
    for raw in doc["edges"]:
        for end in ("src", "dst"):
            if raw.get(end) not in ids:
                raise DanglingReference(f"edge names unknown location {raw.get(end)!r}")
        for clock in raw.get("resets", []):
            if not isinstance(clock, int) or not 0 <= clock < clocks:
                raise DanglingReference(
                    f"reset names clock {clock} of a {clocks}-clock automaton")
        edges.append(Edge(ids[raw["src"]], ids[raw["dst"]],
                          parse_constraint(raw.get("guard", []), "guard"),
                          frozenset(raw.get("resets", []))))
    alphabet = doc.get("alphabet")
    if alphabet is None:
        alphabet = set()
        for loc in locs:
            alphabet |= loc.pos | loc.neg
    if not any(l.initial for l in locs):
        raise SchemaError("automaton has no initial location")
    return TBA(locs, edges, clocks, frozenset(alphabet))


def load_tba(path) -> TBA:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
    return tba_from_dict(doc)


def tba_to_dict(tba: TBA) -> dict:
    return {
        "clocks": tba.clocks,
        "alphabet": sorted(tba.alphabet),
        "locations": [
            {"id": l.id, "labels": sorted(l.pos), "neg_labels": sorted(l.neg),
             "invariant": [[c, r, k] for c, r, k in l.invariant],
             "accepting": l.accepting, "initial": l.initial,
             "finite_accepting": l.final_ok()}
            for l in tba.locations],
        "edges": [
            {"src": e.src, "dst": e.dst,
             "guard": [[c, r, k] for c, r, k in e.guard],
             "resets": sorted(e.resets)}
            for e in tba.edges],
    }


def save_tba(tba: TBA, path) -> None:
    dump_path(tba_to_dict(tba), path)
