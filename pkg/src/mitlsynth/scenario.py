"""Scenario files: the batch interface to the pipeline.

A scenario is one JSON document (``"schema": 1``) declaring the shared
workspace geometry, the agents, one bounded-time formula (or explicit
automaton file) per agent, and an optional team formula.  Team formulas may
use agent-qualified atoms like ``r1@1`` ("room 1 holds for agent 1").
"""

import json
import os
from dataclasses import dataclass, field

from . import mitl
from .abstraction import DEFAULT_A_TOL, DEFAULT_EPS, LinearAgent
from .automata import DEFAULT_STAY_WEIGHT
from .errors import SchemaError
from .geometry import Partition, Rectangle, Wall, build_partition
from .simulation import DEFAULT_MARGIN, DEFAULT_STEP


@dataclass
class FormulaSpec:
    """A formula string, an automaton file path, or both (file wins for the
    product construction; the formula is still used for verification)."""

    formula: object = None      # mitl.Formula
    tba_path: str | None = None


@dataclass
class Scenario:
    path: str
    bounds: Rectangle
    grid: list
    regions: list               # (label, Rectangle)
    walls: list                 # Wall
    agents: list                # LinearAgent
    local_specs: list           # FormulaSpec per agent
    global_spec: FormulaSpec
    eps: float = DEFAULT_EPS
    h: float = DEFAULT_STEP
    margin: float = DEFAULT_MARGIN
    a_tol: float = DEFAULT_A_TOL
    stay_weight: float = DEFAULT_STAY_WEIGHT

    def build_partition(self) -> Partition:
        return build_partition(self.bounds, self.grid, self.regions, self.walls)

    @property
    def region_labels(self) -> frozenset:
        return frozenset(label for label, _ in self.regions)


def _need(doc, key, kind, where):
    if key not in doc:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} has the wrong type")
    return value


def _formula_spec(raw, where, base_dir) -> FormulaSpec:
    if raw is None:
        return FormulaSpec()
    if isinstance(raw, str):
        return FormulaSpec(formula=mitl.parse(raw))
    if isinstance(raw, dict):
        phi = mitl.parse(raw["formula"]) if raw.get("formula") else None
        path = raw.get("tba")
        if path is not None:
            path = os.path.join(base_dir, path)
        if phi is None and path is None:
            raise SchemaError(f"{where}: needs a formula or an automaton file")
        return FormulaSpec(formula=phi, tba_path=path)
    raise SchemaError(f"{where}: expected a string or object")


def _check_formula_atoms(phi, labels, agent_ids, where):
    if phi is None:
        return
    for ap in mitl.atoms(phi):
        name, _, agent = ap.partition("@")
        if name not in labels:
            raise SchemaError(
                f"{where}: proposition {ap!r} is not a region label")
        if agent and int(agent) not in agent_ids:
            raise SchemaError(
                f"{where}: proposition {ap!r} names an unknown agent")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)   # JSONDecodeError surfaces positions; cli maps to exit 2
    if doc.get("schema") != 1:
        raise SchemaError(f"{path}: unsupported schema {doc.get('schema')!r}")
    base_dir = os.path.dirname(os.path.abspath(path))

    ws = _need(doc, "workspace", dict, path)
    bounds = Rectangle(tuple(ws["lo"]), tuple(ws["hi"]))
    grid = _need(doc, "grid", list, path)
    if len(grid) != bounds.dim:
        raise SchemaError(f"{path}: grid must list cuts for each of "
                          f"{bounds.dim} axes")

    regions = []
    for raw in doc.get("regions", []):
        regions.append((
            _need(raw, "label", str, f"{path} region"),
            Rectangle(tuple(raw["lo"]), tuple(raw["hi"]))))
    walls = []
    for raw in doc.get("walls", []):
        walls.append(Wall(axis=_need(raw, "axis", int, f"{path} wall"),
                          at=float(raw["at"]),
                          lo=tuple(raw["lo"]), hi=tuple(raw["hi"])))

    raw_agents = _need(doc, "agents", list, path)
    if not raw_agents:
        raise SchemaError(f"{path}: need at least one agent")
    agents = []
    for k, raw in enumerate(raw_agents):
        agents.append(LinearAgent(
            A=raw["A"], B=raw["B"], x0=tuple(raw["x0"]),
            u_max=float(raw["u_max"]), id=int(raw.get("id", k + 1))))
    agent_ids = {a.id for a in agents}
    if len(agent_ids) != len(agents):
        raise SchemaError(f"{path}: duplicate agent ids")

    raw_locals = _need(doc, "local_formulas", list, path)
    if len(raw_locals) != len(agents):
        raise SchemaError(f"{path}: need one local formula per agent")
    local_specs = [_formula_spec(raw, f"{path} local formula {k}", base_dir)
                   for k, raw in enumerate(raw_locals)]
    for spec in local_specs:
        if spec.formula is None and spec.tba_path is None:
            raise SchemaError(f"{path}: every agent needs a local specification")
    global_spec = _formula_spec(doc.get("global_formula"),
                                f"{path} global formula", base_dir)

    params = doc.get("parameters", {})
    scenario = Scenario(
        path=str(path), bounds=bounds, grid=grid, regions=regions, walls=walls,
        agents=agents, local_specs=local_specs, global_spec=global_spec,
        eps=float(params.get("eps", DEFAULT_EPS)),
        h=float(params.get("h", DEFAULT_STEP)),
        margin=float(params.get("margin", DEFAULT_MARGIN)),
        a_tol=float(params.get("a_tol", DEFAULT_A_TOL)),
        stay_weight=float(params.get("stay_weight", DEFAULT_STAY_WEIGHT)))

    labels = scenario.region_labels
    for k, spec in enumerate(local_specs):
        _check_formula_atoms(spec.formula, labels, agent_ids,
                             f"{path} local formula {k}")
    _check_formula_atoms(global_spec.formula, labels, agent_ids,
                         f"{path} global formula")
    return scenario
