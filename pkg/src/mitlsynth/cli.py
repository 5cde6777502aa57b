"""Batch pipeline driver.

Commands mirror the pipeline stages: ``abstract`` builds the per-agent
transition systems, ``plan`` runs products plus search and writes the plan,
``simulate`` replays a written plan through the continuous dynamics,
``check`` re-verifies a written plan against the formulas, ``report``
renders the artifact summary, and ``all`` runs everything.

Exit codes: 0 success (all formulas verified), 2 input or artifact errors,
3 no accepting run, 1 any other pipeline failure (including a failed
verification or a violated crossing bound).
"""

import argparse
import json
import logging
import os
import sys

from . import jsonio, mitl, tba
from .abstraction import AffineController, LinearAgent, WTS, WtsTransition, \
    build_wts, save_wts
from .automata import (GlobalBWTS, ProductBWTS, agent_product, global_product,
                       local_product, state_bound)
from .errors import (DepthExceeded, MissingArtifact, NoAcceptingRun,
                     PipelineError, SchemaError)
from .scenario import Scenario, load_scenario
from .simulation import (Trajectory, render_svg, simulate,
                         write_crossings_csv, write_trajectory_csv)
from .synthesis import (Plan, AgentPlan, TimedRun, all_pass,
                        find_accepting_run, oracle_search, project,
                        replay_run, verify_plan)

logger = logging.getLogger(__name__)

ORACLE_SIZE_LIMIT = 400


# --- artifact loading (simulate/check/report work from files) --------------

def load_wts_json(path) -> WTS:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    states, labels = [], {}
    from .geometry import Rectangle
    for raw in doc["states"]:
        states.append(Rectangle(tuple(raw["a"]), tuple(raw["b"]), id=raw["id"]))
        labels[raw["id"]] = frozenset(raw["labels"])
    n = states[0].dim
    transitions = []
    for raw in doc["transitions"]:
        K = tuple(tuple(raw["K"][r * n:(r + 1) * n]) for r in range(n))
        ctrl = AffineController(
            K=K, c=tuple(raw["c"]), source=raw["src"], target=raw["dst"],
            direction=raw["direction"], sign=raw["sign"])
        transitions.append(WtsTransition(
            raw["src"], raw["dst"], f"u{raw['src']}_{raw['dst']}",
            raw["weight"], ctrl))
    return WTS(agent_id=doc["agent"], states=states,
               init=tuple(doc["initial"]), labels=labels,
               transitions=transitions, ap=frozenset(doc["ap"]))


def load_plan_json(path) -> Plan:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    coll = doc["collective"]
    run = TimedRun(tuple(coll["states"]), tuple(coll["times"]),
                   coll["lasso_start"], tuple(coll.get("trans", ())))
    agents = [AgentPlan(a["id"], list(a["cells"]), list(a["sigmas"]),
                        list(a["departures"]), list(a["worst_arrivals"]))
              for a in doc["agents"]]
    return Plan(collective=run, times=list(doc["times"]), agents=agents,
                horizon=doc.get("horizon", 0.0))


def _artifact(out_dir, name):
    path = os.path.join(out_dir, name)
    if not os.path.exists(path):
        raise MissingArtifact(f"{name} not found in {out_dir}; run the "
                              "producing stage first")
    return path


# --- pipeline stages --------------------------------------------------------

def stage_abstract(sc: Scenario, out_dir: str):
    part = sc.build_partition()
    wts_list = []
    for agent in sc.agents:
        wts = build_wts(agent, part, eps=sc.eps, a_tol=sc.a_tol)
        save_wts(wts, os.path.join(out_dir, f"wts_{agent.id}.json"))
        logger.info("agent %d: WTS with %d states, %d transitions",
                    agent.id, wts.size, len(wts.transitions))
        wts_list.append(wts)
    return part, wts_list


def _automaton_for(spec, seed):
    if spec.tba_path is not None:
        return tba.load_tba(spec.tba_path)
    if spec.formula is None:
        return tba.compile_formula(mitl.TrueF(), validate=False)
    return tba.compile_formula(spec.formula, seed=seed)


def stage_products(sc: Scenario, wts_list, out_dir: str, seed: int = 0,
                   dump: bool = False):
    local_tbas = [_automaton_for(spec, seed) for spec in sc.local_specs]
    gtba = _automaton_for(sc.global_spec, seed)
    locals_ = [local_product(w, t, stay_weight=sc.stay_weight)
               for w, t in zip(wts_list, local_tbas)]
    pb = agent_product(locals_)
    gb = global_product(pb, gtba)

    sizes = {
        "schema": 1,
        "agents": [
            {"id": w.agent_id, "wts_states": w.size,
             "wts_transitions": len(w.transitions),
             "tba_locations": t.size, "tba_clocks": t.clocks,
             "local_states": lb.size, "local_transitions": len(lb.trans)}
            for w, t, lb in zip(wts_list, local_tbas, locals_)],
        "product_states": pb.size,
        "product_transitions": len(pb.trans),
        "global_tba_locations": gtba.size,
        "global_tba_clocks": gtba.clocks,
        "global_states": gb.size,
        "global_transitions": len(gb.trans),
        "state_bound": state_bound(
            [w.size for w in wts_list], [t.size for t in local_tbas],
            [t.clocks for t in local_tbas], gtba.size, gtba.clocks),
    }
    jsonio.dump_path(sizes, os.path.join(out_dir, "sizes.json"))
    for entry in sizes["agents"]:
        logger.info("agent %(id)d: local product %(local_states)d states, "
                    "%(local_transitions)d transitions", entry)
    logger.info("agent product: %d states; global product: %d states "
                "(bound %d)", pb.size, gb.size, sizes["state_bound"])
    if dump:
        _dump_products(locals_, pb, gb, out_dir)
    return local_tbas, gtba, locals_, pb, gb, sizes


def _dump_products(locals_, pb: ProductBWTS, gb: GlobalBWTS, out_dir: str):
    for lb in locals_:
        doc = {
            "states": [[c, l] for c, l in lb.states],
            "init": sorted(lb.init),
            "accepting": sorted(lb.accepting),
            "transitions": [[t.src, t.dst, t.weight, t.sigma] for t in lb.trans],
        }
        jsonio.dump_path(doc, os.path.join(out_dir, f"local_{lb.agent_id}.json"))
    jsonio.dump_path({
        "states": [list(s) for s in pb.states],
        "init": sorted(pb.init),
        "accepting": sorted(pb.accepting),
        "transitions": [[t.src, t.dst, t.weight] for t in pb.trans],
    }, os.path.join(out_dir, "product.json"))
    jsonio.dump_path({
        "states": [[s.pb, s.loc, [list(z) for z in s.z], s.flag]
                   for s in gb.states],
        "init": sorted(gb.init),
        "accepting": sorted(gb.accepting),
        "transitions": [[t.src, t.dst, t.weight] for t in gb.trans],
    }, os.path.join(out_dir, "global.json"))


def _horizon(sc: Scenario, gb: GlobalBWTS) -> float:
    bounds = [mitl.max_bound(s.formula)
              for s in sc.local_specs + [sc.global_spec] if s.formula]
    if bounds and max(bounds) > 0:
        return 2.0 * max(bounds)
    consts = [k for inv in gb.invariants for _, _, _, k in inv]
    consts += [k for t in gb.trans for _, _, _, k in t.guards]
    return 2.0 * max(consts, default=1.0)


def stage_search(sc: Scenario, pb: ProductBWTS, gb: GlobalBWTS,
                 use_oracle: bool = False):
    run = find_accepting_run(gb)
    stats = {
        "prefix_cost": run.times[run.lasso_start],
        "cycle_time": run.total_time - run.times[run.lasso_start],
        "run_states": len(run.states),
        "replay_ok": replay_run(gb, run),
        "oracle": None,
    }
    if use_oracle:
        if gb.size > ORACLE_SIZE_LIMIT:
            stats["oracle"] = {"status": "skipped",
                               "reason": f"instance has {gb.size} states "
                                         f"(> {ORACLE_SIZE_LIMIT})"}
        else:
            try:
                oracle = oracle_search(gb)
            except DepthExceeded as exc:
                stats["oracle"] = {"status": "depth-exceeded", "reason": str(exc)}
            else:
                agree = oracle is not None
                stats["oracle"] = {"status": "agreed" if agree else "DISAGREED",
                                   "found": agree}
    plan = project(run, gb, pb, horizon=_horizon(sc, gb))
    return run, plan, stats


def write_plan(plan: Plan, report, stats, out_dir: str):
    run = plan.collective
    doc = {
        "schema": 1,
        "collective": {"states": list(run.states), "times": list(run.times),
                       "lasso_start": run.lasso_start,
                       "trans": list(run.trans)},
        "times": list(plan.times),
        "horizon": plan.horizon,
        "agents": [
            {"id": ap.agent_id, "cells": list(ap.cells),
             "sigmas": list(ap.sigmas), "departures": list(ap.departures),
             "worst_arrivals": list(ap.worst_arrivals)}
            for ap in plan.agents],
        "verification": report,
        "search": stats,
    }
    jsonio.dump_path(doc, os.path.join(out_dir, "plan.json"))


def stage_simulate(sc: Scenario, plan: Plan, part, wts_list, out_dir: str,
                   plot: bool = False) -> Trajectory:
    traj = simulate(plan, sc.agents, part, wts_list, h=sc.h, margin=sc.margin)
    for trace in traj.agents:
        write_trajectory_csv(trace, part.dim,
                             os.path.join(out_dir, f"trajectory_{trace.agent_id}.csv"))
    write_crossings_csv(traj, os.path.join(out_dir, "crossings.csv"))
    if plot and part.dim == 2:
        with open(os.path.join(out_dir, "paths.svg"), "w", encoding="utf-8") as fh:
            fh.write(render_svg(part, traj))
    logger.info("simulated %d crossings, max actual-bound excess %.3g",
                len(traj.crossings), traj.max_excess())
    return traj


def stage_verify(sc: Scenario, plan: Plan, wts_list):
    labels = [[w.labels[i] for i in range(w.size)] for w in wts_list]
    return verify_plan(plan, labels,
                       [s.formula for s in sc.local_specs],
                       sc.global_spec.formula)


# --- report -----------------------------------------------------------------

def build_report(out_dir: str) -> str:
    with open(_artifact(out_dir, "sizes.json")) as fh:
        sizes = json.load(fh)
    with open(_artifact(out_dir, "plan.json")) as fh:
        plan = json.load(fh)
    crossings = []
    with open(_artifact(out_dir, "crossings.csv")) as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            crossings.append(dict(zip(header, line.strip().split(","))))

    lines = ["== mitlsynth report ==", ""]
    lines.append("[state counts]")
    constructed = 1
    for a in sizes["agents"]:
        lines.append(
            f"  agent {a['id']}: WTS {a['wts_states']} states / "
            f"{a['wts_transitions']} transitions; automaton "
            f"{a['tba_locations']} locations / {a['tba_clocks']} clocks; "
            f"local product {a['local_states']} states")
        constructed *= a["wts_states"] * a["tba_locations"]
    lines.append(f"  agent product: {sizes['product_states']} states")
    lines.append(f"  global product: {sizes['global_states']} states "
                 f"({sizes['global_transitions']} transitions)")
    lines.append(f"  worst-case bound: {sizes['state_bound']}")
    ok = sizes["global_states"] <= sizes["state_bound"]
    lines.append(f"  constructed <= bound: {'yes' if ok else 'NO'}")
    lines.append("")

    lines.append("[search]")
    st = plan["search"]
    lines.append(f"  prefix cost: {st['prefix_cost']:.6g}")
    lines.append(f"  cycle time: {st['cycle_time']:.6g}")
    lines.append(f"  lasso length: {st['run_states']} states")
    lines.append(f"  exact clock replay: "
                 f"{'ok' if st['replay_ok'] else 'FAILED'}")
    if st.get("oracle"):
        o = st["oracle"]
        if o["status"] == "skipped":
            lines.append(f"  oracle: skipped ({o['reason']})")
        elif o["status"] == "agreed":
            lines.append("  oracle: agreed (exhaustive search also finds a run)")
        else:
            lines.append(f"  oracle: {o['status']} "
                         "(possible search false negative, see plan.json)")
    lines.append("")

    lines.append("[crossings]  worst-case bound vs simulated actual")
    lines.append("  agent step src->dst      bound     actual     slack")
    worst = float("-inf")
    for c in crossings:
        bound, actual = float(c["bound"]), float(c["actual"])
        worst = max(worst, actual - bound)
        lines.append(
            f"  {c['agent']:>5} {c['step']:>4} {c['src']:>3}->{c['dst']:<3} "
            f"{bound:>10.6f} {actual:>10.6f} {bound - actual:>9.6f}")
    if crossings:
        lines.append(f"  max actual-bound excess: {worst:.3g} "
                     f"({'sound' if worst <= 1e-6 else 'VIOLATED'})")
    else:
        lines.append("  (no facet crossings: plan holds every agent in place)")
    lines.append("")

    lines.append("[formulas]")
    for entry in plan["verification"]:
        if entry["holds"] is None:
            verdict = f"skipped ({entry.get('note', 'no formula')})"
        else:
            verdict = "PASS" if entry["holds"] else "FAIL"
        lines.append(f"  {entry['scope']}: {entry['formula']}: {verdict}")
    ok_all = all(e["holds"] is not False for e in plan["verification"])
    lines.append("")
    lines.append(f"overall: {'PASS' if ok_all else 'FAIL'}")
    return "\n".join(lines) + "\n"


# --- commands ---------------------------------------------------------------

def _load(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if args.eps is not None:
        sc.eps = args.eps
    if args.step is not None:
        sc.h = args.step
    if args.margin is not None:
        sc.margin = args.margin
    os.makedirs(args.out, exist_ok=True)
    return sc


def cmd_abstract(args) -> int:
    sc = _load(args)
    stage_abstract(sc, args.out)
    return 0


def cmd_plan(args, with_simulation: bool = False) -> int:
    sc = _load(args)
    part, wts_list = stage_abstract(sc, args.out)
    _, _, _, pb, gb, _ = stage_products(sc, wts_list, args.out,
                                        seed=args.seed,
                                        dump=args.dump_products)
    run, plan, stats = stage_search(sc, pb, gb, use_oracle=args.oracle)
    report = stage_verify(sc, plan, wts_list)
    write_plan(plan, report, stats, args.out)
    if with_simulation:
        stage_simulate(sc, plan, part, wts_list, args.out, plot=args.plot)
    for entry in report:
        logger.info("%s: %s", entry["scope"],
                    {True: "pass", False: "FAIL", None: "skipped"}[entry["holds"]])
    if with_simulation:
        with open(os.path.join(args.out, "report.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(build_report(args.out))
    return 0 if all_pass(report) else 1


def cmd_simulate(args) -> int:
    sc = _load(args)
    part = sc.build_partition()
    plan = load_plan_json(_artifact(args.out, "plan.json"))
    wts_list = [load_wts_json(_artifact(args.out, f"wts_{a.id}.json"))
                for a in sc.agents]
    stage_simulate(sc, plan, part, wts_list, args.out, plot=args.plot)
    return 0


def cmd_check(args) -> int:
    sc = _load(args)
    plan = load_plan_json(_artifact(args.out, "plan.json"))
    wts_list = [load_wts_json(_artifact(args.out, f"wts_{a.id}.json"))
                for a in sc.agents]
    report = stage_verify(sc, plan, wts_list)
    for entry in report:
        verdict = {True: "PASS", False: "FAIL", None: "skipped"}[entry["holds"]]
        print(f"{entry['scope']}: {entry['formula']}: {verdict}")
    return 0 if all_pass(report) else 1


def cmd_report(args) -> int:
    text = build_report(args.out)
    sys.stdout.write(text)
    return 0


def cmd_all(args) -> int:
    return cmd_plan(args, with_simulation=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mitlsynth",
        description="Synthesize and validate timed multi-agent plans")
    parser.add_argument("command",
                        choices=["abstract", "plan", "simulate", "check",
                                 "report", "all"])
    parser.add_argument("--scenario", required=False,
                        help="scenario JSON file")
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("--eps", type=float, default=None,
                        help="controller robustness margin override")
    parser.add_argument("--step", type=float, default=None,
                        help="integration step override")
    parser.add_argument("--margin", type=float, default=None,
                        help="controller switch depth override (cell fraction)")
    parser.add_argument("--oracle", action="store_true",
                        help="cross-check the search with the exhaustive oracle")
    parser.add_argument("--dump-products", action="store_true")
    parser.add_argument("--plot", action="store_true",
                        help="write an SVG of the simulated paths")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized validation harnesses")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.command != "report" and not args.scenario:
        parser.error(f"{args.command} requires --scenario")

    handlers = {"abstract": cmd_abstract,
                "plan": cmd_plan,
                "simulate": cmd_simulate,
                "check": cmd_check,
                "report": cmd_report,
                "all": cmd_all}
    try:
        return handlers[args.command](args)
    except NoAcceptingRun as exc:
        logger.error("no accepting run: %s", exc)
        return 3
    except (SchemaError, MissingArtifact) as exc:
        logger.error("%s", exc)
        return 2
    except json.JSONDecodeError as exc:
        logger.error("malformed JSON: %s", exc)
        return 2
    except OSError as exc:
        logger.error("%s", exc)
        return 2
    except PipelineError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
