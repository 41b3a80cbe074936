"""Experiment runner: config-driven simulations, sweeps, CSV/JSON outputs.

Configs are single JSON documents with row-major numeric matrices. Every
section is validated strictly (unknown keys are rejected) before anything
runs. Exit codes: 0 success, 2 config error, 3 assumption violation
(disconnected graph, non-stabilizable model, ...), 4 runtime failure
(Zeno guard, non-finite states).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import analysis
from .engine import DisturbanceSpec, SimConfig, Trajectory, simulate
from .errors import AssumptionError, ConfigError, EtconsError, SimulationError
from .graph import Graph, build_graph, generate_graph
from .linalg import GainSet, SystemModel, design_gains
from .protocols import ProtocolParams

ENV_OUT_DIR = "ETCONS_OUT_DIR"
EMIT_CHOICES = ("trajectory", "events", "weights", "summary")


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _check_keys(section: dict, allowed: set[str], required: set[str], where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _parse_graph(spec: dict, where: str = "graph") -> Graph:
    _check_keys(spec, {"n", "edges", "generator", "leader"}, {"n"}, where)
    leader = spec.get("leader")
    if "generator" in spec:
        if "edges" in spec:
            raise ConfigError(f"{where}: give either a generator or an edge list, not both")
        return generate_graph(spec["generator"], int(spec["n"]), leader=leader)
    if "edges" not in spec:
        raise ConfigError(f"{where}: needs an edge list or a generator name")
    return build_graph(int(spec["n"]), spec["edges"], leader=leader)


def _parse_edge_map(value, where: str):
    """Scalar, or {'i-j': value} mapping keyed by node pairs."""
    if isinstance(value, dict):
        out = {}
        for key, v in value.items():
            parts = str(key).split("-")
            if len(parts) != 2:
                raise ConfigError(f"{where}: bad edge key {key!r}, expected 'i-j'")
            try:
                out[(int(parts[0]), int(parts[1]))] = float(v)
            except ValueError:
                raise ConfigError(f"{where}: bad edge entry {key!r}: {v!r}") from None
        return out
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number or an edge map, got {value!r}") from None


def _parse_states(spec, n_agents: int, n: int, rng, where: str) -> np.ndarray:
    _check_keys(spec, {"values", "random"}, set(), where)
    if ("values" in spec) == ("random" in spec):
        raise ConfigError(f"{where}: give exactly one of 'values' or 'random'")
    if "values" in spec:
        arr = np.asarray(spec["values"], dtype=float)
        if arr.shape != (n_agents, n):
            raise ConfigError(
                f"{where}: values have shape {arr.shape}, expected ({n_agents}, {n})"
            )
        return arr
    rand = spec["random"]
    _check_keys(rand, {"low", "high"}, {"low", "high"}, f"{where}.random")
    low, high = float(rand["low"]), float(rand["high"])
    if not (low < high):
        raise ConfigError(f"{where}.random: low must be below high")
    return rng.uniform(low, high, size=(n_agents, n))


class RunSetup:
    """Validated experiment: everything ``simulate`` needs plus outputs."""

    def __init__(self, cfg: dict):
        _check_keys(cfg, {"model", "graph", "protocol", "sim", "initial_states",
                          "initial_observer_states", "outputs"},
                    {"model", "graph", "protocol", "sim", "initial_states"}, "config")

        mspec = cfg["model"]
        _check_keys(mspec, {"A", "B", "C"}, {"A", "B"}, "model")
        self.model = SystemModel(A=np.asarray(mspec["A"], dtype=float),
                                 B=np.asarray(mspec["B"], dtype=float),
                                 C=None if "C" not in mspec
                                 else np.asarray(mspec["C"], dtype=float))

        self.graph = _parse_graph(cfg["graph"])

        pspec = cfg["protocol"]
        _check_keys(pspec, {"variant", "delta", "mu", "nu", "kappa", "varrho", "c0"},
                    {"delta", "mu", "nu"}, "protocol")
        self.variant = pspec.get("variant", "state")
        if self.variant not in ("state", "observer", "leader_follower"):
            raise ConfigError(f"protocol.variant: unknown variant {self.variant!r}")
        self.params = ProtocolParams(
            delta=float(pspec["delta"]), mu=float(pspec["mu"]), nu=float(pspec["nu"]),
            kappa=_parse_edge_map(pspec.get("kappa", 0.2), "protocol.kappa"),
            varrho=_parse_edge_map(pspec.get("varrho", 0.0), "protocol.varrho"),
            c0=_parse_edge_map(pspec.get("c0", 0.0), "protocol.c0"),
        )

        sspec = cfg["sim"]
        _check_keys(sspec, {"t_end", "dt", "event_tol", "solver", "seed", "disturbance",
                            "topology_schedule", "dwell_min", "max_events_per_unit_time",
                            "rtol", "atol"},
                    {"t_end", "dt"}, "sim")
        disturbance = None
        if "disturbance" in sspec:
            dspec = sspec["disturbance"]
            _check_keys(dspec, {"kind", "amplitude", "frequency", "seed"},
                        {"kind", "amplitude"}, "sim.disturbance")
            disturbance = DisturbanceSpec(
                kind=dspec["kind"], amplitude=float(dspec["amplitude"]),
                frequency=float(dspec.get("frequency", 1.0)),
                seed=dspec.get("seed"),
            )
        schedule = []
        for i, entry in enumerate(sspec.get("topology_schedule", [])):
            _check_keys(entry, {"t", "graph"}, {"t", "graph"},
                        f"sim.topology_schedule[{i}]")
            schedule.append((float(entry["t"]),
                             _parse_graph(entry["graph"], f"sim.topology_schedule[{i}].graph")))
        kwargs = {}
        for key in ("event_tol", "solver", "dwell_min", "max_events_per_unit_time",
                    "rtol", "atol"):
            if key in sspec:
                kwargs[key] = sspec[key]
        self.sim = SimConfig(
            t_end=float(sspec["t_end"]), dt=float(sspec["dt"]),
            seed=sspec.get("seed"), disturbance=disturbance,
            topology_schedule=tuple(schedule), **kwargs,
        )

        rng = np.random.default_rng(self.sim.seed)
        self.x0 = _parse_states(cfg["initial_states"], self.graph.n_nodes,
                                self.model.n, rng, "initial_states")
        self.chi0 = None
        if "initial_observer_states" in cfg:
            if self.variant != "observer":
                raise ConfigError("initial_observer_states only applies to the observer variant")
            self.chi0 = _parse_states(cfg["initial_observer_states"], self.graph.n_nodes,
                                      self.model.n, rng, "initial_observer_states")

        ospec = cfg.get("outputs", {})
        _check_keys(ospec, {"directory", "emit"}, set(), "outputs")
        self.out_dir = ospec.get("directory")
        emit = ospec.get("emit", list(EMIT_CHOICES))
        bad = set(emit) - set(EMIT_CHOICES)
        if bad:
            raise ConfigError(f"outputs.emit: unknown entries {sorted(bad)}")
        self.emit = tuple(emit)

    def design(self) -> GainSet:
        return design_gains(self.model, observer=self.variant == "observer")

    def run(self) -> tuple[Trajectory, GainSet]:
        gains = self.design()
        traj = simulate(self.model, self.graph, gains, self.params, self.sim,
                        self.x0, variant=self.variant, chi0=self.chi0)
        return traj, gains


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None


# -- output writers -----------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path: str):
    n = traj.model.n
    cols = ["t", "agent"] + [f"x{i}" for i in range(n)]
    if traj.observer_states is not None:
        cols += [f"chi{i}" for i in range(n)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row, t in enumerate(traj.times):
            for agent in range(traj.states.shape[1]):
                parts = [_fmt(t), str(agent)]
                parts += [_fmt(v) for v in traj.states[row, agent]]
                if traj.observer_states is not None:
                    parts += [_fmt(v) for v in traj.observer_states[row, agent]]
                fh.write(",".join(parts) + "\n")


def write_events_csv(traj: Trajectory, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("agent,t,f_before\n")
        for rec in traj.events:
            fh.write(f"{rec.agent},{_fmt(rec.time)},{_fmt(rec.trigger_value_before)}\n")


def write_weights_csv(traj: Trajectory, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,i,j,c\n")
        for seg in traj.weight_segments:
            for r in range(seg.values.shape[0]):
                t = traj.times[seg.first_index + r]
                for e, (i, j) in enumerate(seg.graph.edges):
                    fh.write(f"{_fmt(t)},{i},{j},{_fmt(seg.values[r, e])}\n")


def _gains_dict(gains: GainSet) -> dict:
    out = {"P": gains.P.tolist(), "K": gains.K.tolist(), "Gamma": gains.Gamma.tolist()}
    if gains.F is not None:
        out["F"] = gains.F.tolist()
    return out


def build_summary(traj: Trajectory, gains: GainSet) -> dict:
    stats = analysis.event_stats(traj)
    zeno = analysis.zeno_report(traj)
    if traj.variant == "leader_follower":
        bound_info = {"available": False,
                      "reason": "ultimate-bound constants are defined for leaderless runs"}
    else:
        tc = analysis.theorem1_bound(traj.graph, traj.params, gains.P)
        if tc.available:
            bound_info = {"available": True, "alpha": tc.alpha, "theta2": tc.theta2,
                          "varsigma": tc.varsigma, "rho": tc.rho, "bound": tc.bound}
        else:
            bound_info = {"available": False, "reason": tc.reason}
    trigger_residuals = [r.trigger_value_before for r in traj.events
                         if r.kind == "trigger"]
    return {
        "variant": traj.variant,
        "n_agents": traj.graph.n_nodes,
        "gains": _gains_dict(gains),
        "params": {
            "delta": traj.params.delta, "mu": traj.params.mu, "nu": traj.params.nu,
        },
        "event_counts": {
            "per_agent": {str(k): v for k, v in stats.per_agent_counts.items()},
            "total": stats.total,
            "triggers": sum(1 for r in traj.events if r.kind == "trigger"),
        },
        "min_inter_event_interval": stats.global_min_interval,
        "final_consensus_error_norm": analysis.final_error_norm(traj),
        "theorem1_bound": bound_info,
        "zeno": {
            "verdict": "ok" if zeno.verdict else "violated",
            "checked_intervals": len(zeno.checks),
            "min_interval": zeno.min_interval,
            "min_margin": zeno.min_margin,
            "guard_fired": False,
        },
        "localization": {
            "dt": traj.sim.dt,
            "event_tol": traj.sim.event_tol,
            "max_trigger_residual": max(trigger_residuals, default=None),
        },
    }


def write_outputs(traj: Trajectory, gains: GainSet, out_dir: str, emit=EMIT_CHOICES) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    summary = build_summary(traj, gains)
    if "trajectory" in emit:
        write_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    if "events" in emit:
        write_events_csv(traj, os.path.join(out_dir, "events.csv"))
    if "weights" in emit:
        write_weights_csv(traj, os.path.join(out_dir, "weights.csv"))
    if "summary" in emit:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary


def _resolve_out_dir(cli_out: str | None, setup_out: str | None) -> str:
    return cli_out or setup_out or os.environ.get(ENV_OUT_DIR) or "out"


# -- commands -----------------------------------------------------------


def cmd_run(args) -> int:
    setup = RunSetup(load_config(args.config))
    traj, gains = setup.run()
    out_dir = _resolve_out_dir(args.out, setup.out_dir)
    summary = write_outputs(traj, gains, out_dir, setup.emit)
    print(f"run complete: {summary['event_counts']['total']} broadcasts, "
          f"final error {summary['final_consensus_error_norm']:.6g}, "
          f"outputs in {out_dir}")
    return 0


def _print_matrix(name: str, m: np.ndarray):
    print(f"{name} =")
    for row in np.atleast_2d(m):
        print("  [" + ", ".join(f"{v: .4f}" for v in row) + "]")


def cmd_gains(args) -> int:
    setup = RunSetup(load_config(args.config))
    gains = setup.design()
    _print_matrix("P", gains.P)
    _print_matrix("K", gains.K)
    _print_matrix("Gamma", gains.Gamma)
    if gains.F is not None:
        _print_matrix("F", gains.F)
    return 0


def _parse_sweep_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_override(cfg: dict, param: str, value):
    if param == "graph":
        if not isinstance(value, str):
            raise ConfigError(f"graph sweep values must be generator names, got {value!r}")
        old = cfg["graph"]
        cfg["graph"] = {"generator": value, "n": old["n"]}
        if "leader" in old:
            cfg["graph"]["leader"] = old["leader"]
        return
    node = cfg
    parts = param.split(".")
    for key in parts[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"sweep parameter {param!r} does not address a config entry")
        node = node[key]
    if parts[-1] not in node:
        raise ConfigError(f"sweep parameter {param!r} does not address a config entry")
    node[parts[-1]] = value


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = [v for v in args.values.split(",") if v != ""]
    if not values:
        raise ConfigError("sweep needs a non-empty list of values")
    out_root = _resolve_out_dir(args.out, base.get("outputs", {}).get("directory"))
    rows = []
    for raw in values:
        value = _parse_sweep_value(raw)
        cfg = copy.deepcopy(base)
        _apply_override(cfg, args.param, value)
        setup = RunSetup(cfg)
        traj, gains = setup.run()
        run_dir = os.path.join(out_root, f"{args.param.replace('.', '_')}={raw}")
        summary = write_outputs(traj, gains, run_dir, setup.emit)
        rows.append({
            "value": value,
            "directory": run_dir,
            "total_events": summary["event_counts"]["total"],
            "min_inter_event_interval": summary["min_inter_event_interval"],
            "final_consensus_error_norm": summary["final_consensus_error_norm"],
            "zeno_verdict": summary["zeno"]["verdict"],
        })
        print(f"{args.param}={raw}: {rows[-1]['total_events']} broadcasts, "
              f"final error {rows[-1]['final_consensus_error_norm']:.6g}")
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "sweep_summary.json"), "w", encoding="utf-8") as fh:
        json.dump({"param": args.param, "runs": rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etcons",
        description="Adaptive event-triggered consensus simulations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.set_defaults(func=cmd_run)
    p_gains = sub.add_parser("gains", help="print the designed gain matrices")
    p_gains.add_argument("config")
    p_gains.set_defaults(func=cmd_gains)
    p_sweep = sub.add_parser("sweep", help="run one experiment per parameter value")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--param", required=True,
                         help="dotted config path (e.g. protocol.mu) or 'graph'")
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--out", default=None, help="output directory root")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return 3
    except SimulationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 4
    except EtconsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
