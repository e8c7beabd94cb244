"""Command-line experiment runner.

    corrsel {select,select-weak,schedule,track,verify} --config CFG [--seed N] [--out PATH]

The config is a single JSON document validated against :data:`CONFIG_SCHEMA`
(unknown keys are rejected). Its ``kind`` must match the subcommand. Sweep
results are CSV (UTF-8, LF, ``.`` decimal separator) whose first lines are
``#`` comments carrying the schema version, the resolved seed and the
resolved config, so every file can be regenerated from its own header.
Exit codes: 0 success, 1 acceptance failure, 2 invalid config or guard.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from corrsel import acceptance
from corrsel.errors import ConfigError, CorrselError
from corrsel.greedy import greedy_select
from corrsel.model import (
    MeasurementModel,
    decompose_covariance,
    exp_covariance,
    fisher_truncated,
    objective_trace_inverse,
    random_model,
    selection_from_indices,
)
from corrsel.oracle import SCHEDULE_LIMIT, SEARCH_LIMIT, exhaustive_schedule, exhaustive_search, subset_count
from corrsel.relaxation import build_sdp_general, build_sdp_weak, randomize_round, solve_sdp, top_s_round
from corrsel.schedule import (
    DynamicalSystem,
    Schedule,
    fim_recursion,
    greedy_schedule,
    random_schedule,
    schedule_objective,
)
from corrsel.tracksim import (
    TrackConfig,
    Wna4State,
    empirical_mse,
    monte_carlo_mse,
    power_jacobian,
    power_measure,
    tracking_geometry,
)
from corrsel.weakcorr import bilinear_solve, build_trace_max

SCHEMA_VERSION = 1
KINDS = ("select", "select-weak", "schedule", "track", "verify")
METHODS = {
    "select": ("greedy", "sdr-rand", "sdr-norand", "exhaustive", "random"),
    "select-weak": ("sdr-weak-rand", "bilinear", "greedy", "sdr-rand", "exhaustive", "random"),
    "schedule": ("greedy", "random", "exhaustive"),
    "track": ("greedy", "random", "all-on"),
}
DEFAULT_METHODS = {
    "select": ["greedy", "sdr-rand", "sdr-norand", "random"],
    "select-weak": ["sdr-weak-rand", "bilinear", "greedy", "random"],
    "schedule": ["greedy", "random"],
    "track": ["greedy", "random"],
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "kind": {"enum": list(KINDS)},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "model": _obj({
        "m": _count,
        "n": _count,
        "side": _pos,
        "lattice": {"type": "boolean"},
        "corr_param": _pos,
        "noise_var": _pos,
        "prior_mean": {"type": "array", "items": _num, "minItems": 1},
        "prior_var": _pos,
    }),
    "solver": _obj({
        "name": {"enum": ["CLARABEL", "SCS", "CVXOPT"]},
        "tol": _pos,
        "samples": _count,
        "restarts": _count,
    }),
    "budgets": _obj({
        "s": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "sensor_budgets": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "tau": _count,
    }),
    "methods": {"type": "array", "items": {"type": "string"}, "minItems": 1, "uniqueItems": True},
    "trials": _count,
    "timing": {"type": "boolean"},
    "tracking": _obj({
        "steps": _count,
        "dt": _pos,
        "q": {"type": "number", "minimum": 0},
        "power": _pos,
        "initial_mean": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        "initial_cov": {"type": "array", "items": _pos, "minItems": 4, "maxItems": 4},
    }),
    "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 10},
                 "minItems": 1, "uniqueItems": True},
}, required=["kind"])

_MODEL_DEFAULTS = {
    "select": {"m": 20, "n": 2, "side": 50.0, "lattice": True, "corr_param": 0.1, "noise_var": 1.0, "prior_var": 1.0},
    "select-weak": {"m": 20, "n": 2, "side": 50.0, "lattice": True, "corr_param": 0.5, "noise_var": 1.0,
                    "prior_var": 1.0},
    "schedule": {"m": 30, "side": 50.0, "lattice": False, "corr_param": 0.035, "noise_var": 1.0},
    "track": {"m": 30, "side": 50.0, "lattice": False, "corr_param": 0.035, "noise_var": 1.0},
}
_TRACKING_DEFAULTS = {"steps": 30, "dt": 1.0, "q": 0.01, "power": 1e4,
                      "initial_mean": [1.0, 1.0, 0.5, 0.5], "initial_cov": [1.0, 1.0, 0.1, 0.1]}


def load_config(path, kind: str, seed: int | None = None) -> dict:
    """Parse, validate and fill defaults. Raises :class:`ConfigError`."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    if raw["kind"] != kind:
        raise ConfigError(f"config kind {raw['kind']!r} does not match subcommand {kind!r}")
    return resolve_config(raw, seed)


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    cfg = copy.deepcopy(raw)
    kind = cfg["kind"]
    if seed is not None:
        cfg["seed"] = seed
    if kind == "verify":
        cfg.setdefault("seed", acceptance.SEED)
        cfg.setdefault("criteria", sorted(acceptance.CRITERIA))
        return cfg
    cfg.setdefault("seed", 0)
    cfg["model"] = {**_MODEL_DEFAULTS[kind], **cfg.get("model", {})}
    cfg.setdefault("methods", list(DEFAULT_METHODS[kind]))
    cfg.setdefault("timing", False)
    bad = [m for m in cfg["methods"] if m not in METHODS[kind]]
    if bad:
        raise ConfigError(f"unknown methods {bad} for {kind}; choose from {list(METHODS[kind])}")
    m = cfg["model"]["m"]
    budgets = cfg.setdefault("budgets", {})
    if kind in ("select", "select-weak"):
        n = cfg["model"]["n"]
        cfg["model"].setdefault("prior_mean", [10.0] * n)
        if len(cfg["model"]["prior_mean"]) != n:
            raise ConfigError("model.prior_mean must have n entries")
        solver = {"name": "CLARABEL", "tol": 1e-6, "samples": 100, "restarts": 10}
        cfg["solver"] = {**solver, **cfg.get("solver", {})}
        budgets.setdefault("s", list(range(2, m + 1)))
        if max(budgets["s"]) > m:
            raise ConfigError(f"budget s = {max(budgets['s'])} exceeds m = {m}")
        cfg.setdefault("trials", 1000)
        if "exhaustive" in cfg["methods"]:
            count = subset_count(m, max(budgets["s"]))
            if count > SEARCH_LIMIT:
                raise ConfigError(f"exhaustive search over {count} subsets (m = {m}) exceeds the guard "
                                  f"limit {SEARCH_LIMIT}; drop 'exhaustive' or reduce m")
    else:
        cfg["tracking"] = {**_TRACKING_DEFAULTS, **cfg.get("tracking", {})}
        budgets.setdefault("tau", 6)
        budgets.setdefault("sensor_budgets", [1, 2, 3])
        if kind == "track":
            cfg.setdefault("trials", 100)
        if kind == "schedule" and "exhaustive" in cfg["methods"] and 2 ** (m * budgets["tau"]) > SCHEDULE_LIMIT:
            raise ConfigError(f"exhaustive scheduling over 2^{m * budgets['tau']} schedules exceeds the "
                              f"guard limit {SCHEDULE_LIMIT}; drop 'exhaustive' or reduce m or tau")
    return cfg


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def _header(cfg: dict) -> list[str]:
    return [f"# corrsel {cfg['kind']} schema={SCHEMA_VERSION}", f"# seed={cfg['seed']}",
            "# config=" + json.dumps(cfg, sort_keys=True, separators=(",", ":"))]


def _csv_text(cfg: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write("\n".join(_header(cfg)) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def _selection_model(cfg: dict, seq: np.random.SeedSequence) -> MeasurementModel:
    mc = cfg["model"]
    model, _ = random_model(mc["m"], mc["n"], np.random.default_rng(seq), corr_param=mc["corr_param"],
                            noise_var=mc["noise_var"], side=mc["side"], lattice=mc["lattice"],
                            prior_mean=np.asarray(mc["prior_mean"], dtype=float),
                            prior_cov=mc["prior_var"] * np.eye(mc["n"]))
    return model


def run_select(cfg: dict) -> str:
    """Budget sweep for static selection (both ``select`` and ``select-weak``)."""
    weak = cfg["kind"] == "select-weak"
    solver = cfg["solver"]
    budgets = cfg["budgets"]["s"]
    geo_seq, *point_seqs = np.random.SeedSequence(cfg["seed"]).spawn(len(budgets) + 1)
    model = _selection_model(cfg, geo_seq)
    decomp = decompose_covariance(model.noise_cov)
    rows = []
    for s, seq in zip(budgets, point_seqs):
        round_seed, mse_seed, rand_seed, bp_seed = (_int_seed(c) for c in seq.spawn(4))
        cache = {}

        def general_sdp():
            if "general" not in cache:
                cache["general"] = solve_sdp(build_sdp_general(model, decomp, s), solver["tol"], solver["name"])
            return cache["general"]

        for method in cfg["methods"]:
            t0 = time.perf_counter()
            if method == "greedy":
                w = greedy_select(model, s).w
            elif method == "sdr-rand":
                w = randomize_round(general_sdp(), model, decomp, s, N=solver["samples"], seed=round_seed).w_boolean
            elif method == "sdr-norand":
                w = top_s_round(general_sdp(), s)
            elif method == "sdr-weak-rand":
                sol = solve_sdp(build_sdp_weak(model, s), solver["tol"], solver["name"])
                w = randomize_round(sol, model, None, s, N=solver["samples"], seed=round_seed,
                                    objective="weak").w_boolean
            elif method == "bilinear":
                w = bilinear_solve(build_trace_max(model, s), starts=solver["restarts"], seed=bp_seed)[0]
            elif method == "exhaustive":
                w = exhaustive_search(model, s).best_w
            else:  # random
                rng = np.random.default_rng(rand_seed)
                w = selection_from_indices(rng.choice(model.m, size=s, replace=False), model.m)
            wall = time.perf_counter() - t0
            obj = objective_trace_inverse(fisher_truncated(model, w))
            mse = empirical_mse(model, w, trials=cfg["trials"], seed=mse_seed)
            rows.append([method, s, _fmt(obj), _fmt(mse), f"{wall:.6f}" if cfg["timing"] else ""])
    return _csv_text(cfg, ["method", "s", "objective", "empirical_mse", "wall_time"], rows)


def _track_config(cfg: dict, sensor_budget: int) -> TrackConfig:
    mc, tc = cfg["model"], cfg["tracking"]
    return TrackConfig(m=mc["m"], side=mc["side"], lattice=mc["lattice"], corr_param=mc["corr_param"],
                       noise_var=mc["noise_var"], dt=tc["dt"], q=tc["q"], power=tc["power"],
                       initial_mean=tuple(tc["initial_mean"]), initial_cov=tuple(tc["initial_cov"]),
                       tau=cfg["budgets"]["tau"], steps=tc["steps"], sensor_budget=sensor_budget)


def _w_string(w: np.ndarray) -> str:
    return "|".join("".join(str(int(v)) for v in row) for row in w)


def run_schedule(cfg: dict) -> str:
    """One scheduling window from the prior, swept over individual budgets."""
    tau = cfg["budgets"]["tau"]
    geo_seq, rand_seq = np.random.SeedSequence(cfg["seed"]).spawn(2)
    base = _track_config(cfg, 1)
    geom = tracking_geometry(base, geo_seq)
    wna = Wna4State(base.dt, base.q)
    pos, power = geom.positions, base.power
    sys_ = DynamicalSystem(wna.F, wna.Q, exp_covariance(geom), np.asarray(base.initial_mean),
                           np.diag(base.initial_cov), jacobian=lambda x: power_jacobian(pos, power, x),
                           measure=lambda x: power_measure(pos, power, x))
    rows = []
    for s_i, seq in zip(cfg["budgets"]["sensor_budgets"], rand_seq.spawn(len(cfg["budgets"]["sensor_budgets"]))):
        s = s_i * sys_.m
        for method in cfg["methods"]:
            t0 = time.perf_counter()
            if method == "greedy":
                w = greedy_schedule(sys_, tau, s, s_i).w_matrix
            elif method == "random":
                w = random_schedule(sys_.m, tau, s, s_i, np.random.default_rng(seq)).w_matrix
            else:
                w = exhaustive_schedule(sys_, tau, s, s_i).best_w
            wall = time.perf_counter() - t0
            obj = schedule_objective(fim_recursion(sys_, Schedule(w)))
            rows.append([method, s_i, _fmt(obj), f"{wall:.6f}" if cfg["timing"] else "", _w_string(w)])
    return _csv_text(cfg, ["method", "s_i", "objective", "wall_time", "schedule"], rows)


def run_track(cfg: dict) -> tuple[str, dict]:
    """Per-step Monte Carlo MSE for each scheduler and individual budget.

    Returns the CSV text and a snapshot document with the sensor positions and,
    for the first trial, the active flags of every window.
    """
    rows, snaps, positions = [], [], None
    for s_i in cfg["budgets"]["sensor_budgets"]:
        tc = _track_config(cfg, s_i)
        for method in cfg["methods"]:
            t0 = time.perf_counter()
            res = monte_carlo_mse(tc, method, cfg["trials"], cfg["seed"], keep_first=True)
            wall = time.perf_counter() - t0
            positions = res.positions
            for k, val in enumerate(res.per_step_mse, start=1):
                rows.append([method, s_i, k, _fmt(val)])
            rows.append([method, s_i, "mean", _fmt(res.mean_mse)])
            run = res.first_run
            windows, start = [], 0
            for sched in run.schedules:
                windows.append({"start_step": start + 1,
                                "active": sched.w_matrix.tolist(),
                                "truth": run.truth[start + 1: start + 1 + sched.tau, :2].tolist(),
                                "estimate": run.estimates[start + 1: start + 1 + sched.tau, :2].tolist()})
                start += sched.tau
            snaps.append({"method": method, "s_i": s_i, "wall_time": wall if cfg["timing"] else None,
                          "windows": windows})
    doc = {"schema": SCHEMA_VERSION, "seed": cfg["seed"], "config": cfg,
           "positions": positions.tolist(), "runs": snaps}
    return _csv_text(cfg, ["method", "s_i", "step", "mse"], rows), doc


def run_verify(cfg: dict, echo=print) -> tuple[bool, dict]:
    results = acceptance.run_all(cfg["criteria"], seed=cfg["seed"], echo=echo)
    report = {
        "schema": SCHEMA_VERSION,
        "seed": cfg["seed"],
        "all_passed": all(r.passed for r in results),
        "criteria": [{"id": r.id, "title": r.title, "passed": r.passed, "seconds": r.seconds,
                      "measured": {k: (v if isinstance(v, (bool, str)) else float(v)) for k, v in r.measured.items()}}
                     for r in results],
    }
    return report["all_passed"], report


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corrsel", description="Sensor selection under correlated noise.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed (0 .. 2^64-1)")
        p.add_argument("--out", default=None, help="output path (default: stdout)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("corrsel: error: --seed must lie in [0, 2^64)", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, args.command, args.seed)
        if args.command in ("select", "select-weak"):
            _emit(run_select(cfg), args.out)
        elif args.command == "schedule":
            _emit(run_schedule(cfg), args.out)
        elif args.command == "track":
            text, doc = run_track(cfg)
            _emit(text, args.out)
            if args.out is not None:
                snap = Path(args.out).with_suffix(".snapshots.json")
                snap.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8", newline="\n")
        else:
            ok, report = run_verify(cfg)
            if args.out is not None:
                Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8", newline="\n")
            print(f"{sum(c['passed'] for c in report['criteria'])}/{len(report['criteria'])} criteria passed")
            return 0 if ok else 1
    except CorrselError as exc:
        print(f"corrsel: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
