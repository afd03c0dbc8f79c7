"""Scenario runner: load a JSON config, build the regime and nets, run the tasks, write reports.

Exit codes: 0 all tasks met their expectations, 1 some task did not, 2 the config is invalid.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import click
import numpy as np

from .basic_space import DomainError, ExprError, GFExpr, describe, evaluate, parse_expr, pushforward
from .calculus import CalculusError, Grid, Window, diffeo_from_spec
from .quotient import QuotientError, classify, default_config, equivalent
from .regularization import (RegularizationError, build_mollifier_net, make_regime, params_from_spec,
                             verify_fourier_bounds, verify_test_object)
from .scales import Poly, ScaleError, Ultra, check_admissible, pair_from_spec
from .sheaf import Cover, SheafError, sheaf_suite
from .weights import RSequence, WeightError

TASK_KINDS = ("classify", "equivalent", "identity", "fourier_bounds", "test_object", "scale_admissibility",
              "sheaf", "diffeo_invariance")
REGIMES = ("distribution", "beurling", "roumieu")
CLASSES = ("Negligible", "ModerateOnly", "NotModerate")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def builtin_names() -> list[str]:
    pkg = resources.files("colombeau") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> dict:
    path = resources.files("colombeau") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"no built-in scenario {name!r}")
    return json.loads(path.read_text())


def load_config(source: str) -> dict:
    """A path to a JSON document, or the name of a built-in scenario."""
    p = Path(source)
    if p.is_file():
        try:
            return json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc})") from exc
    if source in builtin_names():
        return load_builtin(source)
    raise ConfigError(f"{source}: neither a readable config file nor a built-in scenario")


def _eps_grid(block, eps_min: float | None) -> np.ndarray:
    if isinstance(block, list):
        eps = np.array(sorted((float(e) for e in block), reverse=True))
    else:
        hi = float(block.get("max", 0.25))
        lo = float(block.get("min", 2.0 ** -10))
        if not 0 < lo <= hi < 1:
            raise ConfigError("eps range must satisfy 0 < min <= max < 1")
        eps = 2.0 ** -np.arange(round(-math.log2(hi)), round(-math.log2(lo)) + 1)
    if eps_min is not None:
        hi = float(eps[0])
        eps = 2.0 ** -np.arange(round(-math.log2(hi)), round(-math.log2(eps_min)) + 1)
    if len(eps) < 4 or np.any(eps <= 0) or np.any(eps >= 1):
        raise ConfigError("the eps grid needs at least four values in (0, 1)")
    return eps


def _window(w, grid: Grid) -> Window:
    if not (isinstance(w, (list, tuple)) and len(w) == 2 and float(w[0]) < float(w[1])):
        raise ConfigError(f"windows are [lo, hi] pairs, got {w!r}")
    return Window.interval(float(w[0]), float(w[1]), grid.box[0])


def resolve(config: dict, seed: int | None = None, eps_min: float | None = None) -> dict:
    """Validate a scenario, parse every expression and fill in defaults."""
    if not isinstance(config, dict):
        raise ConfigError("a scenario is a JSON object")
    reg = config.get("regime", {})
    if isinstance(reg, str):
        reg = {"name": reg}
    name = reg.get("name", "distribution")
    if name not in REGIMES:
        raise ConfigError(f"unknown regime {name!r}")
    weight = reg.get("weight", "gevrey:2")
    dom = config.get("domain", {})
    try:
        box = tuple(float(v) for v in dom.get("box", (-4.0, 4.0)))
        grid = Grid((box,), int(dom.get("N", 2 ** 16)))
    except (CalculusError, TypeError, ValueError) as exc:
        raise ConfigError(f"domain: {exc}") from exc
    eps = _eps_grid(dom.get("eps", {}), eps_min)
    try:
        mspec = reg.get("mollifier", name if name == "distribution" else f"{name}:{weight}")
        params = params_from_spec(mspec)
    except (RegularizationError, WeightError) as exc:
        raise ConfigError(f"mollifier: {exc}") from exc
    if params.regime != name:
        raise ConfigError(f"mollifier regime {params.regime!r} does not match the regime {name!r}")
    tasks = config.get("tasks")
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("a scenario needs a nonempty task list")
    names = set()
    for t in tasks:
        if not isinstance(t, dict) or "name" not in t or "kind" not in t:
            raise ConfigError("each task is an object with 'name' and 'kind'")
        if t["kind"] not in TASK_KINDS:
            raise ConfigError(f"task {t['name']!r}: unknown kind {t['kind']!r}")
        if t["name"] in names:
            raise ConfigError(f"duplicate task name {t['name']!r}")
        names.add(t["name"])
        _parse_task_exprs(t, grid)
        exp = t.get("expect", {})
        if "class" in exp and exp["class"] not in CLASSES:
            raise ConfigError(f"task {t['name']!r}: unknown class {exp['class']!r}")
    return {"name": config.get("name", "scenario"), "anchor": config.get("anchor", ""),
            "regime": name, "weight": weight, "mollifier": params.describe(), "mollifier_spec": mspec,
            "box": list(box), "N": grid.n, "eps": eps.tolist(),
            "seed": int(config.get("seed", 0) if seed is None else seed), "tasks": tasks}


def _parse_task_exprs(t: dict, grid: Grid) -> dict:
    """Parse the expressions a task mentions; ExprError and DomainError become config errors."""
    keys = {"classify": ("expr",), "equivalent": ("a", "b"), "identity": ("lhs", "rhs"), "sheaf": ("expr",)}
    out = {}
    try:
        for k in keys.get(t["kind"], ()):
            if k not in t:
                raise ConfigError(f"task {t['name']!r}: missing field {k!r}")
            out[k] = parse_expr(t[k], grid)
        if t["kind"] == "diffeo_invariance":
            out["exprs"] = [parse_expr(e, grid) for e in t.get("exprs", [])]
            if not out["exprs"]:
                raise ConfigError(f"task {t['name']!r}: no expressions")
            out["mu"] = diffeo_from_spec(t.get("mu", "sine"))
        if t["kind"] == "scale_admissibility":
            out["pair"] = pair_from_spec(t.get("pair", "poly"))
    except (ExprError, DomainError, CalculusError, ScaleError, WeightError, KeyError) as exc:
        raise ConfigError(f"task {t['name']!r}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# tasks


def _slope_ok(value, target) -> bool:
    return value is not None and abs(value - float(target[0])) <= float(target[1])


def _fit_bound(row, pair) -> list[float | None]:
    """C g(eps) for the fitted growth generator, C the smallest constant covering the used cells."""
    p = row.growth.get("parameter")
    if p is None:
        return [None] * len(row.eps)
    eps = np.asarray(row.eps)
    if pair.mode == "poly":
        gen = Poly(int(p))
    elif pair.mode == "beurling":
        gen = Ultra(pair.weight, +1, lam=float(p))
    else:
        rs = next((r for r in pair.rfamily if r.label == p), None)
        if not isinstance(rs, RSequence):
            return [None] * len(row.eps)
        gen = Ultra(pair.weight, +1, rseq=rs)
    lg = np.asarray(gen.log_value(eps), dtype=float)
    vals = np.maximum(np.asarray(row.values), np.asarray(row.floors))
    logc = float(np.max(np.log(np.maximum(vals, 1e-300)) - lg))
    return np.exp(logc + lg).tolist()


def _classify_curves(task_name, verdict, pair):
    rows = [r for r in verdict.rows if r.l == 0]
    out = []
    for r in rows[:1]:
        for e, v, b in zip(r.eps, r.values, _fit_bound(r, pair)):
            out.append((task_name, e, v, b))
    return out


def _expect_class(verdict, exp: dict) -> tuple[bool, dict]:
    checks = {}
    if "class" in exp:
        checks["class"] = verdict.classification == exp["class"]
    if "slope" in exp:
        checks["slope"] = _slope_ok(verdict.slope, exp["slope"])
    ok = all(checks.values())
    return ok, checks


def _config_for(res: dict, task: dict):
    grid = Grid((tuple(res["box"]),), res["N"])
    windows = [_window(w, grid) for w in task.get("windows", [[-2.0, 2.0]])]
    cfg = default_config(res["regime"], res["eps"], windows, l_max=int(task.get("l_max", 1)), grid=grid,
                         params=params_from_spec(res["mollifier_spec"]))
    cfg.seed = res["seed"]
    if "max_tuples" in task:
        cfg.max_tuples = int(task["max_tuples"])
    return cfg, grid


def run_task(res: dict, task: dict) -> dict:
    """Run one task; returns {'result', 'pass', 'curves'}."""
    kind = task["kind"]
    exp = task.get("expect", {})
    grid = Grid((tuple(res["box"]),), res["N"])
    exprs = _parse_task_exprs(task, grid)
    curves = []
    if kind == "classify":
        cfg, _ = _config_for(res, task)
        v = classify(exprs["expr"], cfg)
        ok, checks = _expect_class(v, exp)
        result = {"classification": v.classification, "slope": v.slope, "decay_slope": v.decay_slope,
                  "caps": v.caps, "witness": v.witness, "checks": checks,
                  "fits": [{"net": r.net, "directions": list(r.directions), "window": r.window, "l": r.l,
                            "growth": r.growth, "decay": r.decay} for r in v.rows]}
        curves = _classify_curves(task["name"], v, cfg.regime.pair)
    elif kind == "equivalent":
        cfg, _ = _config_for(res, task)
        eq, v = equivalent(exprs["a"], exprs["b"], cfg)
        ok = eq == bool(exp.get("equivalent", True))
        result = {"equivalent": eq, "classification": v.classification, "decay_slope": v.decay_slope,
                  "caps": v.caps}
        curves = [(task["name"], e, val, None) for r in v.rows[:1] for e, val in zip(r.eps, r.values)]
    elif kind == "identity":
        # exact identities: the two sides agree slice by slice up to a relative tolerance
        params = params_from_spec(res["mollifier_spec"])
        net = build_mollifier_net(params, grid=grid, eps_grid=res["eps"])
        win = _window(task.get("window", [-2.0, 2.0]), grid)
        tol = float(exp.get("tol", 1e-9))
        errs = []
        for e in net.eps_grid:
            a, b = evaluate(exprs["lhs"], net[e]), evaluate(exprs["rhs"], net[e])
            errs.append((a - b).sup(win) / max(b.sup(win), 1e-300))
            curves.append((task["name"], float(e), errs[-1], tol))
        ok = max(errs) <= tol
        result = {"max_relative_error": max(errs), "tol": tol}
    elif kind == "fourier_bounds":
        rep = verify_fourier_bounds(res["mollifier_spec"], res["eps"], grid)
        ok = rep["pass"] == bool(exp.get("pass", True))
        result = rep
        for p in rep["per_eps"]:
            curves.append((task["name"] + "/sup", p["eps"], p["sup"], rep["bound_i"]))
            curves.append((task["name"] + "/route_gap", p["eps"], p["route_gap"], 1e-8))
    elif kind == "test_object":
        params = params_from_spec(res["mollifier_spec"])
        net = build_mollifier_net(params, grid=grid, eps_grid=res["eps"])
        reg = make_regime(res["regime"], weight=res["weight"])
        rep = verify_test_object(net, reg)
        ok = rep["pass"] == bool(exp.get("pass", True))
        result = rep
    elif kind == "scale_admissibility":
        cert = check_admissible(exprs["pair"], np.asarray(res["eps"]))
        ok = cert.passed == bool(exp.get("pass", True))
        result = cert.as_dict()
    elif kind == "sheaf":
        cfg, _ = _config_for(res, task)
        cover = Cover(tuple(task.get("U", res["box"])), tuple(tuple(m) for m in task["cover"]), grid)
        rep = sheaf_suite(exprs["expr"], cover, cfg, tuple(task["restrict_window"]),
                          [tuple(w) for w in task["stability_windows"]],
                          tuple(task.get("glue_window", (-2.0, 2.0))))
        ok = rep["pass"] == bool(exp.get("pass", True))
        result = rep
        for e, err in rep["glue_nets"]["errors"].items():
            curves.append((task["name"] + "/glue_nets", e, err, 1e-8))
        for e, err in rep["glue_exprs"]["errors"].items():
            curves.append((task["name"] + "/glue_exprs", e, err, 1e-8))
    elif kind == "diffeo_invariance":
        cfg, _ = _config_for(res, task)
        rows = []
        ok = True
        for R in exprs["exprs"]:
            v0 = classify(R, cfg)
            v1 = classify(pushforward(exprs["mu"], R), cfg)
            same = v0.classification == v1.classification
            ok &= same
            rows.append({"expr": describe(R), "class": v0.classification, "pushed_class": v1.classification,
                         "slope": v0.slope, "pushed_slope": v1.slope, "same": same})
        result = {"mu": exprs["mu"].label, "rows": rows}
    else:
        raise ConfigError(f"unknown task kind {kind!r}")
    return {"result": result, "pass": bool(ok), "curves": curves}


def _run_indexed(args):
    res, i = args
    return run_task(res, res["tasks"][i])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, RSequence):
        return obj.label
    if isinstance(obj, GFExpr):
        return describe(obj)
    return obj


def run_scenario(config: dict, out_dir: Path | None = None, curves: bool = False, seed: int | None = None,
                 eps_min: float | None = None, jobs: int = 1) -> tuple[int, dict]:
    """Returns (exit code, report). Config problems raise ConfigError."""
    res = resolve(config, seed, eps_min)
    idx = list(range(len(res["tasks"])))
    try:
        if jobs > 1 and len(idx) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outs = list(pool.map(_run_indexed, [(res, i) for i in idx]))
        else:
            outs = [run_task(res, res["tasks"][i]) for i in idx]
    except (SheafError, DomainError, ExprError) as exc:
        raise ConfigError(str(exc)) from exc
    tasks = []
    for t, o in zip(res["tasks"], outs):
        tasks.append({"name": t["name"], "kind": t["kind"], "expect": t.get("expect", {}),
                      "pass": o["pass"], "result": o["result"]})
    header = {"scenario": res["name"], "anchor": res["anchor"],
              "expected": {t["name"]: t.get("expect", {}) for t in res["tasks"]}}
    report = {"header": header, "generated": _dt.datetime.now(_dt.timezone.utc).isoformat(),
              "config": {k: res[k] for k in ("regime", "weight", "mollifier", "box", "N", "eps", "seed")},
              "tasks": tasks, "pass": all(t["pass"] for t in tasks)}
    report = _jsonable(report)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        if curves:
            with open(out_dir / "curves.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["task", "eps", "value", "bound"])
                for o in outs:
                    for name, e, v, b in o["curves"]:
                        w.writerow([name, repr(float(e)), repr(float(v)), "" if b is None else repr(float(b))])
    return (0 if report["pass"] else 1), report


# ---------------------------------------------------------------------------
# command line


@click.group()
def main():
    """Generalized-function scenarios: classification, sheaf and Fourier checks."""


@main.command()
@click.argument("config")
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory for report.json (and curves.csv).")
@click.option("--curves", is_flag=True, help="Also write the raw sweep data as CSV.")
@click.option("--seed", type=int, default=None, help="Seed for sampling direction tuples.")
@click.option("--eps-min", type=float, default=None, help="Smallest eps of the dyadic sweep.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Worker processes for the tasks.")
def run(config, out_dir, curves, seed, eps_min, jobs):
    """Run a scenario file or a built-in scenario by name."""
    try:
        code, report = run_scenario(load_config(config), out_dir, curves, seed, eps_min, max(1, jobs))
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    for t in report["tasks"]:
        click.echo(f"{'ok  ' if t['pass'] else 'FAIL'} {t['name']} ({t['kind']})")
    sys.exit(code)


@main.command("list")
def list_scenarios():
    """Built-in scenarios with their anchors and expected verdicts."""
    for name in builtin_names():
        cfg = load_builtin(name)
        click.echo(f"{name}\t{cfg.get('anchor', '')}")
        for t in cfg["tasks"]:
            click.echo(f"    {t['name']}: {json.dumps(t.get('expect', {}), sort_keys=True)}")


@main.command("verify-scales")
@click.argument("pair")
def verify_scales(pair):
    """Admissibility certificate of a scale pair: poly, ultra-beurling:gevrey:2, ultra-roumieu:gevrey:2."""
    try:
        cert = check_admissible(pair_from_spec(pair))
    except (ScaleError, WeightError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    click.echo(json.dumps(_jsonable(cert.as_dict()), indent=2, sort_keys=True))
    sys.exit(0 if cert.passed else 1)


@main.command("verify-mollifier")
@click.argument("params")
def verify_mollifier(params):
    """Test-object and Fourier checks of a mollifier: distribution, beurling, roumieu[:gevrey:s]."""
    try:
        p = params_from_spec(json.loads(params) if params.lstrip().startswith("{") else params)
    except (RegularizationError, WeightError, json.JSONDecodeError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    weight = "gevrey:2" if p.s is None else f"gevrey:{p.s:g}"
    try:
        net = build_mollifier_net(p)
        rep = {"test_object": verify_test_object(net, make_regime(p.regime, weight=weight), assign=False),
               "fourier": verify_fourier_bounds(p)}
    except (RegularizationError, QuotientError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    rep["pass"] = rep["test_object"]["pass"] and rep["fourier"]["pass"]
    click.echo(json.dumps(_jsonable(rep), indent=2, sort_keys=True))
    sys.exit(0 if rep["pass"] else 1)


if __name__ == "__main__":
    main()
