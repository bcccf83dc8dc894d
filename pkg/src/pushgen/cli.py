"""Command-line front end.

Every subcommand resolves its settings from built-in defaults, then an INI
config file (section named after the subcommand plus optional [generator]
and [data] sections), then a manifest from an earlier run, then explicit
flags.  The resolved settings are written to ``manifest.json`` next to the
artifacts; passing that file back with ``--manifest`` reproduces the other
artifacts byte for byte.

Exit codes: 0 success, 1 usage or configuration error, 2 a checked claim failed.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as _dt
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .contamination import DataSpec, HuberMixture, dataset_from_csv, synthesize
from .erm import ErmProblem, affine_family, audit_oracle_inequality, constant_family, fit
from .exceptions import PushgenError
from .experiments import (contamination_sweep, excess_doubling, huber_indistinguishability_check,
                          lower_bound_check, noise_sweep, rate_study, rows_to_csv, to_json)
from .generators import (GeneratorSpec, coordinate_trig, generator_from_mapping, identity,
                         lower_bound_generator)
from .ipm import KINDS, IpmSpec, distance
from .measures import UniformInterval
from .sampling import SeedPolicy
from .smoothness import composition_constant

OUTPUT_ENV = "PUSHGEN_OUTPUT_DIR"
DEFAULT_OUTPUT = "pushgen-out"
SCHEMA_VERSION = 1

METRIC_ALIASES = {
    "w1": "w1-assignment",
    "w1-1d": "w1-exact-1d",
    "lp": "w1-transport-lp",
    "walpha": "walpha-dictionary",
    "projection": "projection-first-axis",
    "oracle": "brute-lp-oracle",
}


class ConfigError(PushgenError):
    pass


# ----------------------------------------------------------------- value parsing
def parse_grid(text: str, kind=int) -> list:
    """``a:b:xk`` (geometric), ``a:b:+s`` (arithmetic) or a comma list."""
    text = str(text).strip()
    if ":" not in text:
        return [kind(v) for v in text.split(",") if v.strip()]
    parts = text.split(":")
    if len(parts) != 3 or parts[2][:1] not in ("x", "+"):
        raise ValueError(f"grid {text!r} is not of the form a:b:xk or a:b:+s")
    a, b = kind(parts[0]), kind(parts[1])
    step = kind(parts[2][1:])
    out = [a]
    if parts[2][0] == "x":
        if step <= 1 or a <= 0:
            raise ValueError(f"geometric grid {text!r} needs a > 0 and ratio > 1")
        while out[-1] * step <= b * (1 + 1e-12):
            out.append(out[-1] * step)
    else:
        if step <= 0:
            raise ValueError(f"arithmetic grid {text!r} needs a positive step")
        i = 1
        while a + i * step <= b * (1 + 1e-12) + 1e-12:
            out.append(kind(round(a + i * step, 12)))
            i += 1
    return out


def _float_list(text):
    return parse_grid(text, float)


def _int_list(text):
    return parse_grid(text, int)


def _opt_float_list(text):
    return None if text in (None, "", "none") else _float_list(text)


def _metric_kind(text):
    kind = METRIC_ALIASES.get(text, text)
    if kind not in KINDS:
        raise ValueError(f"unknown metric {text!r}")
    return kind


# name -> (type, default, help); every entry becomes a --flag
COMMON = {
    "seed": (int, 0, "master seed"),
    "workers": (int, 1, "worker processes"),
}
METRIC_KEYS = {
    "metric": (_metric_kind, "w1", "IPM: w1, w1-1d, lp, walpha, projection, oracle or a full kind name"),
    "alpha": (int, 1, "smoothness order of the dictionary IPM"),
    "L_F": (float, 1.0, "bound of the dictionary IPM"),
    "K": (int, 4, "frequency cutoff of the dictionary IPM"),
    "h": (float, 0.05, "grid step of the LP oracle"),
}
SCHEMAS = {
    "ipm": {**METRIC_KEYS, "p": (str, None, "CSV of points"), "q": (str, None, "CSV of points")},
    "rate": {**METRIC_KEYS, "d": (int, 1, "latent dimension"),
             "generator": (str, "identity", "identity, trig or config ([generator] section)"),
             "n": (_int_list, "128:8192:x2", "sample-size grid"), "reps": (int, 50, "replications per n"),
             "expect_slope": (float, None, "expected slope (default: the W1 rate for d)"),
             "slope_tol": (float, 0.05, "tolerance on the slope")},
    "sweep-noise": {**METRIC_KEYS, "metric": METRIC_KEYS["metric"][:1] + ("projection",) + METRIC_KEYS["metric"][2:],
                    "sigma": (_float_list, "0,0.1,0.2,0.3,0.4", "noise levels"),
                    "noise_model": (str, "uniform-1d", "sphere-fixed, gaussian-scaled or uniform-1d"),
                    "n": (int, 2000, "sample size"), "reps": (int, 200, "replications per level"),
                    "generator": (str, "default", "default ((2u+1)/4) or config"),
                    "expect_slope": (float, 0.5, "expected slope"), "slope_tol": (float, 0.05, ""),
                    "min_r2": (float, 0.99, "")},
    "sweep-contamination": {**METRIC_KEYS, "metric": METRIC_KEYS["metric"][:1] + ("projection",) + METRIC_KEYS["metric"][2:],
                            "epsilon": (_float_list, "0,0.05,0.1,0.2", "contamination levels"),
                            "n": (int, 2000, "sample size"), "reps": (int, 200, "replications per level"),
                            "generator": (str, "default", "default ((2u+1)/4) or config"),
                            "expect_slope": (float, 0.5, "expected slope"), "slope_tol": (float, 0.05, ""),
                            "min_r2": (float, 0.99, "")},
    "lower-bound": {"n": (_int_list, "1,10,100,1000,10000", "sample sizes"),
                    "reps": (int, 10_000, "replications per n")},
    "huber-check": {"epsilon": (float, 0.25, "contamination level"), "n": (int, 100_000, "sample size")},
    "erm-fit": {**METRIC_KEYS, "metric": METRIC_KEYS["metric"][:1] + ("w1-1d",) + METRIC_KEYS["metric"][2:],
                "data": (str, None, "CSV of points (synth output or plain numbers)"),
                "family": (str, "affine", "affine or constant"), "d": (int, 1, "latent dimension"),
                "lower": (_opt_float_list, None, "box lower corner"), "upper": (_opt_float_list, None, "box upper corner"),
                "m": (int, None, "latent sample size (default: n)"), "max_evals": (int, 4000, ""),
                "restarts": (int, 8, ""),
                "audit_reps": (int, 0, "audit the oracle inequality with this many replications ([generator] is g*)"),
                "grid_size": (int, 21, "theta grid points per axis for the audit")},
    "smoothness-constant": {"D": (int, 1, "output dimension"), "d": (int, 1, "input dimension"),
                            "alpha": (int, 1, "derivative order")},
    "synth": {"n": (int, 1000, "number of points"), "sigma": (float, 0.0, ""), "epsilon": (float, 0.0, ""),
              "noise_model": (str, "sphere-fixed", ""),
              "outlier_policy": (str, "corner", "corner or huber-uniform:lo:hi"),
              "generator": (str, "default", "default ((2u+1)/4), identity or config"),
              "d": (int, 1, "latent dimension for the identity generator")},
}
for _schema in SCHEMAS.values():
    _schema.update(COMMON)


# ----------------------------------------------------------------- argument handling
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushgen", description="Push-forward generator studies.")
    parser.add_argument("--version", action="version", version=f"pushgen {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file; section [%s] plus optional [generator] and [data]" % name)
        p.add_argument("--manifest", help="manifest.json of an earlier run to reproduce")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        for key, (_, default, helptext) in schema.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           help=f"{helptext} (default {default})".strip())
    return parser


def _convert(key, raw, schema, where):
    conv = schema[key][0]
    if raw is None:
        return None
    try:
        return conv(raw) if isinstance(raw, str) else raw
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: field {key!r}: {exc}") from None


def resolve(args) -> dict:
    """Defaults < config file < manifest < flags."""
    schema = SCHEMAS[args.command]
    cfg = {k: _convert(k, v[1], schema, "default") if isinstance(v[1], str) else v[1] for k, v in schema.items()}
    sections = {}
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            if not cp.read(args.config):
                raise ConfigError(f"{args.config}: cannot read config file")
        except configparser.Error as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if args.command in cp:
            for key, raw in cp[args.command].items():
                if key not in schema:
                    raise ConfigError(f"{args.config}: [{args.command}] unknown field {key!r}")
                cfg[key] = _convert(key, raw, schema, f"{args.config}: [{args.command}]")
        for name in ("generator", "data"):
            if name in cp:
                sections[name] = dict(cp[name])
    if args.manifest:
        try:
            man = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{args.manifest}: {exc}") from None
        if man.get("command") != args.command:
            raise ConfigError(f"{args.manifest}: manifest is for {man.get('command')!r}, not {args.command!r}")
        for key, value in man.get("config", {}).items():
            if key not in schema:
                raise ConfigError(f"{args.manifest}: config: unknown field {key!r}")
            cfg[key] = value
        sections.update(man.get("sections", {}))
    for key in schema:
        raw = getattr(args, key)
        if raw is not None:
            cfg[key] = _convert(key, raw, schema, f"--{key.replace('_', '-')}")
    return {"config": cfg, "sections": sections}


# ----------------------------------------------------------------- output
def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(cfg):
    return json.loads(to_json(cfg))


# ----------------------------------------------------------------- helpers
def _stream(cfg, tag):
    return SeedPolicy(cfg["seed"]).stream(0, tag)


def _ipm_spec(cfg, D=None):
    return IpmSpec(cfg["metric"], D, cfg["alpha"], cfg["L_F"], cfg["K"], cfg["h"])


def _config_generator(resolved, where="generator"):
    sec = resolved["sections"].get("generator")
    if sec is None:
        raise ConfigError(f"{where}: a [generator] config section is required")
    return generator_from_mapping(sec, where="[generator]")


def _pick_generator(resolved, default):
    cfg = resolved["config"]
    choice = cfg["generator"]
    if choice == "config":
        return _config_generator(resolved)
    if choice == "identity":
        return identity(cfg.get("d", 1))
    if choice == "trig":
        return coordinate_trig(cfg["d"], cfg["d"], 1, 2.0)
    if choice == "default":
        return default
    raise ConfigError(f"generator: unknown choice {choice!r}")


def _read_points(path):
    try:
        text = Path(path).read_text()
    except (OSError, TypeError) as exc:
        raise ConfigError(f"cannot read points file {path!r}: {exc}") from None
    first = next((ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if first.startswith("x_1"):
        return dataset_from_csv(text).points
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _expected_w1_slope(d):
    return -0.5 if d <= 2 else -1.0 / d


# ----------------------------------------------------------------- subcommands
def cmd_ipm(resolved):
    cfg = resolved["config"]
    if not cfg["p"] or not cfg["q"]:
        raise ConfigError("ipm: both --p and --q are required")
    P, Q = _read_points(cfg["p"]), _read_points(cfg["q"])
    value = distance(P, Q, _ipm_spec(cfg, P.shape[1]))
    return {"ipm.json": to_json({"metric": cfg["metric"], "value": value})}, True


def cmd_rate(resolved):
    cfg = resolved["config"]
    g = _pick_generator(resolved, identity(cfg["d"]))
    metric = cfg["metric"]
    if metric == "w1-assignment" and g.D == 1:
        metric = "w1-exact-1d"
    spec = IpmSpec(metric, g.D, cfg["alpha"], cfg["L_F"], cfg["K"], cfg["h"])
    fit_ = rate_study(g, spec, cfg["n"], cfg["reps"], _stream(cfg, "rate"), workers=cfg["workers"])
    expect = cfg["expect_slope"]
    if expect is None and spec.is_w1:
        expect = _expected_w1_slope(g.d)
    tol = cfg["slope_tol"]
    if expect is None:
        ok, band = True, None
    elif cfg["expect_slope"] is None and g.d == 2:
        band = [-0.58, -0.42]  # room for the log factor at d = 2
        ok = band[0] <= fit_.slope <= band[1]
    else:
        band = [expect - tol, expect + tol]
        ok = band[0] <= fit_.slope <= band[1]
    summary = {"fit": {k: v for k, v in fit_.to_dict().items() if k != "rows"},
               "assertions": {"slope_band": band, "slope_in_band": ok}, "pass": ok}
    return {"rate.csv": rows_to_csv(fit_.rows), "rate.json": to_json(summary)}, ok


def _sweep_outputs(name, result, cfg, extra=None):
    ok_slope = abs(result.slope - cfg["expect_slope"]) <= cfg["slope_tol"]
    ok_r2 = result.r_squared >= cfg["min_r2"]
    assertions = {"slope_in_band": ok_slope, "r_squared_ok": ok_r2, **(extra or {})}
    ok = all(v if isinstance(v, bool) else True for v in assertions.values())
    summary = {"fit": {k: v for k, v in result.to_dict().items() if k != "rows"},
               "assertions": assertions, "pass": ok}
    return {f"{name}.csv": rows_to_csv(result.rows), f"{name}.json": to_json(summary)}, ok


def cmd_sweep_noise(resolved):
    cfg = resolved["config"]
    g = _pick_generator(resolved, lower_bound_generator())
    res = noise_sweep(g, _ipm_spec(cfg, g.D), cfg["sigma"], cfg["n"], cfg["reps"], _stream(cfg, "sweep-noise"),
                      noise_model=cfg["noise_model"], workers=cfg["workers"])
    doubling = excess_doubling(res)
    return _sweep_outputs("sweep-noise", res, cfg, {"doubling": doubling,
                                                     "doubling_ok": all(r["holds"] for r in doubling)})


def cmd_sweep_contamination(resolved):
    cfg = resolved["config"]
    g = _pick_generator(resolved, lower_bound_generator())
    res = contamination_sweep(g, _ipm_spec(cfg, g.D), cfg["epsilon"], cfg["n"], cfg["reps"],
                              _stream(cfg, "sweep-contamination"), workers=cfg["workers"])
    return _sweep_outputs("sweep-contamination", res, cfg)


def cmd_lower_bound(resolved):
    cfg = resolved["config"]
    rep = lower_bound_check(cfg["n"], cfg["reps"], _stream(cfg, "lower-bound"))
    rows = [{"param": "n", "value": r["n"], "mean": r["estimate"], "std_error": r["std_error"], "reps": r["reps"]}
            for r in rep["rows"]]
    return {"lower-bound.csv": rows_to_csv(rows), "lower-bound.json": to_json(rep)}, rep["all_hold"]


def cmd_huber_check(resolved):
    cfg = resolved["config"]
    rep = huber_indistinguishability_check(cfg["epsilon"], cfg["n"], _stream(cfg, "huber-check"))
    return {"huber-check.json": to_json(rep)}, rep["all_hold"]


def cmd_erm_fit(resolved):
    cfg = resolved["config"]
    if not cfg["data"]:
        raise ConfigError("erm-fit: --data is required")
    X = _read_points(cfg["data"])
    D = X.shape[1]
    if cfg["family"] == "affine":
        fam = affine_family(cfg["d"], D, cfg["lower"], cfg["upper"])
    elif cfg["family"] == "constant":
        fam = constant_family(D, cfg["d"], cfg["lower"], cfg["upper"])
    else:
        raise ConfigError(f"erm-fit: family must be affine or constant, got {cfg['family']!r}")
    metric = cfg["metric"]
    problem = ErmProblem(fam, X, IpmSpec(metric, D, cfg["alpha"], cfg["L_F"], cfg["K"], cfg["h"]),
                         cfg["m"], cfg["max_evals"], cfg["restarts"])
    sol = fit(problem, _stream(cfg, "erm-fit"))
    out = {"theta_hat": sol.theta_hat, "objective": sol.objective, "evaluations": sol.n_evals,
           "restart": sol.restart, "warnings": sol.warnings}
    ok = True
    if cfg["audit_reps"] > 0:
        g_star = _config_generator(resolved, "erm-fit --audit-reps")
        rep = audit_oracle_inequality(problem, g_star, cfg["audit_reps"], _stream(cfg, "erm-audit"),
                                      grid_size=cfg["grid_size"])
        out["audit"] = {**rep.summary(), "rows": rep.rows}
        ok = rep.all_hold
    return {"erm-fit.json": to_json(out)}, ok


def cmd_smoothness_constant(resolved):
    cfg = resolved["config"]
    C = composition_constant(cfg["D"], cfg["d"], cfg["alpha"])
    text = "D,d,alpha,value\n" + f"{C.D},{C.d},{C.alpha},{C.value}\n"
    per = {",".join(map(str, k)): str(v) for k, v in C.per_index.items()}
    return {"smoothness-constant.csv": text,
            "smoothness-constant.json": to_json({"D": C.D, "d": C.d, "alpha": C.alpha, "value": str(C.value),
                                                 "per_index": per})}, True


def cmd_synth(resolved):
    cfg = resolved["config"]
    g = _pick_generator(resolved, lower_bound_generator())
    sections = resolved["sections"]
    data = dict(sections.get("data", {}))
    policy = data.get("outlier_policy", cfg["outlier_policy"])
    if isinstance(policy, str) and policy.startswith("huber-uniform"):
        try:
            lo, hi = (float(v) for v in policy.split(":")[1:3])
        except ValueError:
            raise ConfigError(f"outlier_policy: cannot parse {policy!r}") from None
        policy = HuberMixture(UniformInterval(lo, hi))
    spec = DataSpec(g, cfg["sigma"], cfg["epsilon"], cfg["noise_model"], policy)
    ds = synthesize(spec, cfg["n"], _stream(cfg, "synth"))
    return {"dataset.csv": ds.to_csv()}, True


COMMANDS = {
    "ipm": cmd_ipm,
    "rate": cmd_rate,
    "sweep-noise": cmd_sweep_noise,
    "sweep-contamination": cmd_sweep_contamination,
    "lower-bound": cmd_lower_bound,
    "huber-check": cmd_huber_check,
    "erm-fit": cmd_erm_fit,
    "smoothness-constant": cmd_smoothness_constant,
    "synth": cmd_synth,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        resolved = resolve(args)
        outputs, ok = COMMANDS[args.command](resolved)
    except PushgenError as exc:
        print(f"pushgen {args.command}: error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    for name, text in outputs.items():
        write_atomic(out_dir / name, text)
    manifest = {
        "command": args.command,
        "config": _jsonable(resolved["config"]),
        "sections": resolved["sections"],
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "artifacts": sorted(outputs),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_atomic(out_dir / "manifest.json", to_json(manifest))
    print(f"pushgen {args.command}: {'ok' if ok else 'CLAIM FAILED'}; wrote {', '.join(sorted(outputs))} to {out_dir}")
    return 0 if ok else 2


def main():
    sys.exit(run())
