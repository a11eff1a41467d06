"""Command-line front end: ``mirror-collapse {analytic,master,trajectories,csl,verify}``.

A scenario is a JSON document (``--config``) merged over built-in defaults,
then patched with ``--set dotted.key=value`` overrides.  Series go out as CSV
or JSON; numbers are written with 17 significant digits so identical inputs
give byte-identical files.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 a
verification check failed.
"""

import argparse
import copy
import csv
import io
import json
import math
import sys

import numpy as np

from . import csl as csl_mod
from . import experiment, fock, ito, master, stochastic

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "experiment": {"omega_m": 1.0, "kappa": 1.0, "sigma": 1.0, "omega_c": 1.0,
                   "length_unit": "arb"},
    "eta": 0.0,
    "grid": {"t_end_periods": 2.0, "n_points": 201},
    "master": {"integrator": "rk4", "dt": None, "n_levels": None,
               "abs_tol": 1e-12, "rel_tol": 1e-10},
    "ensemble": {"n_traj": 1000, "seed_base": 0, "scheme": "linear", "dt": None,
                 "n_points": 21},
    "csl_scan": {"d_sqrt_alpha_min": 0.01, "d_sqrt_alpha_max": 30.0, "n_points": 41},
    "verify": {"n_paths": 100_000, "bh_points": 20, "bh_levels": 60},
    "output": {"path": None, "format": "csv"},
}


class ConfigError(ValueError):
    pass


def _merge(base, patch):
    out = copy.deepcopy(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg, assignment):
    """Apply ``a.b.c=value`` (value parsed as JSON when possible) in place."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for i, part in enumerate(parts[:-1]):
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"{'.'.join(parts[:i + 1])}: not a section")
        node = nxt
    node[parts[-1]] = _parse_value(text)


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object")
        if "csl" in user and "eta" not in user:
            user["eta"] = None
        cfg = _merge(cfg, user)
    for assignment in overrides:
        # a csl block replaces the default eta unless eta is set explicitly later
        if assignment.split("=", 1)[0].split(".")[0].strip() == "csl" and not cfg.get("csl"):
            cfg["eta"] = None
        apply_override(cfg, assignment)
    validate(cfg)
    return cfg


def _require(cond, field, message):
    if not cond:
        raise ConfigError(f"{field}: {message}")


def _number(cfg, section, key, positive=False, allow_none=False):
    value = cfg[section].get(key) if section else cfg.get(key)
    field = f"{section}.{key}" if section else key
    if value is None and allow_none:
        return None
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), field,
             f"expected a number, got {value!r}")
    _require(math.isfinite(value), field, "must be finite")
    if positive:
        _require(value > 0, field, f"must be positive, got {value!r}")
    return value


def validate(cfg):
    _require(cfg.get("schema_version") == SCHEMA_VERSION, "schema_version",
             f"unsupported version {cfg.get('schema_version')!r} (expected {SCHEMA_VERSION})")
    for section in ("experiment", "grid", "master", "ensemble", "csl_scan", "verify", "output"):
        _require(isinstance(cfg.get(section), dict), section, "missing or not an object")
    has_eta = cfg.get("eta") is not None
    has_csl = bool(cfg.get("csl"))
    _require(has_eta != has_csl, "eta", "give exactly one of 'eta' or a 'csl' block")
    if has_eta:
        _require(_number(cfg, None, "eta") >= 0, "eta", "must be non-negative")
    else:
        for key in ("gamma", "alpha", "D0", "S"):
            _number(cfg, "csl", key, positive=True)
    exp = cfg["experiment"]
    _require(("kappa" in exp) or ("G" in exp) or ("L" in exp), "experiment",
             "one of kappa, G or L is required")
    _require(not ("kappa" in exp and "G" in exp), "experiment", "give kappa or G, not both")
    for key in ("omega_m", "sigma", "omega_c"):
        _number(cfg, "experiment", key, positive=True)
    g = cfg["grid"]
    _require("t_end" in g or "t_end_periods" in g, "grid", "t_end or t_end_periods required")
    _require(isinstance(g.get("n_points"), int) and g["n_points"] >= 2, "grid.n_points",
             "must be an integer >= 2")
    _require(cfg["master"].get("integrator") in ("rk4", "rk45_adaptive"), "master.integrator",
             "must be rk4 or rk45_adaptive")
    ens = cfg["ensemble"]
    _require(ens.get("scheme") in stochastic.SCHEMES, "ensemble.scheme",
             f"must be one of {stochastic.SCHEMES}")
    _require(isinstance(ens.get("n_traj"), int) and ens["n_traj"] >= 100, "ensemble.n_traj",
             "must be an integer >= 100")
    _require(isinstance(ens.get("seed_base"), int) and ens["seed_base"] >= 0,
             "ensemble.seed_base", "must be a non-negative integer")
    _require(isinstance(ens.get("n_points"), int) and ens["n_points"] >= 2,
             "ensemble.n_points", "must be an integer >= 2")
    _require(cfg["output"].get("format") in ("csv", "json"), "output.format",
             "must be csv or json")


def build_params(cfg):
    exp = dict(cfg["experiment"])
    kappa = exp.pop("kappa", None)
    if kappa is not None:
        exp["G"] = kappa * exp["omega_m"]
    allowed = {"omega_m", "G", "sigma", "omega_c", "M", "L", "length_unit"}
    unknown = set(exp) - allowed
    if unknown:
        raise ConfigError(f"experiment: unknown field(s) {sorted(unknown)}")
    try:
        return experiment.ExperimentParams(**exp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"experiment: {exc}") from exc


def build_csl(cfg):
    block = cfg["csl"]
    unit = block.get("length_unit", "arb")
    params = csl_mod.CslParams(block["gamma"], block["alpha"], unit)
    profile = csl_mod.DensityProfile(block["D0"], block["S"], length_unit=unit)
    return params, profile


def resolve_eta(cfg, p):
    if cfg.get("eta") is not None:
        return float(cfg["eta"])
    params, profile = build_csl(cfg)
    try:
        csl_mod.check_units(params, profile, p)
    except experiment.UnitError as exc:
        raise ConfigError(f"csl.length_unit: {exc}") from exc
    return csl_mod.eta_csl(params, profile).value


def time_grid(cfg, p, n_points=None):
    g = cfg["grid"]
    t_end = g["t_end"] if "t_end" in g else g["t_end_periods"] * p.period
    _require(t_end > 0, "grid.t_end", "must be positive")
    return np.linspace(0.0, t_end, n_points or g["n_points"])


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def emit_table(columns, rows, fmt, meta=None):
    if fmt == "json":
        body = {"schema_version": SCHEMA_VERSION, **(meta or {}),
                "rows": [dict(zip(columns, row)) for row in rows]}
        return json.dumps(body, indent=2, sort_keys=True, default=float) + "\n"
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        if not isinstance(value, (dict, list)):
            buf.write(f"# {key}={_fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


SERIES_COLUMNS = ["t", "t_over_T", "f_re", "f_im", "nu", "source"]


def _series_rows(records, period, extra=None):
    rows = []
    for k, r in enumerate(records):
        row = [r.t, r.t / period, r.f.real, r.f.imag, r.nu, r.source]
        if extra is not None:
            row.extend(extra(k))
        rows.append(row)
    return rows


def cmd_analytic(cfg, args):
    p = build_params(cfg)
    eta = resolve_eta(cfg, p)
    t = time_grid(cfg, p)
    records = experiment.closed_form_records(p, eta, t)
    meta = {"subcommand": "analytic", "eta": eta, "kappa": p.kappa}
    return emit_table(SERIES_COLUMNS, _series_rows(records, p.period), cfg["output"]["format"], meta)


def cmd_master(cfg, args):
    p = build_params(cfg)
    eta = resolve_eta(cfg, p)
    t = time_grid(cfg, p)
    mc = cfg["master"]
    series = master.solve_visibility(p, eta, t, n_levels=mc.get("n_levels"), dt=mc.get("dt"),
                                     integrator=mc["integrator"])
    exact = experiment.f_closed_form(p, eta, t)
    dev = np.abs(series.f - exact)
    rows = _series_rows(series.records(), p.period, extra=lambda k: [dev[k]])
    meta = {"subcommand": "master", "eta": eta, "kappa": p.kappa, "n_levels": series.n_levels,
            "dt": series.dt, "max_deviation": float(dev.max())}
    return emit_table(SERIES_COLUMNS + ["deviation"], rows, cfg["output"]["format"], meta)


def cmd_trajectories(cfg, args):
    p = build_params(cfg)
    eta = resolve_eta(cfg, p)
    ens = cfg["ensemble"]
    t = time_grid(cfg, p, ens["n_points"])
    series = stochastic.ensemble_offdiag(ens["n_traj"], ens["seed_base"], p, eta, t,
                                         scheme=ens["scheme"], dt=ens.get("dt"),
                                         threads=args.threads)
    used = series.n_traj - series.n_aborted
    rows = _series_rows(series.records(), p.period,
                        extra=lambda k: [series.std_error[k], used, series.scheme])
    meta = {"subcommand": "trajectories", "eta": eta, "kappa": p.kappa,
            "scheme": series.scheme, "seed_base": ens["seed_base"],
            "n_aborted": series.n_aborted}
    return emit_table(SERIES_COLUMNS + ["std_error", "n_traj", "scheme"], rows,
                      cfg["output"]["format"], meta)


def cmd_csl(cfg, args):
    if not cfg.get("csl"):
        raise ConfigError("csl: the csl subcommand needs a 'csl' block")
    params, profile = build_csl(cfg)
    p = build_params(cfg)
    try:
        lam = csl_mod.lambda_csl(params, profile, p)
    except experiment.UnitError as exc:
        raise ConfigError(f"csl.length_unit: {exc}") from exc
    eta = csl_mod.eta_csl(params, profile)
    exact_eta = csl_mod.eta_csl(params, profile, method="exact")
    report = csl_mod.crossover_report(profile, params)
    scan = cfg["csl_scan"]
    root = math.sqrt(params.alpha)
    xs = np.geomspace(scan["d_sqrt_alpha_min"], scan["d_sqrt_alpha_max"], scan["n_points"])
    rows = []
    for x in xs:
        d = x / root
        rows.append([d, x, csl_mod.gamma_exact([d, 0.0, 0.0], profile, params),
                     csl_mod.gamma_quadratic(d, profile, params),
                     csl_mod.gamma_linear_regime(d, params, profile)])
    meta = {"subcommand": "csl", "eta": eta.value, "eta_method": eta.method,
            "eta_exact": exact_eta.value, "Lambda": lam,
            "C_exact": csl_mod.taylor_coefficient_C(profile, params.alpha),
            "crossover": report["crossover"],
            "crossover_slope_intersection": report["slope_intersection"],
            "crossover_log_slope_point": report["log_slope_point"],
            "length_unit": params.length_unit}
    return emit_table(["d", "d_sqrt_alpha", "gamma_exact", "gamma_quadratic", "gamma_linear"],
                      rows, cfg["output"]["format"], meta)


def verification_reports(cfg, threads=1):
    p = build_params(cfg)
    eta = resolve_eta(cfg, p)
    v = cfg["verify"]
    reports = []
    ts = np.linspace(0.0, 2 * p.period, v["bh_points"])
    worst = max(experiment.verify_baker_hausdorff(p, t, v["bh_levels"]) for t in ts)
    reports.append(ito.CheckReport("baker_hausdorff", worst, 0.0, 0.0, 0.0, bool(worst <= 1e-8),
                                   details={"tolerance": 1e-8, "n_levels": v["bh_levels"]}))
    t = time_grid(cfg, p)
    series = master.solve_visibility(p, eta, t)
    exact = experiment.f_closed_form(p, eta, t)
    rel = float(np.max(np.abs(np.abs(series.f) - np.abs(exact)) / np.abs(exact)))
    reports.append(ito.CheckReport("master_vs_closed_form", rel, 0.0, 0.0, 0.0, bool(rel <= 1e-6),
                                   details={"tolerance": 1e-6, "n_levels": series.n_levels}))
    _, _, f = stochastic.f_factorized(p, eta, t)
    gap = float(np.max(np.abs(f - exact)))
    reports.append(ito.CheckReport("factorized_vs_closed_form", gap, 0.0, 0.0, 0.0,
                                   bool(gap <= 1e-12), details={"tolerance": 1e-12}))
    reports.extend(ito.run_suite(n_paths=v["n_paths"], seed_base=cfg["ensemble"]["seed_base"],
                                 omega_m=p.omega_m, threads=threads))
    return reports


def cmd_verify(cfg, args):
    reports = verification_reports(cfg, args.threads)
    text = ito.report_json(reports) + "\n"
    return text, (EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY)


COMMANDS = {
    "analytic": cmd_analytic,
    "master": cmd_master,
    "trajectories": cmd_trajectories,
    "csl": cmd_csl,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mirror-collapse",
                                     description="Mirror-superposition visibility under collapse noise.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON scenario file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="dotted-path override, repeatable")
    parser.add_argument("--out", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"))
    parser.add_argument("--seed", type=int, help="ensemble seed base")
    parser.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.format:
            cfg["output"]["format"] = args.format
        if args.seed is not None:
            _require(args.seed >= 0, "--seed", "must be non-negative")
            cfg["ensemble"]["seed_base"] = args.seed
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        result = COMMANDS[args.subcommand](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (master.NumericalError, fock.TruncationError, FloatingPointError,
            OverflowError, ValueError) as exc:
        print(f"numerical failure in {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    text, code = result if isinstance(result, tuple) else (result, EXIT_OK)
    out = args.out or cfg["output"].get("path")
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
