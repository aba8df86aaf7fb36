"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 infeasible constraint set,
4 solver non-convergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import rates
from .qstate import HermitianObservable, ValidationError
from .solver import ConstraintSet, InfeasibleError, SolverConfig, min_rel_entropy

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE, EXIT_IO = 0, 2, 3, 4, 5

CSV_COLUMNS = ("n", "p_hat", "stderr", "log_p", "N", "method", "ess", "seed")
COHERENCE_COLUMNS = CSV_COLUMNS + ("p_exact", "p_lower", "p_upper")
RATE_FAMILIES = ("qubit", "max-eig", "binary-meas", "trace-dist", "entropy", "expectation", "w3", "coherence", "gaussian")

RUN_KEYS = {
    "estimate": {"m", "n", "samples", "method", "seed", "workers", "constraint_set", "out", "format"},
    "sweep": {"m", "n_list", "samples", "method", "seed", "workers", "constraint_set", "out", "format", "theory_rate"},
    "concentration": {"m", "n_list", "samples", "seed", "workers", "constraint_set", "eps", "out", "format"},
    "coherence": {"kappa", "n_list", "samples", "seed", "workers", "table_n", "table_samples", "out", "format"},
    "compare": {"kind", "params", "out", "format"},
}


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


def fmt(x) -> str:
    """Numbers with 17 significant digits; integers and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    if x is None:
        return ""
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# --------------------------------------------------------------------------
# configuration


def _parse_list(text: str | None, cast=float):
    if text is None:
        return None
    text = text.strip()
    if text.startswith("["):
        return [cast(v) for v in json.loads(text)]
    if ":" in text:
        a, b, step = (int(v) for v in text.split(":"))
        return list(range(a, b + 1, step))
    return [cast(v) for v in text.split(",") if v.strip()]


def _load_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    if command == "solve":
        return cfg
    extra = set(cfg) - RUN_KEYS[command]
    if extra:
        raise ConfigError(f"unknown keys for '{command}': {sorted(extra)}")
    return cfg


def _merge(cfg: dict, args: argparse.Namespace, mapping: dict) -> dict:
    out = dict(cfg)
    for key, attr in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    return out


def _constraint_set(cfg: dict, m: int | None) -> ConstraintSet:
    if "constraint_set" not in cfg:
        raise ConfigError("config needs a 'constraint_set'")
    d = dict(cfg["constraint_set"])
    if m is not None:
        d.setdefault("m", m)
    cs = ConstraintSet.from_dict(d)
    if m is not None and cs.m != m:
        raise ConfigError(f"--m {m} differs from the constraint set dimension {cs.m}")
    return cs


def _require(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError(f"missing required parameters: {missing}")


# --------------------------------------------------------------------------
# output


def _write_rows(rows: list[dict], columns, path: str | None, fmt_name: str, meta: dict | None):
    if fmt_name == "json":
        payload = {"rows": rows, **({"meta": meta} if meta else {})}
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
        if path:
            Path(path).write_text(text)
        else:
            sys.stdout.write(text)
        return
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([fmt(r.get(c)) for c in columns])
    if path:
        Path(path).write_text(buf.getvalue())
        if meta is not None:
            Path(str(path) + ".json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(buf.getvalue())
        if meta is not None:
            sys.stderr.write(json.dumps(_jsonable(meta), sort_keys=True) + "\n")


def _print_result(res, fmt_name: str, extra: dict | None = None):
    spec = res.minimizer_spectrum()
    out = {
        "rate": res.rate,
        "exponent": res.exponent,
        "m": res.m,
        "minimizer_spectrum": None if spec is None else list(spec),
    }
    if extra:
        out.update(extra)
    if fmt_name == "json":
        diag = {k: v for k, v in res.diagnostics.items()}
        sys.stdout.write(json.dumps(_jsonable({**out, "diagnostics": diag}), sort_keys=True) + "\n")
        return
    for k, v in out.items():
        if isinstance(v, list):
            v = " ".join(fmt(x) for x in v)
        sys.stdout.write(f"{k} {'none' if v is None else fmt(v)}\n")
    for k, v in res.diagnostics.items():
        if isinstance(v, (int, float, str, bool, np.floating, np.integer)):
            sys.stdout.write(f"diag.{k} {fmt(v)}\n")


# --------------------------------------------------------------------------
# commands


def cmd_rate(args) -> int:
    fam = args.family
    need = {
        "qubit": ("t",),
        "max-eig": ("m", "eps"),
        "binary-meas": ("m", "m0", "q"),
        "trace-dist": ("m", "t"),
        "entropy": ("m", "eta"),
        "expectation": ("w",),
        "w3": ("w",),
        "coherence": ("omega",),
        "gaussian": ("point",),
    }[fam]
    missing = [k for k in need if getattr(args, k) is None]
    if missing:
        raise ConfigError(f"rate {fam} needs --{' --'.join(missing)}")
    if fam == "qubit":
        val = rates.rate_qubit(args.t)
        res = rates.RateResult(val, 2, None)
    elif fam == "max-eig":
        res = rates.rate_max_eigenvalue(args.eps, args.m)
    elif fam == "binary-meas":
        res = rates.rate_binary_measurement(args.q, args.m0, args.m)
    elif fam == "trace-dist":
        res = rates.rate_trace_distance(args.t, args.m)
    elif fam == "entropy":
        res = rates.rate_entropy(args.eta, args.m)
    elif fam == "expectation":
        if args.W is None and args.diag is None:
            raise ConfigError("rate expectation needs --W (JSON matrix) or --diag")
        W = HermitianObservable.diag(_parse_list(args.diag)) if args.diag else HermitianObservable(_matrix(args.W))
        res = rates.rate_expectation(args.w, W)
    elif fam == "w3":
        res = rates.RateResult(rates.rate_w3(args.w), 3, None, {"nu": rates.nu_star_m3(args.w) if args.w else 0.0})
    elif fam == "coherence":
        up, lv = rates.coherence_rate_upper(args.omega), rates.coherence_rate_levy(args.omega)
        if args.format == "json":
            sys.stdout.write(json.dumps({"upper": up, "levy": lv}) + "\n")
        else:
            sys.stdout.write(f"upper {fmt(up)}\nlevy {fmt(lv)}\n")
        return EXIT_OK
    else:
        pt = rates.GaussianRatePoint(_parse_list(args.point))
        val = rates.gaussian_sanov_rate(pt)
        scaled = rates.gaussian_rate_scale_min(pt)
        if args.format == "json":
            sys.stdout.write(json.dumps(_jsonable({"sanov_rate": val, "scale_min": scaled})) + "\n")
        else:
            sys.stdout.write(f"sanov_rate {fmt(val)}\nscale_min {fmt(scaled)}\n")
        return EXIT_OK
    _print_result(res, args.format)
    return EXIT_OK


def _matrix(text: str) -> np.ndarray:
    a = np.asarray(json.loads(text), dtype=float)
    if a.ndim == 3 and a.shape[-1] == 2:
        return a[..., 0] + 1j * a[..., 1]
    return a


def cmd_solve(args) -> int:
    raw = _load_config(args.config, "solve")
    solver_cfg = raw.pop("solver", None) if isinstance(raw, dict) else None
    cs = ConstraintSet.from_dict(raw)
    cfg = SolverConfig(**solver_cfg) if solver_cfg else SolverConfig(seed=args.seed or 0)
    res = min_rel_entropy(cs, cfg)
    _print_result(res, args.format)
    if not res.diagnostics.get("converged", True):
        raise NonConvergence("solver did not converge; best iterate printed above")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _merge(_load_config(args.config, "estimate"), args, _COMMON | {"n": "n"})
    _require(cfg, "n", "samples")
    cs = _constraint_set(cfg, cfg.get("m"))
    pt = ex.estimate_probability(cs, cs.m, int(cfg["n"]), int(cfg["samples"]), cfg.get("method", "naive"),
                                 int(cfg.get("seed", 0)), int(cfg.get("workers", 1)))
    meta = {"m": cs.m, "workers": int(cfg.get("workers", 1)), "constraint_set": cs.to_dict(),
            "upper95": pt.upper95}
    _write_rows([pt.row()], CSV_COLUMNS, cfg.get("out"), cfg.get("format", "csv"), meta)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _merge(_load_config(args.config, "sweep"), args, _COMMON | {"n_list": "n_list"})
    _require(cfg, "n_list", "samples")
    cs = _constraint_set(cfg, cfg.get("m"))
    res = ex.sweep_exponent(cs, cs.m, cfg["n_list"], int(cfg["samples"]), cfg.get("method", "tilted"),
                            int(cfg.get("seed", 0)), int(cfg.get("workers", 1)), cfg.get("theory_rate"))
    meta = {**res.metadata, "fit": res.fit.to_dict()}
    _write_rows([p.row() for p in res.points], CSV_COLUMNS, cfg.get("out"), cfg.get("format", "csv"), meta)
    f = res.fit
    sys.stderr.write(f"slope {fmt(f.slope)} +- {fmt(f.slope_stderr)} theory {fmt(f.theory_rate)} "
                     f"relative_gap {fmt(f.relative_gap)}\n")
    return EXIT_OK


def cmd_concentration(args) -> int:
    cfg = _merge(_load_config(args.config, "concentration"), args, _COMMON | {"n_list": "n_list", "eps": "eps"})
    _require(cfg, "n_list", "samples", "eps")
    cs = _constraint_set(cfg, cfg.get("m"))
    res = ex.conditional_concentration(cs, cs.m, cfg["n_list"], float(cfg["eps"]), int(cfg["samples"]),
                                       int(cfg.get("seed", 0)), int(cfg.get("workers", 1)))
    rows = [{"n": r.n, "conditional_mass_outside": r.conditional_mass_outside, "stderr": r.stderr,
             "ratio": r.ratio, "hits": r.hits} for r in res.rows]
    meta = {**res.metadata, "delta_hat": res.delta_hat, "delta_stderr": res.delta_stderr,
            "minimizer_spectrum": res.minimizer_spectrum, "workers": int(cfg.get("workers", 1))}
    _write_rows(rows, ("n", "conditional_mass_outside", "stderr", "ratio", "hits"), cfg.get("out"),
                cfg.get("format", "csv"), meta)
    sys.stderr.write(f"delta_hat {fmt(res.delta_hat)} +- {fmt(res.delta_stderr)}\n")
    return EXIT_OK


def cmd_coherence(args) -> int:
    cfg = _merge(_load_config(args.config, "coherence"), args, _COMMON | {"n_list": "n_list", "kappa": "kappa"})
    _require(cfg, "n_list", "samples", "kappa")
    res = ex.coherence_experiment(float(cfg["kappa"]), cfg["n_list"], int(cfg["samples"]), int(cfg.get("seed", 0)),
                                  int(cfg.get("workers", 1)), tuple(cfg.get("table_n", (3, 5, 10, 20))),
                                  cfg.get("table_samples"))
    meta = {**res.metadata, "fit": res.fit.to_dict(),
            "single_coordinate_table": [p.row() for p in res.table],
            "sandwich_ok": all(p.sandwich_ok for p in res.points)}
    _write_rows([p.row() for p in res.points], COHERENCE_COLUMNS, cfg.get("out"), cfg.get("format", "csv"), meta)
    f = res.fit
    sys.stderr.write(f"slope {fmt(f.slope)} +- {fmt(f.slope_stderr)} theory {fmt(f.theory_rate)} "
                     f"relative_gap {fmt(f.relative_gap)}\n")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args.config, "compare")
    if args.kind:
        cfg["kind"] = args.kind
    params = dict(cfg.get("params", {}))
    for key in ("m", "eps", "delta", "w", "omega"):
        val = getattr(args, key, None)
        if val is None:
            continue
        params[key] = val if key == "m" else _as_list(val)
    if args.W is not None:
        params["W"] = _matrix(args.W).tolist()
    if args.diag is not None:
        params["W"] = np.diag(_parse_list(args.diag)).tolist()
    _require(cfg, "kind")
    rows = ex.compare_bounds_report(cfg["kind"], params)
    columns = list(rows[0].keys()) if rows else ["kind"]
    _write_rows(rows, columns, args.out or cfg.get("out"), args.format or cfg.get("format", "csv"), None)
    return EXIT_OK


def _as_list(v):
    return v if isinstance(v, list) else [v]


_COMMON = {
    "m": "m",
    "samples": "samples",
    "method": "method",
    "seed": "seed",
    "workers": "workers",
    "out": "out",
    "format": "format",
}


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atypia", description="Large-deviation rates of induced random states.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, run=True):
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--out", default=None)
        if run:
            sp.add_argument("config", nargs="?", help="JSON run configuration")
            sp.add_argument("--m", type=int)
            sp.add_argument("--samples", type=int)
            sp.add_argument("--method", choices=ex.METHODS)
            sp.add_argument("--seed", type=int)
            sp.add_argument("--workers", type=int)

    r = sub.add_parser("rate", help="closed-form rates")
    r.add_argument("family", choices=RATE_FAMILIES)
    for name in ("t", "eps", "q", "eta", "w", "omega"):
        r.add_argument(f"--{name}", type=float)
    r.add_argument("--m", type=int)
    r.add_argument("--m0", type=int)
    r.add_argument("--W", help="observable as a JSON matrix")
    r.add_argument("--diag", help="observable as a comma-separated diagonal")
    r.add_argument("--point", help="Gaussian rate point coordinates")
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.set_defaults(func=cmd_rate)

    s = sub.add_parser("solve", help="generic minimisation over a JSON constraint set")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("estimate", help="one Monte Carlo probability estimate")
    common(e)
    e.add_argument("--n", type=int)
    e.set_defaults(func=cmd_estimate)

    for name, func in (("sweep", cmd_sweep), ("concentration", cmd_concentration)):
        sp = sub.add_parser(name)
        common(sp)
        sp.add_argument("--n-list", dest="n_list", type=lambda t: _parse_list(t, int))
        if name == "concentration":
            sp.add_argument("--eps", type=float)
        sp.set_defaults(func=func)

    c = sub.add_parser("coherence")
    common(c)
    c.add_argument("--n-list", dest="n_list", type=lambda t: _parse_list(t, int))
    c.add_argument("--kappa", type=float)
    c.set_defaults(func=cmd_coherence)

    cmp_ = sub.add_parser("compare", help="exact exponents against Levy-lemma exponents")
    common(cmp_, run=False)
    cmp_.add_argument("config", nargs="?")
    cmp_.add_argument("--kind", choices=ex.COMPARE_KINDS)
    cmp_.add_argument("--m", type=int)
    for name in ("eps", "delta", "w", "omega"):
        cmp_.add_argument(f"--{name}", type=_parse_list)
    cmp_.add_argument("--W")
    cmp_.add_argument("--diag")
    cmp_.set_defaults(func=cmd_compare)
    return p


def _setup_logging():
    level = os.environ.get("ATYPIA_LOG", "WARNING").upper()
    if level.isdigit():
        lvl = int(level)
    else:
        lvl = getattr(logging, level, logging.WARNING)
    logging.basicConfig(level=lvl, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_CONFIG
    try:
        return args.func(args)
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        sys.stderr.write(f"non-convergence: {exc}\n")
        return EXIT_NONCONVERGENCE
    except (ConfigError, ValidationError, KeyError, TypeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"I/O error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
