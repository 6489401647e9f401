"""Command-line runner: ``rbsim <subcommand> --plan PLAN.json --out DIR``.

Every run writes into ``DIR/<plan hash>/``: data tables (CSV or JSON), fit
results as JSON and a ``manifest.json`` recording the normalized plan, seed,
thread count, package versions and a checksum of every artifact.

Exit codes: 0 success, 2 invalid plan or arguments, 3 file errors,
4 a fit did not converge (artifacts are still written).
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__, distances, engine, flicker, leakage
from .estimate import hoeffding_k
from .ptm import error_rate
from .noise import LEAKAGE_KINDS, MARKOVIAN_KINDS

EXIT_OK, EXIT_SCHEMA, EXIT_IO, EXIT_FIT = 0, 2, 3, 4
SUBCOMMANDS = ("srb", "irb", "leakage", "flicker-ramsey", "flicker-rb", "distances", "sweep")


class PlanError(ValueError):
    """A plan failed validation; ``errors`` lists one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# --- plan schema -------------------------------------------------------------------------

def _noise_schema(kinds):
    return {
        "type": "object",
        "additionalProperties": False,
        "required": ["kind", "r"],
        "properties": {
            "kind": {"enum": list(kinds)},
            "r": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.25},
            "seed": {"type": "integer", "minimum": 0},
            "options": {"type": "object"},
        },
    }


_SEED = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}
_POS = {"type": "integer", "minimum": 1}
_GRID = {"type": "array", "items": _POS, "minItems": 2}
_RATE = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.25}
_SHOTS = {"oneOf": [{"type": "null"}, _POS]}

_COMMON = {"seed": _SEED, "K": _POS, "m_max": _POS, "m_grid": _GRID, "shots": _SHOTS}

SCHEMAS = {
    "srb": {"noise": _noise_schema(MARKOVIAN_KINDS), "fit_weighted": {"type": "boolean"}},
    "irb": {"noise": _noise_schema(MARKOVIAN_KINDS),
            "interleaved_gate": {"type": "integer", "minimum": 0, "maximum": 23},
            "interleaved_noise": {"oneOf": [{"type": "null"}, _noise_schema(MARKOVIAN_KINDS)]}},
    "leakage": {"noise": _noise_schema(LEAKAGE_KINDS)},
    "flicker-ramsey": {"amplitude": {"type": "number", "minimum": 0}, "target_r": _RATE,
                       "n_steps": _POS, "ensemble": _POS, "cutoff_steps": _POS,
                       "dt": {"type": "number", "exclusiveMinimum": 0}},
    "flicker-rb": {"amplitude": {"type": "number", "minimum": 0}, "target_r": _RATE,
                   "identity": {"type": "boolean"},
                   "model": {"enum": ["exponential", "gaussian"]},
                   "dt": {"type": "number", "exclusiveMinimum": 0}},
    "distances": {"rates": {"type": "array", "items": _RATE, "minItems": 1},
                  "draws": _POS, "comparator": {"enum": ["exact", "nominal"]}},
    "sweep": {"noise": _noise_schema(MARKOVIAN_KINDS),
              "K_values": {"type": "array", "items": _POS, "minItems": 1}, "repeats": _POS},
}

DEFAULTS = {
    "srb": {"K": engine.DEFAULT_K, "m_max": engine.DEFAULT_M_MAX, "shots": None,
            "fit_weighted": False},
    "irb": {"K": engine.DEFAULT_K, "m_max": engine.DEFAULT_M_MAX, "shots": None,
            "interleaved_noise": None},
    "leakage": {"K": engine.DEFAULT_K, "m_max": engine.DEFAULT_M_MAX, "shots": None},
    "flicker-ramsey": {"n_steps": 4000, "ensemble": flicker.RAMSEY_ENSEMBLE, "dt": 1.0},
    "flicker-rb": {"K": 250, "m_max": 1024, "identity": False, "dt": 1.0, "model": None},
    "distances": {"rates": [1e-4, 1e-3, 1e-2], "draws": 20, "comparator": "exact"},
    "sweep": {"K_values": [10, 30, 100, 300, 1000, 3000, 10000], "repeats": 5,
              "m_max": engine.DEFAULT_M_MAX, "shots": None},
}

_REQUIRED = {"srb": ["noise"], "irb": ["noise", "interleaved_gate"], "leakage": ["noise"],
             "sweep": ["noise"]}
_COMMON_USED = {
    "srb": ("seed", "K", "m_max", "m_grid", "shots"),
    "irb": ("seed", "K", "m_max", "m_grid", "shots"),
    "leakage": ("seed", "K", "m_max", "m_grid", "shots"),
    "flicker-ramsey": ("seed",),
    "flicker-rb": ("seed", "K", "m_max", "m_grid"),
    "distances": ("seed",),
    "sweep": ("seed", "m_max", "m_grid", "shots"),
}


def plan_schema(subcommand: str) -> dict:
    props = {k: _COMMON[k] for k in _COMMON_USED[subcommand]}
    props.update(SCHEMAS[subcommand])
    return {"type": "object", "additionalProperties": False, "properties": props,
            "required": ["seed", *_REQUIRED.get(subcommand, [])]}


def _field(err) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        return f"unknown key: {err.message}"
    if err.validator == "required":
        return f"{path + ': ' if path else ''}{err.message}"
    return f"{path or '<plan>'}: {err.message}"


def normalize_plan(subcommand: str, plan: dict) -> dict:
    """Validate against the subcommand schema and fill defaults; raises PlanError."""
    if subcommand not in SUBCOMMANDS:
        raise PlanError([f"unknown subcommand {subcommand!r}"])
    if not isinstance(plan, dict):
        raise PlanError(["<plan>: must be a JSON object"])
    validator = jsonschema.Draft7Validator(plan_schema(subcommand))
    errors = sorted(validator.iter_errors(plan), key=lambda e: list(e.absolute_path))
    if errors:
        raise PlanError([_field(e) for e in errors])
    out = {**copy.deepcopy(DEFAULTS[subcommand]), **copy.deepcopy(plan)}
    if "m_max" in out or "m_grid" in out:
        grid = out.get("m_grid") or list(engine.default_m_grid(out["m_max"]))
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise PlanError(["m_grid: must be strictly increasing"])
        out["m_grid"] = [int(m) for m in grid]
        out["m_max"] = int(grid[-1])
    if "noise" in out:
        out["noise"] = {"seed": 0, "options": {}, **out["noise"]}
    if out.get("interleaved_noise"):
        out["interleaved_noise"] = {"seed": 0, "options": {}, **out["interleaved_noise"]}
    if subcommand.startswith("flicker"):
        if ("amplitude" in out) == ("target_r" in out):
            raise PlanError(["amplitude/target_r: give exactly one of them"])
    return out


def validate_plan(path, subcommand: str, seed: int | None = None) -> dict:
    """Read a JSON plan file and return the normalized plan.

    A ``seed`` passed here (the ``--seed`` flag) overrides the plan's seed.
    """
    text = Path(path).read_text()
    try:
        plan = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanError([f"<plan>: not valid JSON ({exc})"]) from exc
    if seed is not None and isinstance(plan, dict):
        plan["seed"] = seed
    return normalize_plan(subcommand, plan)


def plan_hash(subcommand: str, plan: dict) -> str:
    blob = json.dumps({"subcommand": subcommand, "plan": plan}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- output helpers ------------------------------------------------------------------------

class _Writer:
    def __init__(self, root: Path, fmt: str):
        self.root = root
        self.fmt = fmt
        self.files = {}

    def text(self, name: str, content: str):
        path = self.root / name
        path.write_text(content)
        self.files[name] = hashlib.sha256(content.encode()).hexdigest()

    def json(self, name: str, obj):
        self.text(name, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def table(self, stem: str, rows: list[dict]):
        if self.fmt == "json":
            self.json(stem + ".json", rows)
            return
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else [], lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        self.text(stem + ".csv", buf.getvalue())

    def series(self, stem: str, series):
        if self.fmt == "json":
            self.table(stem, _series_rows(series))
        else:
            self.text(stem + ".csv", series.to_csv())
        self.text(stem + ".meta.json", series.metadata_json() + "\n")


def _series_rows(series) -> list[dict]:
    return [{"m": int(m), "F_mean": float(f), "F_stderr": float(e), "K": int(k)}
            for m, f, e, k in zip(series.m, series.mean, series.stderr, series.k)]


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, np.generic):
        return _jsonable(o.item())
    if isinstance(o, float) and not math.isfinite(o):
        return None
    return o


# --- subcommands ---------------------------------------------------------------------

def _plan_for(plan: dict, protocol: str, threads: int, **extra) -> engine.ExperimentPlan:
    return engine.ExperimentPlan(protocol, plan["K"], tuple(plan["m_grid"]), plan["shots"],
                                 plan["noise"], seed=plan["seed"], threads=threads, **extra)


def _positive(r: float, floor: float = 1e-12):
    """True error rate, or None when it is zero up to round-off (no accuracy defined)."""
    return r if r > floor else None


def _cmd_srb(plan, out: _Writer, threads) -> bool:
    model = engine.resolve_model(plan["noise"])
    series = engine.run_srb(_plan_for(plan, "srb", threads), model)
    res = engine.fit(series, weighted=plan["fit_weighted"], true_r=_positive(model.true_error_rate()))
    out.series("series", series)
    out.json("fit.json", res.to_dict())
    return res.converged


def _cmd_irb(plan, out, threads) -> bool:
    model = engine.resolve_model(plan["noise"])
    ep = _plan_for(plan, "irb", threads, interleaved_gate=plan["interleaved_gate"],
                   interleaved_noise=plan["interleaved_noise"])
    e_int = engine.interleaved_channel(ep)
    ref, inter = engine.run_irb(ep, model, e_int)
    r_true = error_rate(e_int)
    res = engine.analyze_irb(ref, inter, _positive(r_true))
    out.series("reference", ref)
    out.series("interleaved", inter)
    out.json("fit_reference.json", res.reference.to_dict())
    out.json("fit_interleaved.json", res.interleaved.to_dict())
    out.json("irb.json", res.to_dict())
    return res.reference.converged and res.interleaved.converged


def _cmd_leakage(plan, out, threads) -> bool:
    model = engine.resolve_model(plan["noise"])
    series = leakage.run_leakage_rb(model, plan["K"], plan["m_grid"], plan["seed"], plan["shots"],
                                    threads)
    res = leakage.fit_leakage(series, _positive(model.true_error_rate()))
    p = leakage.predicted_params(model)
    out.series("series", series)
    out.json("fit.json", {**res.to_dict(), "predicted": {"alpha": p.alpha, "A55": p.a55,
                                                         "A51": p.a51, "C3": p.C3}})
    return res.converged


def _amplitude(plan, cutoff_steps: int) -> float:
    if "amplitude" in plan:
        return float(plan["amplitude"])
    return flicker.amplitude_for_error_rate(plan["target_r"], cutoff_steps, seed=plan["seed"],
                                            dt=plan["dt"])


def _cmd_flicker_ramsey(plan, out, threads) -> bool:
    cutoff = plan.get("cutoff_steps") or plan["n_steps"]
    amp = _amplitude(plan, cutoff)
    curve = flicker.ramsey(amp, plan["n_steps"], plan["ensemble"], plan["seed"], plan["dt"], cutoff)
    if out.fmt == "json":
        out.table("ramsey", [{"t": float(t), "sigma": float(s)} for t, s in zip(curve.times, curve.sigma)])
    else:
        out.text("ramsey.csv", curve.to_csv())
    out.json("t2.json", {
        "amplitude": amp, "t2_crossing": curve.t2_crossing, "t2_gaussian": curve.t2_gaussian,
        "t2_exponential": curve.t2_exponential, "crossing_is_lower_bound": curve.crossing_is_lower_bound,
        "rms_gaussian": curve.rms_gaussian, "rms_exponential": curve.rms_exponential,
        "gate_fidelity": curve.gate_fidelity(flicker.PULSE_STEPS * plan["dt"]),
        "t2_over_tg": curve.t2_crossing / (flicker.PULSE_STEPS * plan["dt"])})
    return True


def _cmd_flicker_rb(plan, out, threads) -> bool:
    grid = plan["m_grid"]
    amp = _amplitude(plan, flicker.expected_experiment_steps(grid, plan["dt"]))
    res = flicker.run_flicker_rb(amp, plan["K"], grid, plan["seed"], plan["dt"], plan["identity"])
    out.series("series", res.series)
    kinds = [plan["model"]] if plan["model"] else (
        ["exponential", "gaussian"] if plan["identity"] else ["exponential"])
    ok = True
    fits = {}
    for kind in kinds:
        f = engine.fit(res.series, kind, true_r=None if plan["identity"] else res.true_r)
        fits[kind] = f.to_dict()
        ok &= f.converged
    out.json("fit.json", {"amplitude": amp, "true_r": res.true_r, "fits": fits})
    return ok


def _cmd_distances(plan, out, threads) -> bool:
    rows = distances.figure1_rows(plan["rates"], plan["draws"], plan["seed"], plan["comparator"])
    out.table("distances", rows)
    return True


def _cmd_sweep(plan, out, threads) -> bool:
    rows = []
    for i, k in enumerate(plan["K_values"]):
        s = engine.repeated_srb(plan["noise"], k, plan["m_grid"], plan["repeats"],
                                plan["seed"] + 1000 * i, plan["shots"], threads)
        rows.append({"K": k, "mu_bar": s["mu_bar"], "s": s["s"], "C_bar": s["C_bar"], "n": s["n"]})
    out.table("sweep", rows)
    hk = hoeffding_k(0.1, 1e-4, 1.0)
    sufficient = None
    for i in range(len(rows)):
        if all(r["mu_bar"] is not None and abs(r["mu_bar"]) <= 0.3 for r in rows[i:]):
            sufficient = rows[i]["K"]
            break
    out.json("report.json", {
        "rows": rows,
        "hoeffding": {"delta": 0.1, "epsilon": 1e-4, "range": 1.0, "K_per_point": hk},
        "empirical_K_within_factor_two": sufficient,
        "ratio": hk / sufficient if sufficient else None,
    })
    return True


HANDLERS = {"srb": _cmd_srb, "irb": _cmd_irb, "leakage": _cmd_leakage,
            "flicker-ramsey": _cmd_flicker_ramsey, "flicker-rb": _cmd_flicker_rb,
            "distances": _cmd_distances, "sweep": _cmd_sweep}


def run(subcommand: str, plan: dict, out_dir, threads: int = 1, fmt: str = "csv",
        plan_path: str | None = None) -> tuple[int, Path]:
    """Execute a normalized plan; returns (exit status, run directory)."""
    root = Path(out_dir) / plan_hash(subcommand, plan)
    root.mkdir(parents=True, exist_ok=True)
    writer = _Writer(root, fmt)
    ok = HANDLERS[subcommand](plan, writer, threads)
    manifest = {
        "subcommand": subcommand,
        "plan": plan,
        "plan_path": plan_path,
        "seed": plan["seed"],
        "threads": threads,
        "format": fmt,
        "versions": {"rbsim": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "artifacts": dict(sorted(writer.files.items())),
        "fits_converged": bool(ok),
    }
    (root / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return (EXIT_OK if ok else EXIT_FIT), root


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbsim", description="Randomized benchmarking simulations.")
    p.add_argument("--version", action="version", version=f"rbsim {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--plan", required=True, help="JSON plan file")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, help="overrides the plan's seed")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_SCHEMA
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_SCHEMA
    try:
        plan = validate_plan(args.plan, args.subcommand, args.seed)
    except PlanError as exc:
        for msg in exc.errors:
            print(f"plan error: {msg}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        status, root = run(args.subcommand, plan, args.out, args.threads, args.format, args.plan)
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    if status == EXIT_FIT:
        print(f"fit did not converge; artifacts in {root}", file=sys.stderr)
    else:
        print(root)
    return status


if __name__ == "__main__":
    sys.exit(main())
