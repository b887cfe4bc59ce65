"""Command-line interface.

Subcommands: identify, simulate, monitor, benchmark, eval, plotdata.
Data files are CSV with header ``t,y1..yn[,u1..um]``, one sample per row on
a uniform time grid; models are canonical JSON documents; monitor events
are emitted as line-delimited JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .benchmarks import BENCHMARK_NAMES, generate_benchmark
from .config import AUTO, RunConfig
from .dictionary import TimeSeries
from .errors import IdentificationError
from .modeldoc import (
    canonical_dumps,
    document_to_model,
    load_document,
    model_to_document,
    save_document,
    sha256_hex,
)
from .monitor import MonitorConfig, monitor_step, start_monitor
from .simulate import HybridModel, one_step_predictions, relative_error_ratio, segmentation_accuracy, simulate
from .subsystems import identify_subsystems
from .transitions import infer_transitions, rule_to_string

EXIT_OK = 0
EXIT_INPUT = 2       # malformed data, config or arguments
EXIT_IDENT = 3       # identification failed on valid input
EXIT_MODEL = 4       # model/data incompatibility


def _default_config_text():
    return json.dumps(RunConfig().to_dict(), indent=2)


_EPILOG = f"""exit codes:
  0  success
  2  input error (malformed CSV/config/arguments, empty data)
  3  identification failure (no consensus subsystem, mode budget exhausted)
  4  model/data incompatibility (dimension mismatch, bad model document)

default configuration (--config overrides any subset; unknown keys rejected):
{_default_config_text()}
"""


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# CSV formats


def read_data_csv(path) -> TimeSeries:
    """Parse a data CSV; validates the header and the uniform time grid."""
    fh = sys.stdin if path == "-" else open(path)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("empty data file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t":
            raise InputError("first CSV column must be 't'")
        n = sum(1 for h in header if re.fullmatch(r"y\d+", h))
        m = sum(1 for h in header if re.fullmatch(r"u\d+", h))
        expected = ["t"] + [f"y{i+1}" for i in range(n)] + [f"u{j+1}" for j in range(m)]
        if header != expected:
            raise InputError(f"CSV header must be {','.join(expected)!r}, got {','.join(header)!r}")
        if n == 0:
            raise InputError("data file declares no output columns")

        t_vals, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise InputError(f"line {lineno}: non-numeric value") from None
            t_vals.append(vals[0])
            rows.append(vals[1:])
    finally:
        if fh is not sys.stdin:
            fh.close()

    if len(rows) < 2:
        raise InputError("need at least two data rows")
    t = np.asarray(t_vals)
    arr = np.asarray(rows)
    h = t[1] - t[0]
    if h <= 0:
        raise InputError("time column must be strictly increasing")
    tol = 1e-9 * max(1.0, float(np.abs(t).max()))
    if np.abs(np.diff(t) - h).max() > tol:
        raise InputError("time column is not uniformly spaced")
    return TimeSeries(arr[:, :n], arr[:, n:] if m else None, float(h))


def write_data_csv(path, data: TimeSeries):
    S = data.n_samples
    t = np.arange(S) * data.sample_period
    cols = [t, *data.outputs.T, *data.inputs.T]
    header = ["t"] + [f"y{i+1}" for i in range(data.n_outputs)] + [
        f"u{j+1}" for j in range(data.n_inputs)
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(S):
            w.writerow([f"{c[k]:.17g}" for c in cols])


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return RunConfig.load(path)
    except (OSError, ValueError) as exc:
        raise InputError(f"bad config: {exc}") from None


def _load_model(path) -> HybridModel:
    try:
        doc = load_document(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model document: {exc}") from None
    return document_to_model(doc)


# ---------------------------------------------------------------------------
# identify


def _lambda_grid(cfg: RunConfig, targets):
    if cfg.lambda_grid != AUTO:
        return list(cfg.lambda_grid)
    base = float(np.mean(np.linalg.norm(targets, axis=0)))
    return [0.0] + [f * base for f in (1e-7, 1e-6, 1e-5, 1e-4, 1e-3)]


def cmd_identify(args) -> int:
    cfg = _load_config(args.config)
    data = read_data_csv(args.data)
    targets = data.targets()
    grid = _lambda_grid(cfg, targets)

    split = int(np.floor(0.8 * data.n_samples))
    M = data.n_transitions
    val_rows = np.arange(max(split - 1, 1), M)
    head = data.head(split) if split >= 3 and val_rows.size else data

    sweep = []
    for lam in grid:
        solver = replace(cfg.solver, lambda_w=lam)
        try:
            models, _ = identify_subsystems(head, cfg.dictionary, solver, cfg.limits,
                                            cfg.tol_merge)
            probe = HybridModel(models, [], cfg.dictionary, cfg.psi_dictionary, data.sample_period)
            preds, _ = one_step_predictions(probe, data)
            err = relative_error_ratio(targets[val_rows], preds[val_rows]) if val_rows.size else 0.0
        except (IdentificationError, ValueError):
            continue
        sweep.append((lam, err))
    if not sweep:
        print("identification failed for every lambda in the grid", file=sys.stderr)
        return EXIT_IDENT
    best_err = min(err for _, err in sweep)
    lam = max(l for l, err in sweep if err <= best_err * (1 + 1e-9) + 1e-15)

    solver = replace(cfg.solver, lambda_w=lam)
    try:
        models, seg = identify_subsystems(data, cfg.dictionary, solver, cfg.limits,
                                          cfg.tol_merge)
    except IdentificationError as exc:
        print(f"identification failed: {exc}", file=sys.stderr)
        return EXIT_IDENT
    rules = infer_transitions(seg, data, cfg.psi_dictionary, cfg.transition.lambda_v,
                              cfg.transition.accuracy_floor)
    model = HybridModel(models, rules, cfg.dictionary, cfg.psi_dictionary, data.sample_period)
    preds, _ = one_step_predictions(model, data, seg.labels)
    err_pct = relative_error_ratio(targets, preds)

    with open(args.data, "rb") as fh:
        fingerprint = sha256_hex(fh.read())
    metadata = {
        "config_hash": sha256_hex(canonical_dumps(cfg.to_dict()).encode()),
        "data_fingerprint": fingerprint,
        "seed": cfg.seed,
        "lambda_w": lam,
        "lambda_sweep": [[l, e] for l, e in sweep],
        "metrics": {
            "error_ratio_percent": err_pct,
            "unassigned_samples": seg.n_unassigned,
            "mode_sample_counts": [int(len(s.fit_rows)) for s in models],
        },
    }
    doc = model_to_document(model, data.n_outputs, data.n_inputs, metadata)
    out = args.out or "model.json"
    save_document(doc, out)

    if not args.quiet:
        print(f"K = {seg.K} subsystems (lambda_w = {lam:.6g})")
        for s in models:
            print(f"  mode {s.id}: {len(s.fit_rows)} samples")
            for o in range(s.n_outputs):
                terms = " + ".join(f"{c:.6g}*{nm}" for nm, c in s.active_terms(o)) or "0"
                print(f"    y{o+1}(t+1) = {terms}")
        if rules:
            print("transition rules:")
            for r in rules:
                flag = "  [low confidence]" if r.flagged else ""
                print(f"  {rule_to_string(r)} (accuracy {r.training_accuracy:.3f}){flag}")
        else:
            print("transition rules: none (single mode)")
        if seg.n_unassigned:
            print(f"warning: {seg.n_unassigned} samples unassigned")
        print(f"one-step error ratio: {err_pct:.6g}%")
        print(f"model written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    try:
        y0 = [float(x) for x in args.y0.split(",")]
    except ValueError:
        raise InputError(f"bad --y0 {args.y0!r}; expected comma-separated reals") from None
    u = None
    if args.inputs:
        u_data = read_data_csv(args.inputs)
        u = u_data.outputs if u_data.n_inputs == 0 else u_data.inputs
    try:
        res = simulate(model, y0, args.m0, u, args.steps)
    except (ValueError, KeyError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_MODEL
    out = args.out or "simulation.csv"
    S = res.trajectory.n_samples
    t = np.arange(S) * model.sample_period
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{i+1}" for i in range(model.n_outputs)] + ["mode"])
        for k in range(S):
            w.writerow([f"{t[k]:.17g}"] + [f"{v:.17g}" for v in res.trajectory.outputs[k]]
                       + [int(res.mode_trace[k])])
    if not args.quiet:
        print(f"simulated {S - 1} steps; switches at {res.switch_times}")
        if res.diverged:
            print("warning: trajectory diverged and was truncated")
        print(f"trajectory written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# monitor


def cmd_monitor(args) -> int:
    cfg = _load_config(args.config)
    if cfg.solver.epsilon is None:
        raise InputError("monitoring requires solver.epsilon in the config")
    mon_cfg = MonitorConfig(
        dictionary=cfg.dictionary,
        solver=cfg.solver,
        miss_limit=cfg.monitor.miss_limit,
        warmup=cfg.monitor.warmup,
        w_refit=cfg.monitor.w_refit,
        min_segment=cfg.limits.min_segment,
        tol_merge=cfg.tol_merge,
        diff_tol=cfg.monitor.diff_tol,
    )
    out = open(args.out, "w") if args.out else sys.stdout

    fh = sys.stdin if args.stream == "-" else open(args.stream)
    state = None
    n = m = 0
    events = 0
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError("empty stream") from None
        if not header or header[0] != "t":
            raise InputError("first stream column must be 't'")
        n = sum(1 for h in header if re.fullmatch(r"y\d+", h))
        m = sum(1 for h in header if re.fullmatch(r"u\d+", h))
        if n == 0:
            raise InputError("stream declares no output columns")
        state = start_monitor(mon_cfg, n, m)
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise InputError(f"line {lineno}: non-numeric value") from None
            if len(vals) != 1 + n + m:
                raise InputError(f"line {lineno}: expected {1 + n + m} fields")
            y, u = vals[1 : 1 + n], vals[1 + n :]
            state, event = monitor_step(state, y, u if m else None)
            if event is not None:
                events += 1
                print(json.dumps(event.to_json_obj(n)), file=out, flush=True)
    finally:
        if fh is not sys.stdin:
            fh.close()
        if out is not sys.stdout:
            out.close()
    if not args.quiet:
        print(f"stream ended after {state.t + 1} samples, {events} switch events,"
              f" {len(state.known_modes)} known modes", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark


def cmd_benchmark(args) -> int:
    params = {}
    if args.params:
        try:
            params = json.loads(args.params)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad --params JSON: {exc}") from None
    try:
        data, truth, mode_trace = generate_benchmark(
            args.name, params, steps=args.steps, noise_std=args.noise, seed=args.seed
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = args.out or f"{args.name}.csv"
    write_data_csv(out, data)
    truth_doc = model_to_document(truth, data.n_outputs, data.n_inputs, metadata={
        "benchmark": args.name,
        "steps": args.steps,
        "noise_std": float(args.noise),
        "seed": args.seed,
    })
    truth_doc["mode_trace"] = [int(k) for k in mode_trace]
    truth_path = re.sub(r"\.csv$", "", out) + ".truth.json"
    save_document(truth_doc, truth_path)
    if not args.quiet:
        print(f"{data.n_samples} samples written to {out}; truth model in {truth_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    data = read_data_csv(args.data)
    if model.n_outputs != data.n_outputs:
        print(f"model has {model.n_outputs} outputs, data has {data.n_outputs}", file=sys.stderr)
        return EXIT_MODEL
    preds, labels = one_step_predictions(model, data)
    metrics = {"error_ratio_percent": relative_error_ratio(data.targets(), preds)}

    truth_path = args.truth or re.sub(r"\.csv$", "", args.data) + ".truth.json"
    try:
        truth_doc = load_document(truth_path)
    except OSError:
        truth_doc = None
    if truth_doc is not None and "mode_trace" in truth_doc:
        metrics["segmentation_accuracy"] = segmentation_accuracy(
            labels, np.asarray(truth_doc["mode_trace"], dtype=int)
        )
    per_mode = []
    targets = data.targets()
    for s in sorted(model.subsystems, key=lambda s: s.id):
        rows = labels == s.id
        if rows.any():
            resid = float(np.sqrt(np.mean((targets[rows] - preds[rows]) ** 2)))
        else:
            resid = None
        per_mode.append({"mode": s.id, "samples": int(rows.sum()), "rms_residual": resid})
    metrics["per_mode_fit"] = per_mode
    print(canonical_dumps(metrics))
    return EXIT_OK


# ---------------------------------------------------------------------------
# plotdata


def cmd_plotdata(args) -> int:
    model = _load_model(args.model)
    data = read_data_csv(args.data)
    if model.n_outputs != data.n_outputs:
        print(f"model has {model.n_outputs} outputs, data has {data.n_outputs}", file=sys.stderr)
        return EXIT_MODEL
    preds, labels = one_step_predictions(model, data)
    out = args.out or "plotdata.csv"
    n = data.n_outputs
    t = np.arange(data.n_samples) * data.sample_period
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"y{i+1}" for i in range(n)]
                   + [f"fit_y{i+1}" for i in range(n)] + ["mode_label"])
        row0 = [f"{t[0]:.17g}"] + [f"{v:.17g}" for v in data.outputs[0]] * 2 + [int(labels[0])]
        w.writerow(row0)
        for k in range(data.n_transitions):
            w.writerow([f"{t[k+1]:.17g}"]
                       + [f"{v:.17g}" for v in data.outputs[k + 1]]
                       + [f"{v:.17g}" for v in preds[k]]
                       + [int(labels[k])])
    if not args.quiet:
        print(f"plot data written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--config", help="run configuration JSON")
    sp.add_argument("--seed", type=int, default=0, help="random seed where applicable")
    sp.add_argument("--out", help="output path")
    sp.add_argument("--quiet", action="store_true", help="suppress the human-readable summary")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="hybridid",
        description="Discover hybrid dynamical systems from time-series data: "
                    "subsystem dynamics, transition logic, simulation, online monitoring.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("identify", help="discover subsystems and transition rules from a data CSV")
    sp.add_argument("data", help="data CSV (header t,y1..[,u1..])")
    _add_common(sp)
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("simulate", help="simulate a model document forward")
    sp.add_argument("model", help="model JSON")
    sp.add_argument("--y0", required=True, help="initial outputs, comma-separated")
    sp.add_argument("--m0", type=int, default=1, help="initial mode id")
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--inputs", help="optional input CSV supplying u columns")
    _add_common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("monitor", help="stream monitoring: detect switches as line JSON events")
    sp.add_argument("stream", help="stream CSV path, or '-' for stdin")
    _add_common(sp)
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("benchmark", help="generate a benchmark dataset plus its truth sidecar")
    sp.add_argument("name", choices=BENCHMARK_NAMES)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--noise", type=float, default=0.0, help="measurement noise std")
    sp.add_argument("--params", help="generator parameter overrides as JSON")
    _add_common(sp)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("eval", help="evaluate a model against a data CSV")
    sp.add_argument("model")
    sp.add_argument("data")
    sp.add_argument("--truth", help="truth sidecar JSON (default: <data>.truth.json if present)")
    _add_common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plotdata", help="emit per-sample actual/fitted/mode-label CSV")
    sp.add_argument("model")
    sp.add_argument("data")
    _add_common(sp)
    sp.set_defaults(func=cmd_plotdata)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except IdentificationError as exc:
        print(f"identification failed: {exc}", file=sys.stderr)
        return EXIT_IDENT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
