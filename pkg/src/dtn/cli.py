"""Command-line interface: training runs, parameter sweeps, timing series.

Runs are described by JSON manifests (schema below) and produce JSON
reports in which everything outside the "timing" and "timestamp" keys is
a pure function of the manifest, so two runs of one manifest agree byte
for byte once those keys are dropped.

Manifest schema (format_version 1)::

    {
      "format_version": 1,
      "config":  {TrainConfig fields, all optional},
      "network": {"hidden_dims": [32], "activation": "tanh"},
      "classes": 3,                    # optional, default inferred
      "data": {"synth": {SynthShiftSpec fields}}
              | {"source": <descriptor>, "target": <descriptor>},
      "output_dir": "runs/demo"        # optional, default "."
    }

    descriptor: {"kind": "delimited", "path": "...", "has_labels": true}
              | {"kind": "idx", "images": "...", "labels": "..."}

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

import argparse
import datetime
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields

import numpy as np

from dtn import data as dio
from dtn import network, trainer
from dtn.errors import DataFormatError, ManifestError, NumericalError, ShapeError

FORMAT_VERSION = 1
MODEL_VERSION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_CONFIG_FIELDS = {f.name for f in fields(trainer.TrainConfig)}
_SYNTH_FIELDS = {f.name for f in fields(dio.SynthShiftSpec)}


# ---------------------------------------------------------------- manifests

def load_manifest(path):
    try:
        with open(path, "r") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"manifest {path} must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ManifestError(f"unsupported manifest format_version {version!r}")
    if "data" not in doc:
        raise ManifestError("manifest lacks a 'data' section")
    return doc


def config_from_manifest(doc, overrides=None):
    """TrainConfig from the manifest's config section plus CLI overrides."""
    section = dict(doc.get("config", {}))
    unknown = set(section) - _CONFIG_FIELDS
    if unknown:
        raise ManifestError(f"unknown config keys: {sorted(unknown)}")
    for key, value in (overrides or {}).items():
        if value is not None:
            section[key] = value
    try:
        return trainer.TrainConfig(**section)
    except (TypeError, ValueError) as e:
        raise ManifestError(f"bad config: {e}") from None


def _synth_spec(section):
    unknown = set(section) - _SYNTH_FIELDS
    if unknown:
        raise ManifestError(f"unknown synth keys: {sorted(unknown)}")
    try:
        return dio.SynthShiftSpec(**section)
    except (TypeError, ValueError, ShapeError) as e:
        raise ManifestError(f"bad synth spec: {e}") from None


def _load_descriptor(desc, role):
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ManifestError(f"{role.value} descriptor must be an object with a 'kind'")
    kind = desc["kind"]
    if kind == "delimited":
        return dio.load_delimited(desc["path"], bool(desc.get("has_labels", False)),
                                  delimiter=desc.get("delimiter", ","), role=role)
    if kind == "idx":
        resize = desc.get("resize_to")
        return dio.load_idx(desc["images"], desc.get("labels"), role=role,
                            resize_to=tuple(resize) if resize else None)
    raise ManifestError(f"unknown data kind {kind!r}")


def datasets_from_manifest(doc):
    """(source, target) datasets named by the manifest's data section."""
    section = doc["data"]
    if "synth" in section:
        return dio.gen_synth_shift(_synth_spec(section["synth"]))
    if "source" not in section or "target" not in section:
        raise ManifestError("data section needs 'synth' or 'source' + 'target'")
    try:
        source = _load_descriptor(section["source"], dio.Role.SOURCE)
        target = _load_descriptor(section["target"], dio.Role.TARGET)
    except FileNotFoundError as e:
        raise ManifestError(f"data file not found: {e.filename}") from None
    except KeyError as e:
        raise ManifestError(f"descriptor lacks key {e}") from None
    return source, target


def specs_from_manifest(doc, source, target):
    net = doc.get("network", {})
    hidden = list(net.get("hidden_dims", [32]))
    act_name = net.get("activation", "tanh")
    try:
        act = network.Activation(act_name)
    except ValueError:
        raise ManifestError(f"unknown activation {act_name!r}") from None
    if act is network.Activation.SOFTMAX_OUTPUT:
        raise ManifestError("hidden activation cannot be softmax")
    if source.labels is None:
        raise ManifestError("source dataset must carry labels")
    classes = int(doc.get("classes", source.labels.max() + 1))
    if classes < 2:
        raise ManifestError(f"need at least 2 classes, got {classes}")
    if source.labels.max() >= classes:
        raise ManifestError("source label exceeds class count")
    if target.labels is not None and target.labels.size and target.labels.max() >= classes:
        raise ManifestError("target label exceeds class count")
    return network.mlp_specs([source.n_features] + hidden + [classes], act)


# ------------------------------------------------------------ model files

def save_model(path, specs, params):
    """Versioned binary dump of the layer chain and its parameters."""
    acts = np.array([s.activation.value for s in specs])
    dims = np.array([specs[0].input_dim] + [s.output_dim for s in specs], dtype=np.int64)
    arrays = {"model_version": np.int64(MODEL_VERSION), "dims": dims, "activations": acts}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_model(path):
    """Inverse of save_model; round-trips parameters bit-exactly."""
    try:
        archive = np.load(path)
    except FileNotFoundError:
        raise DataFormatError(f"model file not found: {path}") from None
    except (OSError, ValueError) as e:
        raise DataFormatError(f"unreadable model file {path}: {e}") from None
    with archive:
        if "model_version" not in archive or int(archive["model_version"]) != MODEL_VERSION:
            raise DataFormatError(f"unsupported model file version in {path}")
        dims = archive["dims"]
        acts = archive["activations"]
        specs = [
            network.LayerSpec(int(dims[i]), int(dims[i + 1]), network.Activation(str(acts[i])))
            for i in range(len(acts))
        ]
        params = network.NetworkParams(
            [archive[f"w{i}"] for i in range(len(specs))],
            [archive[f"b{i}"] for i in range(len(specs))],
        )
    network.validate_specs(specs)
    return specs, params


# ---------------------------------------------------------------- reports

def _jsonify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_jsonify)
        f.write("\n")


def _accuracy(pred, truth):
    return float(np.mean(pred == truth))


def run_manifest(doc, config):
    """Execute one training run; returns (report payload, params, specs)."""
    source, target = datasets_from_manifest(doc)
    specs = specs_from_manifest(doc, source, target)
    start = time.perf_counter()
    params, report = trainer.fit(source, target, specs, config)
    total = time.perf_counter() - start

    effective = dict(doc)
    effective["config"] = asdict(config)
    result = {
        "iterations": report.iterations,
        "label_changes": list(report.label_changes),
        "epochs": [
            {"iteration": r.iteration, "epoch": r.epoch, "objective": r.objective,
             "nll": r.nll, "marginal": r.marginal, "conditional": r.conditional}
            for r in report.epochs
        ],
        "final_labels": report.final_labels.tolist(),
        "baseline_accuracy": None,
        "accuracy": None,
        "accuracy_series": None,
        "model_file": "model.npz",
    }
    if target.labels is not None:
        series = [_accuracy(lbl, target.labels) for lbl in report.iteration_labels]
        result["baseline_accuracy"] = series[0]
        result["accuracy"] = series[-1]
        result["accuracy_series"] = series
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "train-report",
        "manifest": effective,
        "result": result,
        "timing": {
            "epoch_seconds": [r.seconds for r in report.epochs],
            "total_seconds": total,
        },
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return payload, params, specs


# --------------------------------------------------------------- commands

def _config_overrides(args):
    return {
        "lam": args.lam, "mu": args.mu, "batch_size": args.batch_size,
        "label_iters": args.label_iters, "learning_rate": args.lr,
        "epochs_per_iter": args.epochs, "seed": args.seed,
        "target_nll": None if args.target_nll is None else args.target_nll == "on",
    }


def cmd_train(args):
    """Run one manifest and write report.json + model.npz."""
    doc = load_manifest(args.manifest)
    config = config_from_manifest(doc, _config_overrides(args))
    out_dir = args.output_dir or doc.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    payload, params, specs = run_manifest(doc, config)
    save_model(os.path.join(out_dir, "model.npz"), specs, params)
    write_json(os.path.join(out_dir, "report.json"), payload)
    acc = payload["result"]["accuracy"]
    suffix = f", target accuracy {acc:.4f}" if acc is not None else ""
    print(f"wrote {os.path.join(out_dir, 'report.json')} "
          f"({payload['result']['iterations']} iterations{suffix})")
    return 0


def _point_seed(base_seed, index, rep):
    # deterministic per (point, repeat), independent of execution order
    return int(np.random.SeedSequence([int(base_seed), int(index), int(rep)]).generate_state(1)[0])


def _sweep_configs(doc, parameter, value, overrides):
    config = config_from_manifest(doc, overrides)
    section = asdict(config)
    if parameter == "lambda_mu":
        section["lam"] = section["mu"] = float(value)
    elif parameter == "batch_size":
        section["batch_size"] = int(value)
    elif parameter == "iters":
        section["label_iters"] = int(value)
    else:
        raise ManifestError(f"unknown sweep parameter {parameter!r}")
    return section


def cmd_sweep(args):
    """Train once per parameter value; write per-run reports + a summary."""
    doc = load_manifest(args.manifest)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ManifestError("sweep needs a nonempty values list")
    out_dir = args.output_dir or doc.get("output_dir", ".")
    os.makedirs(out_dir, exist_ok=True)
    overrides = _config_overrides(args)
    base_seed = config_from_manifest(doc, overrides).seed

    jobs = []
    for idx, raw in enumerate(values):
        section = _sweep_configs(doc, args.parameter, raw, overrides)
        for rep in range(args.repeats):
            jobs.append((idx, raw, rep, dict(section, seed=_point_seed(base_seed, idx, rep))))

    def _run(job):
        # a bad point is recorded as failed, the sweep keeps going
        idx, raw, rep, section = job
        try:
            payload, _, _ = run_manifest(doc, trainer.TrainConfig(**section))
            return idx, raw, rep, payload, None
        except (NumericalError, ValueError, ShapeError) as e:
            return idx, raw, rep, None, f"{type(e).__name__}: {e}"

    workers = max(1, int(os.environ.get("DTN_WORKERS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run, jobs))
    else:
        outcomes = [_run(j) for j in jobs]

    rows = []
    for idx, raw in enumerate(values):
        mine = [o for o in outcomes if o[0] == idx]
        accs, secs, errors = [], [], []
        for _, _, rep, payload, error in mine:
            if error is not None:
                errors.append(error)
                continue
            name = f"point_{idx}_rep_{rep}.json"
            write_json(os.path.join(out_dir, name), payload)
            accs.append(payload["result"]["accuracy"])
            secs.append(payload["timing"]["total_seconds"])
        row = {"value": raw, "repeats": len(mine), "failed": len(errors)}
        row["accuracy"] = (float(np.median([a for a in accs if a is not None]))
                           if accs and any(a is not None for a in accs) else None)
        row["seconds"] = float(np.median(secs)) if secs else None
        if errors:
            row["errors"] = errors
        rows.append(row)

    summary = {
        "format_version": FORMAT_VERSION,
        "kind": "sweep-summary",
        "parameter": args.parameter,
        "rows": rows,
        "repeats": args.repeats,
        "manifest": dict(doc),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, "sweep_summary.json")
    write_json(path, summary)
    for row in rows:
        acc = "failed" if row["accuracy"] is None else f"{row['accuracy']:.4f}"
        print(f"{args.parameter}={row['value']}: accuracy {acc}")
    print(f"wrote {path}")
    return 0


def cmd_timing(args):
    """Measure mean epoch seconds on synthetic data of each size."""
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    if not sizes:
        raise ManifestError("timing needs a nonempty sizes list")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ManifestError(f"sizes must be strictly ascending, got {sizes}")
    if any(n < args.batch_size for n in sizes):
        raise ManifestError(f"every size must be >= batch size {args.batch_size}")
    os.makedirs(args.output_dir, exist_ok=True)

    def _measure(n, seed):
        spec = dio.SynthShiftSpec(
            classes=2, dim=args.dim, per_class=n // 2, angle=np.pi / 8,
            translation=(1.0,) + (0.0,) * (args.dim - 1), noise_ratio=1.5, seed=seed)
        source, target = dio.gen_synth_shift(spec)
        specs = network.mlp_specs([args.dim, args.hidden, 2])
        config = trainer.TrainConfig(
            lam=10.0, mu=10.0, batch_size=args.batch_size, label_iters=1,
            learning_rate=0.01, epochs_per_iter=3, seed=seed)
        _, report = trainer.fit(source, target, specs, config)
        return [r.seconds for r in report.epochs if r.iteration == 1]

    _measure(max(2 * args.batch_size, 64), args.seed)  # warm caches and JIT
    rows = []
    for n in sizes:
        secs = _measure(n, args.seed)
        rows.append({"n": n, "mean_seconds": float(np.mean(secs)),
                     "std_seconds": float(np.std(secs)), "epochs": len(secs)})

    fit_stats = None
    if len(rows) >= 2:
        xs = np.array([r["n"] for r in rows], dtype=np.float64)
        ys = np.array([r["mean_seconds"] for r in rows])
        slope, intercept = np.polyfit(xs, ys, 1)
        residual = ys - (slope * xs + intercept)
        total = ys - ys.mean()
        r2 = 1.0 - float(residual @ residual) / float(total @ total)
        fit_stats = {"slope": float(slope), "intercept": float(intercept), "r_squared": r2}

    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "timing",
        "series": rows,
        "linear_fit": fit_stats,
        "batch_size": args.batch_size,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(args.output_dir, "timing.json")
    write_json(path, payload)
    for row in rows:
        print(f"n={row['n']}: {row['mean_seconds']:.6f}s per epoch (std {row['std_seconds']:.6f})")
    if fit_stats:
        print(f"linear fit R^2 = {fit_stats['r_squared']:.4f}")
    print(f"wrote {path}")
    return 0


def cmd_gen_synth(args):
    """Materialize a synthetic shifted dataset pair as delimited files."""
    translation = tuple(float(t) for t in args.translation.split(",")) if args.translation else ()
    spec = dio.SynthShiftSpec(
        classes=args.classes, dim=args.dim, per_class=args.per_class,
        angle=args.angle, translation=translation, noise_ratio=args.noise_ratio,
        seed=args.seed, noise_scale=args.noise_scale, radius=args.radius)
    source, target = dio.gen_synth_shift(spec)
    os.makedirs(args.output_dir, exist_ok=True)
    src_path = os.path.join(args.output_dir, "source.csv")
    tgt_path = os.path.join(args.output_dir, "target.csv")
    dio.save_delimited(src_path, source.features, source.labels)
    dio.save_delimited(tgt_path, target.features, target.labels)
    write_json(os.path.join(args.output_dir, "synth.json"),
               {"format_version": FORMAT_VERSION, "kind": "synth-spec",
                "spec": asdict(spec)})
    print(f"wrote {src_path} and {tgt_path} "
          f"({spec.classes * spec.per_class} samples per domain)")
    return 0


def cmd_predict(args):
    """Apply a saved model to a feature file; write one label per line."""
    specs, params = load_model(args.model)
    if args.format == "idx":
        dataset = dio.load_idx(args.features, args.labels)
    else:
        dataset = dio.load_delimited(args.features, args.has_labels,
                                     delimiter=args.delimiter)
    labels = trainer.predict(params, specs, dataset)
    with open(args.out, "w") as f:
        for y in labels:
            f.write(f"{int(y)}\n")
    print(f"wrote {args.out} ({labels.size} predictions)")
    if dataset.labels is not None:
        print(f"accuracy {_accuracy(labels, dataset.labels):.4f}")
    return 0


# ----------------------------------------------------------------- parser

def _add_config_flags(p):
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="marginal penalty weight")
    p.add_argument("--mu", type=float, default=None, help="conditional penalty weight")
    p.add_argument("--batch-size", type=int, default=None, help="paired batch size S")
    p.add_argument("--label-iters", type=int, default=None, help="outer iteration cap T")
    p.add_argument("--lr", type=float, default=None, help="learning rate")
    p.add_argument("--epochs", type=int, default=None, help="epochs per iteration")
    p.add_argument("--seed", type=int, default=None, help="run seed")
    p.add_argument("--target-nll", choices=("on", "off"), default=None,
                   help="include pseudo-labeled target samples in the likelihood")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dtn",
        description="Deep transfer network: domain-adaptive MLP training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training manifest")
    p.add_argument("manifest")
    p.add_argument("--output-dir", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train once per parameter value")
    p.add_argument("manifest")
    p.add_argument("--parameter", required=True,
                   choices=("lambda_mu", "batch_size", "iters"))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--repeats", type=int, default=1,
                   help="runs per value (summary takes the median)")
    p.add_argument("--output-dir", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("timing", help="epoch wall time vs dataset size")
    p.add_argument("--sizes", required=True, help="comma-separated ascending sizes")
    p.add_argument("--output-dir", default=".")
    p.add_argument("--batch-size", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("gen-synth", help="write a synthetic shifted dataset pair")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--angle", type=float, default=np.pi / 8)
    p.add_argument("--translation", default="", help="comma-separated offsets")
    p.add_argument("--noise-ratio", type=float, default=1.5)
    p.add_argument("--noise-scale", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("predict", help="apply a saved model to a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--format", choices=("delimited", "idx"), default="delimited")
    p.add_argument("--labels", default=None, help="idx label file (optional)")
    p.add_argument("--has-labels", action="store_true",
                   help="delimited file carries a trailing label column")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--out", default="predictions.txt")
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ManifestError, DataFormatError, ShapeError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
