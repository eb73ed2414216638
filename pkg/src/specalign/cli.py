"""Command-line entry points: gen-data, train, eval, spectra, a-distance.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
divergence. All outputs are deterministic for fixed flags and seed; no
timestamps are ever written.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys

import numpy as np

from .data import (
    Dataset,
    gen_blobs_shift,
    gen_two_moons,
    load_csv_features,
    load_manifest,
    parse_kv_file,
    save_csv_features,
    save_manifest,
    split,
    SplitSpec,
    ssda_sample,
)
from .errors import (
    ConfigError,
    DataFormatError,
    DimensionError,
    DivergenceError,
    GraphConstructionError,
    InsufficientClassError,
    SpecalignError,
)
from .graph import SimilarityMetric
from .model import Network, NetworkSpec
from .spectral import GsaConfig, spectral_distance, spectrum
from .trainer import TrainConfig, a_distance, default_spec, evaluate, extract_features, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

CHECKPOINT_MAGIC = "specalign-checkpoint v1"


# ---------------------------------------------------------------------------
# Checkpoint serialization: versioned plain text, exact float round-trip.


def config_fingerprint(cfg: TrainConfig) -> str:
    payload = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_checkpoint(path, net: Network, fingerprint: str = ""):
    lines = [CHECKPOINT_MAGIC, f"fingerprint {fingerprint or 'none'}"]
    for head in ("feat", "cls", "disc"):
        widths = getattr(net.spec, f"{head}_widths")
        lines.append(f"spec {head} {','.join(str(w) for w in widths)}")
    for head in ("feat", "cls", "disc"):
        for i, layer in enumerate(getattr(net, head).params()):
            for attr in ("weights", "bias"):
                arr = getattr(layer, attr)
                shape = " ".join(str(s) for s in arr.shape)
                lines.append(f"tensor {head}.{i}.{attr} {shape}")
                lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> Network:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path}: not a recognized checkpoint file")
    widths = {}
    i = 2
    while i < len(lines) and lines[i].startswith("spec "):
        _, head, ws = lines[i].split(" ", 2)
        widths[head] = tuple(int(w) for w in ws.split(","))
        i += 1
    try:
        spec = NetworkSpec(widths["feat"], widths["cls"], widths["disc"])
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing spec line for {exc}") from exc
    net = Network(spec, seed=0)
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if parts[0] != "tensor":
            raise DataFormatError(f"{path}: line {i + 1}: expected tensor header")
        head, layer_idx, attr = parts[1].split(".")
        shape = tuple(int(s) for s in parts[2:])
        values = np.array([float(v) for v in lines[i + 1].split()])
        if values.size != int(np.prod(shape)):
            raise DataFormatError(f"{path}: line {i + 2}: wrong value count")
        target = getattr(getattr(net, head).params()[int(layer_idx)], attr)
        if target.shape != shape:
            raise DimensionError(
                f"{path}: tensor {parts[1]} shape {shape} does not fit spec {target.shape}"
            )
        target[...] = values.reshape(shape)
        i += 2
    return net


# ---------------------------------------------------------------------------
# Config handling: defaults <- config file <- explicit CLI flags.

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _coerce(name: str, value: str, target_type):
    if target_type is bool:
        low = value.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"config key {name}: expected boolean, got {value!r}")
    if name == "bandwidth" and value.lower() in ("none", ""):
        return None
    try:
        return target_type(value)
    except ValueError as exc:
        raise ConfigError(f"config key {name}: {exc}") from exc


def build_train_config(config_path, overrides: dict) -> TrainConfig:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    values = {}
    if config_path:
        raw = parse_kv_file(config_path)
        unknown = set(raw) - set(fields)
        if unknown:
            raise ConfigError(f"{config_path}: unknown config keys {sorted(unknown)}")
        for name, text in raw.items():
            ftype = fields[name].type
            base = {"int": int, "float": float, "bool": bool, "str": str,
                    "float | None": float}.get(ftype, str)
            values[name] = _coerce(name, text, base)
    for name, val in overrides.items():
        if val is not None:
            values[name] = val
    return TrainConfig(**values)


def _parse_seeds(text: str):
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",") if s.strip() != ""]


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_gen_data(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "two-moons":
        ss = np.random.SeedSequence(args.seed)
        s_seed, t_seed = ss.spawn(2)
        source = gen_two_moons(args.n, args.noise, 0.0, s_seed, domain="source")
        target = gen_two_moons(args.n, args.noise, args.rotation, t_seed, domain="target")
        name = f"two-moons-rot{args.rotation:g}"
        num_classes, dim = 2, 2
    elif args.kind == "blobs":
        shift_vec = np.full(args.dim, args.shift / np.sqrt(args.dim))
        source, target = gen_blobs_shift(
            args.n, args.classes, args.dim, shift_vec, args.spread, args.seed
        )
        name = f"blobs-c{args.classes}-d{args.dim}"
        num_classes, dim = args.classes, args.dim
    else:
        raise ConfigError(f"unknown generator kind {args.kind!r}")

    save_csv_features(os.path.join(args.out, "source.csv"), source)
    target_test_name = None
    if args.test_fraction > 0.0:
        tr, te = split(
            target, SplitSpec("inductive", test_fraction=args.test_fraction, seed=args.seed)
        )
        save_csv_features(os.path.join(args.out, "target.csv"), tr)
        save_csv_features(os.path.join(args.out, "target_test.csv"), te)
        target_test_name = "target_test.csv"
    else:
        save_csv_features(os.path.join(args.out, "target.csv"), target)
    save_manifest(
        os.path.join(args.out, "manifest.txt"),
        name=name,
        num_classes=num_classes,
        dim=dim,
        source="source.csv",
        target="target.csv",
        target_test=target_test_name,
    )
    print(f"wrote {args.out}/source.csv, target.csv"
          + (", target_test.csv" if target_test_name else "")
          + ", manifest.txt")
    return EXIT_OK


def _train_once(cfg, spec, source, target, ssda_ids, eval_ds, out_dir, tag):
    net, records = train(cfg, source, target, ssda_labeled=ssda_ids,
                         eval_ds=eval_ds, spec=spec)
    fingerprint = config_fingerprint(cfg)
    save_checkpoint(os.path.join(out_dir, f"checkpoint{tag}.txt"), net, fingerprint)
    with open(os.path.join(out_dir, f"metrics{tag}.jsonl"), "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    acc = None
    if eval_ds is not None and eval_ds.is_labeled:
        acc, _ = evaluate(net, eval_ds)
    aux_zero = all(
        r.loss_adv == 0.0 and r.loss_gsa == 0.0 and r.loss_nap == 0.0 for r in records
    )
    return acc, aux_zero


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    source = load_csv_features(manifest["source"], "source", manifest["num_classes"])
    target = load_csv_features(manifest["target"], "target", manifest["num_classes"])
    if not source.is_labeled:
        raise ConfigError("source dataset must be fully labeled")
    eval_ds = target
    if "target_test" in manifest:
        eval_ds = load_csv_features(manifest["target_test"], "target", manifest["num_classes"])
    overrides = {
        name: getattr(args, name.replace("-", "_"), None)
        for name in ("max_iters", "batch_size", "lr0", "momentum", "weight_decay",
                     "k", "metric", "bandwidth", "laplacian", "p", "beta", "tau",
                     "alpha_max", "gsa_coef", "eval_every")
    }
    if args.disable_adv:
        overrides["enable_adv"] = False
    if args.disable_gsa:
        overrides["enable_gsa"] = False
    if args.disable_nap:
        overrides["enable_nap"] = False
    base_cfg = build_train_config(args.config, overrides)
    seeds = _parse_seeds(args.seeds) if args.seeds else [base_cfg.seed]

    spec = default_spec(manifest["dim"], manifest["num_classes"])
    ssda_ids = None
    if args.ssda_shots > 0:
        if not target.is_labeled:
            raise ConfigError("--ssda-shots requires a labeled target train file")
        ssda_ids = ssda_sample(target, args.ssda_shots, args.ssda_seed)

    os.makedirs(args.out, exist_ok=True)
    results = {}
    aux_flags = {}
    for seed in seeds:
        cfg = dataclasses.replace(base_cfg, seed=seed)
        tag = f"_s{seed}" if len(seeds) > 1 else ""
        acc, aux_zero = _train_once(cfg, spec, source, target, ssda_ids, eval_ds,
                                    args.out, tag)
        results[seed] = acc
        aux_flags[seed] = aux_zero
        line = f"seed {seed}: target_acc={acc:.4f}" if acc is not None else f"seed {seed}: done"
        print(line)

    accs = [a for a in results.values() if a is not None]
    summary = {
        "config": dataclasses.asdict(base_cfg),
        "config_fingerprint": config_fingerprint(base_cfg),
        "manifest": os.path.abspath(args.manifest),
        "mode": "inductive" if "target_test" in manifest else "transductive",
        "seeds": seeds,
        "ssda_shots": args.ssda_shots,
        "per_seed_accuracy": {str(s): results[s] for s in seeds},
        "aux_losses_zero": all(aux_flags.values()),
        "median_accuracy": float(np.median(accs)) if accs else None,
        "mean_accuracy": float(np.mean(accs)) if accs else None,
    }
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if summary["median_accuracy"] is not None:
        print(f"median target_acc={summary['median_accuracy']:.4f} "
              f"mean={summary['mean_accuracy']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    net = load_checkpoint(args.checkpoint)
    if args.features:
        ds = load_csv_features(args.features, "target")
    else:
        manifest = load_manifest(args.manifest)
        path = manifest.get("target_test", manifest["target"])
        ds = load_csv_features(path, "target", manifest["num_classes"])
    acc, per_class = evaluate(net, ds)
    report = {
        "accuracy": acc,
        "per_class": [None if np.isnan(v) else float(v) for v in per_class],
        "num_samples": len(ds),
    }
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_spectra(args) -> int:
    ds_a = load_csv_features(args.features_a, "source")
    ds_b = load_csv_features(args.features_b, "target")
    if len(ds_a) != len(ds_b):
        raise DimensionError(
            f"row counts differ: {len(ds_a)} vs {len(ds_b)} "
            "(spectral distance requires equal vertex counts)"
        )
    cfg = GsaConfig(
        k=args.k,
        metric=SimilarityMetric(args.metric, args.bandwidth),
        laplacian=args.laplacian,
    )
    spec_a = spectrum(ds_a.features, cfg)
    spec_b = spectrum(ds_b.features, cfg)
    report = {
        "laplacian": args.laplacian,
        "metric": args.metric,
        "k": args.k,
        "eigenvalues_a": [float(v) for v in spec_a.eigenvalues],
        "eigenvalues_b": [float(v) for v in spec_b.eigenvalues],
        "sigma_p1": spectral_distance(spec_a.eigenvalues, spec_b.eigenvalues, 1.0),
        "sigma_p2": spectral_distance(spec_a.eigenvalues, spec_b.eigenvalues, 2.0),
    }
    out = json.dumps(report, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(out + "\n")
    print(out)
    return EXIT_OK


def cmd_a_distance(args) -> int:
    net = load_checkpoint(args.checkpoint)
    ds_a = load_csv_features(args.features_a, "source")
    ds_b = load_csv_features(args.features_b, "target")
    feats_a = extract_features(net, ds_a)
    feats_b = extract_features(net, ds_b)
    value = a_distance(feats_a, feats_b, seed=args.seed)
    print(json.dumps({"a_distance": value}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specalign",
        description="Domain adaptation with adversarial, graph-spectral, and "
                    "neighbor-vote alignment on small explicit-gradient networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write synthetic source/target CSVs + manifest")
    g.add_argument("--kind", choices=["two-moons", "blobs"], required=True)
    g.add_argument("--n", type=int, default=600, help="samples per domain")
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--rotation", type=float, default=45.0, help="target rotation, degrees")
    g.add_argument("--classes", type=int, default=3, help="blobs: class count")
    g.add_argument("--dim", type=int, default=8, help="blobs: feature dimension")
    g.add_argument("--shift", type=float, default=2.0, help="blobs: shift magnitude")
    g.add_argument("--spread", type=float, default=1.0, help="blobs: per-class stddev")
    g.add_argument("--test-fraction", type=float, default=0.0,
                   help=">0 splits the target into train/test (inductive)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="run the adaptation loop")
    t.add_argument("--manifest", required=True)
    t.add_argument("--config", default=None, help="flat key=value config file")
    t.add_argument("--out", required=True)
    t.add_argument("--seeds", default=None, help="e.g. '0..4' or '0,2,5'")
    t.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    t.add_argument("--lr0", type=float, default=None)
    t.add_argument("--momentum", type=float, default=None)
    t.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    t.add_argument("--k", type=int, default=None)
    t.add_argument("--metric", choices=["cosine", "gaussian"], default=None)
    t.add_argument("--bandwidth", type=float, default=None)
    t.add_argument("--laplacian", choices=["rwk", "sym"], default=None)
    t.add_argument("--p", type=float, default=None)
    t.add_argument("--beta", type=float, default=None)
    t.add_argument("--tau", type=float, default=None)
    t.add_argument("--alpha-max", dest="alpha_max", type=float, default=None)
    t.add_argument("--gsa-coef", dest="gsa_coef", type=float, default=None)
    t.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    t.add_argument("--disable-adv", action="store_true")
    t.add_argument("--disable-gsa", action="store_true")
    t.add_argument("--disable-nap", action="store_true")
    t.add_argument("--ssda-shots", type=int, default=0)
    t.add_argument("--ssda-seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy of a checkpoint on a labeled CSV")
    e.add_argument("--checkpoint", required=True)
    group = e.add_mutually_exclusive_group(required=True)
    group.add_argument("--features", default=None, help="labeled feature CSV")
    group.add_argument("--manifest", default=None,
                       help="evaluate on the manifest's test split (or target)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("spectra", help="Laplacian spectra + distance of two feature files")
    s.add_argument("--features-a", required=True)
    s.add_argument("--features-b", required=True)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--metric", choices=["cosine", "gaussian"], default="gaussian")
    s.add_argument("--bandwidth", type=float, default=None)
    s.add_argument("--laplacian", choices=["rwk", "sym"], default="rwk")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_spectra)

    a = sub.add_parser("a-distance", help="domain-probe discrepancy of extracted features")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--features-a", required=True)
    a.add_argument("--features-b", required=True)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_a_distance)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else EXIT_OK
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataFormatError, DimensionError, GraphConstructionError,
            InsufficientClassError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, SpecalignError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
