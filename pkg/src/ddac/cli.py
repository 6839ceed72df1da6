"""Command line interface: ``ddac {pretrain,train,train-graph,knn-graph,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .autoencoder import AutoencoderParams, pretrain
from .gcn import DdacgConfig, train_ddacg
from .graph import knn_graph, read_edge_list, write_edge_list
from .io import load_features, read_labels, write_json, write_labels
from .metrics import evaluate
from .model import PRESETS, DdacConfig, seeds, train_ddac

logger = logging.getLogger("ddac")

CONFIG_FIELDS = [f.name for f in fields(DdacgConfig)]
PATH_FIELDS = ["data", "graph", "truth", "pretrained", "out"]
RUN_FIELDS = ["method", *PATH_FIELDS, *CONFIG_FIELDS]


class UsageError(Exception):
    """Bad flags, missing inputs or an invalid configuration (exit status 2)."""


def _dims(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(x) for x in text)
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None


FLAG_TYPES = {
    "k": int, "d_prime": int, "pretrain_epochs": int, "train_epochs": int, "batch_size": int,
    "kmeans_restarts": int, "full_batch_max": int, "seed": int, "k_neighbors": int,
    "hidden_dims": _dims,
}


def _add_config_flags(p, graph: bool):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="flat JSON object of run settings; flags override it")
    p.add_argument("--preset", choices=sorted(PRESETS), help="install a named hyperparameter tuple")
    p.add_argument("--data", default=S, help="feature CSV (optional trailing 'label' column)")
    p.add_argument("--truth", default=S, help="label file used for metrics")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--epochs", dest="train_epochs", type=int, default=S, help="alias of --train-epochs")
    names = list(CONFIG_FIELDS)
    if not graph:
        names = [n for n in names if n not in ("alpha1", "alpha2", "epsilon", "k_neighbors")]
    else:
        p.add_argument("--graph", default=S, help="edge list (u<TAB>v per line); else a kNN graph is built")
        names = [n for n in names if n != "alpha"]
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=FLAG_TYPES.get(name, float), default=S)
    p.add_argument("--pretrained", default=S, help="autoencoder .npz from 'ddac pretrain'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="pretrain the autoencoder on reconstruction only")
    _add_config_flags(p, graph=False)
    p = sub.add_parser("train", help="cluster with DDAC")
    _add_config_flags(p, graph=False)
    p = sub.add_parser("train-graph", help="cluster with DDAC-G")
    _add_config_flags(p, graph=True)

    p = sub.add_parser("knn-graph", help="write a kNN edge list for a feature CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--k-neighbors", type=int, default=3)
    p.add_argument("--out", help="edge-list path (default: stdout)")

    p = sub.add_parser("eval", help="ACC/NMI/ARI between two label files")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="write metrics JSON here as well as stdout")
    return parser


def resolve(args, method: str) -> dict:
    """Merge defaults < preset < config file < explicit flags."""
    defaults = (DdacgConfig() if method == "ddac-g" else DdacConfig()).to_dict()
    settings = {"method": method, **{k: None for k in PATH_FIELDS}, **defaults}
    if method == "ddac":
        for key in ("alpha1", "alpha2", "epsilon", "k_neighbors"):
            settings[key] = DdacgConfig().to_dict()[key]
    if args.preset:
        settings.update(PRESETS[args.preset])
    if args.config:
        try:
            from_file = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {args.config} is not valid JSON: {e}") from None
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a flat JSON object")
        unknown = sorted(set(from_file) - set(RUN_FIELDS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        from_file.pop("method", None)
        settings.update(from_file)
    for key in RUN_FIELDS:
        if key in vars(args):
            settings[key] = vars(args)[key]
    settings["hidden_dims"] = list(_dims(settings["hidden_dims"]))
    for key in ("data", "graph", "truth", "pretrained"):
        if settings[key] is not None:
            path = Path(settings[key])
            if not path.exists():
                raise UsageError(f"{key} file not found: {path}")
            settings[key] = str(path.resolve())
    if settings["data"] is None:
        raise UsageError("--data is required")
    if settings["out"] is None:
        raise UsageError("--out is required")
    settings["out"] = str(Path(settings["out"]).resolve())
    return settings


def _config(settings, cls):
    names = {f.name for f in fields(cls)}
    try:
        return cls(**{k: v for k, v in settings.items() if k in names})
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid configuration: {e}") from None


def _inputs(settings):
    bundle = load_features(settings["data"])
    truth = read_labels(settings["truth"]) if settings["truth"] else bundle.labels
    if truth is not None and len(truth) != bundle.X.shape[0]:
        raise UsageError(f"truth has {len(truth)} labels but data has {bundle.X.shape[0]} rows")
    params = AutoencoderParams.load(settings["pretrained"]) if settings["pretrained"] else None
    return bundle.X, truth, params


def cmd_pretrain(args):
    settings = resolve(args, "ddac")
    config = _config(settings, DdacConfig)
    X, _, _ = _inputs(settings)
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    init_rng, pretrain_rng = seeds(config.seed, 2)
    params = AutoencoderParams.init((X.shape[1], *config.hidden_dims, config.d_prime), init_rng)
    params = pretrain(X, params, max(config.pretrain_epochs, 1), config.batch_size, config.lr, pretrain_rng)
    params.save(out / "autoencoder.npz")
    write_json(out / "config.json", settings)
    print(out / "autoencoder.npz")


def _train(args, method):
    settings = resolve(args, method)
    config = _config(settings, DdacConfig if method == "ddac" else DdacgConfig)
    if method == "ddac-g" and not settings["graph"] and config.k_neighbors <= 0:
        raise UsageError("train-graph needs --graph or a positive --k-neighbors")
    X, truth, params = _inputs(settings)
    adjacency = None
    if method == "ddac-g":
        if settings["graph"]:
            adjacency = read_edge_list(settings["graph"], n=X.shape[0])
        else:
            adjacency = knn_graph(X, config.k_neighbors)
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", settings)
    with open(out / "log.jsonl", "w") as log:
        if method == "ddac":
            result = train_ddac(X, config, y=truth, params=params, log_stream=log)
        else:
            result = train_ddacg(X, adjacency, config, y=truth, params=params, log_stream=log)
    write_labels(out / "labels.csv", result.labels)
    metrics = evaluate(result.labels, truth) if truth is not None else {}
    write_json(out / "metrics.json", metrics)
    print(json.dumps(metrics, sort_keys=True))


def cmd_knn_graph(args):
    bundle = load_features(args.data)
    if not 1 <= args.k_neighbors < bundle.X.shape[0]:
        raise UsageError(f"--k-neighbors must be in [1, {bundle.X.shape[0] - 1}]")
    A = knn_graph(bundle.X, args.k_neighbors)
    if args.out:
        write_edge_list(args.out, A)
    else:
        for u, v in A.undirected_edges():
            sys.stdout.write(f"{u}\t{v}\n")


def cmd_eval(args):
    for p in (args.pred, args.truth):
        if not Path(p).exists():
            raise UsageError(f"file not found: {p}")
    metrics = evaluate(read_labels(args.pred), read_labels(args.truth))
    if args.out:
        write_json(args.out, metrics)
    print(json.dumps(metrics, sort_keys=True))


COMMANDS = {
    "pretrain": cmd_pretrain,
    "train": lambda a: _train(a, "ddac"),
    "train-graph": lambda a: _train(a, "ddac-g"),
    "knn-graph": cmd_knn_graph,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"ddac {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"ddac {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
