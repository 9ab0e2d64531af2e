"""Command line entry point: ``varifold {gram,match,classify,reconstruct,eval,replay}``.

Every subcommand that writes a file also writes ``<file>.manifest.json``
holding the resolved options, input hashes and package version;
``varifold replay MANIFEST`` re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("neural_varifold")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _read_shape(path):
    """A cloud from XYZN, or the face-center cloud of an OBJ/OFF mesh."""
    from .geometry import load_cloud, load_mesh, sample_face_centers

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    if path.suffix.lower() in (".obj", ".off"):
        return sample_face_centers(load_mesh(path))
    return load_cloud(path)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("VARIFOLD_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _lambda(text):
    if text is None or str(text).lower() == "auto":
        return None
    return float(text)


def _write_manifest(output, args, argv, inputs) -> Path:
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "subcommand": args.command,
        "argv": list(argv),
        "config": resolved,
        "seed": args.seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _kernel_config(args):
    from .varifold import KernelConfig

    return KernelConfig(args.kernel, args.depth, args.ct_sigma, args.agg)


# ---------------------------------------------------------------- subcommands


def cmd_gram(args, argv):
    from .geometry import normalize_unit_sphere
    from .varifold import pairwise_cloud_gram, save_gram_csv

    clouds = [_read_shape(p) for p in args.clouds]
    if not args.no_normalize:
        clouds = [normalize_unit_sphere(c)[0] for c in clouds]
    config = _kernel_config(args)
    gram = pairwise_cloud_gram(clouds, config=config, threads=_threads(args))
    out = args.out or "-"
    if out == "-":
        np.savetxt(sys.stdout, gram, delimiter=",", fmt="%.17g")
    else:
        save_gram_csv(gram, out, config)
        _write_manifest(out, args, argv, args.clouds)
    return EXIT_OK


def cmd_eval(args, argv):
    from .metrics import chamfer, emd_exact
    from .varifold import varifold_distance

    a, b = _read_shape(args.a), _read_shape(args.b)
    if args.metric == "cd":
        value = chamfer(a.positions, b.positions, squared=not args.chamfer_root, reduction=args.chamfer_reduction)
    elif args.metric == "emd":
        value = emd_exact(a.positions, b.positions).cost
    else:
        value = varifold_distance(a, b, _kernel_config(args))
    print(repr(float(value)))
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(["metric", "a", "b", "value"])
            writer.writerow([args.metric, args.a, args.b, f"{value:.17g}"])
        _write_manifest(args.csv, args, argv, [args.a, args.b])
    return EXIT_OK


def cmd_match(args, argv):
    from .geometry import load_mesh, save_mesh
    from .matching import MatchConfig, match_shapes, save_trace_csv

    for p in (args.source, args.target):
        if not Path(p).exists():
            raise FileNotFoundError(f"input file not found: {p}")
    config = MatchConfig(args.loss, args.iters, args.lr, seed=args.seed, depth=args.depth, ct_sigma=args.ct_sigma)
    trace = match_shapes(load_mesh(args.source), load_mesh(args.target), config)
    save_mesh(trace.mesh, args.out)
    _write_manifest(args.out, args, argv, [args.source, args.target])
    if args.trace:
        save_trace_csv(trace, args.trace)
    if trace.losses:
        log.info("loss %.6g -> %.6g over %d iterations", trace.losses[0], trace.losses[-1], len(trace))
    return EXIT_OK


def cmd_classify(args, argv):
    from .krr import EpisodeSpec, load_cloud_dataset, run_episodes

    if not Path(args.dataset).is_dir():
        raise FileNotFoundError(f"dataset directory not found: {args.dataset}")
    dataset = load_cloud_dataset(args.dataset, normalize=not args.no_normalize)
    spec = EpisodeSpec(args.nway, args.kshot, args.qquery, args.episodes, args.seed)
    mean, half = run_episodes(dataset, spec, _kernel_config(args), _lambda(args.lam))
    print(f"{100 * mean:.2f} +- {100 * half:.2f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kernel", "depth", "nway", "kshot", "qquery", "episodes", "accuracy", "ci95"])
            writer.writerow(
                [args.kernel, args.depth, args.nway, args.kshot, args.qquery, args.episodes, f"{mean:.17g}", f"{half:.17g}"]
            )
        _write_manifest(args.out, args, argv, [])
    return EXIT_OK


def cmd_reconstruct(args, argv):
    from .geometry import save_mesh
    from .reconstruct import reconstruct

    cloud = _read_shape(args.input)
    lift = None if args.lift <= 0 else args.lift
    mesh, _ = reconstruct(
        cloud,
        delta=args.delta,
        resolution=args.grid,
        depth=args.depth,
        lam=_lambda(args.lam),
        padding=args.padding,
        lift=lift,
        normal_channel=args.normal_channel,
    )
    save_mesh(mesh, args.out)
    _write_manifest(args.out, args, argv, [args.input])
    return EXIT_OK


def cmd_replay(args, argv):
    manifest = json.loads(Path(args.manifest).read_text())
    for name, digest in manifest.get("inputs", {}).items():
        if Path(name).exists() and _sha256(name) != digest:
            log.warning("input %s changed since the manifest was written", name)
    return dispatch(manifest["argv"])


# ---------------------------------------------------------------- parser


def _kernel_options(p, default_kernel="ntk1"):
    p.add_argument("--kernel", choices=["ntk1", "ntk2", "ct"], default=default_kernel)
    p.add_argument("--depth", type=int, default=None, help="NTK depth (default 5 for ntk1, 9 for ntk2)")
    p.add_argument("--agg", choices=["mean", "sum"], default="mean")
    p.add_argument("--ct-sigma", type=float, default=0.3)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--config", default=None, help="JSON or YAML file of option defaults")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="varifold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gram", parents=[common], help="cloud Gram matrix as CSV")
    p.add_argument("clouds", nargs="+", help="XYZN clouds or OBJ/OFF meshes")
    _kernel_options(p)
    p.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    p.add_argument("--no-normalize", action="store_true", help="skip unit-sphere normalization")
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("eval", parents=[common], help="distance between two shapes")
    p.add_argument("--metric", choices=["cd", "emd", "vfd"], required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    _kernel_options(p)
    p.add_argument("--chamfer-root", action="store_true", help="unsquared nearest-neighbour distances")
    p.add_argument("--chamfer-reduction", choices=["mean", "sum"], default="mean")
    p.add_argument("--csv", default=None, help="append a result row to this CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("match", parents=[common], help="deform a source mesh onto a target")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--loss", choices=["cd", "emd", "ct", "ntk1", "ntk2"], default="ntk1")
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--ct-sigma", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("classify", parents=[common], help="few-shot episodes with kernel ridge regression")
    p.add_argument("--dataset", required=True, help="directory with one subdirectory of XYZN files per class")
    _kernel_options(p)
    p.add_argument("--nway", type=int, default=5)
    p.add_argument("--kshot", type=int, default=5)
    p.add_argument("--qquery", type=int, default=15)
    p.add_argument("--episodes", type=int, default=700)
    p.add_argument("--lambda", dest="lam", default="auto")
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("reconstruct", parents=[common], help="mesh an oriented cloud through a kernel SDF")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--lambda", dest="lam", default="auto")
    p.add_argument("--padding", type=float, default=0.1)
    p.add_argument("--lift", type=float, default=1.0, help="constant coordinate appended to positions (<=0 disables)")
    p.add_argument("--normal-channel", choices=["constant", "train", "off"], default="constant")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("replay", parents=[common], help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _load_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if args.config:
        overrides = _load_config(args.config)
        overrides = overrides.get(args.command, overrides)
        # command-line values win: re-parse with the file as defaults
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    return args


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, argv)
    except (FileNotFoundError, ValueError, RuntimeError, OSError) as exc:
        print(f"varifold {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(dispatch())
