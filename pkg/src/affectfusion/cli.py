"""Command-line entry point.

Exit codes: 0 success, 2 configuration/validation error, 3 data-format
error, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .align import align_views
from .config import RunConfig, parse_override
from .data import (
    SyntheticSpec, list_feature_sequences, load_features, load_sequence, load_sequences,
    synthesize, write_features, write_labels_expr,
)
from .data.dataset import collate, make_windows
from .errors import ConfigError, FormatError, NumericalAbort
from .exprnet import pseudo_label
from .fusion.checkpoint import load_checkpoint
from .ndcore import ContractError
from .training import evaluate, expr_config, predict_sequences, train, view_dims_of

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("affectfusion")


def _parse_dims(text: str) -> dict[str, int]:
    dims = {}
    for part in text.split(","):
        tag, sep, d = part.partition("=")
        if not sep:
            raise ConfigError(f"view dims must look like visual=16,audio=8; got {text!r}")
        try:
            dims[tag.strip()] = int(d)
        except ValueError:
            raise ConfigError(f"bad dimension in {part!r}") from None
    return dims


def cmd_synth(args) -> int:
    dims = _parse_dims(args.dims) if args.dims else (
        {"visual": 16, "audio": 8} if args.task == "va" else {"visual": 1024})
    try:
        spec = SyntheticSpec(task=args.task, num_sequences=args.num_sequences, T=args.T,
                             view_dims=dims, latent_dim=args.latent_dim, noise=args.noise,
                             seed=args.seed, num_classes=args.num_classes)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    for path in synthesize(spec, args.out):
        print(path)
    return EXIT_OK


def cmd_align(args) -> int:
    seqs = [load_features(p) for p in args.inputs]
    if args.anchor.isdigit():
        anchor = int(args.anchor)
    else:
        names = [str(Path(p)) for p in args.inputs]
        if str(Path(args.anchor)) not in names:
            raise ConfigError(f"anchor {args.anchor!r} is neither an index nor one of the inputs")
        anchor = names.index(str(Path(args.anchor)))
    try:
        aligned, _ = align_views(seqs, anchor, args.method)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for src, seq, a in zip(args.inputs, seqs, aligned):
        dest = out / Path(src).name
        write_features(dest, a)
        print(f"{dest}: {seq.T} -> {a.T}")
    return EXIT_OK


def _overrides(args) -> dict:
    values = dict(parse_override(s) for s in (args.set or []))
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        values["out_dir"] = args.out
    if getattr(args, "data", None) is not None:
        values["data_dir"] = args.data
    return values


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config, _overrides(args))
    art = train(cfg)
    print(f"run directory: {art.out_dir}")
    print(art.report.to_text(), end="")
    return EXIT_OK


def _load_model(args):
    ck = Path(args.checkpoint)
    cfg_path = Path(args.config) if args.config else ck.parent / "config.json"
    cfg = RunConfig.load(cfg_path)
    params = load_checkpoint(ck)
    if params.kind != cfg.model:
        raise ConfigError(f"checkpoint holds a {params.kind!r} model but config says {cfg.model!r}")
    return cfg, params


def _check_dims(cfg, params, seqs):
    expected = view_dims_of(params, cfg)
    for s in seqs:
        for v in s.views:
            if v.modality_tag in expected and expected[v.modality_tag] != v.d:
                raise FormatError(
                    f"{s.source}.{v.modality_tag}: feature dim {v.d}, model expects "
                    f"{expected[v.modality_tag]}")


def cmd_eval(args) -> int:
    cfg, params = _load_model(args)
    seqs = load_sequences(args.data, cfg.views, cfg.task, cfg.align_method, cfg.anchor,
                          cfg.num_classes)
    _check_dims(cfg, params, seqs)
    report = evaluate(cfg, params, seqs)
    if args.out:
        report.write(args.out)
    width = max(len(k) for k in list(report.scores) + ["P"])
    for k, v in report.scores.items():
        print(f"{k:<{width}}  {v:.6f}")
    print(f"{'P':<{width}}  {report.P:.6f}")
    return EXIT_OK


def _unlabeled(cfg, data_dir):
    ids = list_feature_sequences(data_dir, cfg.anchor)
    if not ids:
        raise FormatError(f"no *.{cfg.anchor}.mmf files found", None, data_dir)
    return [load_sequence(data_dir, sid, cfg.views, None, cfg.align_method, cfg.anchor) for sid in ids]


def cmd_predict(args) -> int:
    cfg, params = _load_model(args)
    seqs = _unlabeled(cfg, args.data)
    _check_dims(cfg, params, seqs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for s, pred in zip(seqs, predict_sequences(cfg, params, seqs)):
        if cfg.task == "va":
            lines = ["frame,valence,arousal"]
            lines += [f"{i},{p[0]:.6f},{p[1]:.6f}" for i, p in enumerate(pred)]
        else:
            lines = ["frame,class_id"] + [f"{i},{int(c)}" for i, c in enumerate(pred.argmax(-1))]
        dest = out / f"{s.source}.pred.csv"
        dest.write_text("\n".join(lines) + "\n")
        print(dest)
    return EXIT_OK


def cmd_pseudolabel(args) -> int:
    cfg, params = _load_model(args)
    if cfg.task != "expr":
        raise ConfigError("pseudo-labelling needs an expression model")
    seqs = _unlabeled(cfg, args.data)
    _check_dims(cfg, params, seqs)
    ecfg = expr_config(cfg, seqs[0].views[0].d)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"pseudo": True, "tau": args.tau, "checkpoint": str(args.checkpoint), "sequences": {}}
    kept_total = frames_total = 0
    for s in seqs:
        ds = make_windows(s.views, None, cfg.seq_len, cfg.seq_len, s.source, s.valid, drop_empty=False)
        batch, _ = collate(ds.windows, ds.view_tags)
        target, kept, frac = pseudo_label(params, ecfg, batch.views[0], args.tau, batch.valid)
        target.labels, target.valid = target.labels[:s.T], target.valid[:s.T]
        write_labels_expr(out / f"{s.source}.expr.csv", target)
        manifest["sequences"][s.source] = frac
        kept_total += int(target.valid.sum())
        frames_total += int(s.valid.sum())
        print(f"{s.source}: kept {frac:.4f}")
    manifest["kept_fraction"] = kept_total / max(frames_total, 1)
    (out / "pseudo_labels.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"overall kept fraction {manifest['kept_fraction']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affectfusion", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--task", choices=("va", "expr"), default="va")
    s.add_argument("--out", required=True)
    s.add_argument("--num-sequences", type=int, default=8)
    s.add_argument("--T", type=int, default=256)
    s.add_argument("--dims", help="view dims, e.g. visual=16,audio=8")
    s.add_argument("--latent-dim", type=int, default=4)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--num-classes", type=int, default=8)
    s.add_argument("--seed", type=int, default=7)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("align", help="resample feature files to an anchor's length")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--anchor", default="0", help="index or path of the anchor input")
    s.add_argument("--method", choices=("interp", "pool"), default="interp")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.add_argument("--data")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(func=cmd_train)

    for name, func, help_ in (("eval", cmd_eval, "score a checkpoint on labelled data"),
                              ("predict", cmd_predict, "write per-frame predictions"),
                              ("pseudolabel", cmd_pseudolabel, "label confident frames")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--config", help="defaults to config.json beside the checkpoint")
        s.add_argument("--data", required=True)
        s.add_argument("--out", required=name != "eval",
                       help="report file" if name == "eval" else "output directory")
        if name == "pseudolabel":
            s.add_argument("--tau", type=float, required=True)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractError as exc:
        print(f"invalid request: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
