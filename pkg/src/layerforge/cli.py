"""Command-line entry point wiring all subcommands.

Every subcommand exits 0 on success and nonzero on contract violations, with
machine-greppable ``ERROR <stage>:`` prefixes on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .bench import benchmark
from .blends import BlendMode, compose
from .config import PipelineError, run_pipeline, validate_config
from .flow import TrainConfig, gradcheck, train
from .invert import invert_background, invert_foreground
from .model import ModelConfig, init_state, load_checkpoint, n_params
from .sampler import SamplerConfig, sample
from .synth import SUBTASKS, SynthSpec, build_dataset, load_png, load_triplet, read_manifest, save_png
from .validation import derive_seed

__all__ = ["main"]


def _parse_res(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from e


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from e


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--mlp-ratio", type=float, default=2.0)
    p.add_argument("--patch", type=int, default=4)
    p.add_argument("--prompt-tokens", type=int, default=4)
    p.add_argument("--pe-cloning", choices=("offset", "zero", "off"), default="offset")
    p.add_argument("--no-lpec", action="store_true",
                   help="disable position-encoding cloning (same as --pe-cloning off)")


def _model_config(args, seed: int) -> ModelConfig:
    return ModelConfig(
        dim=args.dim,
        heads=args.heads,
        blocks=args.blocks,
        mlp_ratio=args.mlp_ratio,
        patch=args.patch,
        prompt_tokens=args.prompt_tokens,
        pe_cloning="off" if args.no_lpec else args.pe_cloning,
        seed=seed,
    )


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layerforge", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a triplet dataset")
    sp.add_argument("--subtask", choices=SUBTASKS, required=True)
    sp.add_argument("--res", type=_parse_res, default=(32, 32), metavar="WxH")
    sp.add_argument("--train", type=int, default=8, dest="count_train")
    sp.add_argument("--test", type=int, default=2, dest="count_test")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha", type=_parse_range, default=None, metavar="LO:HI")
    sp.add_argument("--fg-size", type=_parse_range, default=None, metavar="LO:HI")
    sp.add_argument("--patch", type=int, default=4)
    sp.add_argument("--corpus-fg", default=None)
    sp.add_argument("--corpus-bg", default=None)

    cp = sub.add_parser("compose", help="composite a foreground over a background")
    cp.add_argument("--fg", required=True)
    cp.add_argument("--bg", required=True)
    cp.add_argument("--mode", choices=[m.value for m in BlendMode], required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--glass-threshold", type=float, default=0.5)

    ip = sub.add_parser("invert", help="analytically recover one layer")
    ip.add_argument("--comp", required=True)
    ip.add_argument("--mode", choices=[m.value for m in BlendMode], required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--fg", help="foreground PNG (RGBA): recover the background")
    ip.add_argument("--bg", help="background PNG: recover the foreground (needs --alpha)")
    ip.add_argument("--alpha", help="alpha map PNG (grayscale) for foreground recovery")
    ip.add_argument("--eps", type=float, default=1e-3)
    ip.add_argument("--mask-out", default=None, help="write the valid mask as a PNG")

    tp = sub.add_parser("train", help="flow-matching training on a manifest")
    tp.add_argument("--manifest", required=True)
    tp.add_argument("--out", required=True, help="checkpoint path")
    tp.add_argument("--steps", type=int, default=2000)
    tp.add_argument("--batch-size", type=int, default=1)
    tp.add_argument("--lr", type=float, default=1e-4)
    tp.add_argument("--beta1", type=float, default=0.9)
    tp.add_argument("--beta2", type=float, default=0.999)
    tp.add_argument("--adam-eps", type=float, default=1e-8)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--loss-log", default=None)
    tp.add_argument("--checkpoint-every", type=int, default=0)
    _add_model_flags(tp)

    mp = sub.add_parser("sample", help="decompose a composite with a trained model")
    mp.add_argument("--ckpt", required=True)
    mp.add_argument("--input", required=True, help="composite PNG")
    mp.add_argument("--subtask", choices=SUBTASKS, required=True)
    mp.add_argument("--method", choices=("euler", "algorithm1"), default="euler")
    mp.add_argument("--steps", type=int, default=16)
    mp.add_argument("--eta", type=float, default=0.0)
    mp.add_argument("--seed", type=int, default=0)
    mp.add_argument("--out", required=True, help="output directory")

    ep = sub.add_parser("eval", help="benchmark a checkpoint on a manifest's test split")
    ep.add_argument("--ckpt", required=True)
    ep.add_argument("--manifest", required=True)
    ep.add_argument("--out", required=True, help="report CSV path")
    ep.add_argument("--table", default=None, help="also write the summary table here")
    ep.add_argument("--method", choices=("euler", "algorithm1"), default="euler")
    ep.add_argument("--steps", type=int, default=16)
    ep.add_argument("--eta", type=float, default=0.0)
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--foreground", default=None, help="also score foregrounds into this CSV")
    ep.add_argument("--no-timing", action="store_true")

    gp = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    gp.add_argument("--coords", type=int, default=1000)
    gp.add_argument("--step", type=float, default=1e-4)
    gp.add_argument("--seed", type=int, default=0)
    gp.add_argument("--tol", type=float, default=1e-3)
    _add_model_flags(gp)

    pp = sub.add_parser("pipeline", help="run synth/train/sample/eval from one config")
    pp.add_argument("--config", required=True)
    pp.add_argument("--force", action="store_true")

    vp = sub.add_parser("validate", help="check a pipeline config")
    vp.add_argument("--config", required=True)

    return p


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        subtask=args.subtask,
        width=args.res[0],
        height=args.res[1],
        count_train=args.count_train,
        count_test=args.count_test,
        alpha_range=args.alpha,
        fg_size_range=args.fg_size,
        source="corpus" if args.corpus_fg or args.corpus_bg else "procedural",
        corpus_fg=args.corpus_fg,
        corpus_bg=args.corpus_bg,
        seed=args.seed,
        patch=args.patch,
    )
    summary = build_dataset(spec, args.out)
    print(f"wrote {summary['n_train']} train / {summary['n_test']} test records "
          f"({summary['bytes']} bytes) to {args.out}")
    return 0


def _cmd_compose(args) -> int:
    fg = load_png(args.fg)
    bg = load_png(args.bg)
    out = compose(fg, bg, args.mode, glass_threshold=args.glass_threshold)
    save_png(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _cmd_invert(args) -> int:
    comp = load_png(args.comp)
    if args.fg and (args.bg or args.alpha):
        raise ValueError("give either --fg (recover background) or --bg with --alpha")
    if args.fg:
        result = invert_background(comp, load_png(args.fg), args.mode, eps=args.eps)
    elif args.bg and args.alpha:
        with Image.open(args.alpha) as im:
            alpha = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        result = invert_foreground(comp, load_png(args.bg), alpha, args.mode, eps=args.eps)
    else:
        raise ValueError("need --fg, or --bg together with --alpha")
    save_png(args.out, result.recovered)
    if args.mask_out:
        Image.fromarray((result.valid_mask * 255).astype(np.uint8), "L").save(args.mask_out)
    valid = float(result.valid_mask.mean())
    ambiguous = float(result.ambiguous_mask.mean())
    print(f"wrote {args.out}  residual={result.residual:.3e}  "
          f"valid={valid:.3%}  ambiguous={ambiguous:.3%}")
    return 0


def _cmd_train(args) -> int:
    rows = read_manifest(args.manifest)
    records = [(*load_triplet(args.manifest, r), r["subtask"]) for r in rows if r["split"] == "train"]
    if not records:
        raise ValueError(f"manifest {args.manifest}: train split is empty")
    state = init_state(_model_config(args, derive_seed(args.seed, "model")))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(
        steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        adam_eps=args.adam_eps,
        seed=derive_seed(args.seed, "train"),
        loss_log=args.loss_log,
        checkpoint_path=args.out,
        checkpoint_every=args.checkpoint_every,
    )
    _, trace = train(state, records, cfg)
    first = np.mean([r.loss for r in trace[:100]])
    last = np.mean([r.loss for r in trace[-100:]])
    print(f"trained {len(trace)} steps on {len(records)} records "
          f"({n_params(state)} params): first-100 loss {first:.5f}, last-100 loss {last:.5f}")
    print(f"wrote {args.out}")
    return 0


def _cmd_sample(args) -> int:
    state, _ = load_checkpoint(args.ckpt)
    comp = load_png(args.input)
    cfg = SamplerConfig(method=args.method, steps=args.steps, eta=args.eta, seed=args.seed)
    fg_img, bg_img = sample(state, comp, args.subtask, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    fg_path = out / f"{stem}_fg.png"
    bg_path = out / f"{stem}_bg.png"
    save_png(fg_path, fg_img)
    save_png(bg_path, bg_img)
    print(f"wrote {fg_path} and {bg_path}")
    return 0


def _cmd_eval(args) -> int:
    state, _ = load_checkpoint(args.ckpt)
    cfg = SamplerConfig(method=args.method, steps=args.steps, eta=args.eta, seed=args.seed)
    report = benchmark(
        args.manifest, state, cfg,
        out_csv=args.out, table_path=args.table,
        score_foreground=bool(args.foreground), fg_csv=args.foreground,
        include_timing=not args.no_timing,
    )
    print(report.table())
    print(f"wrote {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _model_config(args, args.seed)
    state = init_state(cfg, zero_init_heads=False)
    err = gradcheck(state, n_coords=args.coords, fd_step=args.step, seed=args.seed)
    print(f"max relative gradient error over {args.coords} coordinates: {err:.3e} "
          f"({n_params(state)} params)")
    if err > args.tol:
        print(f"ERROR gradcheck: {err:.3e} exceeds tolerance {args.tol:.1e}", file=sys.stderr)
        return 1
    return 0


def _cmd_pipeline(args) -> int:
    run_pipeline(args.config, force=args.force)
    return 0


def _cmd_validate(args) -> int:
    violations = validate_config(args.config)
    if violations:
        for v in violations:
            print(f"ERROR validate: {v}", file=sys.stderr)
        return 1
    print(f"{args.config}: valid")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "compose": _cmd_compose,
    "invert": _cmd_invert,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "pipeline": _cmd_pipeline,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except PipelineError as e:
        print(f"ERROR {e.stage}: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as e:
        print(f"ERROR {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
