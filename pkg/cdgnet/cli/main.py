"""Командная строка: train, deblur, eval, diagnose, gradcheck, synth, params, masks."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

from cdgnet import __version__
from cdgnet.config import LOG_LEVEL, Config, load_config, parse_config
from cdgnet.data.blur import synth_dataset
from cdgnet.data.dataset import BLUR_DIR, SHARP_DIR, list_pairs, load_paired_dataset
from cdgnet.data.diagnostics import diagnose, write_diagnostics
from cdgnet.data.io import load_image, save_gray, save_image
from cdgnet.data.metrics import MetricRow, format_metric_csv, mean_row, psnr, ssim
from cdgnet.errors import CDGNetError, ConfigError
from cdgnet.models.inference import deblur_image
from cdgnet.models.network import CDGNet, param_count, parameter_ledger
from cdgnet.storage import atomic_write_text
from cdgnet.telemetry import configure_telemetry
from cdgnet.training.checkpoint import apply_checkpoint, read_checkpoint
from cdgnet.training.supervision import mask_sweep, sharpness_map, sharpness_mask
from cdgnet.training.trainer import train
from cdgnet.verification import TOLERANCE, run_suite

logger = logging.getLogger("cdgnet.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

AUX_FILES = ("large.png", "small.png", "attention_large.png", "attention_small.png")
DEFAULT_SWEEP = (0.5, 0.8, 0.9, 0.96, 0.99)


def configure_logging(level: str = LOG_LEVEL) -> None:
    logging.basicConfig(
        level=level.upper(),
        stream=sys.stdout,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def load_model(checkpoint: Path, config_path: Optional[Path] = None) -> tuple[CDGNet, Config]:
    """Архитектуру берём из конфига внутри чекпоинта; явный --config её переопределяет."""
    state = read_checkpoint(checkpoint)
    if config_path is not None:
        config = load_config(config_path)
    elif state.config_text is not None:
        config = parse_config(state.config_text)
    else:
        config = Config()
    model = CDGNet(config)
    apply_checkpoint(model, state)
    return model, config


def cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    pairs = load_paired_dataset(args.data, mu=config.mu)
    telemetry = configure_telemetry()
    result = train(pairs, config, args.out, resume=args.resume, telemetry=telemetry)
    last = result.epochs[-1] if result.epochs else None
    print(f"checkpoint={result.checkpoint} metrics={result.metrics_log}")
    if last is not None:
        print(f"epoch={last.epoch} lr={last.lr:.3e} loss_total={last.total:.6f}")
    return EXIT_OK


def cmd_deblur(args: argparse.Namespace) -> int:
    model, _ = load_model(args.ckpt, args.config)
    image = load_image(args.input)
    result = deblur_image(model, image)
    if any(result.padding):
        print(f"padded by {result.padding[0]}x{result.padding[1]} (reflect) and cropped back")
    save_image(result.image, args.output)

    if args.dump_aux is not None:
        aux = Path(args.dump_aux)
        for name, branch in zip(AUX_FILES[:2], (result.large_image, result.small_image)):
            if branch is None:
                logger.warning("aux=%s skipped: branch not built in this model", name)
                continue
            save_image(branch, aux / name)
        for name, attention in zip(AUX_FILES[2:], (result.attention_large, result.attention_small)):
            if attention is None:
                logger.warning("aux=%s skipped: spatial attention disabled in this model", name)
                continue
            save_gray(attention, aux / name)
    logger.info("deblur input=%s output=%s", args.input, args.output)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_model(args.ckpt, args.config)[0] if args.ckpt is not None else None
    rows = []
    for name in list_pairs(args.data):
        blurry = load_image(Path(args.data) / BLUR_DIR / name)
        sharp = load_image(Path(args.data) / SHARP_DIR / name)
        restored = deblur_image(model, blurry).image if model is not None else blurry
        rows.append(MetricRow(name=name, psnr=psnr(restored, sharp), ssim=ssim(restored, sharp)))
        print(f"{name} psnr={rows[-1].psnr:.4f} ssim={rows[-1].ssim:.4f}")

    mean = mean_row(rows)
    print(f"mean psnr={mean.psnr:.4f} ssim={mean.ssim:.4f} pairs={len(rows)}")
    out = Path(args.out) if args.out is not None else Path(args.data) / "eval.csv"
    atomic_write_text(out, format_metric_csv(rows))
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    diagnostics = diagnose(load_image(args.input))
    write_diagnostics(diagnostics, args.out)
    print(f"hf_ratio={diagnostics.hf_ratio:.6f} tail={diagnostics.tail}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    results = run_suite([args.op] if args.op else None, seed=args.seed)
    for result in results:
        status = "ok" if result.passed else "FAIL"
        print(f"{result.name} max_rel_err={result.report.max_rel_err:.3e} worst={result.report.worst} {status}")
    offenders = [r.name for r in results if not r.passed]
    print(f"checks={len(results)} seconds={time.perf_counter() - started:.1f} tolerance={TOLERANCE:g}")
    if offenders:
        print(f"failed: {', '.join(offenders)}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    names = synth_dataset(args.out, args.count, args.size, args.seed, config)
    print(f"pairs={len(names)} root={args.out}")
    return EXIT_OK


def cmd_params(args: argparse.Namespace) -> int:
    model = CDGNet(load_config(args.config))
    per_module: dict[str, int] = defaultdict(int)
    for name, count in parameter_ledger(model):
        per_module[name.split(".", 1)[0]] += count
    print("module,elements")
    for module, count in per_module.items():
        print(f"{module},{count}")
    size = param_count(model)
    print(f"bytes={size} mb={size / 2**20:.3f}")
    return EXIT_OK


def cmd_masks(args: argparse.Namespace) -> int:
    s = sharpness_map(load_image(args.input))
    out = Path(args.out)
    for mu, fraction in mask_sweep(s, args.mu):
        save_gray(sharpness_mask(s, mu)[0, 0], out / f"mask_{mu:g}.png")
        print(f"mu={mu:g} sharp_fraction={fraction:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdgnet", description="Non-uniform deblurring network on numpy.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="train on root/blur + root/sharp pairs")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("deblur", help="deblur one PNG")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", dest="output", type=Path, required=True)
    p.add_argument("--dump-aux", type=Path)
    p.add_argument("--config", type=Path)
    p.set_defaults(handler=cmd_deblur)

    p = commands.add_parser("eval", help="PSNR/SSIM over a paired dataset")
    p.add_argument("--ckpt", type=Path, help="without a checkpoint the blurry inputs are scored")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, help="CSV path, default DATA/eval.csv")
    p.add_argument("--config", type=Path)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("diagnose", help="gradient histogram and spectrum of one PNG")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(handler=cmd_diagnose)

    p = commands.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gradcheck)

    p = commands.add_parser("synth", help="generate a synthetic paired dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", type=Path)
    p.set_defaults(handler=cmd_synth)

    p = commands.add_parser("params", help="parameter report")
    p.add_argument("--config", type=Path)
    p.set_defaults(handler=cmd_params)

    p = commands.add_parser("masks", help="sharpness masks for several thresholds")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--mu", type=float, nargs="+", default=list(DEFAULT_SWEEP))
    p.set_defaults(handler=cmd_masks)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.exception("command=%s status=config_error key=%s", args.command, exc.key)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CDGNetError as exc:
        logger.exception("command=%s status=error kind=%s", args.command, type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
