"""Command-line entry points.

Subcommands: gen-data, train, dither, attack, sweep, report. Exit codes:
0 on success, 1 for configuration/usage errors, 2 when a sweep finished but
some grid cells failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Argparse exits with code 2 on usage errors; remap those to the
    # config-error code by raising instead.
    def error(self, message):
        raise _CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ditherdefense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset (.npz)")
    p.add_argument("--out", required=True, help="output .npz path")
    p.add_argument("--count", type=int, default=400)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--png-dir", default=None,
                   help="also dump the images as PNGs into this directory")

    p = sub.add_parser("train", help="train the classifier on a dataset")
    p.add_argument("--data", required=True, help="dataset .npz from gen-data")
    p.add_argument("--out", required=True, help="model checkpoint .npz path")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=40)
    p.add_argument("--seed", type=int, default=7)

    p = sub.add_parser("dither", help="dither (and optionally blur) an image file")
    p.add_argument("input", help="input image (.png/.ppm/.pgm)")
    p.add_argument("output", help="output image path")
    p.add_argument("--k", type=int, default=3, help="quantization levels")
    p.add_argument("--scan", choices=["raster", "serpentine"], default="raster")
    p.add_argument("--gray", action="store_true",
                   help="convert to grayscale before dithering")
    p.add_argument("--blur-sigma", type=float, default=None,
                   help="apply Gaussian blur after dithering")
    p.add_argument("--blur-size", type=int, default=9)

    p = sub.add_parser("attack", help="attack a single image and report diagnostics")
    p.add_argument("--model", required=True, help="checkpoint from train")
    p.add_argument("--image", required=True, help="input image file")
    p.add_argument("--out", default=None, help="write the adversarial image here")
    p.add_argument("--family", choices=["pgd", "mifgsm", "sia"], default="pgd")
    p.add_argument("--epsilon", default="8/255",
                   help="l-inf budget, number or fraction like 8/255")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--step-size", default=None,
                   help="defaults to 4*epsilon/steps")
    p.add_argument("--momentum", type=float, default=1.0)
    p.add_argument("--target", type=int, required=True,
                   help="true class index for the cross-entropy objective")
    p.add_argument("--loss", choices=["cross_entropy", "margin"],
                   default="cross_entropy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ste-k", type=int, default=None,
                   help="enable the informed mode at this many levels")
    p.add_argument("--ste-pq", type=float, default=1.0)
    p.add_argument("--ste-mode", choices=["fs_dither", "uniform_quantize"],
                   default="fs_dither")

    p = sub.add_parser("sweep", help="run an experiment grid from a JSON config")
    p.add_argument("--config", required=True, help="grid config JSON file")
    p.add_argument("--out", required=True, help="report output path (.json)")
    p.add_argument("--csv", default=None, help="also write a CSV here")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config's base_seed")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("report", help="convert a JSON report to CSV")
    p.add_argument("--in", dest="input", required=True, help="report JSON file")
    p.add_argument("--out", required=True, help="CSV output path")
    return parser


def _cmd_gen_data(args) -> int:
    from . import dataset, imagecore

    params = dataset.DatasetParams(
        count=args.count, size=args.size, noise=args.noise, seed=args.seed
    )
    ds = dataset.generate_dataset(params)
    dataset.save_dataset(ds, args.out)
    print(f"wrote {len(ds)} images ({args.size}x{args.size}) to {args.out}")
    if args.png_dir is not None:
        import os

        os.makedirs(args.png_dir, exist_ok=True)
        for i in range(len(ds)):
            name = ds.class_names[int(ds.labels[i])]
            imagecore.save_image(
                ds.images[i], os.path.join(args.png_dir, f"{i:04d}_{name}.png")
            )
        print(f"dumped PNGs to {args.png_dir}")
    return 0


def _cmd_train(args) -> int:
    from . import dataset, tinymodel

    ds = dataset.load_dataset(args.data)
    size = ds.images.shape[1]
    model = tinymodel.init_model(
        height=size, width=ds.images.shape[2], channels=ds.images.shape[3],
        hidden=args.hidden, classes=len(ds.class_names), seed=args.seed,
    )
    model = tinymodel.train(
        model, ds, epochs=args.epochs, learning_rate=args.learning_rate,
        momentum=args.momentum, seed=args.seed, batch_size=args.batch_size,
    )
    acc = tinymodel.accuracy(model, ds)
    tinymodel.save_model(model, args.out)
    print(f"train accuracy {acc:.4f}")
    print(f"model hash {tinymodel.model_hash(model)}")
    print(f"wrote checkpoint to {args.out}")
    return 0


def _cmd_dither(args) -> int:
    from . import dither, filters, imagecore

    img = imagecore.load_image(args.input)
    if args.gray:
        out = dither.fs_dither_gray(img, dither.QuantSpec(args.k), scan=args.scan)
    else:
        out = dither.fs_dither(img, dither.QuantSpec(args.k), scan=args.scan)
    if args.blur_sigma is not None:
        out = filters.gaussian_blur(
            out, filters.BlurSpec(sigma=args.blur_sigma, size=args.blur_size)
        )
    imagecore.save_image(out, args.output)
    if out.shape == img.shape:
        print(f"wrote {args.output} (psnr vs input {imagecore.psnr(img, out):.2f} dB)")
    else:
        print(f"wrote {args.output}")
    return 0


def _cmd_attack(args) -> int:
    from . import attacks, imagecore, tinymodel

    model = tinymodel.load_model(args.model)
    img = imagecore.load_image(args.image)
    cfg = attacks.AttackConfig(
        family=args.family,
        epsilon=attacks.parse_intensity(args.epsilon),
        steps=args.steps,
        step_size=None if args.step_size is None else attacks.parse_intensity(args.step_size),
        momentum=args.momentum,
        seed=args.seed,
    )
    ste = None
    if args.ste_k is not None:
        ste = attacks.SteConfig(
            enabled=True, k_attack=args.ste_k, p_q=args.ste_pq, mode=args.ste_mode
        )
    if args.loss == "cross_entropy":
        loss = tinymodel.CrossEntropyLoss(target=args.target)
    else:
        loss = tinymodel.MarginLoss(target=args.target)
    result = attacks.run_attack(model, img, loss, cfg, ste)
    _, logits, probs = tinymodel.forward(model, result.adversarial)
    print(f"final loss {result.final_loss:.6g}")
    print(f"linf norm {result.linf_norm:.6g} (budget {cfg.epsilon:.6g})")
    print(f"psnr {result.psnr_db:.2f} dB over {result.iterations_run} iterations")
    print(f"prediction {int(np.argmax(logits))} (true {args.target}), "
          f"p_true {probs[args.target]:.4f}")
    trace = ", ".join(f"{v:.4g}" for v in result.loss_trace)
    print(f"loss trace: [{trace}]")
    if args.out is not None:
        imagecore.save_image(result.adversarial, args.out)
        print(f"wrote adversarial image to {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    from . import sweep

    with open(args.config) as fh:
        config = json.load(fh)
    if args.seed is not None:
        config["base_seed"] = args.seed
    grid = sweep.parse_grid(config)
    report = sweep.run_grid(grid, workers=args.workers)
    sweep.emit_report(report, "json", args.out)
    print(f"wrote report ({len(report.rows)} rows) to {args.out}")
    if args.csv is not None:
        sweep.emit_report(report, "csv", args.csv)
        print(f"wrote CSV to {args.csv}")
    if report.errors:
        for err in report.errors:
            print(
                f"cell failed: defense={err['defense']} attack={err['attack']} "
                f"ste={err['ste']} task={err['task']}: {err['error']}",
                file=sys.stderr,
            )
        return 2
    return 0


def _cmd_report(args) -> int:
    from . import sweep

    report = sweep.load_report(args.input)
    sweep.emit_report(report, "csv", args.out)
    print(f"wrote CSV ({len(report.rows)} rows) to {args.out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "dither": _cmd_dither,
    "attack": _cmd_attack,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
