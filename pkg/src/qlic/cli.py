"""Command-line interface: train, encode, decode, eval, analyze, profile,
selftest.

Every training/model option can come from a key=value config file
(`--config`); explicit flags win over the file. The effective settings
are echoed before work starts. All output files are written via a
temporary file plus atomic rename, so a failed run never leaves a
partial artifact behind.
"""

from __future__ import annotations

import csv
import io
import os
import sys

import click

from . import analysis as analysis_mod
from . import selftest as selftest_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import CodeTables, decode_image, encode_image
from .imageio import atomic_write, read_image, write_ppm
from .metrics import RDPoint, bd_rate, bd_rate_per_image, bpp, psnr
from .model import CodecConfig
from .training import TrainConfig, fit

CONFIG_FORMAT_VERSION = 1

_TRAIN_KEYS = {
    "lambda_index": int, "lam": float, "epochs": int, "steps_per_epoch": int,
    "batch_size": int, "crop_size": int, "lr": float, "grad_clip": float,
    "lr_decay_fraction": float,
}
_MODEL_KEYS = {
    "channels": int, "local_channels": int, "regional_channels": int,
    "global_tokens": int, "order": str, "branches": str,
    "step_adaptive": lambda s: s.lower() in ("1", "true", "yes"),
    "heads": int, "swin_window": int, "swin_shift": int,
}


class CliError(click.ClickException):
    pass


def _read_config_file(path: str) -> dict:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    version = values.pop("config_version", str(CONFIG_FORMAT_VERSION))
    if int(version) != CONFIG_FORMAT_VERSION:
        raise CliError(f"{path}: unsupported config_version {version}")
    return values


def _build_configs(config_path, overrides: dict, seed: int):
    raw = _read_config_file(config_path) if config_path else {}
    unknown = set(raw) - set(_TRAIN_KEYS) - set(_MODEL_KEYS)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    train_kwargs, model_kwargs = {}, {}
    for key, conv in _TRAIN_KEYS.items():
        if overrides.get(key) is not None:
            train_kwargs[key] = overrides[key]
        elif key in raw:
            train_kwargs[key] = conv(raw[key])
    for key, conv in _MODEL_KEYS.items():
        if overrides.get(key) is not None:
            model_kwargs[key] = overrides[key]
        elif key in raw:
            model_kwargs[key] = conv(raw[key])
    train_cfg = TrainConfig(seed=seed, **train_kwargs)
    model_cfg = CodecConfig(**model_kwargs)
    return train_cfg, model_cfg


def _echo_config(train_cfg: TrainConfig, model_cfg: CodecConfig) -> None:
    click.echo("effective config:")
    for key in sorted(_TRAIN_KEYS) + ["seed"]:
        click.echo(f"  {key} = {getattr(train_cfg, key)}")
    for key in sorted(_MODEL_KEYS):
        click.echo(f"  {key} = {getattr(model_cfg, key)}")


def _load_corpus(directory: str) -> tuple[list, list]:
    names = sorted(n for n in os.listdir(directory)
                   if n.lower().endswith((".ppm", ".png")))
    if not names:
        raise CliError(f"no .ppm or .png images in {directory}")
    images = [read_image(os.path.join(directory, n)) for n in names]
    return images, names


def _fail(exc: Exception):
    raise CliError(str(exc)) from exc


@click.group()
def main():
    """Learned image codec with diversified context adaptation."""


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, help="checkpoint path (.dcac)")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="key=value config file")
@click.option("--log", "log_path", help="training log CSV path")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda-index", "lambda_index", type=int)
@click.option("--lam", type=float, help="explicit lambda (overrides the table)")
@click.option("--epochs", type=int)
@click.option("--steps-per-epoch", type=int)
@click.option("--batch-size", type=int)
@click.option("--crop-size", type=int)
@click.option("--lr", type=float)
@click.option("--grad-clip", type=float)
@click.option("--lr-decay-fraction", type=float)
@click.option("--channels", type=int)
@click.option("--local-channels", type=int)
@click.option("--regional-channels", type=int)
@click.option("--global-tokens", type=int)
@click.option("--order", type=str)
@click.option("--branches", type=str)
@click.option("--step-adaptive/--no-step-adaptive", default=None)
@click.option("--heads", type=int)
@click.option("--swin-window", type=int)
@click.option("--swin-shift", type=int)
def train(corpus_dir, output, config_path, log_path, seed, **overrides):
    """Train a codec on a directory of images; writes a checkpoint."""
    try:
        train_cfg, model_cfg = _build_configs(config_path, overrides, seed)
        _echo_config(train_cfg, model_cfg)
        images, _ = _load_corpus(corpus_dir)
        result = fit(images, train_cfg, model_cfg=model_cfg, log_path=log_path)
        save_checkpoint(result.checkpoint, output)
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {output} (final loss {result.log[-1].loss:.4f})")


@main.command()
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, help="bitstream path (.dca)")
def encode(image_path, checkpoint_path, output):
    """Compress an image with a trained checkpoint."""
    try:
        ckpt = load_checkpoint(checkpoint_path)
        model = ckpt.build_model()
        image = read_image(image_path)
        result = encode_image(model, image, lambda_index=ckpt.lambda_index)
        atomic_write(output, result.bitstream)
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)
    h, w = image.shape[:2]
    click.echo(f"wrote {output}: {len(result.bitstream)} bytes, "
               f"{bpp(result.bitstream, h, w):.4f} bpp")


@main.command()
@click.argument("bitstream_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, help="output image path (.ppm)")
def decode(bitstream_path, checkpoint_path, output):
    """Decompress a bitstream back to a PPM image."""
    try:
        ckpt = load_checkpoint(checkpoint_path)
        model = ckpt.build_model()
        with open(bitstream_path, "rb") as fh:
            data = fh.read()
        result = decode_image(model, data)
        write_ppm(output, result.image)
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {output} "
               f"({result.header.orig_height}x{result.header.orig_width})")


@main.command("eval")
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("checkpoint_paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, help="RD CSV path")
@click.option("--anchor", "anchor_path", type=click.Path(exists=True),
              help="anchor RD CSV to compare against (reports BD-rate)")
@click.option("--per-image/--pooled", "per_image", default=False,
              show_default="pooled",
              help="BD-rate mode: per-image averaged or pooled curves")
def eval_cmd(corpus_dir, checkpoint_paths, output, anchor_path, per_image):
    """Rate-distortion sweep: one row per (checkpoint, image)."""
    try:
        images, names = _load_corpus(corpus_dir)
        rows = []
        for ckpt_path in checkpoint_paths:
            ckpt = load_checkpoint(ckpt_path)
            model = ckpt.build_model()
            tables = CodeTables.from_model(model)
            for name, image in zip(names, images):
                enc = encode_image(model, image, lambda_index=ckpt.lambda_index,
                                   tables=tables)
                dec = decode_image(model, enc.bitstream, tables=tables)
                h, w = image.shape[:2]
                rows.append((name, ckpt.lambda_index,
                             bpp(enc.bitstream, h, w), psnr(image, dec.image)))
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["image_id", "lambda_index", "bpp", "psnr"])
        for name, lam, rate, quality in rows:
            writer.writerow([name, lam, f"{rate:.6f}", f"{quality:.4f}"])
        atomic_write(output, buf.getvalue().encode())
        click.echo(f"wrote {output} ({len(rows)} rate points)")
        if anchor_path:
            anchor = _read_rd_csv(anchor_path)
            test = [RDPoint(bpp=r, psnr=q, lambda_index=lam, image_id=n)
                    for n, lam, r, q in rows]
            fn = bd_rate_per_image if per_image else bd_rate
            mode = "per-image averaged" if per_image else "pooled curves"
            click.echo(f"BD-rate vs {anchor_path} ({mode}): "
                       f"{fn(anchor, test):+.3f}%")
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)


def _read_rd_csv(path: str) -> list:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(RDPoint(bpp=float(row["bpp"]), psnr=float(row["psnr"]),
                                  lambda_index=int(row["lambda_index"]),
                                  image_id=row["image_id"]))
    if not points:
        raise CliError(f"{path}: no rate points")
    return points


@main.command()
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output-prefix", required=True,
              help="writes <prefix>.csv and <prefix>.json")
def analyze(image_path, checkpoint_path, output_prefix):
    """Per-step normalized-latent statistics for one image."""
    try:
        model = load_checkpoint(checkpoint_path).build_model()
        image = read_image(image_path)
        stats = analysis_mod.normalized_latent_stats(model, image)
        key = os.path.basename(image_path)
        analysis_mod.write_stats_csv({key: stats}, output_prefix + ".csv")
        analysis_mod.write_stats_json({key: stats}, output_prefix + ".json")
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)
    for s in stats:
        click.echo(f"step {s.step}: min {s.min:+.3f} max {s.max:+.3f} "
                   f"mean {s.mean:+.3f} std {s.std:.3f}")
    click.echo(f"wrote {output_prefix}.csv and {output_prefix}.json")


@main.command()
@click.argument("image_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("checkpoint_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--repeats", type=int, default=3, show_default=True)
def profile(image_path, checkpoint_path, repeats):
    """Wall-time breakdown per sub-transform plus encode/decode totals."""
    try:
        model = load_checkpoint(checkpoint_path).build_model()
        image = read_image(image_path)
        timings = analysis_mod.profile_model(model, image, repeats=repeats)
    except CliError:
        raise
    except Exception as exc:
        _fail(exc)
    click.echo(analysis_mod.format_profile(timings))


@main.command()
def selftest():
    """Run the built-in property checks; nonzero exit on any failure."""
    code = selftest_mod.run(report=click.echo)
    if code:
        raise CliError("selftest failed")


if __name__ == "__main__":
    sys.exit(main())
