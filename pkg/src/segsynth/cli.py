"""Operator entry points: training, evaluation, data synthesis,
interpolation, generation, and serving.

The config file is the single source of truth; --override flags replace
individual keys with last-wins semantics. All subcommands are
non-interactive and exit nonzero on failure.
"""

from __future__ import annotations

import colorsys
import json
import os
import sys

import click
import numpy as np
import torch
from PIL import Image

from .checkpoint import CheckpointError, load_checkpoint, resume_trainer, save_checkpoint
from .core import ValidationError, denormalize_image
from .data import (
    Dataset,
    DatasetSpec,
    ShapesConfig,
    build_face_template,
    generate_shapes_dataset,
    load_dataset,
    load_landmark_file,
    write_dataset,
)
from .evaluation import (
    accuracy_ceiling,
    accuracy_floor,
    evaluate_generator,
    evaluation_triples,
)
from .interpolation import SweepSpec, export_sequence, generate_interpolation
from .training import (
    Trainer,
    TrainingDiverged,
    parse_config_text,
    pretrain_segmentor,
)


def default_palette(n_colors: int) -> tuple:
    """Deterministic, well-separated colors; first three match the stock palette."""
    from .data import DEFAULT_PALETTE

    if n_colors <= len(DEFAULT_PALETTE):
        return tuple(DEFAULT_PALETTE[:n_colors])
    colors = list(DEFAULT_PALETTE)
    for i in range(len(colors), n_colors):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618034) % 1.0, 0.75, 0.9)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
    return tuple(colors)


def _split_config(text: str) -> tuple[str, dict]:
    """Separate data.* keys from the training keys."""
    train_lines = []
    data_kv: dict[str, str] = {}
    for raw in text.splitlines():
        stripped = raw.split("#", 1)[0].strip()
        if stripped and "=" in stripped:
            key = stripped.split("=", 1)[0].strip()
            if key.startswith("data."):
                data_kv[key[5:]] = stripped.split("=", 1)[1].strip()
                continue
        train_lines.append(raw)
    return "\n".join(train_lines), data_kv


_SHAPES_KEYS = {"kind", "n_samples", "seed", "min_scale", "max_scale", "background_noise"}
_MANIFEST_KEYS = {"kind", "root", "manifest", "augment_hflip"}


def _dataset_from_kv(data_kv: dict, arch) -> Dataset:
    kind = data_kv.get("kind", "shapes")
    allowed = _SHAPES_KEYS if kind == "shapes" else _MANIFEST_KEYS
    unknown = set(data_kv) - allowed
    if unknown:
        raise ValidationError(
            f"unknown data key(s) for kind={kind!r}: {', '.join(sorted('data.' + k for k in unknown))}"
        )
    if kind == "shapes":
        cfg = ShapesConfig(
            image_size=arch.image_size,
            n_samples=int(data_kv.get("n_samples", 2000)),
            n_shapes=arch.n_s - 1,
            palette=default_palette(arch.n_c),
            min_scale=float(data_kv.get("min_scale", ShapesConfig.min_scale)),
            max_scale=float(data_kv.get("max_scale", ShapesConfig.max_scale)),
            background_noise=float(data_kv.get("background_noise", ShapesConfig.background_noise)),
            seed=int(data_kv.get("seed", 0)),
        )
        return generate_shapes_dataset(cfg)
    if kind == "manifest":
        root = data_kv.get("root", ".")
        manifest = data_kv.get("manifest", "manifest.txt")
        spec = DatasetSpec(
            root=root,
            manifest=manifest,
            image_size=arch.image_size,
            n_s=arch.n_s,
            n_c=arch.n_c,
            augment_hflip=data_kv.get("augment_hflip", "").lower() in ("1", "true", "yes", "on"),
        )
        return load_dataset(spec)
    raise ValidationError(f"unknown data.kind {kind!r}")


def _parse_overrides(pairs) -> tuple[dict, dict]:
    """Split k=v overrides into (training keys, data.* keys)."""
    train: dict = {}
    data: dict = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.UsageError(f"--override expects k=v, got {pair!r}")
        key, val = (part.strip() for part in pair.split("=", 1))
        if key.startswith("data."):
            data[key[5:]] = val
        else:
            train[key] = val
    return train, data


@click.group()
def main():
    """Segmentation-conditioned image synthesis toolkit."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--override", "overrides", multiple=True, help="k=v config override")
@click.option("--out", "out_dir", default="runs/train", show_default=True)
@click.option("--resume", "resume_path", default=None, type=click.Path(exists=True))
def train(config_path, overrides, out_dir, resume_path):
    """Run the adversarial training loop; writes checkpoints and history CSV."""
    with open(config_path) as fh:
        train_text, data_kv = _split_config(fh.read())
    try:
        train_over, data_over = _parse_overrides(overrides)
        config = parse_config_text(train_text, train_over)
        dataset = _dataset_from_kv({**data_kv, **data_over}, config.arch)
        if resume_path:
            trainer = resume_trainer(resume_path, dataset)
        else:
            trainer = Trainer(config, dataset)
    except (ValidationError, CheckpointError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    history_path = os.path.join(out_dir, "history.csv")

    def on_epoch(tr: Trainer):
        save_checkpoint(tr.bundle, ckpt_path, trainer=tr)
        tr.history.to_csv(history_path)
        snap = tr.history.snapshots[-1]
        strip = np.concatenate(list(snap.images), axis=1)
        Image.fromarray(strip).save(os.path.join(out_dir, f"samples_epoch_{snap.epoch:03d}.png"))
        last = tr.history.records[-1].report
        click.echo(
            f"epoch {tr.bundle.epoch}/{tr.config.epochs} "
            f"total_G={last.total_G:.4f} total_D={last.total_D:.4f}"
        )

    try:
        trainer.run(on_epoch=on_epoch)
    except TrainingDiverged as exc:
        click.echo(f"aborted: {exc}", err=True)
        sys.exit(3)
    click.echo(f"done: {ckpt_path}")


@main.command("pretrain-seg")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--override", "overrides", multiple=True)
@click.option("--out", "out_path", default="segmentor.ckpt", show_default=True)
def pretrain_seg(config_path, overrides, out_path):
    """Train the segmentor alone and save it as a checkpoint."""
    with open(config_path) as fh:
        train_text, data_kv = _split_config(fh.read())
    try:
        train_over, data_over = _parse_overrides(overrides)
        config = parse_config_text(train_text, train_over)
        dataset = _dataset_from_kv({**data_kv, **data_over}, config.arch)
        segmentor = pretrain_segmentor(config, dataset)
    except (ValidationError, TrainingDiverged) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    from .training import build_bundle

    bundle = build_bundle(config, with_optimizers=False)
    bundle.segmentor.load_state_dict(segmentor.state_dict())
    save_checkpoint(bundle, out_path, train_config=config)
    click.echo(f"saved segmentor checkpoint: {out_path}")


@main.command("synth-data")
@click.option("--shapes-config", "shapes_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True)
def synth_data(shapes_path, out_dir):
    """Generate the procedural shapes dataset and write it with a manifest."""
    values: dict[str, str] = {}
    with open(shapes_path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, val = (part.strip() for part in line.split("=", 1))
            values[key] = val
    kwargs: dict = {}
    for key in ("image_size", "n_samples", "n_shapes", "seed"):
        if key in values:
            kwargs[key] = int(values[key])
    for key in ("min_scale", "max_scale", "background_noise"):
        if key in values:
            kwargs[key] = float(values[key])
    if "palette" in values:
        kwargs["palette"] = tuple(
            tuple(int(ch) for ch in color.split(","))
            for color in values["palette"].split(";")
        )
    try:
        cfg = ShapesConfig(**kwargs)
        dataset = generate_shapes_dataset(cfg)
        manifest = write_dataset(dataset, out_dir)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {len(dataset)} samples, manifest: {manifest}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--judge", "judge_path", default=None, type=click.Path(exists=True))
@click.option("--count", default=256, show_default=True, help="generator eval triples")
@click.option("--seed", default=0, show_default=True)
def eval_cmd(model_path, manifest_path, judge_path, count, seed):
    """Print the floor / model / ceiling spatial-consistency table."""
    try:
        bundle = load_checkpoint(model_path).eval_mode()
        judge_bundle = load_checkpoint(judge_path).eval_mode() if judge_path else None
        arch = bundle.arch
        spec = DatasetSpec(
            root=os.path.dirname(os.path.abspath(manifest_path)),
            manifest=os.path.basename(manifest_path),
            image_size=arch.image_size,
            n_s=arch.n_s,
            n_c=arch.n_c,
        )
        dataset = load_dataset(spec)
        judge = judge_bundle.segmentor if judge_bundle else bundle.segmentor
        rng = np.random.default_rng(seed)
        floor = accuracy_floor(judge, dataset, rng)
        ceiling = accuracy_ceiling(judge, dataset)
        z, c, s_t = evaluation_triples(dataset, count, arch.n_z, seed)
        model_acc = evaluate_generator(bundle, z, c, s_t, judge=judge)
    except (ValidationError, CheckpointError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"{'Shuffled (floor)':<20}{floor:.4f}")
    click.echo(f"{'Model':<20}{model_acc:.4f}")
    click.echo(f"{'Original (ceiling)':<20}{ceiling:.4f}")
    if judge_path is None:
        click.echo(
            "note: judged by the model's own segmentor; pass --judge for an independent one",
            err=True,
        )


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--seg", "seg_path", required=True, type=click.Path(exists=True))
@click.option("--attrs", required=True, help="comma-separated bits, e.g. 1,0,0")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True)
def generate(model_path, seg_path, attrs, seed, out_path):
    """Generate one image from an index-image segmentation and attribute bits."""
    try:
        bundle = load_checkpoint(model_path).eval_mode()
        arch = bundle.arch
        with Image.open(seg_path) as im:
            idx = np.asarray(im.convert("L"), dtype=np.int64)
        if idx.shape != (arch.image_size, arch.image_size):
            raise ValidationError(
                f"segmentation is {idx.shape[1]}x{idx.shape[0]}, "
                f"model expects {arch.image_size}x{arch.image_size}"
            )
        if idx.max(initial=0) >= arch.n_s:
            raise ValidationError(f"segmentation class {idx.max()} out of range (n_s={arch.n_s})")
        bits = np.array([int(b) for b in attrs.split(",")], dtype=np.float32)
        if bits.shape != (arch.n_c,):
            raise ValidationError(f"need {arch.n_c} attribute bits, got {bits.shape[0]}")
        one_hot = np.zeros((arch.n_s, *idx.shape), dtype=np.float32)
        rows, cols = np.indices(idx.shape)
        one_hot[idx, rows, cols] = 1.0
        z = torch.randn(1, arch.n_z, generator=torch.Generator().manual_seed(seed))
        with torch.no_grad():
            img = bundle.generator(z, torch.from_numpy(bits).view(1, -1), torch.from_numpy(one_hot).unsqueeze(0))[0]
        Image.fromarray(denormalize_image(img.permute(1, 2, 0).numpy())).save(out_path)
    except (ValidationError, CheckpointError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True)
def interpolate(model_path, spec_path, out_dir):
    """Render an interpolation sequence described by a JSON spec file."""
    try:
        bundle = load_checkpoint(model_path).eval_mode()
        arch = bundle.arch
        with open(spec_path) as fh:
            raw = json.load(fh)
        kwargs: dict = {"mode": raw["mode"], "steps": int(raw.get("steps", 8))}

        def latent(seed_key, z_key):
            if z_key in raw:
                return np.asarray(raw[z_key], dtype=np.float32)
            gen = torch.Generator().manual_seed(int(raw.get(seed_key, 0)))
            return torch.randn(arch.n_z, generator=gen).numpy()

        if "segmentation" in raw:
            with Image.open(os.path.join(os.path.dirname(spec_path), raw["segmentation"])) as im:
                idx = np.asarray(im.convert("L"), dtype=np.int64)
            one_hot = np.zeros((arch.n_s, *idx.shape), dtype=np.float32)
            rows, cols = np.indices(idx.shape)
            one_hot[idx, rows, cols] = 1.0
            kwargs["s"] = one_hot
        if raw["mode"] == "latent":
            kwargs.update(
                z0=latent("seed0", "z0"),
                z1=latent("seed1", "z1"),
                c=np.asarray(raw["attributes"], dtype=np.float32),
            )
        elif raw["mode"] == "attribute":
            kwargs.update(
                z=latent("seed", "z"),
                c_list=tuple(np.asarray(c, dtype=np.float32) for c in raw["attribute_list"]),
            )
        elif raw["mode"] in ("spatial", "grid"):
            base = os.path.dirname(spec_path)
            l0 = load_landmark_file(os.path.join(base, raw["landmarks0"]))
            l1 = load_landmark_file(os.path.join(base, raw["landmarks1"]))
            kwargs.update(
                c=np.asarray(raw["attributes"], dtype=np.float32),
                l0=l0,
                l1=l1,
                template=build_face_template(),
            )
            if raw["mode"] == "grid":
                kwargs.update(z0=latent("seed0", "z0"), z1=latent("seed1", "z1"))
            else:
                kwargs["z"] = latent("seed", "z")
        else:
            raise ValidationError(f"unknown sweep mode {raw['mode']!r}")

        sweep = SweepSpec(**kwargs)
        frames = generate_interpolation(bundle.generator, arch, sweep)
        manifest = export_sequence(frames, sweep, out_dir)
    except (ValidationError, CheckpointError, KeyError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {len(frames)} frames, manifest: {manifest}")


@main.command()
@click.option("--registry", "registry_dir", required=True, type=click.Path(exists=True))
@click.option("--bind", default=None, help="host:port (default env SEGSYNTH_BIND or 127.0.0.1:8765)")
def serve(registry_dir, bind):
    """Serve the generation API over HTTP."""
    from .server import serve as run_server

    address = bind or os.environ.get("SEGSYNTH_BIND", "127.0.0.1:8765")
    run_server(registry_dir, address)


if __name__ == "__main__":
    main()
