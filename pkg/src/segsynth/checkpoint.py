"""Single-file checkpoint container.

Layout: 8-byte magic, little-endian u32 header length, a JSON header
(format version, configs, counters, rng states, block table, payload
hash), then the raw little-endian tensor blocks. Saves are atomic
(tmp file + rename); loads verify the hash before building anything.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np
import torch

from .training import ModelBundle, TrainConfig, Trainer, build_bundle

MAGIC = b"SGSYNCKP"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _tensor_block(t: torch.Tensor) -> tuple[bytes, str, list]:
    arr = t.detach().cpu().numpy()
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<")
    return arr.astype(dtype, copy=False).tobytes(), dtype.str, list(arr.shape)


def _optimizer_blocks(opt: torch.optim.Adam | None, prefix: str, blocks: dict, steps: dict):
    if opt is None:
        return
    params = opt.param_groups[0]["params"]
    step_list = []
    for i, p in enumerate(params):
        state = opt.state.get(p, {})
        if state:
            blocks[f"{prefix}.{i}.exp_avg"] = state["exp_avg"]
            blocks[f"{prefix}.{i}.exp_avg_sq"] = state["exp_avg_sq"]
            step_val = state["step"]
            step_list.append(float(step_val.item() if torch.is_tensor(step_val) else step_val))
        else:
            step_list.append(0.0)
    steps[prefix] = step_list


def _gather_blocks(bundle: ModelBundle) -> tuple[dict, dict]:
    blocks: dict[str, torch.Tensor] = {}
    for net_name, net in (
        ("G", bundle.generator),
        ("D", bundle.discriminator),
        ("S", bundle.segmentor),
    ):
        for key, tensor in net.state_dict().items():
            blocks[f"{net_name}.{key}"] = tensor
    steps: dict[str, list] = {}
    _optimizer_blocks(bundle.opt_g, "optG", blocks, steps)
    _optimizer_blocks(bundle.opt_d, "optD", blocks, steps)
    _optimizer_blocks(bundle.opt_s, "optS", blocks, steps)
    return blocks, steps


def _rng_payload(trainer: Trainer | None) -> tuple[dict, dict]:
    """JSON-safe rng states plus uint8 tensors for the torch generators."""
    if trainer is None:
        return {}, {}
    tensors = {
        "rng.z_gen": trainer.z_gen.get_state(),
        "rng.eps_gen": trainer.eps_gen.get_state(),
        "rng.snapshot_gen": trainer.snapshot_gen.get_state(),
    }
    meta = {
        "sampler_rng": trainer.sampler_rng.bit_generator.state,
        "shuffle_rng": trainer.shuffle_rng.bit_generator.state,
        "sampler": trainer.sampler.state(),
    }
    return meta, tensors


def save_checkpoint(bundle: ModelBundle, path: str,
                    train_config: TrainConfig | None = None,
                    trainer: Trainer | None = None) -> None:
    """Serialize the bundle (and, when given, the full trainer state)."""
    if trainer is not None:
        bundle = trainer.bundle
        train_config = trainer.config

    blocks, adam_steps = _gather_blocks(bundle)
    rng_meta, rng_tensors = _rng_payload(trainer)
    blocks.update(rng_tensors)

    table = []
    payload = bytearray()
    for name in sorted(blocks):
        data, dtype, shape = _tensor_block(blocks[name])
        table.append(
            {
                "name": name,
                "dtype": dtype,
                "shape": shape,
                "offset": len(payload),
                "nbytes": len(data),
            }
        )
        payload.extend(data)

    header = {
        "format_version": FORMAT_VERSION,
        "arch": bundle.arch.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "train_digest": train_config.digest() if train_config else None,
        "counters": {
            "iteration": bundle.iteration,
            "epoch": bundle.epoch,
            "d_updates": bundle.d_updates,
            "s_updates": bundle.s_updates,
            "g_updates": bundle.g_updates,
        },
        "adam_steps": adam_steps,
        "rng": rng_meta,
        "blocks": table,
        "payload_sha256": hashlib.sha256(bytes(payload)).hexdigest(),
    }
    header_bytes = json.dumps(header).encode()

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(header_bytes)))
            fh.write(header_bytes)
            fh.write(bytes(payload))
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_checkpoint(path: str) -> tuple[dict, dict]:
    """Return (header, name -> numpy array) after verifying the payload hash."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise CheckpointError(f"{path}: corrupt checkpoint (truncated header length)")
        (header_len,) = struct.unpack("<I", raw_len)
        header_bytes = fh.read(header_len)
        if len(header_bytes) != header_len:
            raise CheckpointError(f"{path}: corrupt checkpoint (truncated header)")
        try:
            header = json.loads(header_bytes)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint (bad header)") from exc
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version mismatch (file {version}, supported {FORMAT_VERSION})"
            )
        payload = fh.read()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header["payload_sha256"]:
        raise CheckpointError(f"{path}: corrupt checkpoint (payload hash mismatch)")

    arrays = {}
    for entry in header["blocks"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        chunk = payload[start : start + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: corrupt checkpoint (short block {entry['name']})")
        arr = np.frombuffer(chunk, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        arrays[entry["name"]] = arr
    return header, arrays


def _load_network(net, arrays: dict, prefix: str):
    state = {}
    for key in net.state_dict():
        name = f"{prefix}.{key}"
        if name not in arrays:
            raise CheckpointError(f"missing block {name}")
        state[key] = torch.from_numpy(arrays[name].copy())
    net.load_state_dict(state)


def _restore_optimizer(opt: torch.optim.Adam | None, arrays: dict, steps: dict, prefix: str):
    if opt is None or prefix not in steps:
        return
    params = opt.param_groups[0]["params"]
    for i, p in enumerate(params):
        avg_name = f"{prefix}.{i}.exp_avg"
        if avg_name not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(steps[prefix][i]),
            "exp_avg": torch.from_numpy(arrays[avg_name].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}.{i}.exp_avg_sq"].copy()),
        }


def load_checkpoint(path: str) -> ModelBundle:
    """Rebuild the bundle (networks + optimizer state + counters) from disk."""
    header, arrays = read_checkpoint(path)
    if header["train_config"] is not None:
        config = TrainConfig.from_dict(header["train_config"])
        bundle = build_bundle(config, with_optimizers=True)
    else:
        from .networks import (
            ArchConfig,
            build_discriminator,
            build_generator,
            build_segmentor,
        )

        arch = ArchConfig.from_dict(header["arch"])
        bundle = ModelBundle(
            arch=arch,
            generator=build_generator(arch, 0),
            discriminator=build_discriminator(arch, 0),
            segmentor=build_segmentor(arch, 0),
        )

    _load_network(bundle.generator, arrays, "G")
    _load_network(bundle.discriminator, arrays, "D")
    _load_network(bundle.segmentor, arrays, "S")
    steps = header.get("adam_steps", {})
    _restore_optimizer(bundle.opt_g, arrays, steps, "optG")
    _restore_optimizer(bundle.opt_d, arrays, steps, "optD")
    _restore_optimizer(bundle.opt_s, arrays, steps, "optS")

    counters = header.get("counters", {})
    bundle.iteration = counters.get("iteration", 0)
    bundle.epoch = counters.get("epoch", 0)
    bundle.d_updates = counters.get("d_updates", 0)
    bundle.s_updates = counters.get("s_updates", 0)
    bundle.g_updates = counters.get("g_updates", 0)
    return bundle


def resume_trainer(path: str, dataset) -> Trainer:
    """Rebuild a Trainer mid-run; continues the exact seeded sequence."""
    header, arrays = read_checkpoint(path)
    if header["train_config"] is None:
        raise CheckpointError(f"{path}: checkpoint has no training configuration")
    config = TrainConfig.from_dict(header["train_config"])
    trainer = Trainer(config, dataset)
    bundle = trainer.bundle

    _load_network(bundle.generator, arrays, "G")
    _load_network(bundle.discriminator, arrays, "D")
    _load_network(bundle.segmentor, arrays, "S")
    steps = header.get("adam_steps", {})
    _restore_optimizer(bundle.opt_g, arrays, steps, "optG")
    _restore_optimizer(bundle.opt_d, arrays, steps, "optD")
    _restore_optimizer(bundle.opt_s, arrays, steps, "optS")

    counters = header["counters"]
    bundle.iteration = counters["iteration"]
    bundle.epoch = counters["epoch"]
    bundle.d_updates = counters["d_updates"]
    bundle.s_updates = counters["s_updates"]
    bundle.g_updates = counters["g_updates"]

    rng = header.get("rng", {})
    if rng:
        trainer.z_gen.set_state(torch.from_numpy(arrays["rng.z_gen"].copy()))
        trainer.eps_gen.set_state(torch.from_numpy(arrays["rng.eps_gen"].copy()))
        trainer.snapshot_gen.set_state(torch.from_numpy(arrays["rng.snapshot_gen"].copy()))
        trainer.sampler_rng.bit_generator.state = rng["sampler_rng"]
        trainer.shuffle_rng.bit_generator.state = rng["shuffle_rng"]
        trainer.sampler.restore(rng["sampler"])
    return trainer
