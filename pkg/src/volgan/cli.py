"""Umbrella command line: phantom data, preprocessing, training, inversion,
latent operations, metrics, and the HTTP service.

Latent codes travel as JSON files: {"code": [...], "space": "z"|"w",
"provenance": {...}}. Volumes travel as .vgan containers.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import click
import numpy as np
import torch

from . import preprocess as pp
from .inversion import InversionConfig, invert, train_encoder
from .latent import TruncationConfig, bundle_directions, estimate_w_mean, sample_truncated
from .metrics import SliceFeatureExtractor, realism, fid, precision_recall, train_toy_extractor
from .metrics import DEFAULT_K
from .networks import load_bundle, save_bundle
from .service import NOISE_PIN_SEED, create_app
from .tensors import tensor_to_volumes, volumes_to_tensor
from .training import DivergenceError, TrainConfig, desk_config, train
from .volume import PhantomSpec, load_corpus, phantom_corpus, read_volume, write_volume
from .latent import edit as edit_op


def _parse_shape(_ctx, _param, value):
    if value is None:
        return None
    parts = value.split(",")
    if len(parts) != 3:
        raise click.BadParameter(f"expected d1,d2,d3 got {value!r}")
    return tuple(int(p) for p in parts)


def _parse_int_list(_ctx, _param, value):
    if value is None:
        return None
    return tuple(int(p) for p in value.split(","))


def _write_code(path: Path, code: np.ndarray, space: str, provenance: dict) -> None:
    payload = {"code": [float(v) for v in code.reshape(-1)], "space": space,
               "provenance": provenance}
    path.write_text(json.dumps(payload))


def _read_code(path: Path) -> tuple[torch.Tensor, str]:
    payload = json.loads(Path(path).read_text())
    code = np.asarray(payload["code"], dtype=np.float32)
    return torch.from_numpy(code), payload.get("space", "z")


def _pinned_rng() -> torch.Generator:
    return torch.Generator().manual_seed(NOISE_PIN_SEED)


@click.group()
def main():
    """Train, invert and steer volumetric GANs."""


@main.command()
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--shape", callback=_parse_shape, default="32,64,64", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--vary/--no-vary", default=True, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def phantom(count, shape, seed, vary, out):
    """Emit a reproducible corpus of procedural phantom volumes."""
    out.mkdir(parents=True, exist_ok=True)
    volumes = phantom_corpus(count, shape, base_seed=seed, spec=PhantomSpec(), vary=vary)
    for i, vol in enumerate(volumes):
        write_volume(vol, out / f"phantom_{i:04d}.vgan")
    click.echo(f"wrote {count} phantoms of shape {shape} to {out}")


@main.command("preprocess")
@click.argument("input_dir", type=click.Path(exists=True, path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--target-shape", callback=_parse_shape, default=None,
              help="pad/crop extent d1,d2,d3 before subsampling")
@click.option("--clip", type=float, default=pp.PAPER_DCT_CLIP, show_default=True)
@click.option("--subsample", type=int, default=2, show_default=True)
@click.option("--stacks", type=int, default=4, show_default=True)
@click.option("--stack-depth", type=int, default=32, show_default=True)
@click.option("--aug-per-stack", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def preprocess_cmd(input_dir, out_dir, target_shape, clip, subsample, stacks,
                   stack_depth, aug_per_stack, seed):
    """Run the full harmonization pipeline over a directory of volumes."""
    cfg = pp.PreprocessConfig(
        target_shape=target_shape or pp.PAPER_TARGET_SHAPE,
        dct_clip=clip, subsample_factor=subsample,
        stack_depth=stack_depth, n_stacks=stacks,
    )
    volumes = load_corpus(input_dir)
    if not volumes:
        raise click.ClickException(f"no .vgan files under {input_dir}")
    try:
        stacks_out = pp.preprocess_corpus(volumes, cfg,
                                          augmentations_per_stack=aug_per_stack, seed=seed)
    except ValueError as err:
        raise click.ClickException(str(err))
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, vol in enumerate(stacks_out):
        write_volume(vol, out_dir / f"stack_{i:05d}.vgan")
    click.echo(f"{len(volumes)} volumes -> {len(stacks_out)} training stacks in {out_dir}")


@main.command("train")
@click.argument("corpus_dir", type=click.Path(exists=True, path_type=Path))
@click.option("--arch", type=click.Choice(["progan", "stylegan"]), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--desk-scale", is_flag=True, help="short-run preset with small batches")
@click.option("--channel-base", type=int, default=16, show_default=True)
@click.option("--p1", type=float, default=None, help="gradient penalty weight")
@click.option("--p2", type=float, default=None, help="drift penalty weight")
@click.option("--lr-g", type=float, default=None)
@click.option("--lr-c", type=float, default=None)
@click.option("--n-critic", type=int, default=None)
@click.option("--grad-clip", type=float, default=None)
@click.option("--stage-samples", callback=_parse_int_list, default=None,
              help="comma list of per-stage sample budgets")
@click.option("--batch-per-stage", callback=_parse_int_list, default=None)
@click.option("--cycles-per-stage", type=int, default=None,
              help="fixed cycle count per stage, overrides --stage-samples")
@click.option("--lr-decay", type=float, default=None, help="per-stage lr multiplier")
@click.option("--map-lr-mult", type=float, default=None)
@click.option("--val-fraction", type=float, default=None)
@click.option("--val-every", type=int, default=None)
@click.option("--checkpoint-every", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--encoder/--no-encoder", "with_encoder", default=True, show_default=True,
              help="fit the inversion encoder after the generator finishes")
@click.option("--encoder-steps", type=int, default=200, show_default=True)
def train_cmd(corpus_dir, arch, out, desk_scale, channel_base,
              with_encoder, encoder_steps, **overrides):
    """Train a progressive or style generator on a .vgan corpus."""
    cfg = desk_config() if desk_scale else TrainConfig()
    rename = {"grad_clip": "grad_clip_norm", "lr_decay": "lr_decay_per_stage"}
    changes = {rename.get(k, k): v for k, v in overrides.items() if v is not None}
    if changes:
        cfg = dataclasses.replace(cfg, **changes)
    corpus = load_corpus(corpus_dir)
    if not corpus:
        raise click.ClickException(f"no .vgan files under {corpus_dir}")
    try:
        bundle = train(corpus, cfg, arch, out, channel_base=channel_base)
    except ValueError as err:
        raise click.ClickException(str(err))
    if with_encoder and bundle.stage < 5:
        click.echo(f"skipping encoder fit: training stopped at stage {bundle.stage}")
    elif with_encoder:
        batch = volumes_to_tensor(corpus[: min(len(corpus), 32)])
        inv_cfg = InversionConfig(encoder_steps=encoder_steps, seed=cfg.seed)
        try:
            bundle = train_encoder(bundle, batch, inv_cfg)
        except (ValueError, DivergenceError) as err:
            raise click.ClickException(str(err))
        save_bundle(bundle, out / "checkpoint-final")
    click.echo(f"trained {arch} at stage {bundle.stage}; checkpoints under {out}")


@main.command("invert")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--arch", type=click.Choice(["progan", "stylegan"]), default=None,
              help="assert the checkpoint architecture")
@click.option("--steps", type=int, default=100, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
@click.option("--recon-out", type=click.Path(path_type=Path), default=None)
def invert_cmd(checkpoint, input_path, arch, steps, out, recon_out):
    """Encode a volume, refine the code, write it as code JSON."""
    bundle = load_bundle(checkpoint).freeze()
    if arch is not None and arch != bundle.arch:
        raise click.ClickException(f"checkpoint holds a {bundle.arch} model")
    if bundle.encoder is None:
        raise click.ClickException("checkpoint has no inversion encoder")
    target = read_volume(input_path)
    if target.shape != bundle.full_shape:
        raise click.ClickException(
            f"volume shape {target.shape} does not match model {bundle.full_shape}")
    result = invert(bundle, volumes_to_tensor([target]), InversionConfig(refine_steps=steps))
    space = "w" if bundle.arch == "stylegan" else "z"
    _write_code(out, result.code.numpy(), space, {
        "source": str(input_path), "checkpoint": str(checkpoint),
        "refine_steps": steps, "chosen_step": result.chosen_step,
    })
    if recon_out is not None:
        with torch.no_grad():
            recon = bundle.synthesize(result.code.reshape(1, -1), rng=_pinned_rng(),
                                      code_space=space)
        write_volume(tensor_to_volumes(recon, provenance="reconstruction")[0], recon_out)
    click.echo(f"objective {result.objective_trace[result.chosen_step]:.6g} "
               f"at step {result.chosen_step}; code -> {out}")


@main.command("generate")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--truncation", type=float, default=None, help="truncnorm level (z space)")
@click.option("--psi", type=float, default=None, help="w-space interpolation toward the mean")
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def generate_cmd(checkpoint, truncation, psi, count, seed, out):
    """Sample volumes, optionally truncated, into a directory with their codes."""
    bundle = load_bundle(checkpoint).freeze()
    if truncation is not None and psi is not None:
        raise click.ClickException("give either --truncation or --psi")
    if psi is not None:
        if bundle.arch != "stylegan":
            raise click.ClickException("--psi applies to style models")
        if bundle.w_mean is None:
            with torch.no_grad():
                estimate_w_mean(bundle)
        cfg, space = TruncationConfig(mode="stylegan_psi", psi=psi), "w"
    elif truncation is not None:
        cfg, space = TruncationConfig(mode="progan_truncnorm", level=truncation), "z"
    else:
        cfg, space = TruncationConfig(mode="none"), "z"
    codes = sample_truncated(cfg, count, seed, bundle=bundle, latent_dim=bundle.latent_dim)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        with torch.no_grad():
            vol = bundle.synthesize(codes[i : i + 1], rng=_pinned_rng(), code_space=space)
        write_volume(tensor_to_volumes(vol)[0], out / f"gen_{i:04d}.vgan")
        _write_code(out / f"gen_{i:04d}.code.json", codes[i].numpy(), space, {
            "checkpoint": str(checkpoint), "seed": seed, "index": i,
            "truncation": truncation, "psi": psi,
        })
    click.echo(f"wrote {count} volumes to {out}")


@main.command("transition")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--code-a", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--code-b", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--steps", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def transition_cmd(checkpoint, code_a, code_b, steps, out):
    """Render interior frames of the linear path between two codes.

    steps=N produces frames at alpha = k/(N+1); alpha=1 is code A.
    """
    bundle = load_bundle(checkpoint).freeze()
    za, space_a = _read_code(code_a)
    zb, space_b = _read_code(code_b)
    if space_a != space_b:
        raise click.ClickException(f"mixed code spaces {space_a!r} vs {space_b!r}")
    out.mkdir(parents=True, exist_ok=True)
    for k in range(1, steps + 1):
        alpha = k / (steps + 1)
        code = (alpha * za + (1 - alpha) * zb).reshape(1, -1)
        with torch.no_grad():
            vol = bundle.synthesize(code, rng=_pinned_rng(), code_space=space_a)
        write_volume(tensor_to_volumes(vol)[0], out / f"alpha_{alpha:.4f}.vgan")
    click.echo(f"wrote {steps} transition frames to {out}")


@main.command("mix")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--source", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--target", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--boundary", type=int, required=True, help="source styles fill layers < boundary")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def mix_cmd(checkpoint, source, target, boundary, out):
    """Style-mix two w codes at a layer boundary."""
    bundle = load_bundle(checkpoint).freeze()
    if bundle.arch != "stylegan":
        raise click.ClickException("style mixing needs a style model")
    if not 0 <= boundary <= 15:
        raise click.ClickException("boundary must lie in 0..15")
    ws, _ = _read_code(source)
    wt, _ = _read_code(target)
    styles = torch.cat([ws.reshape(1, 1, -1).expand(1, boundary, -1),
                        wt.reshape(1, 1, -1).expand(1, 15 - boundary, -1)], dim=1)
    with torch.no_grad():
        vol = bundle.synthesize(styles, rng=_pinned_rng(), code_space="styles")
    write_volume(tensor_to_volumes(vol)[0], out)
    click.echo(f"mixed volume -> {out}")


@main.command("directions")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--arch", type=click.Choice(["progan", "stylegan"]), default=None)
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def directions_cmd(checkpoint, arch, k, out):
    """Write the top-k closed-form edit directions as JSON."""
    bundle = load_bundle(checkpoint).freeze()
    if arch is not None and arch != bundle.arch:
        raise click.ClickException(f"checkpoint holds a {bundle.arch} model")
    dirs = bundle_directions(bundle, k)
    Path(out).write_text(json.dumps({
        "source": dirs.source, "directions": dirs.directions.tolist(),
        "eigenvalues": dirs.eigenvalues.tolist(),
    }))
    click.echo(f"{k} directions from {dirs.source} -> {out}")


@main.command("edit")
@click.option("--checkpoint", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, path_type=Path),
              required=True)
@click.option("--direction-index", type=int, default=1, show_default=True,
              help="1-based index into the top-k directions")
@click.option("--strength", type=float, default=4.0, show_default=True)
@click.option("--k", type=int, default=4, show_default=True)
@click.option("--steps", type=int, default=100, show_default=True,
              help="refinement steps for the inversion")
@click.option("--out", type=click.Path(path_type=Path), required=True)
def edit_cmd(checkpoint, input_path, direction_index, strength, k, steps, out):
    """Invert a volume, push its code along a direction, write the results."""
    bundle = load_bundle(checkpoint).freeze()
    if bundle.encoder is None:
        raise click.ClickException("checkpoint has no inversion encoder")
    if not 1 <= direction_index <= k:
        raise click.ClickException(f"direction index must lie in 1..{k}")
    target = read_volume(input_path)
    dirs = bundle_directions(bundle, k)
    result = edit_op(bundle, volumes_to_tensor([target]),
                     dirs.directions[direction_index - 1], strength=strength,
                     cfg=InversionConfig(refine_steps=steps))
    out.mkdir(parents=True, exist_ok=True)
    write_volume(tensor_to_volumes(result["edited"], provenance="edited")[0],
                 out / "edited.vgan")
    write_volume(tensor_to_volumes(result["residual"], provenance="residual")[0],
                 out / "residual.vgan")
    write_volume(tensor_to_volumes(result["reconstruction"],
                                   provenance="reconstruction")[0],
                 out / "reconstruction.vgan")
    space = "w" if bundle.arch == "stylegan" else "z"
    _write_code(out / "code.json", result["code"].numpy(), space, {
        "source": str(input_path), "checkpoint": str(checkpoint),
        "direction_index": direction_index, "strength": strength,
    })
    click.echo(f"edited volume, residual and reconstruction -> {out}")


@main.command("metrics")
@click.option("--real-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gen-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--extractor", type=click.Choice(["inc2d", "toy3d"]), default="inc2d",
              show_default=True,
              help="toy3d trains a small real-vs-generated classifier for features")
@click.option("--k", type=int, default=DEFAULT_K, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def metrics_cmd(real_dir, gen_dir, extractor, k, seed):
    """Print FID, precision, recall and a realism histogram as JSON."""
    real = load_corpus(real_dir)
    gen = load_corpus(gen_dir)
    if not real or not gen:
        raise click.ClickException("both directories need .vgan volumes")
    if extractor == "inc2d":
        ex = SliceFeatureExtractor()
    else:
        ex = train_toy_extractor(real + gen, [0] * len(real) + [1] * len(gen), seed=seed)
    feats_real = ex.extract(real, seed=seed)
    feats_gen = ex.extract(gen, seed=seed)
    try:
        precision, recall = precision_recall(feats_real, feats_gen, k=k)
        scores = [realism(feats_real, feats_gen.features[i], k=k)
                  for i in range(len(feats_gen))]
    except ValueError as err:
        raise click.ClickException(str(err))
    counts, edges = np.histogram(scores, bins=10)
    click.echo(json.dumps({
        "fid": fid(feats_real, feats_gen),
        "precision": precision, "recall": recall,
        "realism_histogram": {"counts": counts.tolist(), "bin_edges": edges.tolist()},
        "extractor": ex.name, "k": k,
    }))


@main.command("serve")
@click.option("--checkpoint-dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--store-dir", type=click.Path(path_type=Path), default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve_cmd(checkpoint_dir, store_dir, host, port):
    """Serve loaded checkpoints over HTTP for the explorer UI."""
    import uvicorn

    app = create_app(checkpoint_dir, store_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
