"""HTTP service exposing generation, inversion, transition, mixing, editing
and slice rendering over loaded checkpoints.

Volumes are persisted as container files in a content-addressed store (the
id is the payload hash), which makes endpoint determinism directly
observable. Style-based synthesis pins its noise stream to a constant, so
identical codes always render identical volumes.
"""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, File, Form, HTTPException, Query, Response, UploadFile
from pydantic import BaseModel

from .inversion import InversionConfig, invert
from .latent import (DirectionSet, TruncationConfig, bundle_directions,
                     estimate_w_mean, sample_truncated)
from .networks import GANBundle, load_bundle
from .networks.checkpoint import MANIFEST_NAME
from .tensors import tensor_to_volumes, volumes_to_tensor
from .volume import Volume, VolumeFormatError, volume_from_bytes, volume_to_bytes

AXIS_NAMES = {"axial": 0, "coronal": 1, "sagittal": 2, "0": 0, "1": 1, "2": 2}
NOISE_PIN_SEED = 0


def volume_id(volume: Volume) -> str:
    """Content address: hash of shape plus the raw voxel payload.

    Header metadata (provenance, spacing) does not enter the id, so volumes
    with identical voxels are identical resources.
    """
    digest = hashlib.sha256()
    digest.update(repr(volume.shape).encode())
    digest.update(np.ascontiguousarray(volume.data, dtype="<f4").tobytes())
    return digest.hexdigest()[:24]


class VolumeStore:
    """Content-addressed volume persistence keyed by volume_id."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, Volume] = {}

    def put(self, volume: Volume) -> str:
        vid = volume_id(volume)
        path = self.directory / f"{vid}.vgan"
        if not path.exists():
            path.write_bytes(volume_to_bytes(volume))
        self._cache[vid] = volume
        return vid

    def get(self, vid: str) -> Volume:
        if vid in self._cache:
            return self._cache[vid]
        path = self.directory / f"{vid}.vgan"
        if not path.exists():
            raise KeyError(vid)
        volume = volume_from_bytes(path.read_bytes())
        self._cache[vid] = volume
        return volume

    def raw(self, vid: str) -> bytes:
        path = self.directory / f"{vid}.vgan"
        if not path.exists():
            raise KeyError(vid)
        return path.read_bytes()


class ServiceState:
    """Loaded checkpoints (frozen), the volume store, and per-request log."""

    def __init__(self, checkpoint_dir: str | Path, store_dir: str | Path):
        self.checkpoint_dir = Path(checkpoint_dir)
        self.bundles: dict[str, GANBundle] = {}
        self.store = VolumeStore(store_dir)
        self.directions_cache: dict[tuple[str, int], DirectionSet] = {}
        self.request_log: list[dict] = []
        for manifest in sorted(self.checkpoint_dir.glob(f"*/{MANIFEST_NAME}")):
            name = manifest.parent.name
            self.bundles[name] = load_bundle(manifest.parent).freeze()

    def bundle(self, name: str) -> GANBundle:
        if name not in self.bundles:
            raise HTTPException(status_code=404, detail=f"unknown checkpoint {name!r}")
        return self.bundles[name]

    def log(self, endpoint: str, payload: dict) -> None:
        self.request_log.append({"endpoint": endpoint, **payload})


class GenerateRequest(BaseModel):
    checkpoint: str
    arch: str | None = None
    truncation: float | None = None
    psi: float | None = None
    seed: int = 0
    count: int = 1


class TransitionRequest(BaseModel):
    checkpoint: str
    code_a: list[float]
    code_b: list[float]
    steps: int = 3
    space: str = "z"


class MixRequest(BaseModel):
    checkpoint: str
    source_code: list[float]
    target_code: list[float]
    boundary: int


class EditRequest(BaseModel):
    checkpoint: str
    volume_id: str | None = None
    code: list[float] | None = None
    direction_index: int = 1
    strength: float = 4.0
    k: int = 4
    refine_steps: int = 0


def _pinned_rng() -> torch.Generator:
    return torch.Generator().manual_seed(NOISE_PIN_SEED)


def _synth_volumes(bundle: GANBundle, codes: torch.Tensor, code_space: str) -> list[Volume]:
    out = []
    with torch.no_grad():
        for i in range(codes.shape[0]):
            vol = bundle.synthesize(codes[i : i + 1], rng=_pinned_rng(),
                                    code_space=code_space)
            out.append(tensor_to_volumes(vol)[0])
    return out


def _code_tensor(values: list[float], bundle: GANBundle) -> torch.Tensor:
    arr = np.asarray(values, dtype=np.float32)
    if arr.shape != (bundle.latent_dim,):
        raise HTTPException(status_code=422,
                            detail=f"code must have {bundle.latent_dim} entries")
    if not np.all(np.isfinite(arr)):
        raise HTTPException(status_code=422, detail="non-finite code")
    return torch.from_numpy(arr)


def _preview_path(vid: str, volume: Volume) -> str:
    return f"/slice/{vid}?axis=0&index={volume.shape[0] // 2}"


def _require_w_mean(bundle: GANBundle) -> None:
    if bundle.w_mean is None:
        with torch.no_grad():
            estimate_w_mean(bundle)


def create_app(checkpoint_dir: str | Path, store_dir: str | Path | None = None) -> FastAPI:
    checkpoint_dir = Path(checkpoint_dir)
    state = ServiceState(checkpoint_dir, store_dir or checkpoint_dir / "volume_store")
    app = FastAPI(title="volumetric GAN explorer service")
    app.state.service = state

    @app.post("/generate")
    def generate(req: GenerateRequest):
        bundle = state.bundle(req.checkpoint)
        if req.arch is not None and req.arch != bundle.arch:
            raise HTTPException(status_code=422,
                                detail=f"checkpoint holds a {bundle.arch} model")
        if req.count < 1:
            raise HTTPException(status_code=422, detail="count must be >= 1")
        if req.truncation is not None and req.psi is not None:
            raise HTTPException(status_code=422, detail="give either truncation or psi")

        if req.psi is not None:
            if bundle.arch != "stylegan":
                raise HTTPException(status_code=422, detail="psi applies to style models")
            if not 0.0 <= req.psi <= 1.0:
                raise HTTPException(status_code=422, detail="psi must lie in [0,1]")
            _require_w_mean(bundle)
            cfg = TruncationConfig(mode="stylegan_psi", psi=req.psi)
            space = "w"
        elif req.truncation is not None:
            if bundle.arch != "progan":
                raise HTTPException(status_code=422,
                                    detail="truncation level applies to progressive models")
            if req.truncation <= 0:
                raise HTTPException(status_code=422, detail="truncation must be positive")
            cfg = TruncationConfig(mode="progan_truncnorm", level=req.truncation)
            space = "z"
        else:
            cfg = TruncationConfig(mode="none")
            space = "z"

        codes = sample_truncated(cfg, req.count, req.seed, bundle=bundle,
                                 latent_dim=bundle.latent_dim)
        volumes = _synth_volumes(bundle, codes, "w" if space == "w" else "z")
        entries = []
        for vol in volumes:
            vid = state.store.put(vol)
            entries.append({"id": vid, "preview": _preview_path(vid, vol)})
        state.log("/generate", {"checkpoint": req.checkpoint, "seed": req.seed,
                                "count": req.count})
        return {"checkpoint": req.checkpoint, "arch": bundle.arch, "seed": req.seed,
                "volumes": entries, "codes": codes.tolist(), "code_space": space}

    @app.post("/transition")
    def transition_endpoint(req: TransitionRequest):
        bundle = state.bundle(req.checkpoint)
        if req.steps < 1:
            raise HTTPException(status_code=422, detail="steps must be >= 1")
        if req.space not in ("z", "w"):
            raise HTTPException(status_code=422, detail="space must be z or w")
        if req.space == "w" and bundle.arch != "stylegan":
            raise HTTPException(status_code=422, detail="w codes need a style model")
        za = _code_tensor(req.code_a, bundle)
        zb = _code_tensor(req.code_b, bundle)
        alphas = [k / (req.steps + 1) for k in range(1, req.steps + 1)]
        entries = []
        with torch.no_grad():
            for alpha in alphas:
                code = (alpha * za + (1.0 - alpha) * zb).reshape(1, -1)
                vol = tensor_to_volumes(
                    bundle.synthesize(code, rng=_pinned_rng(), code_space=req.space)
                )[0]
                vid = state.store.put(vol)
                entries.append({"id": vid, "alpha": alpha,
                                "preview": _preview_path(vid, vol)})
        state.log("/transition", {"checkpoint": req.checkpoint, "steps": req.steps})
        return {"checkpoint": req.checkpoint, "frames": entries}

    @app.post("/mix")
    def mix_endpoint(req: MixRequest):
        bundle = state.bundle(req.checkpoint)
        if bundle.arch != "stylegan":
            raise HTTPException(status_code=422, detail="style mixing needs a style model")
        if not 0 <= req.boundary <= 15:
            raise HTTPException(status_code=422, detail="boundary must lie in 0..15")
        ws = _code_tensor(req.source_code, bundle).reshape(1, 1, -1)
        wt = _code_tensor(req.target_code, bundle).reshape(1, 1, -1)
        styles = torch.cat([ws.expand(1, req.boundary, -1),
                            wt.expand(1, 15 - req.boundary, -1)], dim=1)
        with torch.no_grad():
            vol = tensor_to_volumes(
                bundle.synthesize(styles, rng=_pinned_rng(), code_space="styles")
            )[0]
        vid = state.store.put(vol)
        state.log("/mix", {"checkpoint": req.checkpoint, "boundary": req.boundary})
        return {"checkpoint": req.checkpoint, "id": vid, "boundary": req.boundary,
                "preview": _preview_path(vid, vol)}

    @app.post("/invert")
    def invert_endpoint(checkpoint: str = Form(...), steps: int = Form(100),
                        volume_id: str | None = Form(None),
                        volume: UploadFile | None = File(None)):
        bundle = state.bundle(checkpoint)
        if bundle.encoder is None:
            raise HTTPException(status_code=422,
                                detail="checkpoint has no inversion encoder")
        if steps < 0:
            raise HTTPException(status_code=422, detail="steps must be >= 0")
        if volume is not None:
            try:
                target = volume_from_bytes(volume.file.read())
            except VolumeFormatError as err:
                raise HTTPException(status_code=400, detail=str(err))
        elif volume_id is not None:
            try:
                target = state.store.get(volume_id)
            except KeyError:
                raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        else:
            raise HTTPException(status_code=422, detail="provide volume or volume_id")
        if target.shape != bundle.full_shape:
            raise HTTPException(status_code=400,
                                detail=f"volume shape {target.shape} does not match "
                                       f"{bundle.full_shape}")

        x = volumes_to_tensor([target])
        result = invert(bundle, x, InversionConfig(refine_steps=steps))
        space = "w" if bundle.arch == "stylegan" else "z"
        with torch.no_grad():
            recon = bundle.synthesize(result.code.reshape(1, -1), rng=_pinned_rng(),
                                      code_space=space)
        rid = state.store.put(tensor_to_volumes(recon, provenance="reconstruction")[0])
        state.log("/invert", {"checkpoint": checkpoint, "steps": steps})
        return {"checkpoint": checkpoint, "code": result.code.tolist(),
                "code_space": space, "reconstruction_id": rid,
                "objective_trace": result.objective_trace,
                "chosen_step": result.chosen_step, "warning": result.warning}

    @app.get("/slice/{volume_id}")
    def slice_endpoint(volume_id: str, axis: str = Query("0"), index: int = Query(...)):
        try:
            vol = state.store.get(volume_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        if axis not in AXIS_NAMES:
            raise HTTPException(status_code=422, detail=f"axis must be one of {sorted(AXIS_NAMES)}")
        ax = AXIS_NAMES[axis]
        if not 0 <= index < vol.shape[ax]:
            raise HTTPException(status_code=404,
                                detail=f"index {index} outside 0..{vol.shape[ax] - 1}")
        plane = np.take(vol.data, index, axis=ax)
        pixels = np.clip(np.rint(plane * 255.0), 0, 255).astype(np.uint8)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(pixels, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/volume/{volume_id}")
    def volume_endpoint(volume_id: str):
        try:
            payload = state.store.raw(volume_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume_id!r}")
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/directions")
    def directions_endpoint(checkpoint: str = Query(...), k: int = Query(4)):
        bundle = state.bundle(checkpoint)
        if not 1 <= k <= bundle.latent_dim:
            raise HTTPException(status_code=422, detail=f"k must lie in 1..{bundle.latent_dim}")
        key = (checkpoint, k)
        if key not in state.directions_cache:
            state.directions_cache[key] = bundle_directions(bundle, k)
        dirs = state.directions_cache[key]
        return {"checkpoint": checkpoint, "k": k, "source": dirs.source,
                "directions": dirs.directions.tolist(),
                "eigenvalues": dirs.eigenvalues.tolist()}

    @app.post("/edit")
    def edit_endpoint(req: EditRequest):
        bundle = state.bundle(req.checkpoint)
        if not 1 <= req.direction_index <= req.k:
            raise HTTPException(status_code=422,
                                detail=f"direction_index must lie in 1..{req.k}")
        key = (req.checkpoint, req.k)
        if key not in state.directions_cache:
            state.directions_cache[key] = bundle_directions(bundle, req.k)
        direction = state.directions_cache[key].directions[req.direction_index - 1]
        space = "w" if bundle.arch == "stylegan" else "z"

        if req.code is not None:
            code = _code_tensor(req.code, bundle).reshape(1, -1)
            with torch.no_grad():
                original = bundle.synthesize(code, rng=_pinned_rng(), code_space=space)
            original_vol = tensor_to_volumes(original, provenance="reconstruction")[0]
        elif req.volume_id is not None:
            if bundle.encoder is None:
                raise HTTPException(status_code=422,
                                    detail="checkpoint has no inversion encoder")
            try:
                original_vol = state.store.get(req.volume_id)
            except KeyError:
                raise HTTPException(status_code=404,
                                    detail=f"unknown volume {req.volume_id!r}")
            x = volumes_to_tensor([original_vol])
            code = invert(bundle, x,
                          InversionConfig(refine_steps=req.refine_steps)).code.reshape(1, -1)
        else:
            raise HTTPException(status_code=422, detail="provide code or volume_id")

        shift = torch.from_numpy(np.asarray(direction, dtype=np.float32)).reshape(1, -1)
        with torch.no_grad():
            edited = bundle.synthesize(code + req.strength * shift, rng=_pinned_rng(),
                                       code_space=space)
        edited_vol = tensor_to_volumes(edited, provenance="edited")[0]
        residual = edited_vol.data - original_vol.data
        residual_vol = Volume(residual, spacing_um=original_vol.spacing_um,
                              provenance="residual")
        eid = state.store.put(edited_vol)
        sid = state.store.put(residual_vol)
        oid = state.store.put(original_vol)
        state.log("/edit", {"checkpoint": req.checkpoint,
                            "direction_index": req.direction_index,
                            "strength": req.strength})
        return {"checkpoint": req.checkpoint, "edited_id": eid, "residual_id": sid,
                "original_id": oid, "code": code.reshape(-1).tolist(),
                "preview": _preview_path(eid, edited_vol)}

    @app.get("/checkpoints")
    def checkpoints_endpoint():
        return {"checkpoints": [
            {"name": name, "arch": b.arch, "full_shape": list(b.full_shape),
             "stage": b.stage, "has_encoder": b.encoder is not None}
            for name, b in state.bundles.items()
        ]}

    return app
