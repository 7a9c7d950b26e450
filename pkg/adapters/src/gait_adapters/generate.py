"""Edge-conditioned image generation adapter.

Engines:

* ``diffusers``: ControlNet over Stable Diffusion via the diffusers
  library. Needs the ``diffusion`` extra installed and model weights
  available; prompts, seed and step count come from the manifest.
* ``sketch``: dependency-light deterministic renderer that draws the edge
  map as a glowing line sketch on a seeded textured background. It is a
  protocol-grade stand-in for smoke tests and offline development, not a
  photorealistic generator.

Per-image timing and the prompts in effect are logged to standard error as
JSON lines. Outputs are always 512 x 512 PNG at the manifest-declared
paths; nothing else is written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageFilter

from . import EXIT_OK, EXIT_PROTOCOL_ERROR
from .manifest import GenerateRequest, ManifestError, load_manifest

OUTPUT_SIDE = 512


@dataclass(frozen=True)
class AdapterConfig:
    engine: str = "sketch"
    model: str = "runwayml/stable-diffusion-v1-5"
    controlnet: str = "lllyasviel/sd-controlnet-canny"
    device: str = "cpu"
    guidance_scale: float = 7.5
    steps_override: int | None = None
    batch_size: int = 1

    def validate(self) -> None:
        if self.engine not in ("sketch", "diffusers"):
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.guidance_scale <= 0:
            raise ValueError("guidance scale must be positive")


def log(event: str, **fields) -> None:
    print(json.dumps({"event": event, **fields}, sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------
# Sketch engine

def _request_rng(request: GenerateRequest) -> np.ndarray:
    material = f"{request.seed}:{request.edge_map.name}".encode()
    digest = hashlib.sha256(material).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def render_sketch(request: GenerateRequest) -> Image.Image:
    """Deterministic stylized rendering of the edge map."""
    rng = _request_rng(request)
    with Image.open(request.edge_map) as img:
        edges = img.convert("L").resize((OUTPUT_SIDE, OUTPUT_SIDE), Image.BILINEAR)
    edge_arr = np.asarray(edges, dtype=float) / 255.0

    # Low-frequency seeded background texture.
    coarse = rng.uniform(28, 52, size=(8, 8))
    background = np.asarray(
        Image.fromarray(coarse.astype(np.uint8), "L").resize(
            (OUTPUT_SIDE, OUTPUT_SIDE), Image.BILINEAR
        ),
        dtype=float,
    )
    glow = np.asarray(
        Image.fromarray((edge_arr * 255).astype(np.uint8), "L").filter(
            ImageFilter.GaussianBlur(2.0)
        ),
        dtype=float,
    )
    base = np.clip(background + 0.55 * glow + 200.0 * edge_arr, 0, 255)
    tint = np.stack([base * 0.92, base * 0.97, base], axis=-1)
    return Image.fromarray(np.clip(tint, 0, 255).astype(np.uint8), "RGB")


# ---------------------------------------------------------------------------
# Diffusers engine

class DiffusersEngine:
    def __init__(self, config: AdapterConfig):
        try:
            import torch
            from diffusers import (
                ControlNetModel,
                StableDiffusionControlNetPipeline,
            )
        except ImportError as exc:
            raise RuntimeError(
                "diffusers engine requires the 'diffusion' extra "
                f"(pip install gait-adapters[diffusion]): {exc}"
            ) from exc
        self.torch = torch
        dtype = torch.float16 if config.device.startswith("cuda") else torch.float32
        controlnet = ControlNetModel.from_pretrained(config.controlnet, torch_dtype=dtype)
        self.pipe = StableDiffusionControlNetPipeline.from_pretrained(
            config.model, controlnet=controlnet, torch_dtype=dtype
        ).to(config.device)
        self.config = config

    def generate(self, request: GenerateRequest) -> Image.Image:
        with Image.open(request.edge_map) as img:
            condition = img.convert("RGB").resize((OUTPUT_SIDE, OUTPUT_SIDE))
        generator = self.torch.Generator(device="cpu").manual_seed(request.seed)
        steps = self.config.steps_override or request.steps
        result = self.pipe(
            prompt=request.positive_prompt,
            negative_prompt=request.negative_prompt,
            image=condition,
            num_inference_steps=steps,
            guidance_scale=self.config.guidance_scale,
            generator=generator,
        )
        return result.images[0]


# ---------------------------------------------------------------------------
# Entry point

def run(config: AdapterConfig, manifest_path: str) -> int:
    config.validate()
    manifest = load_manifest(manifest_path, expected_kind="generate")
    engine = None
    if config.engine == "diffusers":
        engine = DiffusersEngine(config)

    failures = 0
    for request in manifest.requests:
        started = time.monotonic()
        try:
            if engine is not None:
                image = engine.generate(request)
            else:
                image = render_sketch(request)
            if image.size != (OUTPUT_SIDE, OUTPUT_SIDE):
                image = image.resize((OUTPUT_SIDE, OUTPUT_SIDE))
            request.output.parent.mkdir(parents=True, exist_ok=True)
            image.save(request.output, format="PNG")
            log(
                "generated",
                output=str(request.output),
                seconds=round(time.monotonic() - started, 3),
                seed=request.seed,
                steps=request.steps,
                positive_prompt=request.positive_prompt,
                negative_prompt=request.negative_prompt,
                engine=config.engine,
            )
        except Exception as exc:  # per-request isolation, batch continues
            failures += 1
            log("request_failed", output=str(request.output), error=str(exc))
    log("done", requests=len(manifest.requests), failures=failures)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Edge-conditioned image generation backend"
    )
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--engine", default="sketch", choices=["sketch", "diffusers"])
    parser.add_argument("--model", default=AdapterConfig.model)
    parser.add_argument("--controlnet", default=AdapterConfig.controlnet)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--guidance-scale", type=float, default=7.5)
    parser.add_argument("--steps", type=int, default=None,
                        help="Override the manifest step count.")
    args = parser.parse_args(argv)

    config = AdapterConfig(
        engine=args.engine,
        model=args.model,
        controlnet=args.controlnet,
        device=args.device,
        guidance_scale=args.guidance_scale,
        steps_override=args.steps,
    )
    try:
        # Configuration problems must surface before the manifest is touched.
        config.validate()
    except ValueError as exc:
        log("config_error", error=str(exc))
        return EXIT_PROTOCOL_ERROR
    try:
        return run(config, args.manifest)
    except (ManifestError, RuntimeError, OSError) as exc:
        log("fatal", error=str(exc))
        return EXIT_PROTOCOL_ERROR


if __name__ == "__main__":
    sys.exit(main())
