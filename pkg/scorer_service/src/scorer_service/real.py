"""Model-backed backends: latent-diffusion SDS gradients, a text-recognition
encoder for readability features, CLIP similarity, font embeddings, and an
OpenAI-compatible LLM for prompt expansion.

All model identities come from the config. Imports are lazy and models load
once on first use; a missing dependency or weightless environment surfaces as
a clear startup error rather than a crash mid-request.
"""

from __future__ import annotations

import os

import numpy as np

from .config import ServiceConfig


class ModelLoadError(RuntimeError):
    pass


class RealBackends:
    name = "real"

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._pipe = None
        self._ocr = None
        self._clip = None
        self._fontclip = None

    # -- lazy loaders ---------------------------------------------------------

    def _load_diffusion(self):
        if self._pipe is None:
            try:
                import torch
                from diffusers import StableDiffusionPipeline
            except ImportError as exc:
                raise ModelLoadError(f"diffusers/torch unavailable: {exc}") from exc
            try:
                self._pipe = StableDiffusionPipeline.from_pretrained(
                    self.config.models["diffusion"]
                ).to(self.config.device)
                self._pipe.safety_checker = None
            except Exception as exc:
                raise ModelLoadError(
                    f"cannot load diffusion model {self.config.models['diffusion']}: {exc}"
                ) from exc
        return self._pipe

    def _load_ocr(self):
        if self._ocr is None:
            try:
                from transformers import AutoImageProcessor, AutoModel
            except ImportError as exc:
                raise ModelLoadError(f"transformers unavailable: {exc}") from exc
            try:
                name = self.config.models["ocr_encoder"]
                self._ocr = (
                    AutoImageProcessor.from_pretrained(name),
                    AutoModel.from_pretrained(name).to(self.config.device).eval(),
                )
            except Exception as exc:
                raise ModelLoadError(f"cannot load OCR encoder: {exc}") from exc
        return self._ocr

    def _load_clip(self, key: str):
        cache = "_clip" if key == "clip" else "_fontclip"
        if getattr(self, cache) is None:
            try:
                from transformers import CLIPModel, CLIPProcessor
            except ImportError as exc:
                raise ModelLoadError(f"transformers unavailable: {exc}") from exc
            try:
                name = self.config.models[key]
                setattr(
                    self, cache,
                    (CLIPProcessor.from_pretrained(name),
                     CLIPModel.from_pretrained(name).to(self.config.device).eval()),
                )
            except Exception as exc:
                raise ModelLoadError(f"cannot load {key} model: {exc}") from exc
        return getattr(self, cache)

    # -- semantic gradient ------------------------------------------------------

    def sds_grad(self, image: np.ndarray, prompt: str, seed: int) -> np.ndarray:
        import torch

        pipe = self._load_diffusion()
        p = self.config.sds
        device = self.config.device
        gen = torch.Generator(device=device).manual_seed(seed)

        x = (
            torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
            .permute(2, 0, 1).unsqueeze(0).to(device)
        )
        x = (x * 2.0 - 1.0).requires_grad_(True)

        latents = pipe.vae.encode(x).latent_dist.sample(generator=gen)
        latents = latents * pipe.vae.config.scaling_factor

        t = torch.randint(p.t_min, p.t_max + 1, (1,), device=device, generator=gen)
        noise = torch.randn(latents.shape, device=device, generator=gen)
        noisy = pipe.scheduler.add_noise(latents, noise, t)

        text_in = pipe.tokenizer(
            [prompt, ""], padding="max_length",
            max_length=pipe.tokenizer.model_max_length, return_tensors="pt",
        ).to(device)
        text_emb = pipe.text_encoder(text_in.input_ids)[0]

        with torch.no_grad():
            eps_both = pipe.unet(
                torch.cat([noisy, noisy]), torch.cat([t, t]),
                encoder_hidden_states=text_emb,
            ).sample
        eps_cond, eps_uncond = eps_both.chunk(2)
        eps_hat = eps_uncond + p.guidance_scale * (eps_cond - eps_uncond)

        w = p.weight(int(t.item()))
        # surrogate whose gradient w.r.t. pixels is w(t) (eps_hat - eps) dz/dx
        surrogate = (w * (eps_hat - noise).detach() * latents).sum()
        surrogate.backward()
        grad = x.grad.squeeze(0).permute(1, 2, 0).detach().cpu().numpy()
        return (2.0 * grad).astype(np.float32)  # chain through x -> 2x - 1

    # -- features ---------------------------------------------------------------

    def _ocr_features_tensor(self, image: np.ndarray, requires_grad: bool = False):
        import torch

        processor, model = self._load_ocr()
        size = getattr(processor, "size", None) or {"height": 384, "width": 384}
        h = size.get("height", 384)
        w = size.get("width", 384)
        x = (
            torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
            .permute(2, 0, 1).unsqueeze(0).to(self.config.device)
        )
        if requires_grad:
            x.requires_grad_(True)
        import torch.nn.functional as F

        resized = F.interpolate(x, size=(h, w), mode="bilinear", align_corners=False)
        out = model(pixel_values=resized).last_hidden_state
        return x, out.mean(dim=1).squeeze(0)

    def features(self, image: np.ndarray) -> np.ndarray:
        import torch

        with torch.no_grad():
            _, feats = self._ocr_features_tensor(image)
        return feats.cpu().numpy().astype(np.float64)

    def features_gradient(self, image: np.ndarray, reference: np.ndarray):
        import torch

        with torch.no_grad():
            _, f_ref = self._ocr_features_tensor(reference)
        x, f = self._ocr_features_tensor(image, requires_grad=True)
        loss = torch.mean((f - f_ref) ** 2)
        loss.backward()
        grad = x.grad.squeeze(0).permute(1, 2, 0).cpu().numpy().astype(np.float32)
        return f.detach().cpu().numpy().astype(np.float64), grad

    # -- similarity ----------------------------------------------------------------

    def clip_score(self, image: np.ndarray, prompt: str) -> float:
        import torch
        from PIL import Image

        processor, model = self._load_clip("clip")
        pil = Image.fromarray((np.clip(image, 0, 1) * 255).astype(np.uint8))
        inputs = processor(text=[prompt], images=pil, return_tensors="pt", padding=True)
        with torch.no_grad():
            out = model(**inputs.to(self.config.device))
        img = out.image_embeds / out.image_embeds.norm(dim=-1, keepdim=True)
        txt = out.text_embeds / out.text_embeds.norm(dim=-1, keepdim=True)
        return float((img * txt).sum())

    # -- font embeddings ----------------------------------------------------------

    def font_embed_image(self, image: np.ndarray) -> np.ndarray:
        import torch
        from PIL import Image

        processor, model = self._load_clip("fontclip")
        pil = Image.fromarray((np.clip(image, 0, 1) * 255).astype(np.uint8))
        inputs = processor(images=pil, return_tensors="pt")
        with torch.no_grad():
            emb = model.get_image_features(**inputs.to(self.config.device))
        v = emb.squeeze(0).cpu().numpy().astype(np.float64)
        return v / np.linalg.norm(v)

    def font_embed_text(self, prompt: str) -> np.ndarray:
        import torch

        processor, model = self._load_clip("fontclip")
        inputs = processor(text=[prompt], return_tensors="pt", padding=True)
        with torch.no_grad():
            emb = model.get_text_features(**inputs.to(self.config.device))
        v = emb.squeeze(0).cpu().numpy().astype(np.float64)
        return v / np.linalg.norm(v)

    # -- prompt engine --------------------------------------------------------------

    def _llm(self, prompt: str) -> str:
        import requests

        base = self.config.models["llm_base_url"]
        if not base:
            raise ModelLoadError("llm_base_url not configured")
        key = os.environ.get(self.config.models["llm_api_key_env"], "")
        resp = requests.post(
            base.rstrip("/") + "/chat/completions",
            headers={"Authorization": f"Bearer {key}"} if key else {},
            json={
                "model": self.config.models["llm_model"],
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0.2,
            },
            timeout=120,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def concepts(self, prompt: str, seed: int) -> list[str]:
        return [self._llm(prompt)]

    def font_attrs(self, prompt: str, seed: int) -> list[str]:
        return [self._llm(prompt)]
