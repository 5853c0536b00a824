"""Service configuration: backend selection, model identities, SDS parameters.

Everything is a config key, not a code constant. YAML (or flat key=value)
files are merged with SCORER_* environment overrides.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml


@dataclass
class SDSParams:
    """Noise schedule window and weighting for the score-distillation gradient."""

    t_min: int = 50
    t_max: int = 950
    guidance_scale: float = 100.0
    weight_mode: str = "constant"  # constant | snr
    noise_level: float = 0.1  # synthetic backend only

    def __post_init__(self):
        if not 0 <= self.t_min <= self.t_max:
            raise ValueError("need 0 <= t_min <= t_max")
        if self.guidance_scale <= 0:
            raise ValueError("guidance_scale must be positive")

    def weight(self, t: int) -> float:
        if self.weight_mode == "snr":
            span = max(self.t_max, 1)
            return float(1.0 - t / (span + 1))
        return 1.0


@dataclass
class ServiceConfig:
    backend: str = "synthetic"  # synthetic | real
    host: str = "127.0.0.1"
    port: int = 8750
    sds: SDSParams = field(default_factory=SDSParams)
    models: dict = field(
        default_factory=lambda: {
            "diffusion": "runwayml/stable-diffusion-v1-5",
            "ocr_encoder": "microsoft/trocr-base-printed",
            "clip": "openai/clip-vit-base-patch32",
            "fontclip": "openai/clip-vit-base-patch32",
            "llm_base_url": "",
            "llm_model": "",
            "llm_api_key_env": "SCORER_LLM_API_KEY",
        }
    )
    device: str = "cpu"

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServiceConfig":
        data: dict = {}
        if path:
            text = Path(path).read_text(encoding="utf-8")
            if str(path).endswith((".yaml", ".yml")):
                data = yaml.safe_load(text) or {}
            else:  # flat key=value
                for line in text.splitlines():
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    k, _, v = line.partition("=")
                    data[k.strip()] = v.strip()
        cfg = cls()
        cfg.backend = str(data.get("backend", cfg.backend))
        cfg.host = str(data.get("host", cfg.host))
        cfg.port = int(data.get("port", cfg.port))
        cfg.device = str(data.get("device", cfg.device))
        sds = data.get("sds", {}) if isinstance(data.get("sds"), dict) else {}
        cfg.sds = SDSParams(
            t_min=int(sds.get("t_min", data.get("sds.t_min", cfg.sds.t_min))),
            t_max=int(sds.get("t_max", data.get("sds.t_max", cfg.sds.t_max))),
            guidance_scale=float(
                sds.get("guidance_scale", data.get("sds.guidance_scale", cfg.sds.guidance_scale))
            ),
            weight_mode=str(
                sds.get("weight_mode", data.get("sds.weight_mode", cfg.sds.weight_mode))
            ),
            noise_level=float(
                sds.get("noise_level", data.get("sds.noise_level", cfg.sds.noise_level))
            ),
        )
        if isinstance(data.get("models"), dict):
            cfg.models.update({k: str(v) for k, v in data["models"].items()})
        cfg.apply_env()
        return cfg

    def apply_env(self) -> None:
        env = os.environ
        self.backend = env.get("SCORER_BACKEND", self.backend)
        self.device = env.get("SCORER_DEVICE", self.device)
        for key in list(self.models):
            self.models[key] = env.get(f"SCORER_MODEL_{key.upper()}", self.models[key])
