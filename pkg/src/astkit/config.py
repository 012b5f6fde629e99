"""Pipeline configuration: JSON file, AST_* environment overrides, defaults.

Mock mode wires every backend to the packaged scripted-response table and
the built-in demo knowledge bases so a full run needs no network and no
prior ingestion.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .gateway import (
    ENV_API_KEY,
    ENV_BASE_URL,
    ENV_MODEL,
    ENV_VISION_MODEL,
    BackendConfig,
)

ENV_WORKSPACE = "AST_WORKSPACE"
DEFAULT_WORKSPACE = "ast_workspace"


def data_path(*parts: str) -> Path:
    """Path to a packaged data file."""
    return Path(str(resources.files("astkit").joinpath("data", *parts)))


@dataclass
class PipelineConfig:
    workspace: Path = field(default_factory=lambda: Path(DEFAULT_WORKSPACE))
    mock: bool = False
    text_backend: BackendConfig = field(default_factory=BackendConfig)
    vision_backend: BackendConfig = field(default_factory=BackendConfig)
    scripted_responses_path: Path | None = None
    corpus_dir: Path | None = None
    param_msg_dir: Path | None = None
    mission_ruleset_path: Path | None = None
    env_ruleset_path: Path | None = None
    detector_config_path: Path | None = None
    labels_path: Path | None = None
    k_retrieval: int = 5
    k_params: int = 5
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if self.k_retrieval < 1 or self.k_params < 1 or self.max_attempts < 1:
            raise ValueError("k_retrieval, k_params and max_attempts must be >= 1")
        for name in ("scripted_responses_path", "corpus_dir", "param_msg_dir",
                     "mission_ruleset_path", "env_ruleset_path",
                     "detector_config_path", "labels_path"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ValueError(f"{name} does not exist: {value}")

    def snapshot(self) -> dict:
        """The run-reproducibility slice recorded in every manifest."""
        return {
            "text_model": self.text_backend.model_id,
            "text_backend": self.text_backend.kind,
            "vision_model": self.vision_backend.model_id,
            "temperature": self.text_backend.temperature,
            "k_retrieval": self.k_retrieval,
            "k_params": self.k_params,
            "max_attempts": self.max_attempts,
            "mission_ruleset": _opt(self.mission_ruleset_path),
            "env_ruleset": _opt(self.env_ruleset_path),
            "detector_config": _opt(self.detector_config_path),
            "mock": self.mock,
        }


def _opt(path: Path | None) -> str | None:
    return None if path is None else str(path)


def load_config(
    path: str | Path | None = None,
    *,
    mock: bool = False,
    workspace: str | Path | None = None,
) -> PipelineConfig:
    """Build a config from an optional JSON file plus environment overrides."""
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))

    mock = bool(raw.get("mock", False)) or mock
    ws = workspace or os.environ.get(ENV_WORKSPACE) or raw.get("workspace") or DEFAULT_WORKSPACE

    def backend(section: str, vision: bool) -> BackendConfig:
        cfg = dict(raw.get(section, {}))
        base_url = os.environ.get(ENV_BASE_URL, cfg.get("base_url", ""))
        model_env = os.environ.get(ENV_VISION_MODEL if vision else ENV_MODEL)
        if mock:
            return BackendConfig(kind="scripted", model_id=cfg.get("model_id", "scripted"))
        return BackendConfig(
            kind=cfg.get("kind", "remote" if base_url else "scripted"),
            base_url=base_url,
            model_id=model_env or cfg.get("model_id", "default"),
            timeout=float(cfg.get("timeout", 60.0)),
            max_retries=int(cfg.get("max_retries", 3)),
            max_concurrent=int(cfg.get("max_concurrent", 4)),
            api_key=os.environ.get(ENV_API_KEY, cfg.get("api_key", "")),
            temperature=cfg.get("temperature"),
        )

    def opt_path(key: str, default: Path | None = None) -> Path | None:
        if key in raw and raw[key]:
            return Path(raw[key])
        return default

    scripted = opt_path("scripted_responses_path")
    if mock and scripted is None:
        scripted = data_path("mock_responses.json")
    corpus = opt_path("corpus_dir")
    if mock and corpus is None:
        corpus = data_path("demo_corpus")
    msg_dir = opt_path("param_msg_dir")
    if mock and msg_dir is None:
        msg_dir = data_path("msg")

    return PipelineConfig(
        workspace=Path(ws),
        mock=mock,
        text_backend=backend("text_backend", vision=False),
        vision_backend=backend("vision_backend", vision=True),
        scripted_responses_path=scripted,
        corpus_dir=corpus,
        param_msg_dir=msg_dir,
        mission_ruleset_path=opt_path("mission_ruleset_path"),
        env_ruleset_path=opt_path("env_ruleset_path"),
        detector_config_path=opt_path("detector_config_path"),
        labels_path=opt_path("labels_path"),
        k_retrieval=int(raw.get("k_retrieval", 5)),
        k_params=int(raw.get("k_params", 5)),
        max_attempts=int(raw.get("max_attempts", 3)),
    )
