"""Runtime configuration, optionally read from the JSON file named by LUCY_CONFIG.

Recognised keys::

    {"vocab": "vocab.json", "delay_pattern": "cumulative" | "uniform" | [0, 1, ...],
     "chunk_frames": 2, "gate_threshold": 0.5, "tool_registry": "tools.json",
     "predictor": "echo" | "script:<grid.bin>" | "<module>:<factory>",
     "speaker": "female", "emotion": null, "max_steps": 2048}
"""

from __future__ import annotations

import importlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .framing import DelayPattern
from .predictor import EchoPredictor, ScriptedPredictor
from .tools import ToolRegistry
from .vocab import VocabSpec

ENV_VAR = "LUCY_CONFIG"


@dataclass(frozen=True)
class RuntimeConfig:
    vocab: VocabSpec = field(default_factory=VocabSpec.default)
    pattern: Optional[DelayPattern] = None
    chunk_frames: int = 2
    gate_threshold: float = 0.5
    tool_registry: Optional[str] = None
    predictor: str = "echo"
    speaker: str = "female"
    emotion: Optional[str] = None
    max_steps: int = 2048

    def __post_init__(self):
        if self.pattern is None:
            object.__setattr__(self, "pattern", DelayPattern.cumulative(self.vocab.num_layers))
        if self.pattern.num_layers != self.vocab.num_layers:
            raise ConfigError("delay pattern arity does not match the vocab layer count")
        if self.chunk_frames < 1:
            raise ConfigError("chunk_frames must be >= 1")
        if self.speaker not in self.vocab.reserved.speaker:
            raise ConfigError(f"unknown speaker {self.speaker!r}")
        if self.emotion is not None and self.emotion not in self.vocab.reserved.emotion:
            raise ConfigError(f"unknown emotion {self.emotion!r}")

    def with_overrides(self, **kw) -> "RuntimeConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def tools(self) -> ToolRegistry:
        if self.tool_registry:
            return ToolRegistry.from_json(self.tool_registry)
        return ToolRegistry.default()

    def make_predictor(self):
        return resolve_predictor(self.predictor, self.vocab, self.pattern)


def resolve_predictor(spec: str, vocab: VocabSpec, pattern: DelayPattern):
    """Build a predictor from ``echo``, ``script:<path>`` or ``module:factory``.

    A factory is called as ``factory(vocab, pattern)``.
    """
    if spec == "echo":
        return EchoPredictor(vocab, pattern)
    if spec.startswith("script:"):
        return ScriptedPredictor.from_file(spec[len("script:"):], vocab)
    if ":" in spec:
        mod, _, attr = spec.partition(":")
        try:
            factory = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as e:
            raise ConfigError(f"cannot load predictor {spec!r}: {e}") from None
        return factory(vocab, pattern)
    raise ConfigError(f"unknown predictor spec {spec!r}")


def load_config(path=None) -> RuntimeConfig:
    """Read ``path`` or, failing that, the file named by ``$LUCY_CONFIG``."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return RuntimeConfig()
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    base = path.parent

    def rel(p):
        return str(p if Path(p).is_absolute() else base / p)

    vocab = VocabSpec.load(rel(raw["vocab"])) if raw.get("vocab") else VocabSpec.default()
    pattern = DelayPattern.parse(raw.get("delay_pattern", "cumulative"), vocab.num_layers)
    predictor = raw.get("predictor", "echo")
    if predictor.startswith("script:"):
        predictor = "script:" + rel(predictor[len("script:"):])
    return RuntimeConfig(
        vocab=vocab,
        pattern=pattern,
        chunk_frames=int(raw.get("chunk_frames", 2)),
        gate_threshold=float(raw.get("gate_threshold", 0.5)),
        tool_registry=rel(raw["tool_registry"]) if raw.get("tool_registry") else None,
        predictor=predictor,
        speaker=raw.get("speaker", "female"),
        emotion=raw.get("emotion"),
        max_steps=int(raw.get("max_steps", 2048)),
    )
