"""Token spaces for parallel text + audio-codebook decoding.

Layer 0 is the text layer; layers 1..num_audio_layers are codec codebooks that
share one vocabulary size. Every control token (speaker, emotion, tool-call
markers, turn delimiters) lives in the text layer's id space. Each audio layer
reserves a single pad id.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

DEFAULT_EMOTIONS = ("neutral", "happy", "angry", "sad", "fear", "disgust", "surprise", "sorry")
DEFAULT_SPEAKERS = ("male", "female")


class TokenClass(str, enum.Enum):
    TEXT = "text"
    AUDIO = "audio"
    CONTROL = "control"
    PAD = "pad"


@dataclass(frozen=True)
class ControlTokenTable:
    pad_text: int
    pad_audio: int
    bos: int
    eos: int
    turn_end: int
    tool_call_open: int
    tool_call_close: int
    audio_slot: int
    tool_response: int
    speaker: Mapping[str, int] = field(default_factory=dict)
    emotion: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        # freeze the maps so a shared spec cannot be mutated behind a session
        object.__setattr__(self, "speaker", MappingProxyType(dict(self.speaker)))
        object.__setattr__(self, "emotion", MappingProxyType(dict(self.emotion)))

    def text_ids(self) -> dict[str, int]:
        """Every reserved text-layer id keyed by a unique name."""
        ids = {
            "pad_text": self.pad_text,
            "bos": self.bos,
            "eos": self.eos,
            "turn_end": self.turn_end,
            "tool_call_open": self.tool_call_open,
            "tool_call_close": self.tool_call_close,
            "audio_slot": self.audio_slot,
            "tool_response": self.tool_response,
        }
        ids.update({f"speaker:{k}": v for k, v in self.speaker.items()})
        ids.update({f"emotion:{k}": v for k, v in self.emotion.items()})
        return ids

    def to_dict(self) -> dict:
        return {
            "pad_text": self.pad_text,
            "pad_audio": self.pad_audio,
            "bos": self.bos,
            "eos": self.eos,
            "turn_end": self.turn_end,
            "tool_call_open": self.tool_call_open,
            "tool_call_close": self.tool_call_close,
            "audio_slot": self.audio_slot,
            "tool_response": self.tool_response,
            "speaker": dict(self.speaker),
            "emotion": dict(self.emotion),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ControlTokenTable":
        return cls(
            **{k: int(d[k]) for k in (
                "pad_text", "pad_audio", "bos", "eos", "turn_end",
                "tool_call_open", "tool_call_close", "audio_slot", "tool_response",
            )},
            speaker={str(k): int(v) for k, v in d["speaker"].items()},
            emotion={str(k): int(v) for k, v in d["emotion"].items()},
        )


@dataclass(frozen=True)
class VocabSpec:
    text_vocab_size: int
    audio_vocab_size: int
    reserved: ControlTokenTable
    num_audio_layers: int = 7

    def __post_init__(self):
        if self.num_audio_layers < 1:
            raise ValueError("num_audio_layers must be >= 1")
        if self.text_vocab_size <= 0 or self.audio_vocab_size <= 0:
            raise ValueError("vocabulary sizes must be positive")
        r = self.reserved
        ids = r.text_ids()
        for name, i in ids.items():
            if not 0 <= i < self.text_vocab_size:
                raise ValueError(f"reserved token {name}={i} outside text vocab of {self.text_vocab_size}")
        if len(set(ids.values())) != len(ids):
            raise ValueError("reserved text tokens must have pairwise distinct ids")
        if not 0 <= r.pad_audio < self.audio_vocab_size:
            raise ValueError(f"pad_audio={r.pad_audio} outside audio vocab of {self.audio_vocab_size}")
        if not set(DEFAULT_SPEAKERS) <= set(r.speaker):
            raise ValueError("speaker map must contain at least 'male' and 'female'")
        if not r.emotion:
            raise ValueError("emotion map must not be empty")

    @classmethod
    def default(
        cls,
        text_vocab_size: int = 320,
        audio_vocab_size: int = 64,
        num_audio_layers: int = 7,
        emotions: Sequence[str] = DEFAULT_EMOTIONS,
        speakers: Sequence[str] = DEFAULT_SPEAKERS,
    ) -> "VocabSpec":
        """Reserve the lowest text ids for control tokens, in a fixed order."""
        names = ["pad_text", "bos", "eos", "turn_end", "tool_call_open",
                 "tool_call_close", "audio_slot", "tool_response"]
        base = {n: i for i, n in enumerate(names)}
        nxt = len(names)
        speaker = {}
        for s in speakers:
            speaker[s] = nxt
            nxt += 1
        emotion = {}
        for e in emotions:
            emotion[e] = nxt
            nxt += 1
        table = ControlTokenTable(
            pad_audio=audio_vocab_size - 1, speaker=speaker, emotion=emotion, **base
        )
        return cls(text_vocab_size, audio_vocab_size, table, num_audio_layers)

    @cached_property
    def reserved_text_ids(self) -> frozenset:
        return frozenset(self.reserved.text_ids().values())

    @property
    def num_layers(self) -> int:
        return 1 + self.num_audio_layers

    def layer_sizes(self) -> list[int]:
        return [self.text_vocab_size] + [self.audio_vocab_size] * self.num_audio_layers

    def pads(self) -> list[int]:
        return [self.reserved.pad_text] + [self.reserved.pad_audio] * self.num_audio_layers

    @property
    def emotions(self) -> tuple[str, ...]:
        return tuple(self.reserved.emotion)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(self.reserved.speaker)

    def first_free_text_id(self) -> int:
        used = set(self.reserved.text_ids().values())
        i = 0
        while i in used:
            i += 1
        return i

    def to_dict(self) -> dict:
        return {
            "text_vocab_size": self.text_vocab_size,
            "audio_vocab_size": self.audio_vocab_size,
            "num_audio_layers": self.num_audio_layers,
            "reserved": self.reserved.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "VocabSpec":
        return cls(
            text_vocab_size=int(d["text_vocab_size"]),
            audio_vocab_size=int(d["audio_vocab_size"]),
            num_audio_layers=int(d.get("num_audio_layers", 7)),
            reserved=ControlTokenTable.from_dict(d["reserved"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "VocabSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def classify_token(spec: VocabSpec, layer: int, token: int) -> TokenClass:
    if not 0 <= layer < spec.num_layers:
        raise IndexError(f"layer {layer} outside 0..{spec.num_layers - 1}")
    size = spec.layer_sizes()[layer]
    if not 0 <= token < size:
        raise IndexError(f"token {token} outside layer {layer} vocab of {size}")
    r = spec.reserved
    if layer == 0:
        if token == r.pad_text:
            return TokenClass.PAD
        if token in spec.reserved_text_ids:
            return TokenClass.CONTROL
        return TokenClass.TEXT
    return TokenClass.PAD if token == r.pad_audio else TokenClass.AUDIO


def emotion_token(spec: VocabSpec, label: str) -> int:
    try:
        return spec.reserved.emotion[label]
    except KeyError:
        raise KeyError(f"unknown emotion label {label!r}") from None


def parse_emotion_token(spec: VocabSpec, token: int) -> str:
    for label, i in spec.reserved.emotion.items():
        if i == token:
            return label
    raise KeyError(f"token {token} is not an emotion token")


def is_emotion_token(spec: VocabSpec, token: int) -> bool:
    return token in spec.reserved.emotion.values()


def speaker_token(spec: VocabSpec, label: str) -> int:
    try:
        return spec.reserved.speaker[label]
    except KeyError:
        raise KeyError(f"unknown speaker label {label!r}") from None


def parse_speaker_token(spec: VocabSpec, token: int) -> str:
    for label, i in spec.reserved.speaker.items():
        if i == token:
            return label
    raise KeyError(f"token {token} is not a speaker token")


class ByteTextCodec:
    """Maps UTF-8 bytes onto a contiguous block of free text ids.

    Stands in for a real subword tokenizer so tool-call payloads and
    transcripts can travel through the text layer. Needs 256 free ids.
    """

    def __init__(self, spec: VocabSpec):
        reserved = set(spec.reserved.text_ids().values())
        offset = 0
        while any(i in reserved for i in range(offset, offset + 256)):
            offset = max(i for i in range(offset, offset + 256) if i in reserved) + 1
        if offset + 256 > spec.text_vocab_size:
            raise ValueError(
                f"text vocab of {spec.text_vocab_size} has no 256-id free block for byte tokens"
            )
        self.offset = offset

    def encode(self, text: str) -> list[int]:
        return [self.offset + b for b in text.encode("utf-8")]

    def is_byte(self, token: int) -> bool:
        return self.offset <= token < self.offset + 256

    def to_bytes(self, ids: Sequence[int]) -> bytes:
        return bytes(i - self.offset for i in ids if self.is_byte(i))

    def decode(self, ids: Sequence[int]) -> str:
        return self.to_bytes(ids).decode("utf-8", errors="replace")
