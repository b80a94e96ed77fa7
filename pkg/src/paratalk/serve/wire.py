"""Newline-delimited JSON messages exchanged with a half-duplex client.

Every message is one compact JSON object with sorted keys and ASCII-only
escapes, terminated by ``\\n``, so the byte stream of a session is
reproducible. Shapes by ``type``:

    audio_chunk  {"pcm": <base64 PCM16LE @16 kHz>, "seq"?: int}
    text_delta   {"text": str}
    emotion      {"label": str}
    tool_call    {"name": str, "arguments": object}
    end          {"reason"?: str, "detail"?: str, "label"?: str, "score"?: number}
    error        {"code": str, "message": str}

On ``end`` from a client, ``label``/``score`` are optional hints for the
duplex gate; on ``end`` from the server, ``reason`` says why the response
stopped.
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ParseError

TYPES = ("audio_chunk", "text_delta", "emotion", "tool_call", "end", "error")

_REQUIRED = {
    "audio_chunk": {"pcm": str},
    "text_delta": {"text": str},
    "emotion": {"label": str},
    "tool_call": {"name": str, "arguments": dict},
    "end": {},
    "error": {"code": str, "message": str},
}
_OPTIONAL = {
    "audio_chunk": {"seq": int},
    "end": {"reason": str, "detail": str, "label": str, "score": (int, float)},
}


@dataclass(frozen=True)
class WireMessage:
    type: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        _validate(self.type, self.payload)

    # constructors for the common shapes
    @classmethod
    def audio(cls, pcm: bytes, seq: int | None = None) -> "WireMessage":
        p = {"pcm": base64.b64encode(pcm).decode("ascii")}
        if seq is not None:
            p["seq"] = seq
        return cls("audio_chunk", p)

    @classmethod
    def text(cls, text: str) -> "WireMessage":
        return cls("text_delta", {"text": text})

    @classmethod
    def end(cls, reason: str | None = None, **extra) -> "WireMessage":
        p = {k: v for k, v in extra.items() if v is not None}
        if reason is not None:
            p["reason"] = reason
        return cls("end", p)

    @classmethod
    def error(cls, code: str, message: str) -> "WireMessage":
        return cls("error", {"code": code, "message": message})

    def pcm_bytes(self) -> bytes:
        try:
            return base64.b64decode(self.payload["pcm"], validate=True)
        except (binascii.Error, ValueError) as e:
            raise ParseError(f"audio_chunk pcm is not valid base64: {e}") from None

    def pcm(self) -> np.ndarray:
        raw = self.pcm_bytes()
        if len(raw) % 2:
            raise ParseError("audio_chunk pcm has an odd byte count")
        return np.frombuffer(raw, dtype="<i2").astype(np.int16)


def _validate(type_: str, payload: Any) -> None:
    if type_ not in _REQUIRED:
        raise ParseError(f"unknown message type {type_!r}")
    if not isinstance(payload, dict):
        raise ParseError("payload must be an object")
    req, opt = _REQUIRED[type_], _OPTIONAL.get(type_, {})
    for key, kind in req.items():
        if key not in payload:
            raise ParseError(f"{type_} message lacks {key!r}")
    for key, value in payload.items():
        kind = req.get(key) or opt.get(key)
        if kind is None:
            raise ParseError(f"{type_} message has unexpected field {key!r}")
        if isinstance(value, bool) or not isinstance(value, kind):
            raise ParseError(f"{type_}.{key} has the wrong type")


def encode(msg: WireMessage) -> bytes:
    obj = {"type": msg.type, **msg.payload}
    return json.dumps(obj, separators=(",", ":"), sort_keys=True, ensure_ascii=True).encode("ascii") + b"\n"


def decode(line: bytes | str) -> WireMessage:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("message is not UTF-8", raw=line) from None
    text = line.rstrip("\r\n")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON: {e.msg}", raw=text) from None
    if not isinstance(obj, dict) or not isinstance(obj.get("type"), str):
        raise ParseError("message must be an object with a string 'type'", raw=text)
    type_ = obj.pop("type")
    return WireMessage(type_, obj)


def placeholder_pcm(frames, samples_per_frame: int = 1366, amplitude: int = 3000) -> bytes:
    """Stand-in waveform for codec frames, since no vocoder is available.

    Each frame becomes ``samples_per_frame`` samples of an integer sawtooth
    whose period depends on the frame's coarse (first) codebook token. Pure
    integer arithmetic, so the bytes are identical on every platform. The
    default length is 16000 * 7 / 82 samples, one decode step of audio.
    """
    out = np.empty(len(frames) * samples_per_frame, dtype="<i2")
    i = np.arange(samples_per_frame, dtype=np.int64)
    for k, f in enumerate(frames):
        period = 20 + 2 * (int(f[0]) % 64)
        out[k * samples_per_frame:(k + 1) * samples_per_frame] = (i % period) * 2 * amplitude // period - amplitude
    return out.tobytes()
