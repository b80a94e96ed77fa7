"""Parallel frames, the delayed decode grid, and codec hierarchy grouping.

A ParallelFrame is one aligned step: a text token plus one token per audio
codebook. Decoding happens on a *delayed* grid where layer ``k`` is shifted
right by ``offsets[k]`` steps, so coarser codebooks are already emitted by the
time finer ones are predicted.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import ShapeError

MAGIC = b"LUCY"
FORMAT_VERSION_TOKENS = 1
FORMAT_VERSION_F32 = 2
_HEADER = struct.Struct("<4sBBI")


@dataclass(frozen=True)
class ParallelFrame:
    text: int
    audio: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "audio", tuple(int(a) for a in self.audio))

    @property
    def num_layers(self) -> int:
        return 1 + len(self.audio)

    def tokens(self) -> tuple[int, ...]:
        return (self.text, *self.audio)

    @classmethod
    def from_tokens(cls, tokens: Sequence[int]) -> "ParallelFrame":
        return cls(int(tokens[0]), tuple(tokens[1:]))


class ParallelSequence(tuple):
    """An ordered run of ParallelFrames; also used for delayed grids."""

    def __new__(cls, frames: Iterable[ParallelFrame] = ()):
        return super().__new__(cls, frames)

    @property
    def frames(self) -> tuple[ParallelFrame, ...]:
        return tuple(self)

    def to_array(self, num_layers: int | None = None) -> np.ndarray:
        if not self:
            return np.zeros((0, num_layers or 0), dtype=np.int64)
        return np.array([f.tokens() for f in self], dtype=np.int64)

    @classmethod
    def from_array(cls, arr) -> "ParallelSequence":
        arr = np.asarray(arr)
        return cls(ParallelFrame.from_tokens(row.tolist()) for row in arr)

    def __repr__(self):
        return f"ParallelSequence({list(self)!r})"


@dataclass(frozen=True)
class DelayPattern:
    offsets: tuple[int, ...]

    def __post_init__(self):
        offs = tuple(int(o) for o in self.offsets)
        object.__setattr__(self, "offsets", offs)
        if not offs:
            raise ShapeError("delay pattern needs at least the text layer")
        if offs[0] != 0:
            raise ShapeError("text layer must be undelayed (offsets[0] == 0)")
        if any(o < 0 for o in offs) or any(b < a for a, b in zip(offs, offs[1:])):
            raise ShapeError(f"offsets must be non-negative and non-decreasing: {offs}")

    @classmethod
    def cumulative(cls, num_layers: int = 8) -> "DelayPattern":
        """Layer k delayed by k steps: [0, 1, 2, ...]."""
        return cls(tuple(range(num_layers)))

    @classmethod
    def uniform(cls, num_layers: int = 8, delay: int = 1) -> "DelayPattern":
        """Every audio layer delayed by the same amount: [0, d, d, ...]."""
        return cls((0,) + (delay,) * (num_layers - 1))

    @classmethod
    def zero(cls, num_layers: int = 8) -> "DelayPattern":
        return cls((0,) * num_layers)

    @classmethod
    def parse(cls, spec: str | Sequence[int], num_layers: int = 8) -> "DelayPattern":
        if isinstance(spec, str):
            if spec == "cumulative":
                return cls.cumulative(num_layers)
            if spec == "uniform":
                return cls.uniform(num_layers)
            if spec == "zero":
                return cls.zero(num_layers)
            spec = [int(x) for x in spec.split(",")]
        return cls(tuple(spec))

    @property
    def num_layers(self) -> int:
        return len(self.offsets)

    @property
    def max_offset(self) -> int:
        return self.offsets[-1]


def _pads_for(pat: DelayPattern, pad_text: int, pad_audio: int) -> list[int]:
    return [pad_text] + [pad_audio] * (pat.num_layers - 1)


def apply_delay(
    seq: Sequence[ParallelFrame], pat: DelayPattern, pad_text: int, pad_audio: int
) -> ParallelSequence:
    """Shift layer k of every frame right by ``pat.offsets[k]`` steps.

    Output length is ``len(seq) + pat.max_offset``; cells outside a layer's
    shifted span hold that layer's pad id.
    """
    n = len(seq)
    L = pat.num_layers
    for f in seq:
        if f.num_layers != L:
            raise ShapeError(f"frame has {f.num_layers} layers, pattern has {L}")
    pads = _pads_for(pat, pad_text, pad_audio)
    grid = np.tile(np.asarray(pads, dtype=np.int64), (n + pat.max_offset, 1))
    if n:
        src = np.array([f.tokens() for f in seq], dtype=np.int64)
        for k, off in enumerate(pat.offsets):
            grid[off:off + n, k] = src[:, k]
    return ParallelSequence.from_array(grid)


def remove_delay(grid: Sequence[ParallelFrame], pat: DelayPattern) -> ParallelSequence:
    """Exact inverse of :func:`apply_delay` on its image."""
    if len(grid) < pat.max_offset:
        raise ShapeError(f"grid of {len(grid)} steps is shorter than max offset {pat.max_offset}")
    L = pat.num_layers
    for f in grid:
        if f.num_layers != L:
            raise ShapeError(f"grid step has {f.num_layers} layers, pattern has {L}")
    n = len(grid) - pat.max_offset
    if n == 0:
        return ParallelSequence()
    arr = np.array([f.tokens() for f in grid], dtype=np.int64)
    out = np.empty((n, L), dtype=np.int64)
    for k, off in enumerate(pat.offsets):
        out[:, k] = arr[off:off + n, k]
    return ParallelSequence.from_array(out)


class StreamingUndelay:
    """Incremental :func:`remove_delay`: push grid steps, pop finished frames.

    Aligned frame ``t`` is complete once grid step ``t + max_offset`` has been
    pushed.
    """

    def __init__(self, pat: DelayPattern):
        self.pat = pat
        self._steps: list[tuple[int, ...]] = []
        self._emitted = 0

    def push(self, step: ParallelFrame) -> list[ParallelFrame]:
        if step.num_layers != self.pat.num_layers:
            raise ShapeError(f"grid step has {step.num_layers} layers, pattern has {self.pat.num_layers}")
        self._steps.append(step.tokens())
        ready = len(self._steps) - self.pat.max_offset
        out = []
        while self._emitted < ready:
            t = self._emitted
            toks = [self._steps[t + off][k] for k, off in enumerate(self.pat.offsets)]
            out.append(ParallelFrame.from_tokens(toks))
            self._emitted += 1
        return out


@dataclass(frozen=True)
class HierarchicalCodes:
    """Three codec streams at 1x, 2x and 4x the coarse rate."""

    coarse: tuple[int, ...]
    mid: tuple[int, ...]
    fine: tuple[int, ...]

    def __post_init__(self):
        for name in ("coarse", "mid", "fine"):
            object.__setattr__(self, name, tuple(int(x) for x in getattr(self, name)))
        n = len(self.coarse)
        if len(self.mid) != 2 * n or len(self.fine) != 4 * n:
            raise ShapeError(
                f"stream lengths must be 1:2:4, got {n}:{len(self.mid)}:{len(self.fine)}"
            )


def flatten_hierarchy(h: HierarchicalCodes) -> list[tuple[int, ...]]:
    """Group the streams into 7-token steps ``[c; m1, m2; f1..f4]``."""
    return [
        (h.coarse[t], h.mid[2 * t], h.mid[2 * t + 1], *h.fine[4 * t:4 * t + 4])
        for t in range(len(h.coarse))
    ]


def unflatten_hierarchy(groups: Sequence[Sequence[int]]) -> HierarchicalCodes:
    coarse, mid, fine = [], [], []
    for g in groups:
        if len(g) != 7:
            raise ShapeError(f"audio group must hold 7 tokens, got {len(g)}")
        coarse.append(g[0])
        mid.extend(g[1:3])
        fine.extend(g[3:7])
    return HierarchicalCodes(tuple(coarse), tuple(mid), tuple(fine))


@dataclass(frozen=True)
class TokenRates:
    frame_rate: float
    coarse: float
    mid: float
    fine: float
    total: float


def rate_check(frame_rate) -> TokenRates:
    """Per-layer and total codec token rates for a given decode-step rate.

    Accepts a float or a ``Fraction``; fractions stay exact (``Fraction(82, 7)``
    totals exactly 82).
    """
    if frame_rate <= 0:
        raise ValueError("frame_rate must be positive")
    return TokenRates(
        frame_rate=frame_rate,
        coarse=frame_rate,
        mid=2 * frame_rate,
        fine=4 * frame_rate,
        total=7 * frame_rate,
    )


DEFAULT_FRAME_RATE = Fraction(82, 7)


# ---------------------------------------------------------------------------
# framed binary format: header then row-major little-endian payload


def write_grid(fp: BinaryIO, rows, version: int = FORMAT_VERSION_TOKENS) -> None:
    """Write a [length x layers] table. Version 1 is u32 ids, version 2 is f32."""
    if version == FORMAT_VERSION_TOKENS:
        if isinstance(rows, np.ndarray):
            arr = rows
        else:
            arr = np.array([f.tokens() if isinstance(f, ParallelFrame) else f for f in rows])
        if arr.size == 0:
            arr = arr.reshape(0, arr.shape[1] if arr.ndim == 2 else 0)
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFFFFFF):
            raise ValueError("token ids must fit in u32")
        payload = arr.astype("<u4")
    elif version == FORMAT_VERSION_F32:
        payload = np.asarray(rows, dtype="<f4")
    else:
        raise ValueError(f"unknown format version {version}")
    if payload.ndim != 2:
        raise ShapeError("payload must be two-dimensional")
    length, layers = payload.shape
    if layers > 255:
        raise ShapeError("at most 255 layers fit in the header")
    fp.write(_HEADER.pack(MAGIC, version, layers, length))
    fp.write(np.ascontiguousarray(payload).tobytes())


def read_grid(fp: BinaryIO) -> tuple[int, np.ndarray]:
    """Read a framed table; returns ``(version, array)``."""
    head = fp.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ShapeError("truncated header")
    magic, version, layers, length = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ShapeError(f"bad magic {magic!r}")
    if version == FORMAT_VERSION_TOKENS:
        dtype = np.dtype("<u4")
    elif version == FORMAT_VERSION_F32:
        dtype = np.dtype("<f4")
    else:
        raise ShapeError(f"unknown format version {version}")
    nbytes = length * layers * dtype.itemsize
    body = fp.read(nbytes)
    if len(body) != nbytes:
        raise ShapeError(f"payload truncated: expected {nbytes} bytes, got {len(body)}")
    arr = np.frombuffer(body, dtype=dtype).reshape(length, layers)
    if version == FORMAT_VERSION_TOKENS:
        arr = arr.astype(np.int64)
    return version, arr


def save_sequence(path, seq: Sequence[ParallelFrame], num_layers: int | None = None) -> None:
    arr = ParallelSequence(seq).to_array(num_layers)
    with open(path, "wb") as fp:
        write_grid(fp, arr)


def load_sequence(path) -> ParallelSequence:
    with open(path, "rb") as fp:
        version, arr = read_grid(fp)
    if version != FORMAT_VERSION_TOKENS:
        raise ShapeError("file holds float features, not token ids")
    return ParallelSequence.from_array(arr)
