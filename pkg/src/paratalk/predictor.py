"""Token predictors and the teacher-forced parallel NLL scorer.

Anything with ``reset(prompt)``, ``step(grid) -> StepPrediction`` and
``clone()`` can drive the decoder. The predictors here need no trained
weights: a scripted one replays a fixed delayed grid, a uniform one is the
maximum-entropy baseline, and an echo predictor gives the CLI something to
talk with.
"""

from __future__ import annotations

import copy
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

from .framing import DelayPattern, ParallelFrame, ParallelSequence, apply_delay
from .vocab import ByteTextCodec, VocabSpec

PROB_TOL = 1e-9


class DegenerateScoreWarning(RuntimeWarning):
    """A target token received zero probability; the NLL is infinite."""


@dataclass(frozen=True)
class StepPrediction:
    """One categorical distribution per layer (text head first)."""

    probs: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrs = tuple(np.asarray(p, dtype=np.float64) for p in self.probs)
        for k, p in enumerate(arrs):
            if p.ndim != 1 or p.size == 0:
                raise ValueError(f"layer {k}: distribution must be a non-empty vector")
            if (p < 0).any():
                raise ValueError(f"layer {k}: negative probability")
            if abs(p.sum() - 1.0) > PROB_TOL:
                raise ValueError(f"layer {k}: probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "probs", arrs)

    @property
    def num_layers(self) -> int:
        return len(self.probs)

    @classmethod
    def one_hot(cls, tokens: Sequence[int], sizes: Sequence[int], eps: float = 0.0) -> "StepPrediction":
        probs = []
        for tok, n in zip(tokens, sizes):
            if eps and n > 1:
                p = np.full(n, eps / (n - 1))
                p[tok] = 1.0 - eps
            else:
                p = np.zeros(n)
                p[tok] = 1.0
            probs.append(p)
        return cls(tuple(probs))

    @classmethod
    def uniform(cls, sizes: Sequence[int]) -> "StepPrediction":
        return cls(tuple(np.full(n, 1.0 / n) for n in sizes))


@runtime_checkable
class Predictor(Protocol):
    def reset(self, prompt: Sequence[int] = ()) -> None: ...

    def step(self, grid: Sequence[ParallelFrame]) -> StepPrediction: ...

    def clone(self) -> "Predictor": ...


class _Base:
    def reset(self, prompt: Sequence[int] = ()) -> None:
        self.prompt = list(prompt)

    def clone(self):
        return copy.deepcopy(self)


class UniformPredictor(_Base):
    def __init__(self, layer_sizes: Sequence[int]):
        self.layer_sizes = list(layer_sizes)
        self.prompt: list[int] = []
        self._pred = StepPrediction.uniform(self.layer_sizes)

    def step(self, grid):
        return self._pred


class FixedPredictor(_Base):
    """Context-free: returns the same distributions at every step."""

    def __init__(self, prediction: StepPrediction):
        self.prediction = prediction
        self.prompt: list[int] = []

    def step(self, grid):
        return self.prediction


class ScriptedPredictor(_Base):
    """Replays a target delayed grid one step at a time.

    Step ``s`` puts its mass on ``target[s]`` regardless of context, so greedy
    decoding reproduces the target exactly. Past the end of the target it
    predicts ``tail`` (normally eos on text and pads on audio).
    """

    def __init__(
        self,
        target: Sequence[ParallelFrame],
        layer_sizes: Sequence[int],
        tail: Sequence[int] | None = None,
        eps: float = 0.0,
    ):
        self.target = ParallelSequence(target)
        self.layer_sizes = list(layer_sizes)
        self.tail = list(tail) if tail is not None else None
        self.eps = eps
        self.prompt: list[int] = []

    @classmethod
    def for_response(
        cls,
        frames: Sequence[ParallelFrame],
        vocab: VocabSpec,
        pattern: DelayPattern,
        eps: float = 0.0,
    ) -> "ScriptedPredictor":
        """Script a full response: ``frames`` then an eos frame, delayed."""
        return cls(response_grid(frames, vocab, pattern), vocab.layer_sizes(),
                   tail=_eos_tokens(vocab), eps=eps)

    @classmethod
    def from_file(cls, path, vocab: VocabSpec, eps: float = 0.0) -> "ScriptedPredictor":
        from .framing import load_sequence

        return cls(load_sequence(path), vocab.layer_sizes(), tail=_eos_tokens(vocab), eps=eps)

    def step(self, grid):
        s = len(grid)
        if s < len(self.target):
            tokens = self.target[s].tokens()
        elif self.tail is not None:
            tokens = self.tail
        else:
            raise IndexError(f"script exhausted at step {s}")
        return StepPrediction.one_hot(tokens, self.layer_sizes, self.eps)


def _eos_tokens(vocab: VocabSpec) -> list[int]:
    return [vocab.reserved.eos] + [vocab.reserved.pad_audio] * vocab.num_audio_layers


def response_grid(
    frames: Sequence[ParallelFrame], vocab: VocabSpec, pattern: DelayPattern
) -> ParallelSequence:
    """Delayed grid a decoder should produce for ``frames`` followed by eos."""
    eos = ParallelFrame.from_tokens(_eos_tokens(vocab))
    return apply_delay(list(frames) + [eos], pattern, vocab.reserved.pad_text, vocab.reserved.pad_audio)


class EchoPredictor(_Base):
    """Demo predictor: answers with a neutral-emotion echo of the last text query.

    Audio codes are a deterministic function of the text id so every layer
    carries non-pad content. Speech-only queries get a canned reply.
    """

    def __init__(self, vocab: VocabSpec, pattern: DelayPattern, emotion: str = "neutral",
                 canned: str = "I heard you."):
        self.vocab = vocab
        self.pattern = pattern
        self.emotion = emotion
        self.canned = canned
        self.codec = ByteTextCodec(vocab)
        self.prompt: list[int] = []
        self._script: ScriptedPredictor | None = None

    def reset(self, prompt=()):
        self.prompt = list(prompt)
        r = self.vocab.reserved
        # last user span: after the final turn delimiter, up to the speaker token
        body = self.prompt
        if body and body[-1] in r.speaker.values():
            body = body[:-1]
        stops = {r.turn_end, r.tool_response}
        cut = max((i for i, t in enumerate(body) if t in stops), default=-1)
        query = [t for t in body[cut + 1:] if self.codec.is_byte(t)]
        reply = self.codec.encode("you said: ") + query if query else self.codec.encode(self.canned)
        n_audio = self.vocab.audio_vocab_size - 1  # keep clear of pad_audio
        frames = [ParallelFrame(r.emotion[self.emotion], (r.pad_audio,) * self.vocab.num_audio_layers)]
        for t in reply:
            frames.append(ParallelFrame(t, tuple((t * (k + 3)) % n_audio for k in range(self.vocab.num_audio_layers))))
        self._script = ScriptedPredictor.for_response(frames, self.vocab, self.pattern)

    def step(self, grid):
        if self._script is None:
            self.reset(self.prompt)
        return self._script.step(grid)


def greedy_step(pred: Predictor, context: Sequence[ParallelFrame]) -> ParallelFrame:
    """Per-layer argmax; ``np.argmax`` already breaks ties toward the lowest id."""
    p = pred.step(context)
    return ParallelFrame.from_tokens([int(np.argmax(v)) for v in p.probs])


def sample_step(pred: Predictor, context: Sequence[ParallelFrame], rng) -> ParallelFrame:
    """Draw each layer independently. ``rng`` is a Generator or an int seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    p = pred.step(context)
    return ParallelFrame.from_tokens([int(rng.choice(v.size, p=v)) for v in p.probs])


def nll_score(
    pred: Predictor,
    target: Sequence[ParallelFrame],
    pattern: DelayPattern,
    pad_text: int,
    pad_audio: int,
    prompt: Sequence[int] = (),
) -> float:
    """Teacher-forced negative log-likelihood of ``target`` in nats.

    The target is delayed with ``pattern`` and scored step by step, each step
    conditioned on the gold grid prefix. The joint probability of a step is
    the product of the per-layer head probabilities. A zero-probability
    target gives ``inf`` and a :class:`DegenerateScoreWarning`.
    """
    grid = apply_delay(target, pattern, pad_text, pad_audio)
    pred.reset(prompt)
    total = 0.0
    for s, step in enumerate(grid):
        p = pred.step(grid[:s])
        if p.num_layers != step.num_layers:
            raise ValueError(f"predictor returned {p.num_layers} layers for a {step.num_layers}-layer grid")
        for k, tok in enumerate(step.tokens()):
            prob = p.probs[k][tok]
            if prob <= 0.0:
                warnings.warn(
                    f"zero probability on layer {k} at step {s}", DegenerateScoreWarning, stacklevel=2
                )
                return math.inf
            total -= math.log(prob)
    # -0.0 from an all-one-hot run reads oddly in reports
    return total + 0.0


def dataset_nll(
    pred: Predictor,
    targets: Iterable[Sequence[ParallelFrame]],
    pattern: DelayPattern,
    pad_text: int,
    pad_audio: int,
) -> float:
    """Sum of :func:`nll_score` over a dataset of response sequences."""
    return sum(nll_score(pred, t, pattern, pad_text, pad_audio) for t in targets)
