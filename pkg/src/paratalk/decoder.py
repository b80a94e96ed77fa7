"""Streaming decode sessions, the duplex gate and two-lane function-call decoding."""

from __future__ import annotations

import enum
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from .conversation import ConversationState, Prompt, commit_response, serialize_prompt
from .errors import ConfigError, StateError, ToolNotFoundError
from .framing import DelayPattern, ParallelFrame, StreamingUndelay, remove_delay
from .predictor import Predictor, greedy_step, sample_step
from .tools import FALLBACK_TEMPLATE, ToolCall, ToolRegistry, find_tool_spans, parse_tool_call
from .vocab import ByteTextCodec, VocabSpec, emotion_token, is_emotion_token, parse_emotion_token

log = logging.getLogger(__name__)


class SessionState(str, enum.Enum):
    IDLE = "idle"
    GATED_OUT = "gated_out"
    DECODING = "decoding"
    DONE = "done"


@dataclass(frozen=True)
class TextDelta:
    ids: tuple[int, ...]


@dataclass(frozen=True)
class AudioChunk:
    frames: tuple[tuple[int, ...], ...]
    index: int = 0


@dataclass(frozen=True)
class EmotionDetected:
    label: str


@dataclass(frozen=True)
class Done:
    truncated: bool = False
    steps: int = 0


Event = Union[TextDelta, AudioChunk, EmotionDetected, Done]


@dataclass
class DecodeSession:
    predictor: Predictor
    vocab: VocabSpec
    pattern: DelayPattern
    chunk_frames: int = 2
    max_steps: int = 2048
    state: SessionState = SessionState.IDLE
    seed: Optional[int] = None  # None means greedy decoding
    clock: Callable[[], float] = time.perf_counter
    step_times: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.chunk_frames < 1:
            raise ConfigError("chunk_frames must be >= 1")
        if self.pattern.num_layers != self.vocab.num_layers:
            raise ConfigError(
                f"delay pattern has {self.pattern.num_layers} layers, vocab has {self.vocab.num_layers}"
            )

    def reset(self) -> None:
        self.state = SessionState.IDLE
        self.step_times.clear()

    def _begin(self) -> None:
        if self.state not in (SessionState.IDLE, SessionState.DONE):
            raise StateError(f"session is {self.state.value}, cannot start a decode")
        self.state = SessionState.DECODING

    def _timed_step(self, pred, grid, rng):
        t0 = self.clock()
        frame = greedy_step(pred, grid) if rng is None else sample_step(pred, grid, rng)
        self.step_times.append(self.clock() - t0)
        return frame


def _is_silent(vocab: VocabSpec, audio: Sequence[int]) -> bool:
    return all(a == vocab.reserved.pad_audio for a in audio)


def decode_stream(
    session: DecodeSession,
    prompt: Prompt,
    emotion: Optional[str] = None,
) -> Iterator[Event]:
    """Step the predictor and stream text, emotion and audio-chunk events.

    Text surfaces as soon as it is generated (the text layer is undelayed);
    audio surfaces once ``chunk_frames`` de-delayed, voiced frames exist.
    Decoding stops when every frame before the text-layer eos is complete, or
    at ``max_steps`` (then ``Done.truncated`` is set). A forced ``emotion``
    overrides the first text token.
    """
    if session.state is SessionState.GATED_OUT:
        return
    session._begin()
    vocab, pat = session.vocab, session.pattern
    r = vocab.reserved
    forced = emotion_token(vocab, emotion) if emotion is not None else None
    rng = None if session.seed is None else np.random.default_rng(session.seed)

    pred = session.predictor
    pred.reset(prompt.ids)
    undelay = StreamingUndelay(pat)
    grid: list[ParallelFrame] = []
    pending: list[tuple[int, ...]] = []
    n_chunks = 0
    eos_at: Optional[int] = None
    emitted = 0
    finished = False

    try:
        while len(grid) < session.max_steps:
            s = len(grid)
            frame = session._timed_step(pred, grid, rng)
            text = frame.text
            if eos_at is not None:
                text = r.pad_text
            elif s == 0 and forced is not None:
                text = forced
            if text != frame.text:
                frame = ParallelFrame(text, frame.audio)
            grid.append(frame)

            if eos_at is None:
                if text == r.eos:
                    eos_at = s
                elif s == 0 and is_emotion_token(vocab, text):
                    yield EmotionDetected(parse_emotion_token(vocab, text))
                elif text != r.pad_text:
                    yield TextDelta((text,))

            for f in undelay.push(frame):
                if eos_at is not None and emitted >= eos_at:
                    break
                emitted += 1
                if _is_silent(vocab, f.audio):
                    continue
                pending.append(f.audio)
                if len(pending) == session.chunk_frames:
                    yield AudioChunk(tuple(pending), n_chunks)
                    n_chunks += 1
                    pending = []

            if eos_at is not None and emitted >= eos_at:
                finished = True
                break
        if pending:
            yield AudioChunk(tuple(pending), n_chunks)
        yield Done(truncated=not finished, steps=len(grid))
    finally:
        session.state = SessionState.DONE


def collect(events) -> dict:
    """Fold an event stream into text ids, audio frames, emotion and Done."""
    out = {"text": [], "audio": [], "emotion": None, "done": None, "chunks": 0}
    for e in events:
        if isinstance(e, TextDelta):
            out["text"].extend(e.ids)
        elif isinstance(e, AudioChunk):
            out["audio"].extend(e.frames)
            out["chunks"] += 1
        elif isinstance(e, EmotionDetected):
            out["emotion"] = e.label
        elif isinstance(e, Done):
            out["done"] = e
    return out


# --------------------------------------------------------------------- gate


class GateReason(str, enum.Enum):
    QUERY = "query"
    DECLARATIVE = "declarative"
    ENVIRONMENTAL_SOUND = "environmental_sound"


@dataclass(frozen=True)
class GateDecision:
    respond: bool
    score: float
    reason: GateReason


class LabelPassthroughClassifier:
    """Harness classifier: trusts a ``label`` (and optional ``score``) field.

    Descriptors without a label are treated as queries.
    """

    LABELS = {
        "question": (1.0, GateReason.QUERY),
        "query": (1.0, GateReason.QUERY),
        "declarative": (0.0, GateReason.DECLARATIVE),
        "environmental_sound": (0.0, GateReason.ENVIRONMENTAL_SOUND),
    }

    def __call__(self, descriptor: Mapping[str, Any]) -> tuple[float, GateReason]:
        label = descriptor.get("label") or "query"
        try:
            score, reason = self.LABELS[label]
        except KeyError:
            raise ValueError(f"unknown gate label {label!r}") from None
        if descriptor.get("score") is not None:
            score = float(descriptor["score"])
        return score, reason


def gate(
    classifier,
    descriptor: Mapping[str, Any],
    threshold: float = 0.5,
    session: Optional[DecodeSession] = None,
) -> GateDecision:
    """Decide whether an utterance deserves a response; ``score >= threshold`` responds.

    A rejection moves ``session`` (if given) to gated_out so a following
    decode emits nothing and never touches the predictor.
    """
    if classifier is None:
        raise ConfigError("no gate classifier registered")
    score, reason = classifier(descriptor)
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"gate score {score} outside [0, 1]")
    decision = GateDecision(score >= threshold, float(score), GateReason(reason))
    if session is not None and not decision.respond:
        session.state = SessionState.GATED_OUT
    return decision


# ----------------------------------------------------------- function calls


@dataclass
class FunctionCallResult:
    spoken_text: list[int]
    tool_calls: list[ToolCall]
    speech_frames: list[tuple[int, ...]]
    full_text: list[int]  # lane A text incl. tool spans: what history stores
    lane_b_text: list[int]  # text fed back into lane B after substitution
    lane_b_proposed: list[int]  # what lane B's own text head wanted
    emotion: Optional[str] = None
    truncated: bool = False

    @property
    def tool_call(self) -> Optional[ToolCall]:
        return self.tool_calls[0] if self.tool_calls else None


def decode_function_call(
    session: DecodeSession,
    prompt: Prompt,
    lanes: Optional[tuple[Predictor, Predictor]] = None,
    concurrent: bool = False,
) -> FunctionCallResult:
    """Batch-of-two decoding: a text-only lane steers a text+speech lane.

    Lane A's audio heads are forced to pad. At each step lane B's text token
    is replaced by lane A's before it enters lane B's context, so both lanes
    share one text stream. Tool-call spans in that stream are parsed and
    their audio is dropped.
    """
    vocab, pat = session.vocab, session.pattern
    r = vocab.reserved
    lane_a, lane_b = lanes if lanes is not None else (session.predictor.clone(), session.predictor.clone())
    session._begin()
    lane_a.reset(prompt.ids)
    lane_b.reset(prompt.ids)
    silent = (r.pad_audio,) * vocab.num_audio_layers

    grid_a: list[ParallelFrame] = []
    grid_b: list[ParallelFrame] = []
    proposed: list[int] = []
    eos_at: Optional[int] = None
    pool = ThreadPoolExecutor(max_workers=2) if concurrent else None
    try:
        while len(grid_b) < session.max_steps:
            s = len(grid_b)
            if eos_at is None:
                if pool is not None:
                    fa = pool.submit(greedy_step, lane_a, list(grid_a))
                    fb = pool.submit(greedy_step, lane_b, list(grid_b))
                    step_a, step_b = fa.result(), fb.result()
                else:
                    step_a = greedy_step(lane_a, grid_a)
                    step_b = greedy_step(lane_b, grid_b)
                text = step_a.text
                grid_a.append(ParallelFrame(text, silent))
                proposed.append(step_b.text)
                if text == r.eos:
                    eos_at = s
            else:
                step_b = greedy_step(lane_b, grid_b)
                text = r.pad_text
            grid_b.append(ParallelFrame(text, step_b.audio))
            if eos_at is not None and len(grid_b) - pat.max_offset >= eos_at:
                break
    finally:
        if pool is not None:
            pool.shutdown()
        session.state = SessionState.DONE

    truncated = eos_at is None or len(grid_b) - pat.max_offset < eos_at
    n_text = eos_at if eos_at is not None else len(grid_a)
    text_a = [f.text for f in grid_a[:n_text]]
    lane_b_text = [f.text for f in grid_b[:n_text]]
    frames_b = remove_delay(grid_b, pat) if len(grid_b) >= pat.max_offset else []
    frames_b = list(frames_b)[:n_text]

    emotion = None
    start = 0
    if text_a and is_emotion_token(vocab, text_a[0]):
        emotion = parse_emotion_token(vocab, text_a[0])
        start = 1

    spans = find_tool_spans(vocab, text_a)
    in_span = set()
    calls = []
    codec = ByteTextCodec(vocab) if spans else None
    for a, b in spans:
        in_span.update(range(a, b + 1))
        calls.append(parse_tool_call(codec.decode(text_a[a + 1:b])))

    spoken = [t for i, t in enumerate(text_a) if i >= start and i not in in_span and t != r.pad_text]
    speech = [
        f.audio for i, f in enumerate(frames_b) if i not in in_span and not _is_silent(vocab, f.audio)
    ]
    full = [t for t in text_a if t != r.pad_text]
    return FunctionCallResult(
        spoken_text=spoken,
        tool_calls=calls,
        speech_frames=speech,
        full_text=full,
        lane_b_text=lane_b_text,
        lane_b_proposed=proposed[:n_text],
        emotion=emotion,
        truncated=truncated,
    )


def resolve_tool(result: FunctionCallResult, registry: ToolRegistry) -> str:
    """Run the first tool call in ``result``; raises ToolNotFoundError."""
    if result.tool_call is None:
        raise ValueError("result carries no tool call")
    return registry.call(result.tool_call)


def continue_after_tool(
    session: DecodeSession, state: ConversationState, payload: str
) -> list[Event]:
    """Append the tool payload as a tool turn and decode the final answer."""
    codec = ByteTextCodec(session.vocab)
    state.add_tool_result(codec.encode(payload))
    return list(decode_stream(session, serialize_prompt(state)))


@dataclass
class ToolTurn:
    call: FunctionCallResult
    payload: Optional[str] = None
    answer_events: list = field(default_factory=list)
    fallback_text: Optional[str] = None


def run_function_call_turn(
    session: DecodeSession, state: ConversationState, registry: ToolRegistry, lanes=None
) -> ToolTurn:
    """Full tool round: two-lane decode, tool invocation, second decode.

    An unknown tool short-circuits with a spoken fallback sentence.
    """
    res = decode_function_call(session, serialize_prompt(state), lanes=lanes)
    commit_response(state, ([emotion_token(session.vocab, res.emotion)] if res.emotion else []) + res.full_text)
    turn = ToolTurn(res)
    if res.tool_call is None:
        return turn
    try:
        turn.payload = resolve_tool(res, registry)
    except ToolNotFoundError as e:
        log.warning("tool %r not registered", e.name)
        turn.fallback_text = FALLBACK_TEMPLATE.format(name=e.name)
        return turn
    turn.answer_events = continue_after_tool(session, state, turn.payload)
    c = collect(turn.answer_events)
    lead = [emotion_token(session.vocab, c["emotion"])] if c["emotion"] else []
    commit_response(state, lead + c["text"])
    return turn
