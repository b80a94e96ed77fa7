import random

import pytest

from paratalk.conversation import ConversationState, Prompt, Role
from paratalk.decoder import (
    AudioChunk,
    DecodeSession,
    Done,
    EmotionDetected,
    GateReason,
    LabelPassthroughClassifier,
    SessionState,
    TextDelta,
    collect,
    continue_after_tool,
    decode_function_call,
    decode_stream,
    gate,
    resolve_tool,
    run_function_call_turn,
)
from paratalk.errors import ConfigError, ParseError, StateError, ToolNotFoundError
from paratalk.framing import DelayPattern, ParallelFrame
from paratalk.predictor import ScriptedPredictor
from paratalk.tools import FALLBACK_TEMPLATE, ToolCall, ToolRegistry
from paratalk.vocab import ByteTextCodec

from decode_helpers import CountingPredictor, emotion_script, function_call_lanes

PROMPT = Prompt((40, 8))


def _session(vocab, pattern, frames, chunk=2, **kw):
    pred = ScriptedPredictor.for_response(frames, vocab, pattern)
    return DecodeSession(pred, vocab, pattern, chunk_frames=chunk, **kw)


def test_emotion_trace_example(small_vocab, cumulative):
    frames = emotion_script(small_vocab, "happy", 4, random.Random(0))
    frames = [frames[0]] + [ParallelFrame(50 + i, f.audio) for i, f in enumerate(frames[1:])]
    events = list(decode_stream(_session(small_vocab, cumulative, frames), PROMPT))
    # hand trace: emotion at step 0, text at steps 1-4, eos at step 5,
    # content frames 1..4 complete at steps 8..11 -> chunks after 9 and 11
    assert events == [
        EmotionDetected("happy"),
        TextDelta((50,)), TextDelta((51,)), TextDelta((52,)), TextDelta((53,)),
        AudioChunk((frames[1].audio, frames[2].audio), 0),
        AudioChunk((frames[3].audio, frames[4].audio), 1),
        Done(truncated=False, steps=12),
    ]


def test_immediate_eos(small_vocab, cumulative):
    events = list(decode_stream(_session(small_vocab, cumulative, []), PROMPT))
    assert events == [Done(truncated=False, steps=1)]


def test_forced_emotion_overrides_first_token(small_vocab, cumulative):
    frames = emotion_script(small_vocab, "happy", 2, random.Random(1))
    c = collect(decode_stream(_session(small_vocab, cumulative, frames), PROMPT, emotion="sad"))
    assert c["emotion"] == "sad"


@pytest.mark.parametrize("seed", range(25))
def test_oracle_equivalence_random(small_vocab, seed):
    rng = random.Random(seed)
    pattern = rng.choice([DelayPattern.cumulative(8), DelayPattern.uniform(8), DelayPattern.zero(8)])
    chunk = rng.randint(1, 8)
    frames = emotion_script(small_vocab, rng.choice(small_vocab.emotions), rng.randrange(0, 30), rng)
    events = list(decode_stream(_session(small_vocab, pattern, frames, chunk), PROMPT))
    c = collect(events)
    pads = small_vocab.reserved.pad_text
    assert small_vocab.reserved.emotion[c["emotion"]] == frames[0].text
    assert c["text"] == [f.text for f in frames[1:] if f.text != pads]
    assert c["audio"] == [f.audio for f in frames[1:]]
    sizes = [len(e.frames) for e in events if isinstance(e, AudioChunk)]
    assert all(s == chunk for s in sizes[:-1])
    if sizes:
        assert 1 <= sizes[-1] <= chunk
    assert len(sizes) == -(-(len(frames) - 1) // chunk)
    assert c["done"].truncated is False


def test_max_steps_truncates(small_vocab, cumulative):
    frames = emotion_script(small_vocab, "happy", 10, random.Random(2))
    events = list(decode_stream(_session(small_vocab, cumulative, frames, max_steps=5), PROMPT))
    assert events[-1] == Done(truncated=True, steps=5)


def test_session_guards(small_vocab, cumulative):
    with pytest.raises(ConfigError):
        DecodeSession(None, small_vocab, DelayPattern.cumulative(3))
    with pytest.raises(ConfigError):
        DecodeSession(None, small_vocab, cumulative, chunk_frames=0)
    s = _session(small_vocab, cumulative, [])
    s.state = SessionState.DECODING
    with pytest.raises(StateError):
        list(decode_stream(s, PROMPT))


def test_sampled_decode_reproducible(small_vocab, cumulative):
    frames = emotion_script(small_vocab, "happy", 6, random.Random(3))
    pred = ScriptedPredictor.for_response(frames, small_vocab, cumulative, eps=0.3)
    runs = [collect(decode_stream(DecodeSession(pred, small_vocab, cumulative, seed=11), PROMPT)) for _ in range(2)]
    assert runs[0]["text"] == runs[1]["text"] and runs[0]["audio"] == runs[1]["audio"]


# ------------------------------------------------------------------ gate


def test_gate_passthrough():
    clf = LabelPassthroughClassifier()
    assert gate(clf, {"label": "question"}).respond is True
    d = gate(clf, {"label": "environmental_sound"})
    assert d.respond is False and d.reason is GateReason.ENVIRONMENTAL_SOUND
    assert gate(clf, {"label": "declarative"}).reason is GateReason.DECLARATIVE
    assert gate(clf, {"label": "question", "score": 0.5}, threshold=0.5).respond is True
    assert gate(clf, {"label": "question", "score": 0.4999}, threshold=0.5).respond is False
    with pytest.raises(ConfigError):
        gate(None, {})


def test_gated_session_emits_nothing(small_vocab, cumulative):
    pred = CountingPredictor(ScriptedPredictor.for_response(
        emotion_script(small_vocab, "happy", 3, random.Random(4)), small_vocab, cumulative))
    s = DecodeSession(pred, small_vocab, cumulative)
    gate(LabelPassthroughClassifier(), {"label": "declarative"}, session=s)
    assert s.state is SessionState.GATED_OUT
    assert list(decode_stream(s, PROMPT)) == []
    assert pred.steps == 0 and pred.resets == 0


# --------------------------------------------------------- function calls

WEATHER = ToolCall("get_weather", {"city": "Beijing"})


def test_function_call_example(vocab, cumulative):
    a, b, text_a, lane_b = function_call_lanes(vocab, cumulative, "Let me check. ", WEATHER)
    s = DecodeSession(a, vocab, cumulative)
    res = decode_function_call(s, PROMPT, lanes=(a, b))
    codec = ByteTextCodec(vocab)
    assert res.tool_call == WEATHER
    assert codec.decode(res.spoken_text) == "Let me check. "
    assert res.emotion == "neutral"
    n_ack = len(codec.encode("Let me check. "))
    assert res.speech_frames == [f.audio for f in lane_b[1:1 + n_ack]]
    assert res.lane_b_text == text_a
    assert all(p != t for p, t in zip(res.lane_b_proposed, text_a))
    assert res.full_text == text_a


def test_function_call_without_markers_equals_plain_decode(vocab, cumulative):
    frames = emotion_script(vocab, "happy", 6, random.Random(5))
    a = ScriptedPredictor.for_response(frames, vocab, cumulative)
    res = decode_function_call(DecodeSession(a, vocab, cumulative), PROMPT)
    plain = collect(decode_stream(DecodeSession(a.clone(), vocab, cumulative), PROMPT))
    assert res.tool_call is None
    assert res.spoken_text == plain["text"]
    assert res.speech_frames == plain["audio"]


def test_concurrent_lanes_bit_identical(vocab, cumulative):
    a, b, _, _ = function_call_lanes(vocab, cumulative, "ok ", WEATHER, seed=3)
    seq = decode_function_call(DecodeSession(a, vocab, cumulative), PROMPT, lanes=(a.clone(), b.clone()))
    par = decode_function_call(DecodeSession(a, vocab, cumulative), PROMPT, lanes=(a.clone(), b.clone()), concurrent=True)
    assert seq == par


def _lane_with_text(vocab, pattern, ids):
    silent = (vocab.reserved.pad_audio,) * 7
    return ScriptedPredictor.for_response([ParallelFrame(t, silent) for t in ids], vocab, pattern)


def test_unbalanced_markers(vocab, cumulative):
    r = vocab.reserved
    codec = ByteTextCodec(vocab)
    for ids in ([r.tool_call_open] + codec.encode("{}"), codec.encode("x") + [r.tool_call_close]):
        p = _lane_with_text(vocab, cumulative, ids)
        with pytest.raises(ParseError):
            decode_function_call(DecodeSession(p, vocab, cumulative), PROMPT)


def test_malformed_payload_keeps_raw(vocab, cumulative):
    r = vocab.reserved
    codec = ByteTextCodec(vocab)
    p = _lane_with_text(vocab, cumulative, [r.tool_call_open] + codec.encode("{name: oops") + [r.tool_call_close])
    with pytest.raises(ParseError) as ei:
        decode_function_call(DecodeSession(p, vocab, cumulative), PROMPT)
    assert ei.value.raw == "{name: oops"


def _weather_registry():
    reg = ToolRegistry.default()
    reg.register("get_weather", lambda args: f"{args['city']}: sunny, 25C",
                 parameters_schema={"type": "object", "properties": {"city": {"type": "string"}},
                                    "required": ["city"]})
    return reg


def test_tool_round_trip(vocab, cumulative):
    codec = ByteTextCodec(vocab)
    a, b, _, _ = function_call_lanes(vocab, cumulative, "One moment. ", WEATHER)
    answer = [ParallelFrame(t, (3,) * 7) for t in codec.encode("It is sunny.")]
    answer_pred = CountingPredictor(ScriptedPredictor.for_response(answer, vocab, cumulative))
    st = ConversationState(vocab)
    st.add_user_text(codec.encode("weather in Beijing?"))
    s = DecodeSession(answer_pred, vocab, cumulative)
    turn = run_function_call_turn(s, st, _weather_registry(), lanes=(a, b))
    assert turn.payload == "Beijing: sunny, 25C"
    assert codec.decode(collect(turn.answer_events)["text"]) == "It is sunny."
    roles = [t.role for t in st.turns]
    assert roles == [Role.USER, Role.ASSISTANT, Role.TOOL, Role.ASSISTANT]
    assert codec.decode(st.turns[2].text_tokens) == "Beijing: sunny, 25C"
    for t in st.turns:
        assert t.audio_handle is None
    # the payload reached the second decode's context
    assert answer_pred.resets == 1


def test_unknown_tool_falls_back(vocab, cumulative):
    a, b, _, _ = function_call_lanes(vocab, cumulative, "ok ", ToolCall("stock_price", {"ticker": "X"}))
    st = ConversationState(vocab)
    st.add_user_text([300])
    turn = run_function_call_turn(DecodeSession(a, vocab, cumulative), st, ToolRegistry.default(), lanes=(a, b))
    assert turn.fallback_text == FALLBACK_TEMPLATE.format(name="stock_price")
    assert turn.payload is None
    with pytest.raises(ToolNotFoundError):
        resolve_tool(turn.call, ToolRegistry.default())


def test_continue_after_tool_appends_tool_turn(vocab, cumulative):
    st = ConversationState(vocab)
    st.add_user_text([300])
    from paratalk.conversation import commit_response

    commit_response(st, [301])
    pred = ScriptedPredictor.for_response([ParallelFrame(302, (1,) * 7)], vocab, cumulative)
    events = continue_after_tool(DecodeSession(pred, vocab, cumulative), st, "payload")
    assert st.turns[-1].role is Role.TOOL
    assert collect(events)["text"] == [302]


def test_registry_from_json(tmp_path):
    import json

    path = tmp_path / "tools.json"
    path.write_text(json.dumps([
        {"name": "web_search", "description": "search", "parameters_schema": {"type": "object"}},
        {"name": "get_weather", "description": "weather", "parameters_schema": {"type": "object"}},
    ]))
    reg = ToolRegistry.from_json(path, stubs={"get_weather": lambda a: "sunny"})
    assert reg.names() == ["get_weather", "web_search"]
    assert reg.call(WEATHER) == "sunny"
    assert "no live search" in reg.call(ToolCall("web_search", {"query": "x"}))


def test_registry_schema_violation():
    with pytest.raises(ParseError):
        _weather_registry().call(ToolCall("get_weather", {"town": "Paris"}))
