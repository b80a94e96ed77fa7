import json
import random

import pytest

from paratalk.conversation import (
    ConversationState,
    Modality,
    Role,
    begin_response,
    commit_response,
    serialize_prompt,
)
from paratalk.errors import StateError
from paratalk.vocab import parse_emotion_token


def test_single_text_turn(small_vocab):
    st = ConversationState(small_vocab, active_speaker="female")
    st.add_user_text([40, 41])
    p = serialize_prompt(st)
    assert list(p.ids) == [40, 41, small_vocab.reserved.speaker["female"]]
    assert p.attachments == ()


def test_single_speech_turn(small_vocab):
    handle = object()
    st = ConversationState(small_vocab)
    st.add_user_speech(handle)
    p = serialize_prompt(st)
    r = small_vocab.reserved
    assert list(p.ids) == [r.audio_slot, r.speaker["female"]]
    assert p.attachments == (handle,)


def test_two_rounds_keep_only_text_replies(small_vocab):
    r = small_vocab.reserved
    st = ConversationState(small_vocab, active_speaker="male")
    st.add_user_speech("feat-0")
    audio = [(1, 2, 3, 4, 5, 6, 7)] * 3
    commit_response(st, [50, 51], audio)
    tail = st.turns[-1]
    assert tail.role is Role.ASSISTANT and tail.text_tokens == [50, 51] and tail.audio_handle is None
    st.add_user_text([42])
    p = serialize_prompt(st)
    assert list(p.ids) == [r.audio_slot, r.turn_end, 50, 51, r.turn_end, 42, r.speaker["male"]]
    assert p.attachments == ("feat-0",)


def test_commit_with_no_audio(small_vocab):
    st = ConversationState(small_vocab)
    st.add_user_text([40])
    commit_response(st, [50], [])
    assert st.turns[-1].text_tokens == [50]


def test_commit_moves_emotion_off_text(small_vocab):
    st = ConversationState(small_vocab)
    st.add_user_text([40])
    happy = small_vocab.reserved.emotion["happy"]
    commit_response(st, [happy, 50])
    assert st.turns[-1].emotion == "happy" and st.turns[-1].text_tokens == [50]


def test_begin_response(small_vocab):
    st = ConversationState(small_vocab)
    assert begin_response(st) == []
    prefix = begin_response(st, "happy")
    assert prefix == [small_vocab.reserved.emotion["happy"]]
    assert parse_emotion_token(small_vocab, prefix[0]) == "happy"
    with pytest.raises(KeyError):
        begin_response(st, "ecstatic")


def test_state_errors(small_vocab):
    st = ConversationState(small_vocab)
    with pytest.raises(StateError):
        serialize_prompt(st)
    st.add_user_text([40])
    with pytest.raises(StateError):
        st.add_user_text([41])
    commit_response(st, [50])
    with pytest.raises(StateError):
        serialize_prompt(st)
    with pytest.raises(StateError):
        commit_response(st, [51])


def test_unknown_speaker(small_vocab):
    with pytest.raises(KeyError):
        ConversationState(small_vocab, active_speaker="robot")


def test_tool_turn_renders_as_text(small_vocab):
    r = small_vocab.reserved
    st = ConversationState(small_vocab)
    st.add_user_text([40])
    commit_response(st, [50])
    st.add_tool_result([60, 61])
    assert st.turns[-1].role is Role.TOOL
    p = serialize_prompt(st)
    assert list(p.ids) == [40, r.turn_end, 50, r.turn_end, r.tool_response, 60, 61, r.turn_end, r.speaker["female"]]


def test_max_rounds_drops_whole_rounds(small_vocab):
    r = small_vocab.reserved
    st = ConversationState(small_vocab, max_rounds=1)
    st.add_user_text([40])
    commit_response(st, [50])
    st.add_user_text([41])
    assert list(serialize_prompt(st).ids) == [41, r.speaker["female"]]


def test_transcriber_replaces_historical_speech(small_vocab):
    r = small_vocab.reserved
    st = ConversationState(small_vocab, transcriber=lambda h: [44, 45])
    st.add_user_speech("a")
    commit_response(st, [50])
    st.add_user_speech("b")
    p = serialize_prompt(st)
    assert list(p.ids) == [44, 45, r.turn_end, 50, r.turn_end, r.audio_slot, r.speaker["female"]]
    assert p.attachments == ("b",)


def test_jsonl_round_trip(small_vocab):
    st = ConversationState(small_vocab)
    st.add_user_text([40, 41])
    commit_response(st, [small_vocab.reserved.emotion["sad"], 50])
    text = st.export_jsonl()
    rows = [json.loads(l) for l in text.splitlines()]
    assert rows[0] == {"role": "user", "modality": "text", "text": [40, 41], "emotion": None, "speaker": None}
    assert rows[1]["emotion"] == "sad" and rows[1]["text"] == [50]
    back = ConversationState.import_jsonl(text, small_vocab)
    assert [t.to_json() for t in back.turns] == rows


def _random_trace(rng, vocab, rounds):
    st = ConversationState(vocab, active_speaker=rng.choice(["male", "female"]))
    lo = vocab.first_free_text_id()
    for _ in range(rounds):
        if rng.random() < 0.5:
            st.add_user_speech(object())
        else:
            st.add_user_text([rng.randrange(lo, vocab.text_vocab_size) for _ in range(rng.randrange(1, 5))])
        p1 = serialize_prompt(st)
        assert serialize_prompt(st) == p1
        text = [rng.randrange(lo, vocab.text_vocab_size) for _ in range(rng.randrange(0, 5))]
        audio = [tuple(rng.randrange(vocab.audio_vocab_size) for _ in range(7)) for _ in range(rng.randrange(0, 6))]
        commit_response(st, text, audio)
    st.add_user_text([lo])
    return st


@pytest.mark.parametrize("seed", range(20))
def test_history_purity_and_single_speaker(small_vocab, seed):
    rng = random.Random(seed)
    st = _random_trace(rng, small_vocab, rng.randrange(1, 6))
    for t in st.turns:
        if t.role is Role.ASSISTANT:
            assert t.audio_handle is None and t.modality is Modality.TEXT
    ids = serialize_prompt(st).ids
    spk = set(small_vocab.reserved.speaker.values())
    assert sum(1 for i in ids if i in spk) == 1
    assert ids[-1] in spk
