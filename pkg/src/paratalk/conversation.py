"""Multi-round conversation state and prompt serialization.

History keeps user queries in whatever modality they arrived in; speech
queries are kept as attachment handles pointing at encoder features.
Assistant replies are stored as text only: generated audio is handed back
to the caller and never enters the context.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from .errors import StateError
from .vocab import VocabSpec, emotion_token, is_emotion_token, parse_emotion_token, speaker_token


class Role(str, enum.Enum):
    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"


class Modality(str, enum.Enum):
    TEXT = "text"
    SPEECH = "speech"


@dataclass
class Turn:
    role: Role
    modality: Modality = Modality.TEXT
    text_tokens: list[int] = field(default_factory=list)
    audio_handle: Any = None
    emotion: Optional[str] = None
    speaker: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "role": self.role.value,
            "modality": self.modality.value,
            "text": list(self.text_tokens),
            "emotion": self.emotion,
            "speaker": self.speaker,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Turn":
        return cls(
            role=Role(d["role"]),
            modality=Modality(d.get("modality", "text")),
            text_tokens=[int(t) for t in d.get("text", [])],
            emotion=d.get("emotion"),
            speaker=d.get("speaker"),
        )


@dataclass(frozen=True)
class Prompt:
    """Text-layer ids plus the speech features bound to each audio slot.

    Slot ``i`` is the ``i``-th occurrence of the ``audio_slot`` token in ``ids``.
    """

    ids: tuple[int, ...]
    attachments: tuple[Any, ...] = ()


@dataclass
class ConversationState:
    vocab: VocabSpec
    active_speaker: str = "female"
    turns: list[Turn] = field(default_factory=list)
    max_rounds: Optional[int] = None
    # optional ASR plugin: audio handle -> text ids, used for historical speech queries
    transcriber: Optional[Callable[[Any], Sequence[int]]] = None

    def __post_init__(self):
        speaker_token(self.vocab, self.active_speaker)

    @property
    def awaiting_response(self) -> bool:
        return bool(self.turns) and self.turns[-1].role in (Role.USER, Role.TOOL)

    def add_user_text(self, ids: Sequence[int]) -> "ConversationState":
        return self._add_query(Turn(Role.USER, Modality.TEXT, list(ids)))

    def add_user_speech(self, handle: Any, transcript: Sequence[int] = ()) -> "ConversationState":
        return self._add_query(Turn(Role.USER, Modality.SPEECH, list(transcript), audio_handle=handle))

    def add_tool_result(self, ids: Sequence[int]) -> "ConversationState":
        if not self.turns or self.turns[-1].role is not Role.ASSISTANT:
            raise StateError("a tool result must follow the assistant turn that called the tool")
        self.turns.append(Turn(Role.TOOL, Modality.TEXT, list(ids)))
        return self

    def _add_query(self, turn: Turn) -> "ConversationState":
        if self.turns and self.turns[-1].role is Role.USER:
            raise StateError("previous user turn has not been answered")
        self.turns.append(turn)
        return self

    def rounds(self) -> list[list[Turn]]:
        """Split history into rounds, each opening with a user turn."""
        out: list[list[Turn]] = []
        for t in self.turns:
            if t.role is Role.USER or not out:
                out.append([t])
            else:
                out[-1].append(t)
        return out

    def export_jsonl(self) -> str:
        return "".join(json.dumps(t.to_json(), ensure_ascii=False) + "\n" for t in self.turns)

    @classmethod
    def import_jsonl(cls, text: str, vocab: VocabSpec, **kwargs) -> "ConversationState":
        state = cls(vocab, **kwargs)
        for line in text.splitlines():
            if line.strip():
                state.turns.append(Turn.from_json(json.loads(line)))
        return state


def serialize_prompt(state: ConversationState) -> Prompt:
    """Render history into model-facing ids.

    User text renders as its ids; user speech renders as one ``audio_slot``
    id with its handle recorded in ``attachments``. Assistant turns render as
    their text wrapped in ``turn_end``; tool results as ``tool_response`` +
    text + ``turn_end``. The active speaker token follows the final query.
    """
    if not state.turns:
        raise StateError("empty conversation")
    if not state.awaiting_response:
        raise StateError("the last turn must be a user query or a tool result")
    r = state.vocab.reserved
    rounds = state.rounds()
    if state.max_rounds is not None:
        rounds = rounds[-state.max_rounds:]
    turns = [t for rnd in rounds for t in rnd]
    last = len(turns) - 1

    ids: list[int] = []
    attachments: list[Any] = []
    for i, t in enumerate(turns):
        if t.role is Role.USER:
            if t.modality is Modality.SPEECH:
                if i != last and state.transcriber is not None:
                    ids.extend(state.transcriber(t.audio_handle))
                else:
                    ids.append(r.audio_slot)
                    attachments.append(t.audio_handle)
            else:
                ids.extend(t.text_tokens)
        elif t.role is Role.ASSISTANT:
            ids.append(r.turn_end)
            ids.extend(t.text_tokens)
            ids.append(r.turn_end)
        else:
            ids.append(r.tool_response)
            ids.extend(t.text_tokens)
            ids.append(r.turn_end)
    ids.append(speaker_token(state.vocab, state.active_speaker))
    return Prompt(tuple(ids), tuple(attachments))


def begin_response(state: ConversationState, emotion: Optional[str] = None) -> list[int]:
    """Forced response prefix: ``[emotion token]`` or empty when the model picks."""
    if emotion is None:
        return []
    return [emotion_token(state.vocab, emotion)]


def commit_response(
    state: ConversationState,
    text_ids: Sequence[int],
    audio_frames: Iterable = (),
) -> ConversationState:
    """Append the text version of a finished response.

    ``audio_frames`` is accepted for call-site symmetry with the decoder and
    deliberately dropped. A leading emotion token moves into ``Turn.emotion``.
    """
    if not state.awaiting_response:
        raise StateError("no pending query to respond to")
    ids = list(text_ids)
    emotion = None
    if ids and is_emotion_token(state.vocab, ids[0]):
        emotion = parse_emotion_token(state.vocab, ids.pop(0))
    state.turns.append(
        Turn(Role.ASSISTANT, Modality.TEXT, ids, emotion=emotion, speaker=state.active_speaker)
    )
    return state
