"""Parallel text + speech-token dialogue runtime with evaluation metrics."""

from .conversation import ConversationState, Prompt, begin_response, commit_response, serialize_prompt
from .decoder import (
    DecodeSession,
    decode_function_call,
    decode_stream,
    gate,
)
from .framing import DelayPattern, ParallelFrame, ParallelSequence, apply_delay, remove_delay
from .predictor import ScriptedPredictor, StepPrediction, UniformPredictor, nll_score
from .vocab import VocabSpec

__version__ = "0.1.0"
