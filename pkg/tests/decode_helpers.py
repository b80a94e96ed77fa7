"""Script builders shared by decoder, server and acceptance tests."""

import random

from paratalk.framing import ParallelFrame
from paratalk.predictor import ScriptedPredictor
from paratalk.tools import ToolCall, encode_tool_call
from paratalk.vocab import ByteTextCodec

from conftest import random_frames


class CountingPredictor:
    def __init__(self, inner):
        self.inner = inner
        self.steps = 0
        self.resets = 0

    def reset(self, prompt=()):
        self.resets += 1
        self.inner.reset(prompt)

    def step(self, grid):
        self.steps += 1
        return self.inner.step(grid)

    def clone(self):
        return CountingPredictor(self.inner.clone())


def emotion_script(vocab, emotion, n, rng):
    """[emotion frame with silent audio] + n random content frames."""
    silent = (vocab.reserved.pad_audio,) * vocab.num_audio_layers
    return [ParallelFrame(vocab.reserved.emotion[emotion], silent)] + random_frames(rng, vocab, n)


def function_call_lanes(vocab, pattern, ack: str, call: ToolCall, seed=0):
    """Lane A: emotion + ack text + tool-call span, silent audio.
    Lane B: same length, a conflicting text token at every step, voiced audio
    everywhere except the emotion frame.
    """
    rng = random.Random(seed)
    codec = ByteTextCodec(vocab)
    r = vocab.reserved
    silent = (r.pad_audio,) * vocab.num_audio_layers
    text_a = [r.emotion["neutral"]] + codec.encode(ack) + encode_tool_call(vocab, codec, call)
    lane_a = [ParallelFrame(t, silent) for t in text_a]
    lo = vocab.first_free_text_id()
    lane_b = []
    for i, t in enumerate(text_a):
        other = t
        while other == t:
            other = rng.randrange(lo, vocab.text_vocab_size)
        audio = silent if i == 0 else tuple(rng.randrange(vocab.audio_vocab_size - 1) for _ in range(vocab.num_audio_layers))
        lane_b.append(ParallelFrame(other, audio))
    return (
        ScriptedPredictor.for_response(lane_a, vocab, pattern),
        ScriptedPredictor.for_response(lane_b, vocab, pattern),
        text_a,
        lane_b,
    )


def golden_messages():
    """Fixed client stream for the golden serve transcript: a text query,
    a short speech query, a gated declarative, and an empty query."""
    import numpy as np

    from paratalk.serve.server import query_messages
    from paratalk.serve.wire import WireMessage

    pcm = (np.arange(4000, dtype=np.int64) * 37 % 2001 - 1000).astype(np.int16)
    return (
        query_messages(text="héllo there")
        + query_messages(pcm=pcm, label="question", chunk_samples=1600)
        + query_messages(text="the sky is blue.", label="declarative")
        + [WireMessage.end()]
    )
