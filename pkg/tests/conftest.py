import random

import pytest

from paratalk.framing import DelayPattern, ParallelFrame
from paratalk.vocab import VocabSpec


@pytest.fixture
def small_vocab():
    return VocabSpec.default(text_vocab_size=64, audio_vocab_size=16)


@pytest.fixture
def vocab():
    """Large enough for the byte text codec."""
    return VocabSpec.default()


@pytest.fixture
def cumulative():
    return DelayPattern.cumulative(8)


def random_frames(rng: random.Random, vocab: VocabSpec, n: int, text_pad_rate: float = 0.1):
    """Content frames: plain text ids (sometimes text pad) and non-pad audio."""
    lo = vocab.first_free_text_id()
    r = vocab.reserved
    out = []
    for _ in range(n):
        text = r.pad_text if rng.random() < text_pad_rate else rng.randrange(lo, vocab.text_vocab_size)
        audio = tuple(rng.randrange(0, vocab.audio_vocab_size - 1) for _ in range(vocab.num_audio_layers))
        out.append(ParallelFrame(text, audio))
    return out


# (number, title, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
