"""JSON Lines readers for every evaluation case type."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

from ..errors import DataError
from .metrics import EmotionCase, FcCase, JudgeVerdict, QaItem, RejectionCase


def iter_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield obj


def _field(obj, name, path):
    try:
        return obj[name]
    except KeyError:
        raise DataError(f"{path}: record {obj.get('id', '?')} lacks field {name!r}") from None


def load_fc(path) -> list[FcCase]:
    out = []
    for o in iter_jsonl(path):
        out.append(FcCase(
            id=str(o.get("id", len(out))),
            gold_tool=_field(o, "gold_tool", path),
            pred_tool=_field(o, "pred_tool", path),
            gold_params=o.get("gold_params") or {},
            pred_params=o.get("pred_params") or {},
            param_correct=o.get("param_correct"),
            response_correct=o.get("response_correct"),
        ))
        c = out[-1]
        if c.pred_tool is not None and (c.param_correct is None or c.response_correct is None):
            raise DataError(f"{path}: case {c.id} predicts a tool but lacks judged booleans")
    return out


def load_rejection(path) -> list[RejectionCase]:
    return [
        RejectionCase(str(o.get("id", i)), bool(_field(o, "gold_respond", path)), bool(_field(o, "pred_respond", path)))
        for i, o in enumerate(iter_jsonl(path))
    ]


def load_qa(path) -> list[QaItem]:
    out = []
    for i, o in enumerate(iter_jsonl(path)):
        answers = _field(o, "answers", path)
        if isinstance(answers, str):
            answers = [answers]
        out.append(QaItem(tuple(answers), str(_field(o, "response", path)), str(o.get("id", i))))
    return out


def load_wer(path) -> list[tuple[str, str]]:
    return [(str(_field(o, "ref", path)), str(_field(o, "hyp", path))) for o in iter_jsonl(path)]


def load_emotion(path) -> list[EmotionCase]:
    return [
        EmotionCase(str(o.get("id", i)), str(_field(o, "gold", path)), str(_field(o, "pred_raw", path)))
        for i, o in enumerate(iter_jsonl(path))
    ]


def load_verdicts(path) -> list[JudgeVerdict]:
    return [JudgeVerdict(str(o.get("id", i)), str(_field(o, "winner", path))) for i, o in enumerate(iter_jsonl(path))]


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
