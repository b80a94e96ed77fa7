"""Evaluation metrics: function calling, rejection, QA presence, WER/CER,
emotion accuracy and judge win rate.

Count structures (``Confusion``, ``EditCounts``) add together so metrics over
disjoint shards can be merged by summing.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from ..errors import DataError, DomainError
from ..vocab import DEFAULT_EMOTIONS


# ------------------------------------------------------------------ records


@dataclass(frozen=True)
class FcCase:
    id: str
    gold_tool: Optional[str]
    pred_tool: Optional[str]
    gold_params: Mapping = field(default_factory=dict)
    pred_params: Mapping = field(default_factory=dict)
    param_correct: Optional[bool] = None
    response_correct: Optional[bool] = None


@dataclass(frozen=True)
class RejectionCase:
    id: str
    gold_respond: bool
    pred_respond: bool


@dataclass(frozen=True)
class EmotionCase:
    id: str
    gold: str
    pred_raw: str


@dataclass(frozen=True)
class JudgeVerdict:
    id: str
    winner: str  # candidate | baseline | tie


@dataclass(frozen=True)
class QaItem:
    answers: tuple[str, ...]
    response: str
    id: str = ""


# ---------------------------------------------------------- binary counts


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[bool, bool]]) -> "Confusion":
        """``pairs`` of (gold, pred) with True as the positive class."""
        c = Counter((bool(g), bool(p)) for g, p in pairs)
        return cls(c[True, True], c[False, True], c[True, False], c[False, False])

    def scores(self) -> "PRF":
        undefined = []
        if self.tp + self.fp:
            p = self.tp / (self.tp + self.fp)
        else:
            p = 0.0
            undefined.append("precision")
        if self.tp + self.fn:
            r = self.tp / (self.tp + self.fn)
        else:
            r = 0.0
            undefined.append("recall")
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        if not p + r:
            undefined.append("f1")
        return PRF(p, r, f1, tuple(undefined))


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"precision": self.precision, "recall": self.recall, "f1": self.f1}
        if self.undefined:
            d["undefined"] = list(self.undefined)
        return d


def _require(cases) -> list:
    cases = list(cases)
    if not cases:
        raise DomainError("metric over an empty case list")
    return cases


# ----------------------------------------------------------- function call


@dataclass(frozen=True)
class FcCounts:
    """Additive tallies behind :func:`fc_metrics`."""

    selection: Confusion = Confusion()
    selection_correct: int = 0
    positives: int = 0
    param_correct: int = 0
    response_correct: int = 0
    overall_correct: int = 0
    total: int = 0

    def __add__(self, o: "FcCounts") -> "FcCounts":
        return FcCounts(
            self.selection + o.selection,
            self.selection_correct + o.selection_correct,
            self.positives + o.positives,
            self.param_correct + o.param_correct,
            self.response_correct + o.response_correct,
            self.overall_correct + o.overall_correct,
            self.total + o.total,
        )


def fc_counts(cases: Iterable[FcCase]) -> FcCounts:
    tp = fp = fn = tn = 0
    sel_ok = pos = par = resp = overall = n = 0
    for c in cases:
        n += 1
        gold_pos = c.gold_tool is not None
        pred_pos = c.pred_tool is not None
        right_tool = c.pred_tool == c.gold_tool
        if gold_pos:
            pos += 1
            if pred_pos and right_tool:
                tp += 1
            elif pred_pos:
                # wrong tool: a spurious call and a missed one
                fp += 1
                fn += 1
            else:
                fn += 1
            p_ok = bool(c.param_correct) and pred_pos
            r_ok = bool(c.response_correct) and pred_pos
            par += p_ok
            resp += r_ok
            overall += right_tool and pred_pos and p_ok and r_ok
        else:
            if pred_pos:
                fp += 1
            else:
                tn += 1
                overall += 1
        sel_ok += right_tool
    return FcCounts(Confusion(tp, fp, fn, tn), sel_ok, pos, par, resp, overall, n)


def fc_metrics(cases: Iterable[FcCase]) -> dict:
    """Tool selection (acc/P/R/F1), parameter and response accuracy, overall.

    Tool-needed is the positive class. Parameter and response accuracy are
    averaged over gold-positive cases. A positive case is overall-correct
    when the right tool was picked and both judged booleans hold; a negative
    case when no tool was called.
    """
    return fc_report(fc_counts(_require(cases)))


def fc_report(k: FcCounts) -> dict:
    if k.total == 0:
        raise DomainError("metric over an empty case list")
    prf = k.selection.scores()
    sel = {"acc": k.selection_correct / k.total, **prf.to_dict()}
    return {
        "selection": sel,
        "param_acc": k.param_correct / k.positives if k.positives else 0.0,
        "response_acc": k.response_correct / k.positives if k.positives else 0.0,
        "overall_acc": k.overall_correct / k.total,
        "n": k.total,
        "positives": k.positives,
    }


# --------------------------------------------------------------- rejection


def rejection_metrics(cases: Iterable[RejectionCase]) -> dict:
    """Precision/recall/F1 with should-respond as the positive class."""
    cases = _require(cases)
    conf = Confusion.from_pairs((c.gold_respond, c.pred_respond) for c in cases)
    return {**conf.scores().to_dict(), "tp": conf.tp, "fp": conf.fp, "fn": conf.fn, "tn": conf.tn,
            "n": len(cases)}


# ------------------------------------------------------------- QA presence


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    s = unicodedata.normalize("NFKC", s).lower()
    s = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in s)
    return " ".join(s.split())


def presence_hit(answers: Sequence[str], response: str) -> bool:
    resp = normalize_text(response)
    return any((a := normalize_text(ans)) and a in resp for ans in answers)


def presence_rate(items: Iterable[QaItem]) -> float:
    items = _require(items)
    return sum(presence_hit(it.answers, it.response) for it in items) / len(items)


# -------------------------------------------------------------------- WER


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_len: int = 0

    def __add__(self, o: "EditCounts") -> "EditCounts":
        return EditCounts(self.substitutions + o.substitutions, self.insertions + o.insertions,
                          self.deletions + o.deletions, self.ref_len + o.ref_len)

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        if self.ref_len == 0:
            raise UndefinedRatioError(self)
        return self.errors / self.ref_len

    def to_dict(self) -> dict:
        return {"substitutions": self.substitutions, "insertions": self.insertions,
                "deletions": self.deletions, "ref_len": self.ref_len}


class UndefinedRatioError(DomainError):
    """Empty reference: the error rate is undefined. ``counts`` is still usable."""

    def __init__(self, counts: EditCounts):
        super().__init__(f"error rate undefined for an empty reference ({counts.errors} edits)")
        self.counts = counts


def align_counts(ref: Sequence, hyp: Sequence) -> EditCounts:
    """Unit-cost Levenshtein alignment, backtraced into S/I/D counts.

    Ties on the backtrace prefer match/substitution, then deletion, then
    insertion, so counts are deterministic.
    """
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (ri != hyp[j - 1])
            row[j] = min(sub, prev[j] + 1, row[j - 1] + 1)
    s = ins = dele = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(s, ins, dele, n)


def _tokens(x) -> list:
    return x.split() if isinstance(x, str) else list(x)


def wer(ref, hyp) -> dict:
    """Word error rate; strings are whitespace-split, sequences used as is.

    Raises :class:`UndefinedRatioError` (carrying the counts) for an empty
    reference.
    """
    counts = align_counts(_tokens(ref), _tokens(hyp))
    return {"wer": counts.rate, **counts.to_dict()}


def cer(ref: str, hyp: str) -> dict:
    """Character error rate over non-whitespace characters."""
    strip = lambda s: [ch for ch in s if not ch.isspace()]  # noqa: E731
    counts = align_counts(strip(ref), strip(hyp))
    return {"cer": counts.rate, **counts.to_dict()}


def corpus_error_rate(pairs: Iterable[tuple], unit: str = "word") -> dict:
    """Pooled error rate over (ref, hyp) pairs plus the per-utterance mean."""
    pairs = _require(pairs)
    total = EditCounts()
    per = []
    for ref, hyp in pairs:
        if unit == "char":
            c = align_counts([ch for ch in ref if not ch.isspace()], [ch for ch in hyp if not ch.isspace()])
        else:
            c = align_counts(_tokens(ref), _tokens(hyp))
        total = total + c
        if c.ref_len:
            per.append(c.rate)
    key = "cer" if unit == "char" else "wer"
    return {key: total.rate, f"mean_utterance_{key}": sum(per) / len(per) if per else 0.0,
            "n": len(pairs), **total.to_dict()}


# ---------------------------------------------------------------- emotion

DEFAULT_EMOTION_MAPPING = {"other": "sorry"}


def emotion_accuracy(
    cases: Iterable[EmotionCase],
    mapping: Mapping[str, str] | None = None,
    labels: Sequence[str] = DEFAULT_EMOTIONS,
) -> dict:
    """Per-label accuracy over gold groups plus pooled overall accuracy.

    Annotator labels go through ``mapping`` (case-insensitive keys; default
    maps "Other" to sorry) and are then lowercased.
    """
    cases = _require(cases)
    mapping = {k.lower(): v for k, v in (DEFAULT_EMOTION_MAPPING if mapping is None else mapping).items()}
    label_set = {l.lower() for l in labels}
    hit: Counter = Counter()
    tot: Counter = Counter()
    for c in cases:
        gold = c.gold.lower()
        if gold not in label_set:
            raise DataError(f"case {c.id}: gold label {c.gold!r} outside the emotion set")
        raw = c.pred_raw.strip()
        pred = mapping.get(raw.lower(), raw).lower()
        tot[gold] += 1
        hit[gold] += pred == gold
    per_label = {l: hit[l] / tot[l] for l in (x.lower() for x in labels) if tot[l]}
    return {"per_label": per_label, "counts": dict(tot), "overall": sum(hit.values()) / len(cases),
            "n": len(cases)}


# --------------------------------------------------------------- win rate


def win_rate(verdicts: Iterable[JudgeVerdict], ties: str = "half") -> float:
    """(wins + 0.5 * ties) / N; with ``ties="exclude"`` ties leave the denominator."""
    verdicts = _require(verdicts)
    c = Counter(v.winner for v in verdicts)
    bad = set(c) - {"candidate", "baseline", "tie"}
    if bad:
        raise DataError(f"unknown verdicts: {sorted(bad)}")
    if ties == "half":
        return (c["candidate"] + 0.5 * c["tie"]) / len(verdicts)
    if ties == "exclude":
        decided = c["candidate"] + c["baseline"]
        if not decided:
            raise DomainError("every verdict is a tie")
        return c["candidate"] / decided
    raise ValueError(f"unknown tie policy {ties!r}")
