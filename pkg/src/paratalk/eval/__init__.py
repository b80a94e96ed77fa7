from .metrics import (
    Confusion,
    EditCounts,
    EmotionCase,
    FcCase,
    FcCounts,
    JudgeVerdict,
    QaItem,
    RejectionCase,
    UndefinedRatioError,
    align_counts,
    cer,
    corpus_error_rate,
    emotion_accuracy,
    fc_counts,
    fc_metrics,
    normalize_text,
    presence_hit,
    presence_rate,
    rejection_metrics,
    wer,
    win_rate,
)
