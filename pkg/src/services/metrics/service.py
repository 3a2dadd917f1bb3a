import csv
import io
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from src.models.answers.schema import AnswerSet
from src.models.report.schema import (
    METRIC_NAMES,
    EvaluationRecord,
    MetricsReport,
    ResponseCategory,
    ThresholdSelection
)
from src.utils.errors import DataError
from src.utils.file_handler.json_handler import JSONHandler
from src.utils.logger import get_logger
from src.utils.text import normalize_answer
from .statistics import UndefinedMetricError, mean_or_none, pearson

logger = get_logger(__name__)

CorrectnessOracle = Callable[[str, Sequence[str]], bool]


class MetricsInputError(DataError):
    pass


def select_threshold(values: Sequence[float]) -> ThresholdSelection:
    """Two-means split of 1-D values; the threshold is the midpoint of the cluster means.

    Every one of the n-1 sorted split points is tried and the first one with
    the lowest within-cluster squared error wins.
    """
    data = np.sort(np.asarray(values, dtype=np.float64))
    if data.size < 2:
        raise MetricsInputError("Threshold selection needs at least 2 values")
    if data[0] == data[-1]:
        return ThresholdSelection(threshold=float(data[0]), degenerate=True)

    best_split, best_sse = 1, np.inf
    for split in range(1, data.size):
        low, high = data[:split], data[split:]
        sse = float(((low - low.mean()) ** 2).sum() + ((high - high.mean()) ** 2).sum())
        if sse < best_sse:
            best_split, best_sse = split, sse

    low_mean = float(np.mean(data[:best_split]))
    high_mean = float(np.mean(data[best_split:]))
    return ThresholdSelection(
        threshold=(low_mean + high_mean) / 2.0,
        degenerate=False,
        low_mean=low_mean,
        high_mean=high_mean
    )


def is_correct(answer: str, golds: Sequence[str]) -> bool:
    """True when some normalized gold alias occurs inside the normalized answer."""
    if not golds:
        raise MetricsInputError("Correctness check needs at least one gold answer")
    normalized = normalize_answer(answer)
    return any(alias and alias in normalized for alias in (normalize_answer(gold) for gold in golds))


def categorize(
    answer_set: AnswerSet,
    golds: Sequence[str],
    correctness: CorrectnessOracle = is_correct
) -> ResponseCategory:
    answers = answer_set.all_answers()
    if any(answer.abstained is None for answer in answers):
        raise MetricsInputError(f"Question {answer_set.question_id} is not scored for abstention")

    if answer_set.most_likely.abstained:
        if all(sample.abstained for sample in answer_set.samples):
            return ResponseCategory.CONSISTENTLY_ABSTAINED
        return ResponseCategory.PARTLY_ABSTAINED
    if correctness(answer_set.most_likely.text, golds):
        return ResponseCategory.CORRECT
    return ResponseCategory.HALLUCINATED


def mitigation_report(records: Sequence[EvaluationRecord], tau_su: float, tau_vu: float) -> MetricsReport:
    if not records:
        raise MetricsInputError("Mitigation report needs at least one record")
    n = len(records)

    confident_hallucinations = sum(
        1 for record in records if record.complying_incorrect and record.scores.vu < tau_vu
    )
    disagreements = sum(
        1 for record in records
        if (record.scores.su_norm >= tau_su) != (record.scores.vu >= tau_vu)
    )
    su_values = [record.scores.su_norm for record in records]
    vu_values = [record.scores.vu for record in records]
    try:
        correlation: Optional[float] = pearson(su_values, vu_values)
    except UndefinedMetricError as e:
        logger.warning("SU/VU correlation left undefined: %s", e)
        correlation = None

    counts: Dict[str, int] = {category.value: 0 for category in ResponseCategory}
    for record in records:
        counts[record.category.value] += 1

    return MetricsReport(
        confident_hallucination_rate=confident_hallucinations / n,
        correct_rate=sum(1 for record in records if record.correct) / n,
        refusal_rate=sum(1 for record in records if record.abstained) / n,
        disagreement_rate=disagreements / n,
        pearson_su_vu=correlation,
        vu_incorrect_mean=mean_or_none([r.scores.vu for r in records if r.complying_incorrect]),
        vu_correct_mean=mean_or_none([r.scores.vu for r in records if r.correct]),
        tau_su=float(tau_su),
        tau_vu=float(tau_vu),
        n=n,
        category_counts=counts
    )


def report_csv(before: MetricsReport, after: MetricsReport) -> str:
    """One row per metric with its before and after values; undefined metrics are blank."""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=['metric', 'before', 'after'], lineterminator="\n")
    writer.writeheader()
    for name in METRIC_NAMES:
        values = [report.metric(name) for report in (before, after)]
        writer.writerow({
            'metric': name,
            'before': "" if values[0] is None else repr(values[0]),
            'after': "" if values[1] is None else repr(values[1])
        })
    return buffer.getvalue()


def write_report_csv(path: Path, before: MetricsReport, after: MetricsReport) -> str:
    text = report_csv(before, after)
    JSONHandler.write_text_atomic(path, text)
    return JSONHandler.content_hash(text)


def evaluation_records(
    answer_sets: Sequence[AnswerSet],
    scores: Sequence,
    golds: Dict[str, Sequence[str]],
    correctness: CorrectnessOracle = is_correct
) -> List[EvaluationRecord]:
    if len(answer_sets) != len(scores):
        raise MetricsInputError("Need one score per answer set")
    records = []
    for answer_set, score in zip(answer_sets, scores):
        try:
            question_golds = golds[answer_set.question_id]
        except KeyError as e:
            raise MetricsInputError(f"No gold answers for question {answer_set.question_id}") from e
        records.append(EvaluationRecord(
            question_id=answer_set.question_id,
            category=categorize(answer_set, question_golds, correctness),
            scores=score,
            abstained=bool(answer_set.most_likely.abstained)
        ))
    return records
