"""Scoring responder predictions against a QA set.

A report holds, per question type: item count, missing/empty prediction
counts, exact-match accuracy, clipped unigram precision, corpus BLEU,
ROUGE-L F1 and the error overlap with long-summary predictions.
"""

from __future__ import annotations

import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import jsonio
from .episode import EpisodeTrace
from .language import Lexicon, summary_tokens
from .metrics import bleu_components, bleu_from_components, clipped_precision, exact_match, rouge_l, tokens
from .questions import QAItem, QType
from .splits import SplitSpec, mentions_any

METRICS = ("accuracy", "unigram_precision", "bleu", "rouge_l", "overlap")
LONG = QType.LONG_SUMMARY.value
SUMMARIES = {QType.SHORT_SUMMARY.value, LONG}


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    answer: str


def read_predictions(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, record in jsonio.iter_jsonl(path):
        try:
            qa_id, answer = record["qa_id"], record["answer"]
        except KeyError as exc:
            raise jsonio.FormatError(path, line_no, f"missing field {exc.args[0]!r}") from None
        if not isinstance(answer, str):
            raise jsonio.FormatError(path, line_no, "answer must be a string")
        out[qa_id] = answer
    return out


def write_predictions(path: str | Path, predictions: Mapping[str, str], order: Iterable[str]) -> int:
    return jsonio.write_jsonl(path, "predictions", ({"qa_id": q, "answer": predictions.get(q, "")} for q in order))


def _check(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> None:
    known = {item.qa_id for item in qa_set}
    unknown = sorted(set(predictions) - known)
    if unknown:
        shown = ", ".join(unknown[:10]) + (" ..." if len(unknown) > 10 else "")
        raise EvalError(f"{len(unknown)} prediction(s) for unknown qa_id: {shown}")


def _by_type(qa_set: Sequence[QAItem]) -> dict[str, list[QAItem]]:
    groups: dict[str, list[QAItem]] = defaultdict(list)
    for item in qa_set:
        groups[item.qtype].append(item)
    return dict(sorted(groups.items()))


def score_exact(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> dict[str, float]:
    _check(predictions, qa_set)
    return {q: sum(exact_match(predictions.get(i.qa_id, ""), i.answer) for i in items) / len(items)
            for q, items in _by_type(qa_set).items()}


def score_precision(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> dict[str, float]:
    _check(predictions, qa_set)
    return {q: sum(clipped_precision(tokens(predictions.get(i.qa_id, "")), tokens(i.answer)) for i in items)
            / len(items) for q, items in _by_type(qa_set).items()}


def score_bleu(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> dict[str, float]:
    _check(predictions, qa_set)
    return {q: bleu_from_components(bleu_components(
                (tokens(predictions.get(i.qa_id, "")), tokens(i.answer)) for i in items))
            for q, items in _by_type(qa_set).items()}


def score_rouge(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> dict[str, float]:
    _check(predictions, qa_set)
    return {q: sum(rouge_l(tokens(predictions.get(i.qa_id, "")), tokens(i.answer)) for i in items) / len(items)
            for q, items in _by_type(qa_set).items()}


def missing_object_words(pred: str, gold: str, object_words: frozenset[str]) -> set[str]:
    """Object words of the gold answer that the prediction does not contain."""
    pred_tokens = set(summary_tokens(pred))
    return {w for w in summary_tokens(gold) if w in object_words and w not in pred_tokens}


def score_overlap(
    predictions: Mapping[str, str],
    qa_set: Sequence[QAItem],
    long_summary_predictions: Mapping[str, str],
    object_words: frozenset[str],
) -> dict[str, float | None]:
    """Per type: share of (episode, missed object word) errors the long summary also misses.

    ``None`` when a type has no such errors. Summary and episode-less types
    are skipped.
    """
    _check(predictions, qa_set)
    out: dict[str, float | None] = {}
    for qtype, items in _by_type(qa_set).items():
        if qtype in SUMMARIES:
            continue
        errors: set[tuple[str, str]] = set()
        for item in items:
            if item.episode_id is None:
                continue
            if item.episode_id not in long_summary_predictions:
                raise EvalError(f"no long-summary prediction for episode {item.episode_id!r}")
            for w in missing_object_words(predictions.get(item.qa_id, ""), item.answer, object_words):
                errors.add((item.episode_id, w))
        if not errors:
            out[qtype] = None
            continue
        also = sum(1 for ep, w in errors if w not in summary_tokens(long_summary_predictions[ep]))
        out[qtype] = also / len(errors)
    return out


@dataclass
class EvalReport:
    metrics: dict[str, dict[str, Any]]
    responder: str = ""
    transfer: dict[str, Any] | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"responder": self.responder, "metrics": self.metrics}
        if self.transfer is not None:
            doc["transfer"] = self.transfer
        if self.notes:
            doc["notes"] = self.notes
        return doc

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EvalReport":
        return cls(dict(data["metrics"]), data.get("responder", ""), data.get("transfer"), list(data.get("notes", [])))

    def save(self, path: str | Path) -> None:
        jsonio.write_json(path, "report", self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        try:
            return cls.from_dict(jsonio.read_json(path))
        except KeyError:
            raise jsonio.FormatError(path, 1, "not a report file (no 'metrics')") from None


def _long_summary_answers(predictions: Mapping[str, str], qa_set: Sequence[QAItem]) -> dict[str, str]:
    return {i.episode_id: predictions.get(i.qa_id, "") for i in qa_set if i.qtype == LONG and i.episode_id}


def metric_table(
    predictions: Mapping[str, str],
    qa_set: Sequence[QAItem],
    object_words: frozenset[str],
    long_summaries: Mapping[str, str] | None = None,
) -> dict[str, dict[str, Any]]:
    """Every metric for every question type present in ``qa_set``."""
    acc = score_exact(predictions, qa_set)
    prec = score_precision(predictions, qa_set)
    bleu = score_bleu(predictions, qa_set)
    rouge = score_rouge(predictions, qa_set)
    overlap: dict[str, float | None] = {}
    if long_summaries is not None:
        needed = {i.episode_id for i in qa_set if i.episode_id and i.qtype not in SUMMARIES}
        if needed <= set(long_summaries):
            overlap = score_overlap(predictions, qa_set, long_summaries, object_words)
    table = {}
    for qtype, items in _by_type(qa_set).items():
        table[qtype] = {
            "n": len(items),
            "missing": sum(1 for i in items if i.qa_id not in predictions),
            "empty": sum(1 for i in items if not tokens(predictions.get(i.qa_id, ""))),
            "accuracy": acc[qtype],
            "unigram_precision": prec[qtype],
            "bleu": bleu[qtype],
            "rouge_l": rouge[qtype],
            "overlap": overlap.get(qtype),
        }
    return table


def heldout_episodes(spec: SplitSpec, episodes: Iterable[EpisodeTrace], lexicon: Lexicon) -> set[str]:
    """Episodes the split holds out: those listed in it, plus any other episode
    whose long summary mentions a held-out object or whose plan uses the held-out verb."""
    held = set(spec.heldout_episode_ids)
    phrases = [lexicon.name(o) for o in sorted(spec.heldout_objects)]
    for ep in episodes:
        if spec.heldout_verb and any(s.verb == spec.heldout_verb for s in ep.plan):
            held.add(ep.episode_id)
        elif phrases and mentions_any(ep, phrases, lexicon):
            held.add(ep.episode_id)
    return held


def evaluate(
    qa_set: Sequence[QAItem],
    predictions: Mapping[str, str],
    lexicon: Lexicon,
    *,
    responder: str = "",
    split: SplitSpec | None = None,
    episodes: Sequence[EpisodeTrace] = (),
) -> EvalReport:
    if not qa_set:
        raise EvalError("empty QA set")
    words = lexicon.object_words()
    long_summaries = _long_summary_answers(predictions, qa_set)
    notes = []
    needed = {i.episode_id for i in qa_set if i.episode_id and i.qtype not in SUMMARIES}
    if not needed <= set(long_summaries):
        notes.append("overlap not computed: QA set lacks long-summary items for some episodes")
    report = EvalReport(metric_table(predictions, qa_set, words, long_summaries), responder, notes=notes)
    missing = sum(m["missing"] for m in report.metrics.values())
    if missing:
        report.notes.append(f"{missing} item(s) had no prediction and were scored as empty")
    if split is not None:
        held = heldout_episodes(split, episodes, lexicon)
        groups = {
            "heldout": [i for i in qa_set if i.episode_id in held],
            "rest": [i for i in qa_set if i.episode_id not in held],
        }
        report.transfer = {
            "heldout_objects": sorted(split.heldout_objects),
            "heldout_verb": split.heldout_verb,
            "heldout_episodes": len({i.episode_id for i in groups["heldout"]}),
        }
        for name, items in groups.items():
            sub = {q: predictions[q] for q in (i.qa_id for i in items) if q in predictions}
            report.transfer[name] = metric_table(sub, items, words, long_summaries) if items else {}
    return report


def aggregate_runs(reports: Sequence[EvalReport]) -> dict[str, Any]:
    """Mean and sample standard deviation of every metric across runs."""
    if len(reports) < 2:
        raise EvalError("need ≥ 2 runs")
    qtypes = [sorted(r.metrics) for r in reports]
    if any(q != qtypes[0] for q in qtypes[1:]):
        raise EvalError("reports cover different question types")
    out: dict[str, dict[str, Any]] = {}
    for qtype in qtypes[0]:
        row: dict[str, Any] = {"n": [r.metrics[qtype].get("n") for r in reports]}
        for metric in METRICS:
            values = [r.metrics[qtype].get(metric) for r in reports]
            values = [v for v in values if v is not None]
            row[metric] = {
                "mean": statistics.fmean(values) if values else None,
                "std": statistics.stdev(values) if len(values) >= 2 else None,
                "runs": len(values),
            }
        out[qtype] = row
    return {"runs": len(reports), "responders": [r.responder for r in reports], "metrics": out}
