"""Zero-shot hold-out protocols.

A hold-out picks five mid-frequency objects (or one verb); every train
episode whose long summary mentions one of them stays available for question
training but is masked out of summary training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from . import jsonio
from .episode import GOTO, VERB_ARITY, CorpusStats, EpisodeTrace
from .language import Lexicon, mentions, render_long_summary, summary_tokens
from .rng import make_rng

log = logging.getLogger(__name__)

HELDOUT_SIZE = 5
SKIP_TOP = 10
POOL_TOP = 30
TASKS = ("qa_training", "summary_training")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    heldout_objects: frozenset[str]
    heldout_verb: str | None
    heldout_episode_ids: frozenset[str]
    task_eligibility: Mapping[str, frozenset[str]]
    seed: int | None = None
    ranking_snapshot: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "heldout_objects": sorted(self.heldout_objects),
            "heldout_verb": self.heldout_verb,
            "heldout_episode_ids": sorted(self.heldout_episode_ids),
            "task_eligibility": {t: sorted(self.task_eligibility[t]) for t in TASKS},
            "seed": self.seed,
            "ranking_snapshot": list(self.ranking_snapshot),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SplitSpec":
        return cls(
            frozenset(data["heldout_objects"]),
            data.get("heldout_verb"),
            frozenset(data["heldout_episode_ids"]),
            {t: frozenset(data["task_eligibility"][t]) for t in TASKS},
            data.get("seed"),
            tuple(data.get("ranking_snapshot", ())),
        )

    def save(self, path: str | Path) -> None:
        jsonio.write_json(path, "split", self.to_dict())

    @classmethod
    def load(cls, path: str | Path) -> "SplitSpec":
        try:
            return cls.from_dict(jsonio.read_json(path))
        except (KeyError, TypeError) as exc:
            raise jsonio.FormatError(path, 1, f"not a split file ({exc})") from None


def rank_objects(stats: CorpusStats, by: str = "summary") -> list[str]:
    """Objects by frequency, most common first; ties broken alphabetically.

    ``by="summary"`` counts episodes whose plan (and so long summary) names
    the object; ``by="visibility"`` counts episodes where it was visible.
    """
    if stats.n_episodes == 0:
        raise SplitError("empty corpus statistics")
    counts = {"summary": stats.object_summary_freq, "visibility": stats.object_visibility_freq}[by]
    return sorted((o for o, n in counts.items() if n > 0), key=lambda o: (-counts[o], o))


def select_heldout(ranking: Sequence[str], seed: int) -> list[str]:
    """Five objects drawn uniformly from ranks 11 to 30."""
    if len(ranking) < POOL_TOP:
        raise SplitError(f"insufficient vocabulary: ranking has {len(ranking)} objects, need {POOL_TOP}")
    return make_rng(seed, "heldout").sample(list(ranking[SKIP_TOP:POOL_TOP]), HELDOUT_SIZE)


def choose_verb(seed: int) -> str:
    """A seeded choice among the verbs other than navigation."""
    verbs = sorted(v for v in VERB_ARITY if v != GOTO)
    return make_rng(seed, "heldout-verb").choice(verbs)


def mentions_any(ep: EpisodeTrace, phrases: Iterable[str], lex: Lexicon) -> bool:
    tokens = summary_tokens(render_long_summary(ep.plan, lex))
    return any(mentions(tokens, p) for p in phrases)


def partition(
    corpus: Sequence[EpisodeTrace],
    lexicon: Lexicon,
    heldout_objects: Iterable[str] = (),
    heldout_verb: str | None = None,
    *,
    seed: int | None = None,
    ranking: Sequence[str] = (),
) -> SplitSpec:
    """Eligibility masks over ``corpus`` (the train split) for a hold-out set."""
    objects = frozenset(heldout_objects)
    if heldout_verb is not None and heldout_verb not in VERB_ARITY:
        raise SplitError(f"unknown verb {heldout_verb!r}")
    phrases = [lexicon.name(o) for o in sorted(objects)]
    held: set[str] = set()
    for ep in corpus:
        if heldout_verb is not None and any(s.verb == heldout_verb for s in ep.plan):
            held.add(ep.episode_id)
        elif phrases and mentions_any(ep, phrases, lexicon):
            held.add(ep.episode_id)
    present = {a for ep in corpus for s in ep.plan for a in s.args}
    for o in sorted(objects - present):
        log.warning("held-out object %r does not occur in any train plan", o)
    everything = frozenset(ep.episode_id for ep in corpus)
    held_ids = frozenset(held)
    return SplitSpec(
        objects,
        heldout_verb,
        held_ids,
        {"qa_training": everything, "summary_training": everything - held_ids},
        seed,
        tuple(ranking),
    )


def object_split(corpus: Sequence[EpisodeTrace], stats: CorpusStats, lexicon: Lexicon, seed: int,
                 by: str = "summary") -> SplitSpec:
    ranking = rank_objects(stats, by)
    return partition(corpus, lexicon, select_heldout(ranking, seed), seed=seed, ranking=ranking)


def verb_split(corpus: Sequence[EpisodeTrace], lexicon: Lexicon, seed: int, verb: str | None = None) -> SplitSpec:
    return partition(corpus, lexicon, heldout_verb=verb or choose_verb(seed), seed=seed)


__all__ = [
    "HELDOUT_SIZE", "SplitError", "SplitSpec", "rank_objects", "select_heldout", "choose_verb",
    "partition", "object_split", "verb_split", "mentions_any",
]
