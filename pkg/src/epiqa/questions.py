"""Question/answer generation over episode traces.

Nine question types in three families (objects, actions, temporal order),
two summary prompts, an optional "did A happen before B" type, static
dataset construction, a per-epoch sampling stream and the out-of-distribution
negative question sets.
"""

from __future__ import annotations

import json
import logging
import random
import re
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from . import jsonio
from .episode import CorpusStats, EpisodeTrace, PlanStep, StepKey, compute_stats
from .language import Lexicon, mentions, normalize_answer, render_long_summary, render_step, with_article
from .rng import make_rng, weighted_sample

log = logging.getLogger(__name__)


class QType(str, Enum):
    OBJECT_YES_NO = "object_yes_no"
    OBJECT_EITHER_OR = "object_either_or"
    ACTION_SIMPLE_YES_NO = "action_simple_yes_no"
    ACTION_COMPLEX_YES_NO = "action_complex_yes_no"
    ACTION_EITHER_OR = "action_either_or"
    TEMPORAL_BEFORE_SIMPLE = "temporal_before_simple"
    TEMPORAL_BEFORE_COMPLEX = "temporal_before_complex"
    TEMPORAL_AFTER_SIMPLE = "temporal_after_simple"
    TEMPORAL_AFTER_COMPLEX = "temporal_after_complex"
    SHORT_SUMMARY = "short_summary"
    LONG_SUMMARY = "long_summary"
    # off by default: answerable from dataset regularities alone
    ACTION_BEFORE_AFTER = "action_before_after"
    OOD_ORDINARY = "ood_ordinary"
    OOD_EXTRAORDINARY = "ood_extraordinary"


QUESTION_TYPES: tuple[QType, ...] = (
    QType.OBJECT_YES_NO,
    QType.OBJECT_EITHER_OR,
    QType.ACTION_SIMPLE_YES_NO,
    QType.ACTION_COMPLEX_YES_NO,
    QType.ACTION_EITHER_OR,
    QType.TEMPORAL_BEFORE_SIMPLE,
    QType.TEMPORAL_BEFORE_COMPLEX,
    QType.TEMPORAL_AFTER_SIMPLE,
    QType.TEMPORAL_AFTER_COMPLEX,
)
SUMMARY_TYPES = (QType.SHORT_SUMMARY, QType.LONG_SUMMARY)
YES_NO_TYPES = frozenset({
    QType.OBJECT_YES_NO, QType.ACTION_SIMPLE_YES_NO, QType.ACTION_COMPLEX_YES_NO,
    QType.ACTION_BEFORE_AFTER, QType.OOD_ORDINARY, QType.OOD_EXTRAORDINARY,
})
TEMPORAL_TYPES = frozenset({
    QType.TEMPORAL_BEFORE_SIMPLE, QType.TEMPORAL_BEFORE_COMPLEX,
    QType.TEMPORAL_AFTER_SIMPLE, QType.TEMPORAL_AFTER_COMPLEX,
})

PROMPTS = {
    "object_yes_no": "was there {a}?",
    "object_either_or": "was there {a} or {b}?",
    "action_yes_no": "did you {a}?",
    "action_either_or": "did you {a} or {b}?",
    "temporal_before": "what did you do just before {a}?",
    "temporal_after": "what did you do just after {a}?",
    "before_after": "did you {a} before you {b}?",
    "short_summary": "summarize what you did.",
    "long_summary": "narrate what you did.",
}


@dataclass(frozen=True)
class QAItem:
    qa_id: str
    episode_id: str | None
    qtype: str
    prompt: str
    answer: str
    meta: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "qa_id": self.qa_id,
            "episode_id": self.episode_id,
            "qtype": self.qtype,
            "prompt": self.prompt,
            "answer": self.answer,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QAItem":
        return cls(data["qa_id"], data.get("episode_id"), data["qtype"], data["prompt"], data["answer"],
                   dict(data.get("meta") or {}))


def read_qa(path: str | Path) -> list[QAItem]:
    out = []
    for line_no, record in jsonio.iter_jsonl(path):
        try:
            out.append(QAItem.from_dict(record))
        except KeyError as exc:
            raise jsonio.FormatError(path, line_no, f"missing field {exc.args[0]!r}") from None
    return out


def write_qa(path: str | Path, items: Iterable[QAItem]) -> int:
    return jsonio.write_jsonl(path, "qa", (item.to_dict() for item in items))


@dataclass(frozen=True)
class GenPolicy:
    per_type_cap: int = 10
    seed: int = 0
    enable_before_after: bool = False
    # "episode": weight negatives by #episodes an object was visible in;
    # "step": by #plan steps it was visible at
    visibility_unit: str = "episode"

    def __post_init__(self) -> None:
        if self.per_type_cap < 1:
            raise ValueError("per_type_cap must be >= 1")
        if self.visibility_unit not in ("episode", "step"):
            raise ValueError("visibility_unit must be 'episode' or 'step'")


@dataclass
class GenContext:
    """Everything shared by per-episode generation: stats, lexicon, policy and
    a corpus-wide pool of step descriptions keyed by action (verb, first arg)."""

    stats: CorpusStats
    lexicon: Lexicon
    policy: GenPolicy
    descriptions: Mapping[tuple[str, str], Sequence[tuple[str, int, str]]]
    object_weights: Mapping[str, int]
    realizations: Mapping[tuple[str, str], tuple[list[StepKey], list[int]]]

    @classmethod
    def build(
        cls,
        corpus: Sequence[EpisodeTrace],
        lexicon: Lexicon,
        policy: GenPolicy,
        stats: CorpusStats | None = None,
    ) -> "GenContext":
        stats = stats or compute_stats(corpus)
        pool: dict[tuple[str, str], list[tuple[str, int, str]]] = defaultdict(list)
        for ep in corpus:
            for i, (step, desc) in enumerate(zip(ep.plan, ep.step_descriptions)):
                pool[step.action].append((ep.episode_id, i, desc))
        if policy.visibility_unit == "step":
            weights: Counter = Counter()
            for ep in corpus:
                for visible in ep.visible_objects:
                    weights.update(visible)
        else:
            weights = stats.object_visibility_freq
        variants: dict[tuple[str, str], tuple[list[StepKey], list[int]]] = {}
        for key in sorted(stats.step_freq):
            keys, counts = variants.setdefault((key[0], key[1][0]), ([], []))
            keys.append(key)
            counts.append(stats.step_freq[key])
        return cls(stats, lexicon, policy, dict(pool), dict(weights), variants)


# --- helpers -------------------------------------------------------------

def _clause(description: str) -> str:
    """A step description as an embeddable clause: no final punctuation, lowercase start."""
    text = " ".join(description.split()).rstrip(".!?")
    return text[:1].lower() + text[1:]


def _rng(ctx: GenContext, ep: EpisodeTrace, qtype: QType) -> random.Random:
    return make_rng(ctx.policy.seed, ep.episode_id, qtype.value)


def balanced_counts(cap: int, n_pos: int, n_neg: int, rng: random.Random) -> tuple[int, int]:
    """How many yes / no items to emit: equal counts, one extra if ``cap`` is odd."""
    if n_neg == 0:
        return min(cap // 2 + cap % 2, n_pos), 0
    k = min(cap // 2, n_pos, n_neg)
    n_yes = n_no = k
    if cap % 2 and 2 * k < cap:
        can_yes, can_no = n_pos > k, n_neg > k
        if can_yes and (not can_no or rng.random() < 0.5):
            n_yes += 1
        elif can_no:
            n_no += 1
    return n_yes, n_no


Draft = tuple[str, str, dict[str, Any]]  # prompt, answer, meta


def _distinct_steps(ep: EpisodeTrace) -> list[PlanStep]:
    seen: dict[StepKey, PlanStep] = {}
    for step in ep.plan:
        seen.setdefault(step.key, step)
    return list(seen.values())


# --- objects ----------------------------------------------------------------

def _negative_objects(ep: EpisodeTrace, ctx: GenContext) -> tuple[list[str], list[int]]:
    seen = ep.seen_objects
    support = [o for o in sorted(ctx.object_weights) if o not in seen and ctx.object_weights[o] > 0]
    return support, [ctx.object_weights[o] for o in support]


def sample_negative_objects(ep: EpisodeTrace, ctx: GenContext, rng: random.Random, k: int) -> list[str]:
    """Up to ``k`` distinct unseen objects, each draw proportional to visibility frequency."""
    support, weights = _negative_objects(ep, ctx)
    return weighted_sample(rng, support, weights, k)


def _object_yes(ep: EpisodeTrace, ctx: GenContext, rng: random.Random, k: int) -> list[Draft]:
    pos = rng.sample(sorted(ep.seen_objects), min(k, len(ep.seen_objects)))
    return [(PROMPTS["object_yes_no"].format(a=with_article(ctx.lexicon.name(o))), "yes", {"object": o})
            for o in pos]


def _object_no(ep: EpisodeTrace, ctx: GenContext, rng: random.Random, k: int) -> list[Draft]:
    neg = sample_negative_objects(ep, ctx, rng, k)
    return [(PROMPTS["object_yes_no"].format(a=with_article(ctx.lexicon.name(o))), "no",
             {"object": o, "draw": j}) for j, o in enumerate(neg)]


def _object_either_or(ep: EpisodeTrace, ctx: GenContext, rng: random.Random, k: int) -> list[Draft]:
    support, _ = _negative_objects(ep, ctx)
    k = min(k, len(ep.seen_objects), len(support))
    pos = rng.sample(sorted(ep.seen_objects), k)
    neg = sample_negative_objects(ep, ctx, rng, k)
    out = []
    for p, n in zip(pos, neg):
        options = [p, n] if rng.random() < 0.5 else [n, p]
        names = [ctx.lexicon.name(o) for o in options]
        prompt = PROMPTS["object_either_or"].format(a=with_article(names[0]), b=with_article(names[1]))
        out.append((prompt, ctx.lexicon.name(p), {"options": options, "seen": p}))
    return out


# --- actions ----------------------------------------------------------------

def _negative_actions(ep: EpisodeTrace, ctx: GenContext) -> tuple[list[tuple[str, str]], list[int]]:
    performed = ep.performed_actions
    support = [a for a in sorted(ctx.stats.action_freq) if a not in performed and ctx.stats.action_freq[a] > 0]
    return support, [ctx.stats.action_freq[a] for a in support]


def _realize(action: tuple[str, str], ctx: GenContext, rng: random.Random) -> PlanStep:
    keys, counts = ctx.realizations[action]
    verb, args = weighted_sample(rng, keys, counts, 1)[0]
    return PlanStep(verb, args)


def sample_negative_actions(ep: EpisodeTrace, ctx: GenContext, rng: random.Random, k: int) -> list[PlanStep]:
    """Up to ``k`` steps whose (verb, first arg) the episode never performed."""
    support, weights = _negative_actions(ep, ctx)
    return [_realize(a, ctx, rng) for a in weighted_sample(rng, support, weights, k)]


def _action_simple_yes(ep, ctx, rng, k) -> list[Draft]:
    steps = rng.sample(_distinct_steps(ep), min(k, len(_distinct_steps(ep))))
    return [(PROMPTS["action_yes_no"].format(a=render_step(s, ctx.lexicon)), "yes", {"step": s.to_text()})
            for s in steps]


def _action_simple_no(ep, ctx, rng, k) -> list[Draft]:
    return [(PROMPTS["action_yes_no"].format(a=render_step(s, ctx.lexicon)), "no", {"step": s.to_text()})
            for s in sample_negative_actions(ep, ctx, rng, k)]


def _own_descriptions(ep: EpisodeTrace) -> list[int]:
    first: dict[str, int] = {}
    for i, d in enumerate(ep.step_descriptions):
        first.setdefault(_clause(d), i)
    return sorted(first.values())


def _action_complex_yes(ep, ctx, rng, k) -> list[Draft]:
    indices = _own_descriptions(ep)
    chosen = sorted(rng.sample(indices, min(k, len(indices))))
    return [(PROMPTS["action_yes_no"].format(a=_clause(ep.step_descriptions[i])), "yes", {"step_index": i})
            for i in chosen]


def _complex_negative_support(ep, ctx) -> tuple[list[tuple[str, str]], list[int]]:
    support, weights = _negative_actions(ep, ctx)
    keep = [(a, w) for a, w in zip(support, weights)
            if any(src != ep.episode_id for src, _, _ in ctx.descriptions.get(a, ()))]
    return [a for a, _ in keep], [w for _, w in keep]


def _action_complex_no(ep, ctx, rng, k) -> list[Draft]:
    support, weights = _complex_negative_support(ep, ctx)
    out = []
    for action in weighted_sample(rng, support, weights, k):
        pool = [d for d in ctx.descriptions[action] if d[0] != ep.episode_id]
        source, index, desc = rng.choice(pool)
        out.append((PROMPTS["action_yes_no"].format(a=_clause(desc)), "no",
                    {"source_episode": source, "step_index": index, "action": list(action)}))
    return out


def _action_either_or(ep, ctx, rng, k) -> list[Draft]:
    distinct = _distinct_steps(ep)
    support, _ = _negative_actions(ep, ctx)
    k = min(k, len(distinct), len(support))
    pos = rng.sample(distinct, k)
    neg = sample_negative_actions(ep, ctx, rng, k)
    out = []
    for p, n in zip(pos, neg):
        options = [p, n] if rng.random() < 0.5 else [n, p]
        phrases = [render_step(s, ctx.lexicon) for s in options]
        out.append((PROMPTS["action_either_or"].format(a=phrases[0], b=phrases[1]), render_step(p, ctx.lexicon),
                    {"options": [s.to_text() for s in options], "performed": p.to_text()}))
    return out


# --- temporal ---------------------------------------------------------------

def temporal_anchors(ep: EpisodeTrace, direction: str, lex: Lexicon | None = None) -> list[int]:
    """Plan indices usable as anchors: unique (verb, args) with the needed neighbour.

    With a lexicon, the rendered phrase must be unique as well; ``pick up the
    X`` drops the source receptacle, so two distinct pickups can read alike.
    """
    counts = Counter(step.key for step in ep.plan)
    phrases = Counter(render_step(s, lex) for s in ep.plan) if lex else None
    n = len(ep.plan)
    return [
        i for i, step in enumerate(ep.plan)
        if counts[step.key] == 1
        and (phrases is None or phrases[render_step(step, lex)] == 1)
        and (i > 0 if direction == "before" else i < n - 1)
    ]


def _temporal(direction: str, language: str):
    def draft(ep, ctx, rng, k) -> list[Draft]:
        anchors = temporal_anchors(ep, direction, ctx.lexicon)
        chosen = sorted(rng.sample(anchors, min(k, len(anchors))))
        out = []
        for i in chosen:
            anchor = render_step(ep.plan[i], ctx.lexicon) if language == "simple" else _clause(ep.step_descriptions[i])
            j = i - 1 if direction == "before" else i + 1
            out.append((PROMPTS[f"temporal_{direction}"].format(a=anchor), render_step(ep.plan[j], ctx.lexicon),
                        {"anchor_index": i}))
        return out
    return draft


def _before_after_pairs(ep: EpisodeTrace) -> list[tuple[int, int]]:
    counts = Counter(step.key for step in ep.plan)
    unique = [i for i, s in enumerate(ep.plan) if counts[s.key] == 1]
    return [(i, j) for a, i in enumerate(unique) for j in unique[a + 1:]]


def _before_after(ep, ctx, rng, n_yes, n_no) -> list[Draft]:
    pairs = _before_after_pairs(ep)
    chosen = rng.sample(pairs, min(n_yes + n_no, len(pairs)))
    out = []
    for m, (i, j) in enumerate(chosen):
        first, second = (i, j) if m < n_yes else (j, i)
        a, b = (render_step(ep.plan[x], ctx.lexicon) for x in (first, second))
        out.append((PROMPTS["before_after"].format(a=a, b=b), "yes" if first < second else "no",
                    {"first_index": first, "second_index": second}))
    return out


# --- per-type dispatch ------------------------------------------------------

_YES_NO = {
    QType.OBJECT_YES_NO: (_object_yes, _object_no,
                          lambda ep, ctx: (len(ep.seen_objects), len(_negative_objects(ep, ctx)[0]))),
    QType.ACTION_SIMPLE_YES_NO: (_action_simple_yes, _action_simple_no,
                                 lambda ep, ctx: (len(_distinct_steps(ep)), len(_negative_actions(ep, ctx)[0]))),
    QType.ACTION_COMPLEX_YES_NO: (_action_complex_yes, _action_complex_no,
                                  lambda ep, ctx: (len(_own_descriptions(ep)),
                                                   len(_complex_negative_support(ep, ctx)[0]))),
}
_OTHER = {
    QType.OBJECT_EITHER_OR: _object_either_or,
    QType.ACTION_EITHER_OR: _action_either_or,
    QType.TEMPORAL_BEFORE_SIMPLE: _temporal("before", "simple"),
    QType.TEMPORAL_BEFORE_COMPLEX: _temporal("before", "complex"),
    QType.TEMPORAL_AFTER_SIMPLE: _temporal("after", "simple"),
    QType.TEMPORAL_AFTER_COMPLEX: _temporal("after", "complex"),
}


def _drafts(qtype: QType, ep: EpisodeTrace, ctx: GenContext, rng: random.Random, cap: int) -> list[Draft]:
    if qtype in _YES_NO:
        yes_fn, no_fn, avail = _YES_NO[qtype]
        n_pos, n_neg = avail(ep, ctx)
        n_yes, n_no = balanced_counts(cap, n_pos, n_neg, rng)
        drafts = yes_fn(ep, ctx, rng, n_yes) + no_fn(ep, ctx, rng, n_no)
        rng.shuffle(drafts)
        return drafts
    if qtype is QType.ACTION_BEFORE_AFTER:
        # each unordered pair yields one item, asked in either order
        n = len(_before_after_pairs(ep))
        n_yes, n_no = balanced_counts(min(cap, n), n, n, rng)
        drafts = _before_after(ep, ctx, rng, n_yes, n_no)
        rng.shuffle(drafts)
        return drafts
    return _OTHER[qtype](ep, ctx, rng, cap)


def _items(ep: EpisodeTrace, qtype: QType, drafts: Iterable[Draft], suffix: str = "") -> list[QAItem]:
    return [QAItem(f"{ep.episode_id}/{qtype.value}/{n:02d}{suffix}", ep.episode_id, qtype.value, p, a, m)
            for n, (p, a, m) in enumerate(drafts)]


def gen_object_questions(kind: str, ep: EpisodeTrace, ctx: GenContext,
                         rng: random.Random | None = None) -> list[QAItem]:
    """``kind`` is ``yes_no`` or ``either_or``."""
    qtype = {"yes_no": QType.OBJECT_YES_NO, "either_or": QType.OBJECT_EITHER_OR}[kind]
    return _items(ep, qtype, _drafts(qtype, ep, ctx, rng or _rng(ctx, ep, qtype), ctx.policy.per_type_cap))


def gen_action_questions(kind: str, ep: EpisodeTrace, ctx: GenContext,
                         rng: random.Random | None = None) -> list[QAItem]:
    """``kind`` is ``simple_yes_no``, ``complex_yes_no`` or ``either_or``."""
    qtype = {
        "simple_yes_no": QType.ACTION_SIMPLE_YES_NO,
        "complex_yes_no": QType.ACTION_COMPLEX_YES_NO,
        "either_or": QType.ACTION_EITHER_OR,
    }[kind]
    return _items(ep, qtype, _drafts(qtype, ep, ctx, rng or _rng(ctx, ep, qtype), ctx.policy.per_type_cap))


def gen_temporal_questions(direction: str, language: str, ep: EpisodeTrace, ctx: GenContext,
                           rng: random.Random | None = None) -> list[QAItem]:
    qtype = QType(f"temporal_{direction}_{language}")
    return _items(ep, qtype, _drafts(qtype, ep, ctx, rng or _rng(ctx, ep, qtype), ctx.policy.per_type_cap))


def gen_before_after_questions(ep: EpisodeTrace, ctx: GenContext,
                               rng: random.Random | None = None) -> list[QAItem]:
    qtype = QType.ACTION_BEFORE_AFTER
    return _items(ep, qtype, _drafts(qtype, ep, ctx, rng or _rng(ctx, ep, qtype), ctx.policy.per_type_cap))


def gen_summary_prompts(ep: EpisodeTrace, lex: Lexicon, suffix: str = "") -> list[QAItem]:
    return [
        QAItem(f"{ep.episode_id}/short_summary/00{suffix}", ep.episode_id, QType.SHORT_SUMMARY.value,
               PROMPTS["short_summary"], ep.short_summary),
        QAItem(f"{ep.episode_id}/long_summary/00{suffix}", ep.episode_id, QType.LONG_SUMMARY.value,
               PROMPTS["long_summary"], render_long_summary(ep.plan, lex)),
    ]


def active_types(policy: GenPolicy) -> tuple[QType, ...]:
    if policy.enable_before_after:
        return QUESTION_TYPES + (QType.ACTION_BEFORE_AFTER,)
    return QUESTION_TYPES


# --- static dataset -----------------------------------------------------------

def episode_items(ep: EpisodeTrace, ctx: GenContext) -> list[QAItem]:
    """All static items for one episode: up to ``cap`` per type, deduplicated on prompt."""
    cap = ctx.policy.per_type_cap
    prompts: set[str] = set()
    out: list[QAItem] = []
    for qtype in active_types(ctx.policy):
        drafts = []
        for prompt, answer, meta in _drafts(qtype, ep, ctx, _rng(ctx, ep, qtype), cap):
            if prompt not in prompts:
                prompts.add(prompt)
                drafts.append((prompt, answer, meta))
        out.extend(_items(ep, qtype, drafts[:cap]))
    out.extend(gen_summary_prompts(ep, ctx.lexicon))
    return out


_CTX: dict[str, GenContext] = {}


def _init_ctx(ctx: GenContext) -> None:
    _CTX["ctx"] = ctx


def _episode_items_worker(ep: EpisodeTrace) -> list[QAItem]:
    return episode_items(ep, _CTX["ctx"])


def build_manifest(items: Sequence[QAItem], episodes: Sequence[EpisodeTrace], policy: GenPolicy) -> dict[str, Any]:
    split_of = {ep.episode_id: ep.split for ep in episodes}
    counts: dict[str, Counter] = defaultdict(Counter)
    answers: dict[str, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
    per_episode: Counter = Counter()
    for item in items:
        split = split_of.get(item.episode_id, "unknown")
        counts[split][item.qtype] += 1
        per_episode[(item.episode_id, item.qtype)] += 1
        if item.qtype in {t.value for t in YES_NO_TYPES}:
            answers[split][item.qtype][item.answer] += 1
    shortfalls: dict[str, dict[str, int]] = {}
    for qtype in active_types(policy):
        short = [policy.per_type_cap - per_episode[(ep.episode_id, qtype.value)] for ep in episodes]
        shortfalls[qtype.value] = {
            "episodes_below_cap": sum(1 for s in short if s > 0),
            "missing_items": sum(short),
        }
    return {
        "per_type_cap": policy.per_type_cap,
        "seed": policy.seed,
        "enable_before_after": policy.enable_before_after,
        "n_episodes": len(episodes),
        "counts": {s: dict(sorted(c.items())) for s, c in sorted(counts.items())},
        "yes_no_answers": {s: {q: dict(sorted(c.items())) for q, c in sorted(d.items())}
                           for s, d in sorted(answers.items())},
        "shortfalls": shortfalls,
    }


def build_static_dataset(
    corpus: Sequence[EpisodeTrace], ctx: GenContext, workers: int = 1
) -> tuple[list[QAItem], dict[str, Any]]:
    """Generate the static QA set for ``corpus`` plus a manifest of counts and shortfalls."""
    if workers > 1 and len(corpus) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_ctx, initargs=(ctx,)) as pool:
            chunks = list(pool.map(_episode_items_worker, corpus, chunksize=max(1, len(corpus) // (4 * workers))))
    else:
        chunks = [episode_items(ep, ctx) for ep in corpus]
    items = [item for chunk in chunks for item in chunk]
    return items, build_manifest(items, corpus, ctx.policy)


# --- epoch stream ---------------------------------------------------------------

def epoch_stream(
    corpus: Sequence[EpisodeTrace], ctx: GenContext, epoch_seed: int
) -> Iterator[tuple[EpisodeTrace, list[QAItem]]]:
    """One training epoch: episodes in seeded random order, each with both
    summary items and one fresh question per available type."""
    order = list(corpus)
    make_rng(epoch_seed, "order").shuffle(order)
    suffix = f"@{epoch_seed}"
    for ep in order:
        items = gen_summary_prompts(ep, ctx.lexicon, suffix)
        for qtype in active_types(ctx.policy):
            rng = make_rng(epoch_seed, ep.episode_id, qtype.value)
            if qtype in _YES_NO:
                yes_fn, no_fn, avail = _YES_NO[qtype]
                n_pos, n_neg = avail(ep, ctx)
                want_yes = rng.random() < 0.5
                if (want_yes and n_pos) or not n_neg:
                    drafts = yes_fn(ep, ctx, rng, 1)
                else:
                    drafts = no_fn(ep, ctx, rng, 1)
            else:
                drafts = _drafts(qtype, ep, ctx, rng, 1)
            items.extend(_items(ep, qtype, drafts[:1], suffix))
        yield ep, items


# --- out-of-distribution negatives -------------------------------------------------

class ContaminationError(ValueError):
    pass


OOD_SET_SIZE = 50


def load_ood_bank(path: str | Path | None = None) -> dict[str, list[str]]:
    if path is None:
        text = resources.files("epiqa.data").joinpath("ood_bank.json").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    data = json.loads(text)
    return {"ordinary": list(data["ordinary"]), "extraordinary": list(data["extraordinary"])}


def gen_ood_sets(bank: Mapping[str, Sequence[str]], lexicon: Lexicon) -> dict[str, list[QAItem]]:
    """Two 50-item sets of yes/no questions whose answer is always "no".

    Raises :class:`ContaminationError` if a question mentions a catalog object
    (it could then describe an action that really happened).
    """
    out: dict[str, list[QAItem]] = {}
    for kind in ("ordinary", "extraordinary"):
        questions = list(bank[kind])
        if len(questions) < OOD_SET_SIZE:
            raise ValueError(f"{kind} bank has {len(questions)} questions, need {OOD_SET_SIZE}")
        items = []
        for i, question in enumerate(questions[:OOD_SET_SIZE]):
            prompt = " ".join(question.split())
            tokens = normalize_answer(prompt).split()
            for name in lexicon.object_names.values():
                if mentions(tokens, name):
                    raise ContaminationError(f"{kind}[{i}] {question!r} mentions catalog object {name!r}")
            items.append(QAItem(f"ood_{kind}_{i:02d}", None, f"ood_{kind}", prompt, "no", {"bank_index": i}))
        out[kind] = items
    return out


# --- prompt parsing (used by prompt-only responders) ---------------------------------

_OBJ_EITHER = re.compile(r"^was there an? (.+) or an? (.+)\?$")
_OBJ_YES_NO = re.compile(r"^was there an? (.+)\?$")
_BEFORE_AFTER = re.compile(r"^did you (.+) before you (.+)\?$")
_ACT_EITHER = re.compile(r"^did you (.+?) or (.+)\?$")
_ACT_YES_NO = re.compile(r"^did you (.+)\?$")
_TEMPORAL = re.compile(r"^what did you do just (before|after) (.+)\?$")


@dataclass(frozen=True)
class ParsedPrompt:
    family: str
    options: tuple[str, ...] = ()
    anchor: str | None = None


def parse_prompt(prompt: str) -> ParsedPrompt:
    """Recover the question family (and options / anchor) from prompt text alone."""
    text = " ".join(prompt.lower().split())
    if text == PROMPTS["short_summary"]:
        return ParsedPrompt("short_summary")
    if text == PROMPTS["long_summary"]:
        return ParsedPrompt("long_summary")
    if m := _TEMPORAL.match(text):
        return ParsedPrompt(f"temporal_{m.group(1)}", anchor=m.group(2))
    if m := _OBJ_EITHER.match(text):
        return ParsedPrompt("object_either_or", (m.group(1), m.group(2)))
    if m := _OBJ_YES_NO.match(text):
        return ParsedPrompt("object_yes_no", (m.group(1),))
    if m := _BEFORE_AFTER.match(text):
        return ParsedPrompt("action_before_after", (m.group(1), m.group(2)))
    if m := _ACT_EITHER.match(text):
        return ParsedPrompt("action_either_or", (m.group(1), m.group(2)))
    if m := _ACT_YES_NO.match(text):
        return ParsedPrompt("action_yes_no", (m.group(1),))
    return ParsedPrompt("unknown")
