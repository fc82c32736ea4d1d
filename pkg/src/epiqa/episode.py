"""Episode traces, plan steps, validation and corpus statistics."""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from . import jsonio


def _load_verbs() -> dict[str, int]:
    raw = json.loads(resources.files("epiqa.data").joinpath("verbs.json").read_text("utf-8"))
    return {verb: int(spec["arity"]) for verb, spec in raw.items()}


#: verb -> arity; loaded from the packaged catalog so new verbs need no code
VERB_ARITY: dict[str, int] = _load_verbs()
GOTO = "GotoLocation"

SYMBOL_RE = re.compile(r"^[a-z][a-z0-9_]*$")


class Split(str, Enum):
    TRAIN = "train"
    VALID_SEEN = "valid_seen"
    VALID_UNSEEN = "valid_unseen"


@dataclass(frozen=True, slots=True)
class PlanStep:
    """One high-level action: a verb symbol applied to 1-2 object symbols."""

    verb: str
    args: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.verb, self.args)

    @property
    def action(self) -> tuple[str, str]:
        """Identity used for "was this action performed": verb + first argument."""
        return (self.verb, self.args[0])

    def to_text(self) -> str:
        return "(" + " ".join((self.verb, *self.args)) + ")"

    def to_dict(self) -> dict[str, Any]:
        return {"verb": self.verb, "args": list(self.args)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlanStep":
        return cls(str(data["verb"]), tuple(str(a) for a in data["args"]))


class EpisodeFormatError(ValueError):
    """An episode record is missing fields or has the wrong shape."""


@dataclass(frozen=True, slots=True)
class EpisodeTrace:
    episode_id: str
    layout_id: str
    split: str
    plan: tuple[PlanStep, ...]
    step_descriptions: tuple[str, ...]
    visible_objects: tuple[frozenset[str], ...]
    interacted_objects: frozenset[str]
    short_summary: str
    frame_refs: tuple[str, ...] = ()

    @property
    def seen_objects(self) -> frozenset[str]:
        return frozenset().union(*self.visible_objects)

    @property
    def performed_actions(self) -> frozenset[tuple[str, str]]:
        return frozenset(step.action for step in self.plan)

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "layout_id": self.layout_id,
            "split": self.split,
            "plan": [step.to_dict() for step in self.plan],
            "step_descriptions": list(self.step_descriptions),
            "visible_objects": [sorted(v) for v in self.visible_objects],
            "interacted_objects": sorted(self.interacted_objects),
            "short_summary": self.short_summary,
            "frame_refs": list(self.frame_refs),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EpisodeTrace":
        try:
            plan = tuple(PlanStep.from_dict(s) for s in data["plan"])
            interacted = data.get("interacted_objects")
            if interacted is None:
                interacted = interacted_from_plan(plan)
            return cls(
                episode_id=str(data["episode_id"]),
                layout_id=str(data["layout_id"]),
                split=str(data["split"]),
                plan=plan,
                step_descriptions=tuple(str(d) for d in data["step_descriptions"]),
                visible_objects=tuple(frozenset(str(o) for o in v) for v in data["visible_objects"]),
                interacted_objects=frozenset(str(o) for o in interacted),
                short_summary=str(data["short_summary"]),
                frame_refs=tuple(str(f) for f in (data.get("frame_refs") or ())),
            )
        except KeyError as exc:
            raise EpisodeFormatError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, AttributeError) as exc:
            raise EpisodeFormatError(f"malformed episode record: {exc}") from None


def interacted_from_plan(plan: Iterable[PlanStep]) -> frozenset[str]:
    return frozenset(a for step in plan if step.verb != GOTO for a in step.args)


@dataclass(frozen=True, slots=True)
class Violation:
    path: str
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.kind}: {self.message}"


def validate_episode(trace: EpisodeTrace) -> list[Violation]:
    """Return every broken invariant of ``trace``; an empty list means ok."""
    out: list[Violation] = []
    if not trace.episode_id:
        out.append(Violation("episode_id", "identity", "empty episode id"))
    if trace.split not in {s.value for s in Split}:
        out.append(Violation("split", "split", f"unknown split {trace.split!r}"))
    if not trace.plan:
        out.append(Violation("plan", "empty plan", "plan has no steps"))
    n = len(trace.plan)
    if len(trace.step_descriptions) != n or len(trace.visible_objects) != n:
        out.append(Violation(
            "step_descriptions",
            "alignment length",
            f"plan has {n} steps, {len(trace.step_descriptions)} descriptions, "
            f"{len(trace.visible_objects)} visibility sets",
        ))
    for i, step in enumerate(trace.plan):
        path = f"plan[{i}]"
        arity = VERB_ARITY.get(step.verb)
        if arity is None:
            out.append(Violation(path, "unknown verb", step.verb))
        elif len(step.args) != arity:
            out.append(Violation(path, "arity", f"{step.verb} takes {arity} args, got {len(step.args)}"))
        for arg in step.args:
            if not SYMBOL_RE.match(arg):
                out.append(Violation(path, "symbol format", f"{arg!r} is not a lowercase token"))
        if i < len(trace.visible_objects):
            missing = [a for a in step.args if a not in trace.visible_objects[i]]
            if missing:
                out.append(Violation(path, "argument visibility", f"{missing} not visible at step {i}"))
    for i, visible in enumerate(trace.visible_objects):
        bad = sorted(o for o in visible if not SYMBOL_RE.match(o))
        if bad:
            out.append(Violation(f"visible_objects[{i}]", "symbol format", f"{bad}"))
    unseen = sorted(trace.interacted_objects - trace.seen_objects)
    if unseen:
        out.append(Violation("interacted_objects", "interacted visibility", f"{unseen} never visible"))
    expected = interacted_from_plan(trace.plan)
    if trace.interacted_objects != expected:
        out.append(Violation(
            "interacted_objects",
            "interacted mismatch",
            f"expected arguments of non-Goto steps {sorted(expected)}",
        ))
    if not trace.short_summary.strip():
        out.append(Violation("short_summary", "empty summary", "short summary is blank"))
    return out


def validate_corpus(episodes: Sequence[EpisodeTrace]) -> list[tuple[str, Violation]]:
    """Per-episode violations plus corpus-level identity and layout checks."""
    out: list[tuple[str, Violation]] = []
    seen_ids: set[str] = set()
    for ep in episodes:
        for v in validate_episode(ep):
            out.append((ep.episode_id, v))
        if ep.episode_id in seen_ids:
            out.append((ep.episode_id, Violation("episode_id", "duplicate id", ep.episode_id)))
        seen_ids.add(ep.episode_id)
    train_layouts = {ep.layout_id for ep in episodes if ep.split == Split.TRAIN.value}
    for ep in episodes:
        if ep.split == Split.VALID_UNSEEN.value and ep.layout_id in train_layouts:
            out.append((ep.episode_id, Violation("layout_id", "unseen layout", f"{ep.layout_id} also used in train")))
    return out


StepKey = tuple[str, tuple[str, ...]]


def step_key_text(key: StepKey) -> str:
    return "(" + " ".join((key[0], *key[1])) + ")"


def step_key_from_text(text: str) -> StepKey:
    parts = text.strip("()").split()
    return (parts[0], tuple(parts[1:]))


@dataclass
class CorpusStats:
    """Exact corpus counts.

    ``object_visibility_freq``, ``object_summary_freq``, ``action_freq`` and
    ``step_freq`` count episodes; ``successor_freq`` counts adjacent step
    pairs (full steps, so the follower can be rendered).
    """

    object_visibility_freq: Counter = field(default_factory=Counter)
    object_summary_freq: Counter = field(default_factory=Counter)
    action_freq: Counter = field(default_factory=Counter)
    successor_freq: Counter = field(default_factory=Counter)
    step_freq: Counter = field(default_factory=Counter)
    n_episodes: int = 0

    def merge(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            self.object_visibility_freq + other.object_visibility_freq,
            self.object_summary_freq + other.object_summary_freq,
            self.action_freq + other.action_freq,
            self.successor_freq + other.successor_freq,
            self.step_freq + other.step_freq,
            self.n_episodes + other.n_episodes,
        )

    __add__ = merge

    def to_dict(self) -> dict[str, Any]:
        def sort(d: Mapping[str, int]) -> dict[str, int]:
            return dict(sorted(d.items()))

        return {
            "n_episodes": self.n_episodes,
            "object_visibility_freq": sort(self.object_visibility_freq),
            "object_summary_freq": sort(self.object_summary_freq),
            "action_freq": sort({f"{v} {o}": c for (v, o), c in self.action_freq.items()}),
            "step_freq": sort({step_key_text(k): c for k, c in self.step_freq.items()}),
            "successor_freq": sort({
                f"{step_key_text(a)} {step_key_text(b)}": c for (a, b), c in self.successor_freq.items()
            }),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CorpusStats":
        successors: Counter = Counter()
        for text, count in data["successor_freq"].items():
            left, right = text.split(") (", 1)
            successors[(step_key_from_text(left + ")"), step_key_from_text("(" + right))] = count
        return cls(
            Counter(data["object_visibility_freq"]),
            Counter(data["object_summary_freq"]),
            Counter({tuple(k.split(" ", 1)): c for k, c in data["action_freq"].items()}),
            successors,
            Counter({step_key_from_text(k): c for k, c in data["step_freq"].items()}),
            int(data["n_episodes"]),
        )


def episode_stats(ep: EpisodeTrace) -> CorpusStats:
    stats = CorpusStats(n_episodes=1)
    stats.object_visibility_freq.update(ep.seen_objects)
    stats.object_summary_freq.update({a for step in ep.plan for a in step.args})
    stats.action_freq.update({step.action for step in ep.plan})
    stats.step_freq.update({step.key for step in ep.plan})
    stats.successor_freq.update((a.key, b.key) for a, b in zip(ep.plan, ep.plan[1:]))
    return stats


def _stats_chunk(episodes: list[EpisodeTrace]) -> CorpusStats:
    out = CorpusStats()
    for ep in episodes:
        one = episode_stats(ep)
        out.object_visibility_freq.update(one.object_visibility_freq)
        out.object_summary_freq.update(one.object_summary_freq)
        out.action_freq.update(one.action_freq)
        out.successor_freq.update(one.successor_freq)
        out.step_freq.update(one.step_freq)
        out.n_episodes += 1
    return out


def compute_stats(corpus: Iterable[EpisodeTrace], workers: int = 1) -> CorpusStats:
    """Exact, order-independent counts over ``corpus``.

    With ``workers > 1`` the corpus is split into chunks counted in separate
    processes and merged; the result is identical to the sequential count.
    """
    episodes = list(corpus)
    if not episodes:
        raise ValueError("empty corpus")
    if workers <= 1 or len(episodes) < 2 * workers:
        return _stats_chunk(episodes)
    size = -(-len(episodes) // workers)
    chunks = [episodes[i:i + size] for i in range(0, len(episodes), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_stats_chunk, chunks))
    return reduce(CorpusStats.merge, parts)


def read_episodes(path: str | Path) -> Iterator[EpisodeTrace]:
    for line_no, record in jsonio.iter_jsonl(path):
        try:
            yield EpisodeTrace.from_dict(record)
        except EpisodeFormatError as exc:
            raise jsonio.FormatError(path, line_no, str(exc)) from None


def load_episodes(path: str | Path) -> list[EpisodeTrace]:
    return list(read_episodes(path))


def write_episodes(path: str | Path, episodes: Iterable[EpisodeTrace]) -> int:
    return jsonio.write_jsonl(path, "episodes", (ep.to_dict() for ep in episodes))
