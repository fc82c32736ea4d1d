"""Seeded synthetic episode corpora and ingestion of external traces.

The simulator stands in for rerunning trajectories in a 3-D household
environment: it instantiates task skeletons (fetch-and-place, heat, cool,
clean, slice, examine-under-light) with objects from a layout, records which
objects are visible at each plan step and writes human-style step
descriptions drawn from a paraphrase bank.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import jsonio
from .episode import (
    EpisodeFormatError,
    EpisodeTrace,
    PlanStep,
    Split,
    compute_stats,
    interacted_from_plan,
    validate_episode,
    write_episodes,
)
from .language import Lexicon, PlanParseError, parse_plan, with_article
from .rng import index_seed, make_rng, weighted_choice

log = logging.getLogger(__name__)


class CatalogError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class CatalogObject:
    symbol: str
    weight: float
    is_receptacle: bool = False
    preposition: str | None = None
    tags: frozenset[str] = frozenset()


@dataclass(frozen=True)
class TaskTemplate:
    name: str
    weight: float
    slots: Mapping[str, tuple[str, ...]]  # slot -> required tags
    plan: tuple[tuple[str, ...], ...]  # (verb, slot, [slot])
    summaries: tuple[str, ...]


@dataclass(frozen=True)
class ParaphraseBank:
    verbs: Mapping[str, tuple[str, ...]]
    adjectives: tuple[str, ...] = ()
    locatives: tuple[str, ...] = ()
    clauses: tuple[str, ...] = ()
    adjective_rate: float = 0.3
    locative_rate: float = 0.2
    clause_rate: float = 0.25


@dataclass(frozen=True)
class WorldCatalog:
    objects: Mapping[str, CatalogObject]
    layouts: Mapping[str, tuple[str, ...]]
    task_templates: tuple[TaskTemplate, ...]
    paraphrase_bank: ParaphraseBank
    distractor_slots: int = 4

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "WorldCatalog":
        objects = {
            o["symbol"]: CatalogObject(
                o["symbol"], float(o["weight"]), bool(o.get("is_receptacle", False)),
                o.get("preposition"), frozenset(o.get("tags", ())),
            )
            for o in data["objects"]
        }
        layouts = {l["layout_id"]: tuple(l["objects"]) for l in data["layouts"]}
        templates = tuple(
            TaskTemplate(
                t["name"], float(t.get("weight", 1.0)),
                {slot: tuple(tags) for slot, tags in t["slots"].items()},
                tuple(tuple(step) for step in t["plan"]),
                tuple(t["summaries"]),
            )
            for t in data["task_templates"]
        )
        bank = data["paraphrase_bank"]
        rates = bank.get("rates", {})
        paraphrase = ParaphraseBank(
            {v: tuple(p) for v, p in bank["verbs"].items()},
            tuple(bank.get("adjectives", ())),
            tuple(bank.get("locatives", ())),
            tuple(bank.get("clauses", ())),
            rates.get("adjective", 0.3), rates.get("locative", 0.2), rates.get("clause", 0.25),
        )
        catalog = cls(objects, layouts, templates, paraphrase, int(data.get("distractor_slots", 4)))
        problems = catalog.problems()
        if problems:
            raise CatalogError("; ".join(problems))
        return catalog

    @classmethod
    def load(cls, path: str | Path | None = None) -> "WorldCatalog":
        if path is None:
            text = resources.files("epiqa.data").joinpath("catalog.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def problems(self) -> list[str]:
        out = []
        for obj in self.objects.values():
            if not obj.weight > 0:
                out.append(f"object {obj.symbol} has non-positive weight")
        for layout_id, members in self.layouts.items():
            unknown = [m for m in members if m not in self.objects]
            if unknown:
                out.append(f"layout {layout_id} references unknown objects {unknown}")
                continue
            if len(members) < 5:
                out.append(f"layout {layout_id} has fewer than 5 objects")
            if not any(self.objects[m].is_receptacle for m in members):
                out.append(f"layout {layout_id} has no receptacle")
            for template in self.task_templates:
                if not self.instantiable(template, layout_id):
                    out.append(f"uninstantiable layout: {layout_id} cannot host {template.name}")
        for template in self.task_templates:
            for verb, *slots in template.plan:
                if verb not in self.paraphrase_bank.verbs:
                    out.append(f"paraphrase bank has no entry for {verb}")
                missing = [s for s in slots if s not in template.slots]
                if missing:
                    out.append(f"template {template.name} uses undeclared slots {missing}")
        return out

    def candidates(self, layout_id: str, tags: Sequence[str]) -> list[str]:
        return [m for m in self.layouts[layout_id] if set(tags) <= self.objects[m].tags]

    def instantiable(self, template: TaskTemplate, layout_id: str) -> bool:
        """Backtracking check that every slot can get a distinct object."""
        slots = list(template.slots.items())

        def search(i: int, used: frozenset[str]) -> bool:
            if i == len(slots):
                return True
            return any(
                search(i + 1, used | {c})
                for c in self.candidates(layout_id, slots[i][1]) if c not in used
            )

        return search(0, frozenset())


@dataclass(frozen=True)
class SimConfig:
    n_train: int
    n_valid_seen: int
    n_valid_unseen: int
    master_seed: int
    unseen_layout_fraction: float = 0.25
    distractor_visibility_rate: float = 0.35

    def __post_init__(self) -> None:
        if min(self.n_train, self.n_valid_seen, self.n_valid_unseen) < 0:
            raise ValueError("episode counts must be >= 0")
        if not 0 < self.unseen_layout_fraction < 1:
            raise ValueError("unseen_layout_fraction must lie in (0, 1)")
        if not 0 <= self.distractor_visibility_rate <= 1:
            raise ValueError("distractor_visibility_rate must lie in [0, 1]")


def _pluralize(noun: str) -> str:
    if noun.endswith("fe"):
        return noun[:-2] + "ves"
    if noun.endswith(("s", "sh", "ch", "x")):
        return noun + "es"
    if noun.endswith("y") and noun[-2:-1] not in "aeiou":
        return noun[:-1] + "ies"
    return noun + "s"


def _bind_slots(catalog: WorldCatalog, template: TaskTemplate, layout_id: str, rng) -> dict[str, str]:
    for _ in range(100):
        binding: dict[str, str] = {}
        for slot, tags in template.slots.items():
            options = [c for c in catalog.candidates(layout_id, tags) if c not in binding.values()]
            if not options:
                break
            binding[slot] = weighted_choice(rng, options, [catalog.objects[c].weight for c in options])
        else:
            return binding
    raise CatalogError(f"uninstantiable layout: {layout_id} cannot host {template.name}")


def _describe(step: PlanStep, catalog: WorldCatalog, lex: Lexicon, rng) -> str:
    bank = catalog.paraphrase_bank
    template = rng.choice(bank.verbs[step.verb])
    names = [lex.name(a) for a in step.args]
    if bank.adjectives and rng.random() < bank.adjective_rate:
        names[0] = f"{rng.choice(bank.adjectives)} {names[0]}"
    prep = lex.receptacle_prepositions.get(step.args[-1], "on")
    text = template.format(*names, prep=prep)
    if bank.locatives and rng.random() < bank.locative_rate:
        text = f"{text} {rng.choice(bank.locatives)}"
    if bank.clauses and rng.random() < bank.clause_rate:
        text = f"{text} {rng.choice(bank.clauses)}"
    return text


def _short_summary(template: TaskTemplate, binding: Mapping[str, str], lex: Lexicon, rng) -> str:
    fields: dict[str, str] = {}
    for slot, symbol in binding.items():
        name = lex.name(symbol)
        fields[slot] = name
        fields[f"a_{slot}"] = with_article(name)
        fields[f"{slot}_plural"] = _pluralize(name)
        fields[f"prep_{slot}"] = lex.receptacle_prepositions.get(symbol, "on")
    return rng.choice(template.summaries).format(**fields)


def sample_episode(
    catalog: WorldCatalog,
    layout: str,
    seed: int,
    *,
    lexicon: Lexicon | None = None,
    distractor_rate: float = 0.35,
    episode_id: str | None = None,
    split: str = Split.TRAIN.value,
) -> EpisodeTrace:
    """Sample one episode; a pure function of its arguments."""
    if layout not in catalog.layouts:
        raise KeyError(f"unknown layout {layout!r}")
    for template in catalog.task_templates:
        if not catalog.instantiable(template, layout):
            raise CatalogError(f"uninstantiable layout: {layout} cannot host {template.name}")
    lex = lexicon or Lexicon.load()
    rng = make_rng(seed, "episode")
    template = weighted_choice(rng, catalog.task_templates, [t.weight for t in catalog.task_templates])
    binding = _bind_slots(catalog, template, layout, rng)
    plan = tuple(PlanStep(verb, tuple(binding[s] for s in slots)) for verb, *slots in template.plan)

    members = catalog.layouts[layout]
    visible: list[frozenset[str]] = []
    carrying: set[str] = set()
    for step in plan:
        seen = set(step.args) | carrying
        others = [m for m in members if m not in step.args]
        weights = [catalog.objects[m].weight for m in others]
        for _ in range(catalog.distractor_slots):
            if others and rng.random() < distractor_rate:
                seen.add(weighted_choice(rng, others, weights))
        visible.append(frozenset(seen))
        if step.verb == "PickupObject":
            carrying.add(step.args[0])
        elif step.verb == "PutObject":
            carrying.discard(step.args[0])

    descriptions = tuple(_describe(step, catalog, lex, rng) for step in plan)
    ep_id = episode_id or f"ep-{seed:016x}"
    return EpisodeTrace(
        episode_id=ep_id,
        layout_id=layout,
        split=split,
        plan=plan,
        step_descriptions=descriptions,
        visible_objects=tuple(visible),
        interacted_objects=interacted_from_plan(plan),
        short_summary=_short_summary(template, binding, lex, rng),
        frame_refs=tuple(f"{layout}/{seed:016x}/{i:03d}" for i in range(len(plan))),
    )


def reserve_layouts(layout_ids: Sequence[str], config: SimConfig) -> tuple[list[str], list[str]]:
    """Split layouts into (seen, unseen) deterministically from the master seed."""
    ordered = sorted(layout_ids)
    make_rng(config.master_seed, "layouts").shuffle(ordered)
    k = round(config.unseen_layout_fraction * len(ordered))
    if config.n_valid_unseen > 0:
        k = max(k, 1)
    k = min(k, len(ordered) - 1)
    return sorted(ordered[k:]), sorted(ordered[:k])


_WORKER: dict[str, Any] = {}


def _init_worker(catalog: WorldCatalog, lexicon: Lexicon, rate: float) -> None:
    _WORKER.update(catalog=catalog, lexicon=lexicon, rate=rate)


def _sample_task(task: tuple[str, str, str, int]) -> EpisodeTrace:
    episode_id, split, layout, seed = task
    return sample_episode(
        _WORKER["catalog"], layout, seed, lexicon=_WORKER["lexicon"],
        distractor_rate=_WORKER["rate"], episode_id=episode_id, split=split,
    )


def plan_corpus(catalog: WorldCatalog, config: SimConfig) -> list[tuple[str, str, str, int]]:
    """(episode_id, split, layout, seed) for every episode of the corpus."""
    seen, unseen = reserve_layouts(list(catalog.layouts), config)
    tasks = []
    index = 0
    for split, count, pool in (
        (Split.TRAIN.value, config.n_train, seen),
        (Split.VALID_SEEN.value, config.n_valid_seen, seen),
        (Split.VALID_UNSEEN.value, config.n_valid_unseen, unseen),
    ):
        for j in range(count):
            seed = index_seed(config.master_seed, index)
            layout = make_rng(seed, "layout").choice(pool)
            tasks.append((f"{split}_{j:06d}", split, layout, seed))
            index += 1
    return tasks


def generate_corpus(
    catalog: WorldCatalog,
    config: SimConfig,
    out_dir: str | Path | None = None,
    *,
    lexicon: Lexicon | None = None,
    workers: int = 1,
):
    """Simulate all splits; optionally write ``<split>.jsonl`` and ``stats.json``.

    Returns ``(episodes_by_split, train_stats)``. Output does not depend on
    ``workers``: every episode's seed derives from the master seed and its
    global index, and results are collected in index order.
    """
    lex = lexicon or Lexicon.load()
    tasks = plan_corpus(catalog, config)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(catalog, lex, config.distractor_visibility_rate),
        ) as pool:
            episodes = list(pool.map(_sample_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        _init_worker(catalog, lex, config.distractor_visibility_rate)
        episodes = [_sample_task(t) for t in tasks]

    by_split: dict[str, list[EpisodeTrace]] = {s.value: [] for s in Split}
    for ep in episodes:
        by_split[ep.split].append(ep)
    basis = by_split[Split.TRAIN.value] or episodes
    stats = compute_stats(basis) if basis else None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for split, eps in by_split.items():
            write_episodes(out / f"{split}.jsonl", eps)
        if stats is not None:
            jsonio.write_json(out / "stats.json", "stats", stats.to_dict())
    return by_split, stats


# --- ingestion -----------------------------------------------------------

REQUIRED_FIELDS = (
    "episode_id", "layout_id", "split", "plan", "step_descriptions", "visible_objects", "short_summary",
)
OPTIONAL_FIELDS = ("interacted_objects", "frame_refs")
IDENTITY_MAP = {f: f for f in REQUIRED_FIELDS + OPTIONAL_FIELDS}


@dataclass
class IngestResult:
    written: int = 0
    diagnostics: list[tuple[int, str]] = field(default_factory=list)


_MISSING = object()


def _lookup(record: Mapping[str, Any], path: str) -> Any:
    value: Any = record
    for part in path.split("."):
        if not isinstance(value, Mapping) or part not in value:
            return _MISSING
        value = value[part]
    return value


def _coerce_plan(value: Any) -> list[dict[str, Any]]:
    if isinstance(value, str):
        return [s.to_dict() for s in parse_plan(value)]
    steps = []
    for item in value:
        if isinstance(item, Mapping):
            steps.append({"verb": item["verb"], "args": list(item["args"])})
        else:
            steps.append({"verb": item[0], "args": list(item[1:])})
    return steps


def ingest_external(path: str | Path, schema_map: Mapping[str, str], out_path: str | Path) -> IngestResult:
    """Map external JSONL traces onto the native schema and keep the valid ones.

    ``schema_map`` maps native field names to (dotted) source field paths.
    Invalid episodes are skipped with a line-numbered diagnostic; malformed
    JSON aborts with :class:`jsonio.FormatError`.
    """
    unmapped = [f for f in REQUIRED_FIELDS if f not in schema_map]
    if unmapped:
        raise SchemaError(f"schema map lacks required fields: {', '.join(unmapped)}")
    result = IngestResult()
    kept: list[EpisodeTrace] = []
    for line_no, record in jsonio.iter_jsonl(path):
        native: dict[str, Any] = {}
        missing = []
        for name, source in schema_map.items():
            value = _lookup(record, source)
            if value is _MISSING:
                if name in REQUIRED_FIELDS:
                    missing.append(name)
                continue
            native[name] = value
        if missing:
            result.diagnostics.append((line_no, f"missing field(s): {', '.join(missing)}"))
            continue
        try:
            native["plan"] = _coerce_plan(native["plan"])
            episode = EpisodeTrace.from_dict(native)
        except PlanParseError as exc:
            result.diagnostics.append((line_no, f"plan: {exc}"))
            continue
        except (EpisodeFormatError, KeyError, TypeError, IndexError) as exc:
            result.diagnostics.append((line_no, f"malformed episode: {exc}"))
            continue
        violations = validate_episode(episode)
        if violations:
            result.diagnostics.append((line_no, "; ".join(str(v) for v in violations)))
            continue
        kept.append(episode)
    ids = [e.episode_id for e in kept]
    if len(set(ids)) != len(ids):
        log.warning("duplicate episode ids in %s", path)
    result.written = write_episodes(out_path, kept)
    return result

