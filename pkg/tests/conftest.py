from __future__ import annotations

import pytest

from epiqa.episode import EpisodeTrace, PlanStep
from epiqa.language import Lexicon
from epiqa.questions import GenContext, GenPolicy, build_static_dataset
from epiqa.simulator import SimConfig, WorldCatalog, generate_corpus


@pytest.fixture(scope="session")
def lexicon() -> Lexicon:
    return Lexicon.load()


@pytest.fixture(scope="session")
def catalog() -> WorldCatalog:
    return WorldCatalog.load()


@pytest.fixture(scope="session")
def small_corpus(catalog, lexicon):
    """200 / 30 / 30 episodes, seed 7."""
    by_split, stats = generate_corpus(catalog, SimConfig(200, 30, 30, 7), lexicon=lexicon)
    return by_split, stats


@pytest.fixture(scope="session")
def small_ctx(small_corpus, lexicon) -> GenContext:
    by_split, stats = small_corpus
    return GenContext.build(by_split["train"], lexicon, GenPolicy(seed=1), stats)


@pytest.fixture(scope="session")
def corpus_1000(catalog, lexicon):
    """The 1,000 / 100 / 100 corpus with master seed 42."""
    by_split, stats = generate_corpus(catalog, SimConfig(1000, 100, 100, 42), lexicon=lexicon)
    return by_split, stats


@pytest.fixture(scope="session")
def qa_1000(corpus_1000, lexicon):
    """Static QA over every split of ``corpus_1000``; negatives come from train statistics."""
    by_split, stats = corpus_1000
    ctx = GenContext.build(by_split["train"], lexicon, GenPolicy(seed=42), stats)
    episodes = [ep for split in ("train", "valid_seen", "valid_unseen") for ep in by_split[split]]
    items, manifest = build_static_dataset(episodes, ctx)
    return ctx, episodes, items, manifest


def make_episode(
    episode_id: str,
    plan: list[tuple[str, ...]],
    *,
    extra_visible: tuple[str, ...] = (),
    descriptions: list[str] | None = None,
    split: str = "train",
    layout: str = "kitchen_test",
    short_summary: str = "do a thing",
) -> EpisodeTrace:
    """Hand-built episode: each step sees its own args plus ``extra_visible``."""
    steps = tuple(PlanStep(s[0], tuple(s[1:])) for s in plan)
    visible = tuple(frozenset(step.args) | frozenset(extra_visible) for step in steps)
    return EpisodeTrace(
        episode_id=episode_id,
        layout_id=layout,
        split=split,
        plan=steps,
        step_descriptions=tuple(descriptions or [f"step {i}" for i in range(len(steps))]),
        visible_objects=visible,
        interacted_objects=frozenset(a for s in steps if s.verb != "GotoLocation" for a in s.args),
        short_summary=short_summary,
    )


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
