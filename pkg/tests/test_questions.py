from __future__ import annotations

import random
from collections import Counter

import pytest
from scipy.stats import chisquare

from epiqa.episode import CorpusStats, PlanStep
from epiqa.language import normalize_answer, render_long_summary, render_step
from epiqa.questions import (
    OOD_SET_SIZE,
    PROMPTS,
    QUESTION_TYPES,
    ContaminationError,
    GenContext,
    GenPolicy,
    QType,
    balanced_counts,
    build_static_dataset,
    episode_items,
    epoch_stream,
    gen_action_questions,
    gen_object_questions,
    gen_ood_sets,
    gen_summary_prompts,
    gen_temporal_questions,
    load_ood_bank,
    parse_prompt,
    read_qa,
    sample_negative_objects,
    temporal_anchors,
    write_qa,
)

from conftest import make_episode

PEN_PLAN = [("GotoLocation", "sidetable"), ("PickupObject", "pen", "sidetable"), ("GotoLocation", "desk")]


def _ctx(episodes, lexicon, **policy):
    return GenContext.build(episodes, lexicon, GenPolicy(**policy))


@pytest.fixture
def pen_world(lexicon):
    """A tiny corpus: the pen episode plus episodes supplying other objects and actions."""
    pen = make_episode("pen", PEN_PLAN, extra_visible=("mug",),
                       descriptions=["walk to the side table", "grab the yellow pen off the side table",
                                     "head to the desk"])
    other = make_episode("apple", [("GotoLocation", "countertop"), ("PickupObject", "knife", "countertop"),
                                   ("SliceObject", "apple", "knife")], extra_visible=("plate",),
                         descriptions=["go over to the counter", "take the knife", "cut the apple into slices"])
    return pen, other, _ctx([pen, other], lexicon, seed=3)


def test_object_yes_no_example(pen_world):
    pen, _, ctx = pen_world
    items = gen_object_questions("yes_no", pen, ctx)
    pairs = {(i.prompt, i.answer) for i in items}
    assert ("was there a mug?", "yes") in pairs
    assert all(i.answer in ("yes", "no") for i in items)
    yes = [i for i in items if i.answer == "yes"]
    no = [i for i in items if i.answer == "no"]
    assert len(yes) == len(no) > 0
    for i in no:
        assert i.meta["object"] not in pen.seen_objects


def test_object_either_or_example(lexicon):
    seen = make_episode("s", [("GotoLocation", "desk")], extra_visible=("mug",))
    plate = make_episode("p", [("GotoLocation", "plate")])
    ctx = _ctx([seen, plate], lexicon)
    items = gen_object_questions("either_or", seen, ctx)
    assert len(items) == 1
    assert items[0].prompt in {"was there a mug or a plate?", "was there a plate or a mug?",
                               "was there a desk or a plate?", "was there a plate or a desk?"}
    assert items[0].answer in {"mug", "desk"}


def test_no_unseen_objects_means_positive_only(lexicon):
    ep = make_episode("s", [("GotoLocation", "desk")], extra_visible=("mug",))
    ctx = _ctx([ep], lexicon)
    assert {i.answer for i in gen_object_questions("yes_no", ep, ctx)} == {"yes"}
    assert gen_object_questions("either_or", ep, ctx) == []


def test_action_examples(pen_world):
    pen, _, ctx = pen_world
    simple = {(i.prompt, i.answer) for i in gen_action_questions("simple_yes_no", pen, ctx)}
    assert ("did you pick up the pen?", "yes") in simple
    complex_ = {(i.prompt, i.answer) for i in gen_action_questions("complex_yes_no", pen, ctx)}
    assert ("did you grab the yellow pen off the side table?", "yes") in complex_
    for prompt, answer in complex_:
        if answer == "no":
            assert prompt.removeprefix("did you ").removesuffix("?") in {
                "go over to the counter", "take the knife", "cut the apple into slices"}


def test_action_either_or_example(lexicon):
    pen = make_episode("pen", [("PickupObject", "pen", "sidetable")])
    apple = make_episode("apple", [("SliceObject", "apple", "knife")])
    ctx = _ctx([pen, apple], lexicon)
    (item,) = gen_action_questions("either_or", pen, ctx)
    assert item.prompt in {"did you pick up the pen or slice the apple with the knife?",
                           "did you slice the apple with the knife or pick up the pen?"}
    assert item.answer == "pick up the pen"


def test_negative_actions_use_verb_and_first_argument(lexicon):
    # the pen was picked up from the side table; a pickup of the pen elsewhere is still "performed"
    here = make_episode("here", [("PickupObject", "pen", "sidetable")])
    there = make_episode("there", [("PickupObject", "pen", "desk"), ("GotoLocation", "shelf")])
    ctx = _ctx([here, there], lexicon, per_type_cap=10)
    no = [i for i in gen_action_questions("simple_yes_no", here, ctx) if i.answer == "no"]
    assert [i.prompt for i in no] == ["did you go to the shelf?"]


def test_temporal_examples(lexicon):
    ep = make_episode("t", PEN_PLAN)
    ctx = _ctx([ep], lexicon)
    before = {(i.prompt, i.answer) for i in gen_temporal_questions("before", "simple", ep, ctx)}
    assert ("what did you do just before go to the desk?", "pick up the pen") in before
    after = {(i.prompt, i.answer) for i in gen_temporal_questions("after", "simple", ep, ctx)}
    assert ("what did you do just after pick up the pen?", "go to the desk") in after
    assert len(before) == 2 and len(after) == 2


def test_repeated_step_is_never_an_anchor(lexicon):
    plan = [("GotoLocation", "desk"), ("PickupObject", "pen", "desk"), ("GotoLocation", "shelf"),
            ("GotoLocation", "desk")]
    ep = make_episode("r", plan)
    ctx = _ctx([ep], lexicon)
    assert temporal_anchors(ep, "before") == [1, 2]
    assert temporal_anchors(ep, "after") == [1, 2]
    for direction in ("before", "after"):
        for language in ("simple", "complex"):
            for item in gen_temporal_questions(direction, language, ep, ctx):
                assert ep.plan[item.meta["anchor_index"]].key != ("GotoLocation", ("desk",))


def test_summary_prompts(lexicon, small_corpus):
    eps = small_corpus[0]["train"][:20]
    for ep in eps:
        short, long_ = gen_summary_prompts(ep, lexicon)
        assert (short.prompt, short.answer) == (PROMPTS["short_summary"], ep.short_summary)
        assert (long_.prompt, long_.answer) == (PROMPTS["long_summary"], render_long_summary(ep.plan, lexicon))
    ep = make_episode("s", [("GotoLocation", "desk")], short_summary="put a pen on the desk")
    assert gen_summary_prompts(ep, lexicon)[0].answer == "put a pen on the desk"


def test_static_counts_follow_availability(lexicon, small_ctx):
    # 4 steps -> 3 eligible "before" anchors
    plan = [("GotoLocation", "desk"), ("PickupObject", "pen", "desk"), ("GotoLocation", "shelf"),
            ("PutObject", "pen", "shelf")]
    ep = make_episode("few", plan, extra_visible=("mug", "apple", "plate", "bowl", "laptop", "book", "cup"))
    counts = Counter(i.qtype for i in episode_items(ep, small_ctx))
    assert counts["temporal_before_simple"] == 3
    items = [i for i in episode_items(ep, small_ctx) if i.qtype == "object_yes_no"]
    assert len(items) == 10
    assert Counter(i.answer for i in items) == {"yes": 5, "no": 5}


def test_static_dataset_is_deterministic(tmp_path, small_corpus, small_ctx):
    eps = small_corpus[0]["valid_seen"]
    a, manifest_a = build_static_dataset(eps, small_ctx)
    b, manifest_b = build_static_dataset(eps, small_ctx, workers=4)
    write_qa(tmp_path / "a.jsonl", a)
    write_qa(tmp_path / "b.jsonl", b)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert manifest_a == manifest_b
    assert read_qa(tmp_path / "a.jsonl") == a


def test_static_invariants(small_corpus, small_ctx):
    eps = small_corpus[0]["train"]
    items, manifest = build_static_dataset(eps, small_ctx)
    per = Counter((i.episode_id, i.qtype) for i in items)
    assert max(per.values()) <= 10
    assert len({i.qa_id for i in items}) == len(items)
    prompts = Counter((i.episode_id, i.prompt) for i in items)
    assert max(prompts.values()) == 1
    for i in items:
        assert i.prompt
        if i.qtype in {t.value for t in QUESTION_TYPES}:
            assert normalize_answer(i.answer) == i.answer
        if i.qtype.endswith("yes_no"):
            assert i.answer in ("yes", "no")
    for qtype, answers in manifest["yes_no_answers"]["train"].items():
        n_eps = len(eps)
        assert abs(answers.get("yes", 0) - answers.get("no", 0)) <= n_eps


def test_parse_prompt_recovers_family(small_corpus, small_ctx):
    items, _ = build_static_dataset(small_corpus[0]["valid_seen"], small_ctx)
    expected = {
        "object_yes_no": "object_yes_no", "object_either_or": "object_either_or",
        "action_simple_yes_no": "action_yes_no", "action_complex_yes_no": "action_yes_no",
        "action_either_or": "action_either_or", "temporal_before_simple": "temporal_before",
        "temporal_before_complex": "temporal_before", "temporal_after_simple": "temporal_after",
        "temporal_after_complex": "temporal_after", "short_summary": "short_summary",
        "long_summary": "long_summary",
    }
    for item in items:
        parsed = parse_prompt(item.prompt)
        assert parsed.family == expected[item.qtype], item.prompt
        if "either_or" in item.qtype:
            assert item.answer in parsed.options


def test_before_after_flag(small_corpus, lexicon):
    eps = small_corpus[0]["train"]
    ctx = GenContext.build(eps, lexicon, GenPolicy(seed=1, enable_before_after=True))
    items, _ = build_static_dataset(eps[:30], ctx)
    extra = [i for i in items if i.qtype == "action_before_after"]
    assert extra
    assert Counter(i.answer for i in extra)["yes"] == Counter(i.answer for i in extra)["no"]
    for i in extra:
        assert (i.meta["first_index"] < i.meta["second_index"]) == (i.answer == "yes")


def test_balanced_counts():
    rng = random.Random(0)
    assert balanced_counts(10, 20, 20, rng) == (5, 5)
    assert balanced_counts(10, 3, 20, rng) == (3, 3)
    assert balanced_counts(10, 8, 0, rng) == (5, 0)
    for _ in range(50):
        y, n = balanced_counts(7, 20, 20, rng)
        assert {y, n} == {3, 4}


def test_negative_object_draws_follow_visibility(lexicon):
    """apple is visible in 10x more episodes than safe: no-draws split about 10:1."""
    ep = make_episode("e", [("GotoLocation", "desk")])
    stats = CorpusStats()
    stats.object_visibility_freq.update({"desk": 50, "apple": 100, "safe": 10})
    stats.n_episodes = 110
    ctx = GenContext(stats, lexicon, GenPolicy(), {}, dict(stats.object_visibility_freq), {})
    draws = Counter(sample_negative_objects(ep, ctx, random.Random(s), 1)[0] for s in range(11_000))
    observed = [draws["apple"], draws["safe"]]
    total = sum(observed)
    assert chisquare(observed, [total * 10 / 11, total / 11]).pvalue > 0.01


def test_epoch_stream_shapes(lexicon, small_corpus, small_ctx):
    eps = small_corpus[0]["train"][:40]
    batches = list(epoch_stream(eps, small_ctx, 5))
    assert sorted(e.episode_id for e, _ in batches) == sorted(e.episode_id for e in eps)
    assert sum(1 for _, items in batches for i in items if i.qtype == "long_summary") == len(eps)
    other = [e.episode_id for e, _ in epoch_stream(eps, small_ctx, 6)]
    assert other != [e.episode_id for e, _ in batches]
    for _, items in batches:
        counts = Counter(i.qtype for i in items)
        assert max(counts.values()) == 1
        assert counts["short_summary"] == counts["long_summary"] == 1


def test_epoch_stream_without_anchors(lexicon, small_ctx):
    # a single-step plan has no neighbour, so no temporal type exists
    lonely = make_episode("lonely", [("GotoLocation", "desk")], extra_visible=("mug",))
    ((_, items),) = list(epoch_stream([lonely], small_ctx, 1))
    kinds = Counter(i.qtype for i in items)
    assert sum(kinds[t.value] for t in QUESTION_TYPES) == 5
    assert kinds["short_summary"] + kinds["long_summary"] == 2
    # two distinct steps: one "after" and one "before" anchor each
    pair = make_episode("pair", [("GotoLocation", "desk"), ("PickupObject", "pen", "desk")])
    ((_, items),) = list(epoch_stream([pair], small_ctx, 1))
    assert sum(1 for i in items if i.qtype in {t.value for t in QUESTION_TYPES}) == 9


def test_ood_sets(lexicon):
    sets = gen_ood_sets(load_ood_bank(), lexicon)
    assert set(sets) == {"ordinary", "extraordinary"}
    for items in sets.values():
        assert len(items) == OOD_SET_SIZE
        assert {i.answer for i in items} == {"no"}
        assert all(i.episode_id is None for i in items)
    prompts = {i.prompt for items in sets.values() for i in items}
    assert "did you water the plants?" in prompts
    assert "did you learn German?" in prompts


def test_ood_contamination(lexicon):
    bank = load_ood_bank()
    bank["ordinary"][3] = "did you wash the coffee machine?"
    with pytest.raises(ContaminationError, match="coffee machine"):
        gen_ood_sets(bank, lexicon)
    with pytest.raises(ValueError):
        gen_ood_sets({"ordinary": ["did you dance?"], "extraordinary": bank["extraordinary"]}, lexicon)


def test_step_level_visibility_policy(small_corpus, lexicon):
    eps = small_corpus[0]["train"]
    ctx = GenContext.build(eps, lexicon, GenPolicy(visibility_unit="step"))
    steps = Counter()
    for ep in eps:
        for frame in ep.visible_objects:
            steps.update(frame)
    assert ctx.object_weights == dict(steps)


def test_render_of_temporal_answers(small_corpus, small_ctx, lexicon):
    for ep in small_corpus[0]["train"][:50]:
        for item in gen_temporal_questions("after", "complex", ep, small_ctx):
            j = item.meta["anchor_index"] + 1
            assert item.answer == render_step(PlanStep(*ep.plan[j].key), lexicon)
    assert QType("temporal_after_complex") in QUESTION_TYPES
