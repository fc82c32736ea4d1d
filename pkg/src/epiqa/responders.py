"""Responders: anything that maps a QA prompt (plus episode reference) to answer text.

Built-ins are ``oracle``, ``prior``, ``constant_no`` and ``uniform``. External
models run as child processes speaking newline-delimited JSON: one request
``{"id", "episode_id", "prompt", "frame_refs"}`` per line on stdin, one
response ``{"id", "answer"}`` per line on stdout, in order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import queue
import shlex
import subprocess
import threading
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .episode import CorpusStats, EpisodeTrace, PlanStep
from .language import Lexicon, normalize_answer, render_step
from .questions import QAItem, parse_prompt
from .rng import make_rng

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 30.0
YES_NO_FAMILIES = ("object_yes_no", "action_yes_no", "action_before_after")


class ResponderProtocolError(RuntimeError):
    """The child broke the wire protocol or died; ``last_line`` is the last exchange seen."""

    def __init__(self, message: str, last_line: str | None = None):
        super().__init__(f"{message} (last line: {last_line!r})" if last_line is not None else message)
        self.last_line = last_line


class Responder:
    name = "responder"

    def answer(self, item: QAItem) -> str:
        raise NotImplementedError

    def run(self, items: Sequence[QAItem], episodes: Mapping[str, EpisodeTrace] | None = None) -> dict[str, str]:
        return {item.qa_id: self.answer(item) for item in items}


class OracleResponder(Responder):
    name = "oracle"

    def answer(self, item: QAItem) -> str:
        return item.answer


class ConstantResponder(Responder):
    def __init__(self, text: str = "no"):
        self.text = text
        self.name = "constant_no" if text == "no" else f"constant:{text}"

    def answer(self, item: QAItem) -> str:
        return self.text


def _argmax(counter: Mapping[str, int], default: str = "") -> str:
    """Most common key; ties go to the alphabetically first key."""
    if not counter:
        return default
    return min(counter, key=lambda k: (-counter[k], k))


@dataclass
class PriorTables:
    """Prompt-level regularities learned from training data only."""

    yes_no: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    summaries: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    temporal_prompts: dict[str, Counter] = field(default_factory=lambda: defaultdict(Counter))
    temporal_answers: Counter = field(default_factory=Counter)
    successors: dict[str, dict[str, Counter]] = field(
        default_factory=lambda: {"after": defaultdict(Counter), "before": defaultdict(Counter)})
    phrase_freq: Counter = field(default_factory=Counter)

    @classmethod
    def build(cls, train_qa: Sequence[QAItem] = (), stats: CorpusStats | None = None,
              lexicon: Lexicon | None = None) -> "PriorTables":
        t = cls()
        for item in train_qa:
            parsed = parse_prompt(item.prompt)
            answer = normalize_answer(item.answer)
            if parsed.family in YES_NO_FAMILIES:
                t.yes_no[parsed.family][answer] += 1
            elif parsed.family in ("short_summary", "long_summary"):
                t.summaries[parsed.family][item.answer] += 1
            elif parsed.family.startswith("temporal_"):
                t.temporal_prompts[normalize_answer(item.prompt)][item.answer] += 1
                t.temporal_answers[item.answer] += 1
            elif parsed.family in ("object_either_or", "action_either_or"):
                t.phrase_freq[answer] += 1
        if stats is not None and lexicon is not None:
            t.phrase_freq = Counter()
            for obj, n in stats.object_visibility_freq.items():
                if obj in lexicon.object_names:
                    t.phrase_freq[lexicon.name(obj)] += n
            for (verb, args), n in stats.step_freq.items():
                t.phrase_freq[render_step(PlanStep(verb, args), lexicon)] += n
            for (a, b), n in stats.successor_freq.items():
                pa = render_step(PlanStep(*a), lexicon)
                pb = render_step(PlanStep(*b), lexicon)
                t.successors["after"][pa][pb] += n
                t.successors["before"][pb][pa] += n
        return t


class PriorResponder(Responder):
    """Answers from prompt text alone, using training-set regularities.

    Yes/no: the majority training answer for the question family (ties "no").
    Either/or: the option that is more frequent in the training corpus.
    Temporal: the most frequent neighbour of the anchor phrase, else the most
    frequent training answer. Summaries: the most frequent training summary.
    """

    name = "prior"

    def __init__(self, tables: PriorTables):
        self.tables = tables

    def answer(self, item: QAItem) -> str:
        t = self.tables
        parsed = parse_prompt(item.prompt)
        family = parsed.family
        if family in YES_NO_FAMILIES:
            counts = t.yes_no.get(family, Counter())
            return "yes" if counts["yes"] > counts["no"] else "no"
        if family in ("object_either_or", "action_either_or"):
            a, b = parsed.options
            return b if t.phrase_freq[b] > t.phrase_freq[a] else a
        if family.startswith("temporal_"):
            direction = family.split("_", 1)[1]
            table = t.successors[direction].get(parsed.anchor or "")
            if table:
                return _argmax(table)
            table = t.temporal_prompts.get(normalize_answer(item.prompt))
            if table:
                return _argmax(table)
            return _argmax(t.temporal_answers)
        if family in ("short_summary", "long_summary"):
            return _argmax(t.summaries.get(family, Counter()))
        return "no"


class UniformResponder(Responder):
    """Uniform guess among the plausible answers for the prompt, seeded per item."""

    name = "uniform"

    def __init__(self, tables: PriorTables, seed: int = 0):
        self.seed = seed
        self.temporal_pool = sorted(tables.temporal_answers) or sorted(
            {b for d in tables.successors.values() for row in d.values() for b in row})
        self.summary_pool = {f: sorted(c) for f, c in tables.summaries.items()}

    def answer(self, item: QAItem) -> str:
        rng = make_rng(self.seed, item.qa_id)
        parsed = parse_prompt(item.prompt)
        family = parsed.family
        if family in YES_NO_FAMILIES:
            return rng.choice(("yes", "no"))
        if family in ("object_either_or", "action_either_or"):
            return rng.choice(parsed.options)
        if family.startswith("temporal_"):
            return rng.choice(self.temporal_pool) if self.temporal_pool else ""
        pool = self.summary_pool.get(family)
        return rng.choice(pool) if pool else ""


# --- external child processes -----------------------------------------------------------

def _bucket(qa_id: str, n: int) -> int:
    return int.from_bytes(hashlib.blake2b(qa_id.encode(), digest_size=8).digest(), "big") % n


class _Child:
    def __init__(self, argv: Sequence[str], timeout: float):
        self.argv = list(argv)
        self.timeout = timeout
        self.last_line: str | None = None
        self._start()

    def _start(self) -> None:
        self.proc = subprocess.Popen(
            self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, encoding="utf-8", bufsize=1
        )
        self.lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._pump, args=(self.proc, self.lines), daemon=True).start()

    @staticmethod
    def _pump(proc: subprocess.Popen, lines: queue.Queue) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    def _restart(self) -> None:
        # a stuck child would stall every later request, so replace it
        self.proc.kill()
        self.proc.wait()
        self._start()

    def _read(self) -> dict[str, Any] | None:
        """Next response record, or None on timeout."""
        try:
            line = self.lines.get(timeout=self.timeout)
        except queue.Empty:
            return None
        if line is None:
            raise ResponderProtocolError(f"responder exited (code {self.proc.poll()})", self.last_line)
        self.last_line = line.rstrip("\n")
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            raise ResponderProtocolError("response is not JSON", self.last_line) from None
        if not isinstance(record, dict) or "id" not in record or not isinstance(record.get("answer"), str):
            raise ResponderProtocolError("response needs string 'id' and 'answer'", self.last_line)
        return record

    def ask(self, requests: Sequence[dict[str, Any]]) -> dict[str, str]:
        answers: dict[str, str] = {}
        for req in requests:
            line = json.dumps(req, ensure_ascii=False)
            self.last_line = line
            assert self.proc.stdin is not None
            try:
                self.proc.stdin.write(line + "\n")
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError):
                raise ResponderProtocolError("responder closed its input", self.last_line) from None
            record = self._read()
            if record is None:
                log.warning("responder timed out on %s after %.1fs; restarting it", req["id"], self.timeout)
                answers[req["id"]] = ""
                self._restart()
                continue
            if record["id"] != req["id"]:
                raise ResponderProtocolError(f"expected response for {req['id']!r}, got {record['id']!r}",
                                             self.last_line)
            answers[req["id"]] = record["answer"]
        return answers

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except (subprocess.TimeoutExpired, OSError):
            self.proc.kill()
            self.proc.wait()


class SubprocessResponder(Responder):
    """Drives ``n_children`` copies of an external command, items partitioned by qa_id hash."""

    def __init__(self, argv: Sequence[str] | str, timeout: float = DEFAULT_TIMEOUT, n_children: int = 1):
        self.argv = shlex.split(argv) if isinstance(argv, str) else list(argv)
        if not self.argv:
            raise ValueError("empty responder command")
        self.timeout = timeout
        self.n_children = max(1, n_children)
        self.name = "cmd:" + shlex.join(self.argv)

    def run(self, items: Sequence[QAItem], episodes: Mapping[str, EpisodeTrace] | None = None) -> dict[str, str]:
        episodes = episodes or {}
        buckets: list[list[dict[str, Any]]] = [[] for _ in range(self.n_children)]
        for item in items:
            ep = episodes.get(item.episode_id) if item.episode_id else None
            buckets[_bucket(item.qa_id, self.n_children)].append({
                "id": item.qa_id,
                "episode_id": item.episode_id,
                "prompt": item.prompt,
                "frame_refs": list(ep.frame_refs) if ep else [],
            })

        def drive(requests: list[dict[str, Any]]) -> dict[str, str]:
            if not requests:
                return {}
            child = _Child(self.argv, self.timeout)
            try:
                return child.ask(requests)
            finally:
                child.close()

        answers: dict[str, str] = {}
        with ThreadPoolExecutor(max_workers=self.n_children) as pool:
            for part in pool.map(drive, buckets):
                answers.update(part)
        return {item.qa_id: answers[item.qa_id] for item in items}


def make_responder(
    spec: str,
    *,
    tables: PriorTables | None = None,
    seed: int = 0,
    timeout: float = DEFAULT_TIMEOUT,
    n_children: int = 1,
) -> Responder:
    """Build a responder from its CLI name (``oracle``, ``prior``, ``constant-no``, ``uniform``, ``cmd:<argv>``)."""
    if spec.startswith("cmd:"):
        return SubprocessResponder(spec[4:], timeout=timeout, n_children=n_children)
    key = spec.replace("-", "_")
    if key == "oracle":
        return OracleResponder()
    if key == "constant_no":
        return ConstantResponder("no")
    if key in ("prior", "uniform", "uniform_random"):
        if tables is None:
            raise ValueError(f"responder {spec!r} needs training data")
        return PriorResponder(tables) if key == "prior" else UniformResponder(tables, seed)
    raise ValueError(f"unknown responder {spec!r}")
