"""Plan text parsing and plain-English rendering of plan steps.

Rendered phrases are the "simple language" of the toolkit: lowercase
imperatives with the article "the", e.g. ``put the pen on the desk``.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .episode import VERB_ARITY, PlanStep


class LexiconError(KeyError):
    """A symbol has no English entry in the lexicon."""

    def __init__(self, symbol: str, table: str = "objects"):
        super().__init__(symbol)
        self.symbol = symbol
        self.table = table

    def __str__(self) -> str:
        return f"unlexicalized symbol: {self.symbol!r} (no entry in {self.table})"


@dataclass(frozen=True)
class Lexicon:
    verb_phrases: Mapping[str, str]
    object_names: Mapping[str, str]
    receptacle_prepositions: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, str]]) -> "Lexicon":
        return cls(dict(data["verbs"]), dict(data["objects"]), dict(data.get("prepositions", {})))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Lexicon":
        """Load a lexicon file, or the packaged default when ``path`` is None."""
        if path is None:
            text = resources.files("epiqa.data").joinpath("lexicon.json").read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict[str, dict[str, str]]:
        return {
            "verbs": dict(self.verb_phrases),
            "objects": dict(self.object_names),
            "prepositions": dict(self.receptacle_prepositions),
        }

    def name(self, symbol: str) -> str:
        try:
            return self.object_names[symbol]
        except KeyError:
            raise LexiconError(symbol) from None

    def symbol_for(self, name: str) -> str | None:
        return self._reverse().get(name)

    def _reverse(self) -> dict[str, str]:
        rev = self.__dict__.get("_rev")
        if rev is None:
            rev = {v: k for k, v in self.object_names.items()}
            object.__setattr__(self, "_rev", rev)
        return rev

    def object_words(self) -> frozenset[str]:
        """Every word of every object name (multi-word names count word-by-word)."""
        return frozenset(w for name in self.object_names.values() for w in name.split())


class PlanParseError(ValueError):
    """Malformed plan text. ``reason`` is one of syntax / unknown verb / arity."""

    def __init__(self, line: int, column: int, reason: str, detail: str):
        super().__init__(f"line {line}, column {column}: {reason}: {detail}")
        self.line = line
        self.column = column
        self.reason = reason


_TOKEN = re.compile(r"[^\s()]+")


def _parse_line(text: str, line_no: int) -> PlanStep:
    pos = len(text) - len(text.lstrip())
    if pos >= len(text) or text[pos] != "(":
        raise PlanParseError(line_no, pos + 1, "syntax", "expected '('")
    pos += 1
    tokens: list[tuple[int, str]] = []
    while True:
        while pos < len(text) and text[pos] in " \t":
            pos += 1
        if pos >= len(text):
            raise PlanParseError(line_no, pos + 1, "syntax", "expected ')' before end of line")
        if text[pos] == ")":
            close = pos
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise PlanParseError(line_no, pos + 1, "syntax", f"unexpected {text[pos]!r}")
        tokens.append((pos + 1, m.group()))
        pos = m.end()
    if text[close + 1:].strip():
        raise PlanParseError(line_no, close + 2, "syntax", "trailing text after ')'")
    if not tokens:
        raise PlanParseError(line_no, close + 1, "syntax", "empty step")
    (verb_col, verb), args = tokens[0], tokens[1:]
    for col, tok in tokens:
        if not all(c in string.printable for c in tok):
            raise PlanParseError(line_no, col, "syntax", "non-ASCII token")
    if verb not in VERB_ARITY:
        raise PlanParseError(line_no, verb_col, "unknown verb", verb)
    if len(args) != VERB_ARITY[verb]:
        raise PlanParseError(
            line_no, verb_col, "arity", f"{verb} takes {VERB_ARITY[verb]} argument(s), got {len(args)}"
        )
    return PlanStep(verb, tuple(a for _, a in args))


def parse_plan(text: str) -> list[PlanStep]:
    """Parse newline-separated ``(<Verb> <arg> [<arg>])`` steps; blank lines are skipped."""
    steps = []
    for line_no, line in enumerate(text.splitlines(), 1):
        if line.strip():
            steps.append(_parse_line(line, line_no))
    return steps


def serialize_plan(plan: Iterable[PlanStep]) -> str:
    return "\n".join(step.to_text() for step in plan)


def render_step(step: PlanStep, lex: Lexicon) -> str:
    """English imperative for one step, e.g. ``go to the coffee machine``."""
    try:
        template = lex.verb_phrases[step.verb]
    except KeyError:
        raise LexiconError(step.verb, "verbs") from None
    names = [lex.name(a) for a in step.args]
    prep = ""
    if "{prep}" in template:
        dest = step.args[-1]
        try:
            prep = lex.receptacle_prepositions[dest]
        except KeyError:
            raise LexiconError(dest, "prepositions") from None
    return template.format(*names, prep=prep)


def render_long_summary(plan: Sequence[PlanStep], lex: Lexicon) -> str:
    if not plan:
        raise ValueError("empty plan")
    return ", ".join(render_step(s, lex) for s in plan) + "."


_TRAILING = re.compile(r"[\s.?]+$")


def normalize_answer(text: str) -> str:
    """Canonical form for exact-match scoring.

    Lowercases, collapses whitespace and drops trailing ``.``/``?``. The whole
    trailing run is dropped (not only one character) so the function is
    idempotent.
    """
    text = " ".join(text.lower().split())
    return _TRAILING.sub("", text)


def with_article(noun_phrase: str) -> str:
    """``a pen`` / ``an apple`` by the initial letter of the phrase."""
    article = "an" if noun_phrase[:1] in "aeiou" else "a"
    return f"{article} {noun_phrase}"


def mentions(text_tokens: Sequence[str], phrase: str) -> bool:
    """True if ``phrase`` occurs in ``text_tokens`` as a contiguous token run."""
    needle = phrase.split()
    k = len(needle)
    if not k:
        return False
    return any(list(text_tokens[i:i + k]) == needle for i in range(len(text_tokens) - k + 1))


def summary_tokens(summary: str) -> list[str]:
    """Tokens of a rendered summary with commas and final period removed."""
    return normalize_answer(summary).replace(",", " ").split()
