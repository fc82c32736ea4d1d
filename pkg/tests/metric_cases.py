"""Hand-computed metric fixtures.

Values are written as the arithmetic they came from, worked out on paper
from the metric definitions before the implementation existed.
"""

from __future__ import annotations

import math

# (predictions, references, expected corpus BLEU)
BLEU_CASES = [
    # p1 = 4/4, p2 = 2/3, p3 = 1/2, p4 = 0/1 -> any zero order zeroes the score
    (["go to the desk"], ["go to the blue desk"], 0.0),
    # pooled with an exact pair: p1 = 8/8, p2 = (2+3)/(3+3), p3 = (1+2)/(2+2), p4 = (0+1)/(1+1);
    # c = 8, r = 9 -> BP = exp(1 - 9/8)
    (["go to the desk", "pick up the pen"], ["go to the blue desk", "pick up the pen"],
     math.exp(1 - 9 / 8) * (1 * (5 / 6) * (3 / 4) * (1 / 2)) ** 0.25),
    # one-word answers: only unigrams exist, p1 = 1/2, c = r = 2
    (["yes", "no"], ["yes", "yes"], 0.5),
    # p1 = 2/2, p2 = 1/1, no 3- or 4-grams predicted; c = 2, r = 3 -> BP = exp(1 - 3/2)
    (["red mug"], ["the red mug"], math.exp(-0.5)),
    (["pick up the pen", "go to the desk"], ["pick up the pen", "go to the desk"], 1.0),
    (["apple"], ["pick up the pen"], 0.0),
    # normalization: case and final period do not matter
    (["Go to the desk."], ["go to the desk"], 1.0),
]

# (prediction, reference, expected ROUGE-L F1)
ROUGE_CASES = [
    ("go to the desk", "go to the blue desk", 8 / 9),  # LCS 4, P 4/4, R 4/5
    ("pick the up pen", "pick up the pen", 0.75),  # LCS 3, P = R = 3/4
    ("pen", "pick up the pen", 2 * 1 * 0.25 / 1.25),  # LCS 1, P 1, R 1/4
    ("", "pick up the pen", 0.0),
    ("Pick up the pen.", "pick up the pen", 1.0),
    ("apple", "pick up the pen", 0.0),
]

# (prediction, reference, expected clipped unigram precision)
PRECISION_CASES = [
    ("the the mug", "the mug", 2 / 3),
    ("pick up the pen", "pick up the pen", 1.0),
    ("apple", "pick up the pen", 0.0),
    ("pick up the pen pen", "pick up the pen", 4 / 5),
    ("", "pick up the pen", 0.0),
    ("the mug the", "the the the mug", 1.0),
]

# Overlap fixtures: (items, predictions, long-summary predictions, object words, expected per qtype).
# items are (qa_id, episode_id, qtype, answer).
OVERLAP_CASES = [
    # E = {(e1, pen), (e2, mug)}; e1's summary lacks "pen", e2's contains "mug" -> 1/2
    (
        [("q1", "e1", "object_either_or", "pen"), ("q2", "e2", "object_either_or", "mug")],
        {"q1": "mug", "q2": "pen"},
        {"e1": "go to the desk, pick up the mug.", "e2": "pick up the mug."},
        {"pen", "mug", "desk"},
        {"object_either_or": 0.5},
    ),
    # perfect predictions -> E empty -> null
    (
        [("q1", "e1", "object_either_or", "pen")],
        {"q1": "pen"},
        {"e1": "pick up the pen."},
        {"pen"},
        {"object_either_or": None},
    ),
    # every missed word also missing from the summary -> 1
    (
        [("q1", "e1", "temporal_after_simple", "put the pen on the desk"),
         ("q2", "e1", "temporal_before_simple", "go to the desk")],
        {"q1": "go to the shelf", "q2": "go to the shelf"},
        {"e1": "go to the shelf."},
        {"pen", "desk", "shelf"},
        {"temporal_after_simple": 1.0, "temporal_before_simple": 1.0},
    ),
    # the same (episode, word) missed twice counts once: E = {(e1, pen)}, summary has "pen" -> 0
    (
        [("q1", "e1", "object_either_or", "pen"), ("q2", "e1", "object_either_or", "pen")],
        {"q1": "mug", "q2": ""},
        {"e1": "pick up the pen."},
        {"pen", "mug"},
        {"object_either_or": 0.0},
    ),
    # multi-word names count word by word: gold "coffee machine", prediction "coffee" -> E = {(e1, machine)};
    # summary "go to the machine shop" -> mentions "machine" -> 0; e2 misses "sink" and "basin",
    # summary has neither -> 2 of 3 errors overlap
    (
        [("q1", "e1", "object_either_or", "coffee machine"), ("q2", "e2", "object_either_or", "sink basin")],
        {"q1": "coffee", "q2": "knife"},
        {"e1": "go to the machine shop.", "e2": "pick up the knife."},
        {"coffee", "machine", "sink", "basin", "knife"},
        {"object_either_or": 2 / 3},
    ),
]
