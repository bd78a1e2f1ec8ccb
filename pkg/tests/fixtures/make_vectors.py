"""Generates the frozen 200-pair answer-scoring vector suite.

Expected values come from the independent oracle in tests/oracles.py; the
metric tests then hold fsmqa.metrics to these numbers bit-for-bit.

Run from the repo root:  python3 tests/fixtures/make_vectors.py
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from oracles import (  # noqa: E402
    oracle_exact_match_score,
    oracle_f1_score,
    oracle_normalize_answer,
)

WORDS = [
    "the", "a", "an", "mask", "of", "fu", "manchu", "blind", "shaft", "film",
    "river", "bridge", "1932", "2003", "museum", "college", "norway", "yes",
    "no", "director", "born", "first", "city", "Mara", "Quin", "fiddle",
    "lake", "deep", "magazine", "quarterly", "review", "1984", "Skarda",
]

HAND_PICKED = [
    ("The Mask of Fu Manchu", "Mask of Fu Manchu"),
    ("1932.", "1932"),
    ("Blind Shaft 2003", "Blind Shaft"),
    ("2003", "1932"),
    ("", "1932"),
    ("yes", "yes"),
    ("Yes", "no"),
    ("no", "Yes!"),
    ("noanswer", "the noanswer"),
    ("An apple a day", "apple day"),
    ("  spaced   out  answer ", "spaced out answer"),
    ("Fu-Manchu's mask", "fu manchus mask"),
    ("L'hotel de ville", "hotel de ville"),
    ("42", "42.0"),
    ("'quoted'", "quoted"),
    ("Tromso, Norway", "Tromso"),
    ("the the the mask", "mask mask"),
    ("HELENA MARSH", "helena marsh"),
    ("answer: 1984", "1984"),
]

# Gold answers in these benchmarks never normalize to the empty string, and
# the package applies a documented both-empty convention the script lacks;
# such degenerate pairs are excluded here and covered by a dedicated test.


def usable(pred: str, gold: str) -> bool:
    return bool(oracle_normalize_answer(gold))


def random_pair(rng: random.Random) -> tuple[str, str]:
    n_pred = rng.randint(0, 8)
    n_gold = rng.randint(1, 6)
    pred = " ".join(rng.choice(WORDS) for _ in range(n_pred))
    gold = " ".join(rng.choice(WORDS) for _ in range(n_gold))
    if rng.random() < 0.3:
        pred = pred + rng.choice([".", "!", ",", "?", ";"])
    if rng.random() < 0.2:
        pred = pred.upper()
    if rng.random() < 0.25 and pred.strip():
        gold = pred  # force exact-ish matches into the mix
    return pred, gold


def main() -> None:
    rng = random.Random(20240117)
    pairs = [p for p in HAND_PICKED if usable(*p)]
    while len(pairs) < 200:
        pair = random_pair(rng)
        if usable(*pair):
            pairs.append(pair)
    vectors = []
    for pred, gold in pairs:
        em = oracle_exact_match_score(pred, gold)
        f1, precision, recall = oracle_f1_score(pred, gold)
        vectors.append(
            {
                "pred": pred,
                "gold": gold,
                "em": em,
                "f1": f1,
                "precision": precision,
                "recall": recall,
            }
        )
    out = HERE / "em_f1_vectors.json"
    out.write_text(json.dumps(vectors, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(vectors)} vectors to {out}")


if __name__ == "__main__":
    main()
