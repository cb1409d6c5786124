"""Regenerate src/vqt/data/toy_corpus.txt from a small seeded English grammar."""

import argparse
from pathlib import Path

import numpy as np

NAMES = ["anna", "ben", "clara", "david", "ella", "frank", "grace", "henry"]
ANIMALS = ["cat", "dog", "bird", "horse", "fox", "rabbit"]
THINGS = ["book", "letter", "apple", "lamp", "box", "ball", "cup", "key"]
PLACES = ["garden", "kitchen", "market", "river", "forest", "school", "house"]
ADJ = ["old", "small", "red", "quiet", "happy", "green", "cold", "bright"]
TRANS = ["found", "took", "saw", "opened", "carried", "liked", "wanted"]
INTRANS = ["slept", "ran", "waited", "sang", "smiled", "walked"]
ANIMAL_VERBS = ["ran", "slept", "jumped", "hid", "played"]
TIMES = ["in the morning", "at night", "after dinner", "every day", "on sunday"]


def _sentence(rng) -> str:
    pick = lambda xs: xs[rng.integers(len(xs))]  # noqa: E731
    form = rng.integers(6)
    if form == 0:
        return f"{pick(NAMES)} {pick(TRANS)} the {pick(ADJ)} {pick(THINGS)} in the {pick(PLACES)} ."
    if form == 1:
        return f"the {pick(ANIMALS)} {pick(ANIMAL_VERBS)} near the {pick(PLACES)} {pick(TIMES)} ."
    if form == 2:
        return f"{pick(NAMES)} and {pick(NAMES)} {pick(INTRANS)} {pick(TIMES)} ."
    if form == 3:
        return f"where is the {pick(THINGS)} ? it is in the {pick(PLACES)} ."
    if form == 4:
        return f"the {pick(THINGS)} was {pick(ADJ)} , so {pick(NAMES)} {pick(INTRANS)} ."
    return f"{pick(NAMES)} gave the {pick(ANIMALS)} a {pick(ADJ)} {pick(THINGS)} ."


def generate(n_bytes: int, seed: int) -> str:
    rng = np.random.default_rng(seed)
    lines, size, line = [], 0, []
    while size < n_bytes:
        line.append(_sentence(rng))
        if len(line) == 4:
            text = " ".join(line)
            lines.append(text)
            size += len(text) + 1
            line = []
    return "\n".join(lines) + "\n"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bytes", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", type=Path, default=Path(__file__).parents[1] / "src/vqt/data/toy_corpus.txt")
    args = ap.parse_args(argv)
    args.out.write_text(generate(args.bytes, args.seed), encoding="utf-8")


if __name__ == "__main__":
    main()
