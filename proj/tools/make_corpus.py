#!/usr/bin/env python3
# Copyright 2026 The specdraft Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Generates the desk corpus and the held-out prompt set.

The text is English-like prose from a seeded phrase grammar: a village
chronicle with recurring characters, places, weather, trade and a small
set of proverbs that repeat verbatim. Output is pure ASCII.
"""

import argparse
import json
import pathlib
import random

NAMES = [
    "Anna", "Tomas", "Wren", "Elias", "Marta", "Oskar", "Ida", "Felix", "Rosa", "Hugo",
    "Clara", "Jonas", "Lena", "Pavel", "Greta", "Anton", "Nora", "Emil", "Sofia", "Karl",
]
PLACES = [
    "the mill", "the harbor", "the old bridge", "the market square", "the chapel", "the orchard",
    "the smithy", "the north road", "the river bend", "the schoolhouse", "the bakery", "the lighthouse",
]
TRADES = ["baker", "miller", "fisher", "smith", "weaver", "carpenter", "teacher", "farmer", "sailor", "potter"]
GOODS = ["bread", "flour", "salt", "rope", "wool", "apples", "nails", "candles", "cheese", "timber", "honey", "fish"]
WEATHER = [
    "the wind came down from the hills", "a thin rain fell over the roofs", "the sun stood low and red",
    "fog rolled in from the sea", "the frost lay white on the fields", "the air was warm and still",
    "clouds gathered over the harbor", "snow drifted against the doors",
]
TIMES = ["In the morning", "At noon", "Late in the evening", "Before dawn", "On the first day of the month",
         "After the harvest", "During the long winter", "On market day", "When the bells rang"]
ADJS = ["quiet", "busy", "cold", "bright", "narrow", "crowded", "empty", "old", "small", "wide", "dark", "green"]
FEELINGS = ["glad", "tired", "worried", "calm", "proud", "restless", "curious", "patient"]
VERBS_PAST = ["carried", "sold", "bought", "mended", "counted", "loaded", "stored", "gathered", "traded", "weighed"]
MOTIONS = ["walked to", "hurried to", "returned to", "waited at", "rested near", "looked toward", "sailed past"]
NUMBERS = ["two", "three", "four", "five", "six", "seven", "eight", "ten", "twelve", "twenty"]
PROVERBS = [
    "A full barn makes a quiet winter.",
    "The river keeps no count of the days.",
    "Mend the net before the fish arrive.",
    "Bread shared is bread that lasts.",
    "An early lamp saves a late regret.",
    "The hill is steep for the one who hurries.",
]
SAYINGS = ["said", "asked", "answered", "whispered", "called out", "replied"]


def sentence(rng, state):
    name = rng.choice(NAMES)
    other = rng.choice([n for n in NAMES if n != name])
    kind = rng.random()
    if kind < 0.14:
        return f"{rng.choice(TIMES)}, {rng.choice(WEATHER)}."
    if kind < 0.30:
        return (f"{name} the {state['trade'][name]} {rng.choice(VERBS_PAST)} {rng.choice(NUMBERS)} "
                f"sacks of {rng.choice(GOODS)} at {rng.choice(PLACES)}.")
    if kind < 0.44:
        return f"{name} {rng.choice(MOTIONS)} {rng.choice(PLACES)} and felt {rng.choice(FEELINGS)}."
    if kind < 0.56:
        good = rng.choice(GOODS)
        return (f"\"Have you seen the {good}?\" {name} {rng.choice(SAYINGS)}. "
                f"\"It is at {rng.choice(PLACES)},\" {other} {rng.choice(SAYINGS)}.")
    if kind < 0.66:
        return f"{rng.choice(PLACES).capitalize()} was {rng.choice(ADJS)} and {rng.choice(ADJS)} that day."
    if kind < 0.74:
        proverb = rng.choice(PROVERBS)
        return f"As the old people say, {proverb[0].lower()}{proverb[1:]}"
    if kind < 0.84:
        return (f"{name} gave {other} {rng.choice(NUMBERS)} {rng.choice(GOODS)} in exchange for "
                f"{rng.choice(NUMBERS)} {rng.choice(GOODS)}.")
    if kind < 0.92:
        return f"{name} and {other} {rng.choice(MOTIONS)} {rng.choice(PLACES)} together."
    return rng.choice(PROVERBS)


def paragraph(rng, state):
    return " ".join(sentence(rng, state) for _ in range(rng.randint(3, 7)))


def generate(rng, target_bytes, state):
    out, size, chapter = [], 0, 1
    while size < target_bytes:
        head = f"Chapter {chapter}\n\n"
        out.append(head)
        size += len(head)
        for _ in range(rng.randint(6, 12)):
            p = paragraph(rng, state) + "\n\n"
            out.append(p)
            size += len(p)
        chapter += 1
    return "".join(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--bytes", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--prompts", type=int, default=20)
    ap.add_argument("--prompt-len", type=int, default=64)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    state = {"trade": {n: rng.choice(TRADES) for n in NAMES}}
    corpus = generate(rng, args.bytes, state)
    heldout = generate(random.Random(args.seed + 1), 40_000, state)

    out = pathlib.Path(args.out_dir)
    (out / "corpus").mkdir(parents=True, exist_ok=True)
    (out / "corpus" / "desk_corpus.txt").write_text(corpus, encoding="ascii")

    prng = random.Random(args.seed + 2)
    starts = [i + 1 for i, c in enumerate(heldout[:-args.prompt_len - 1]) if c == " " and heldout[i - 1] == "."]
    picks = sorted(prng.sample(starts, args.prompts))
    prompts = [heldout[s:s + args.prompt_len] for s in picks]
    (out / "prompts.json").write_text(json.dumps({"prompts": prompts}, indent=2) + "\n", encoding="ascii")


if __name__ == "__main__":
    main()
