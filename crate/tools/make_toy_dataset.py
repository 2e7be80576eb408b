"""Writes the bundled toy dataset: features.jsonl, corpus.jsonl, splits.json.

Captions are hand-parsed; triplets use 0-based indices into the raw token
list (trailing period included). Output is byte-identical for a given seed.
"""

import argparse
import json
import random
from pathlib import Path

# (image_id, split, caption, [(rel, gov, dep), ...])
CAPTIONS = [
    ("t01", "train", "A black cat sleeps .", [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2)]),
    ("t02", "train", "Two boys play soccer .", [("nummod", 1, 0), ("nsubj", 2, 1), ("dobj", 2, 3)]),
    ("t03", "train", "The old man reads quietly .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("advmod", 3, 4)]),
    ("t04", "train", "A girl smiles happily .", [("det", 1, 0), ("nsubj", 2, 1), ("advmod", 2, 3)]),
    ("t05", "train", "Children swim in the blue lake .",
     [("nsubj", 1, 0), ("case", 5, 2), ("det", 5, 3), ("amod", 5, 4), ("nmod:in", 1, 5)]),
    ("t06", "train", "A small bird sings .", [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2)]),
    ("t07", "train", "A brown dog chases the red ball .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("det", 6, 4), ("amod", 6, 5), ("dobj", 3, 6)]),
    ("t08", "train", "The woman rides a white horse .",
     [("det", 1, 0), ("nsubj", 2, 1), ("det", 5, 3), ("amod", 5, 4), ("dobj", 2, 5)]),
    ("t09", "train", "Three people walk along the sandy beach .",
     [("nummod", 1, 0), ("nsubj", 2, 1), ("case", 6, 3), ("det", 6, 4), ("amod", 6, 5),
      ("nmod:along", 2, 6)]),
    ("t10", "train", "A young boy climbs the tall tree .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("det", 6, 4), ("amod", 6, 5), ("dobj", 3, 6)]),
    ("v01", "val", "A brown dog runs on the grass .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("case", 6, 4), ("det", 6, 5), ("nmod:on", 3, 6)]),
    ("v02", "val", "The old man sleeps .", [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2)]),
    ("s01", "test", "A black cat runs .", [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2)]),
    ("s02", "test", "Two boys swim in the blue lake .",
     [("nummod", 1, 0), ("nsubj", 2, 1), ("case", 6, 3), ("det", 6, 4), ("amod", 6, 5),
      ("nmod:in", 2, 6)]),
    ("s03", "test", "A small bird sits on the tall tree .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("case", 7, 4), ("det", 7, 5), ("amod", 7, 6),
      ("nmod:on", 3, 7)]),
    ("s04", "test", "The woman reads quietly .",
     [("det", 1, 0), ("nsubj", 2, 1), ("advmod", 2, 3)]),
    ("s05", "test", "A girl plays soccer .", [("det", 1, 0), ("nsubj", 2, 1), ("dobj", 2, 3)]),
    ("s06", "test", "A white horse runs on the sandy beach .",
     [("det", 2, 0), ("amod", 2, 1), ("nsubj", 3, 2), ("case", 7, 4), ("det", 7, 5), ("amod", 7, 6),
      ("nmod:on", 3, 7)]),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "toy")
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    splits = {"train": [], "val": [], "test": []}
    with open(args.out / "corpus.jsonl", "w") as corpus, open(args.out / "features.jsonl", "w") as feats:
        for image_id, split, caption, triplets in CAPTIONS:
            tokens = caption.split()
            for _, gov, dep in triplets:
                assert 0 <= gov < len(tokens) and 0 <= dep < len(tokens), (image_id, gov, dep)
            splits[split].append(image_id)
            text = caption.replace(" .", ".")
            rec = {
                "image_id": image_id,
                "caption": text,
                "tokens": tokens,
                "triplets": [{"rel": r, "gov": g, "dep": d} for r, g, d in triplets],
            }
            corpus.write(json.dumps(rec) + "\n")
            feat = [round(rng.gauss(0.0, 1.0), 6) for _ in range(args.dim)]
            feats.write(json.dumps({"image_id": image_id, "feat": feat}) + "\n")
    with open(args.out / "splits.json", "w") as f:
        json.dump(splits, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
