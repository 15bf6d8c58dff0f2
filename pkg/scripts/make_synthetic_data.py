#!/usr/bin/env python3
"""Write the synthetic bi-modal benchmark to disk in the store/word-vector
file formats, so the CLI pipeline can be exercised end to end:

    python scripts/make_synthetic_data.py --out /tmp/zsk
    zsketch train --store /tmp/zsk/store/manifest.csv \
        --semantics /tmp/zsk/words.txt --unseen class06,class07 \
        --out /tmp/zsk/model.ckpt
    zsketch eval --store /tmp/zsk/store/manifest.csv \
        --model /tmp/zsk/model.ckpt --direction sketch2image --k 100
"""

import argparse
from pathlib import Path

from zsketch.feature_store import save_store
from zsketch.synthetic import make_synthetic_dataset, write_word_vector_file


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", required=True)
    parser.add_argument("--classes", type=int, default=8)
    parser.add_argument("--unseen", type=int, default=2)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--per-class", type=int, default=50)
    parser.add_argument("--seed", type=int, default=20260811)
    args = parser.parse_args()

    out = Path(args.out)
    store, semantics, unseen = make_synthetic_dataset(
        n_classes=args.classes, n_unseen=args.unseen, d_in=args.dim,
        n_per_class_per_modality=args.per_class, seed=args.seed,
    )
    manifest = save_store(store, out / "store")
    write_word_vector_file(semantics, out / "words.txt")
    print(f"store:     {manifest}")
    print(f"semantics: {out / 'words.txt'}")
    print(f"unseen:    {','.join(unseen)}")


if __name__ == "__main__":
    main()
