"""Frozen reference scores for the toy corpus from the public COCO caption scorer.

Run with pycocoevalcap importable. Sentences in toy_corpus.json are already
lowercase and punctuation-free, so the PTB tokenizer step is the identity and
the scorers are fed the raw strings.
"""

import json
import pathlib
import sys

from pycocoevalcap.bleu.bleu import Bleu
from pycocoevalcap.cider.cider import Cider
from pycocoevalcap.rouge.rouge import Rouge


def main() -> None:
    corpus = json.loads((pathlib.Path(__file__).parent / "toy_corpus.json").read_text())
    res = {i: [c] for i, c in enumerate(corpus["candidates"])}
    gts = {i: refs for i, refs in enumerate(corpus["references"])}
    bleu, _ = Bleu(4).compute_score(gts, res, verbose=0)
    rouge, _ = Rouge().compute_score(gts, res)
    cider, _ = Cider().compute_score(gts, res)
    json.dump({"BLEU4": bleu[3], "BLEU1": bleu[0], "ROUGE_L": rouge, "CIDEr": cider}, sys.stdout, indent=1)
    print()


if __name__ == "__main__":
    main()
