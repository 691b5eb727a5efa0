"""Renaming invariance holds at any weights, trained or not.

A formula's proposition letters ride in per-symbol streams; renaming the
letters reorders the streams without changing a single arithmetic step.
This script takes a freshly initialized model (random weights, zero
training) and shows that renamed inputs decode to renamed outputs with
logits equal to machine precision.
"""
import numpy as np

from streamformer.logic import task_vocabulary
from streamformer.model import ModelConfig, Seq2SeqModel, check_invariance
from streamformer.streams import AlphaRenaming

vocab = task_vocabulary("prop", 5)
cfg = ModelConfig(d_model=32, heads=2, ffn_dim=64, enc_layers=1,
                  dec_layers=1)
model = Seq2SeqModel(cfg, vocab, seed=3)

text = "&a|b!c"
src = vocab.encode(text)
used = sorted({t for t in src if vocab.is_inter(t)})
print(f"source: {text}   (untrained model, seed 3)")

rng = np.random.default_rng(7)
for trial in range(3):
    f = AlphaRenaming.random(vocab, rng)
    shown = " ".join(f"{vocab.surface(i)}->{vocab.surface(f[i])}"
                     for i in used)
    # untrained weights decode noise; the claim is both runs emit the
    # SAME noise, so keep the transcript short
    rep = check_invariance(model, src, f, max_len=6)
    print(f"\nrenaming {shown}")
    print(f"  renamed input : {vocab.decode(f(src))}")
    print(f"  decode        : {vocab.decode(rep.decoded)!r}")
    print(f"  un-renamed    : {vocab.decode(rep.round_trip)!r}"
          f"   match: {rep.decode_match}")
    print(f"  max logit gap : {rep.max_logit_discrepancy:.2e}"
          f"   certified: {rep.passed}")
