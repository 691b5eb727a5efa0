"""Accuracy heatmaps, top-n accuracy, and stream-count timing.

A quick look at the three reporting surfaces.  The model here is trained
for under a minute, so the heatmap numbers are what a warm start looks
like, not a result; the point is the shape of the reports.
"""
from streamformer.evaluation import (GridSpec, heatmap, time_scaling,
                                     topn_accuracy)
from streamformer.logic import gen_prop, task_vocabulary
from streamformer.model import ModelConfig, Seq2SeqModel
from streamformer.training import TrainConfig, fit

vocab = task_vocabulary("prop", 6)
model = Seq2SeqModel(ModelConfig(d_model=32, heads=2, ffn_dim=64,
                                 enc_layers=1, dec_layers=1), vocab, seed=2)
train = [(vocab.encode(s), vocab.encode(t))
         for s, t in gen_prop(7, 4, (3, 9), 400).pairs]
fit(model, train, TrainConfig(steps=250, batch_size=8, learning_rate=2e-3,
                              warmup=50, seed=0, log_every=10 ** 6))

# difficulty grid: fresh samples per cell at each exact formula size
grid = heatmap(model, GridSpec("prop", ap_counts=(2, 4, 6),
                               lengths=(4, 7), per_cell=15, seed=0))
print(grid.to_csv())

# how much an oracle reranker could buy, from the same beam
small = gen_prop(8, 3, (3, 7), 40)
for n in (1, 3):
    acc = topn_accuracy(model, small, n, max_len=12)
    print(f"top-{n} semantic accuracy: {acc:.1%}")

# forward cost against number of live streams, fixed sequence length
t = time_scaling(model, (1, 2, 4, 6), samples_per_point=15, length=20)
for s, ms in t.rows:
    print(f"  {s} streams: {ms:6.2f} ms")
print(f"linear fit: {t.slope:.2f} ms/stream, R^2 {t.r_squared:.3f}")
