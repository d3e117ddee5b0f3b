"""
Frame-level expression labels and pseudo-labels
===============================================

"""

# Eight-way per-frame classification with a small transformer encoder,
# trained directly on the soft macro-F1 loss.
import tempfile
from pathlib import Path

import numpy as np
from affectfusion.config import RunConfig
from affectfusion.data import SyntheticSpec, load_sequences, synthesize
from affectfusion.exprnet import pseudo_label
from affectfusion.training import expr_config, train
from affectfusion.fusion import load_checkpoint

work = Path(tempfile.mkdtemp())
synthesize(SyntheticSpec(task="expr", num_sequences=12, T=64, noise=0.1, seed=5,
                         view_dims={"visual": 32}), work / "data")
cfg = RunConfig(task="expr", model="expr", data_dir=str(work / "data"), out_dir=str(work / "run"),
                encoder_layers=2, num_heads=2, head_dim=16, ffn_dim=64, dropout=0.0,
                lr=2e-3, epochs=40)
run = train(cfg)
print("macro-F1 by epoch:", [round(h["val_f1"], 3) for h in run.history[::8]])

# Confident predictions become labels for frames nobody annotated.
params = load_checkpoint(run.final_checkpoint)
seq = load_sequences(work / "data", ["visual"], "expr")[0]
x = seq.views[0].features[None]
for tau in (0.5, 0.9, 0.99):
    _, kept, frac = pseudo_label(params, expr_config(cfg, 32), x, tau)
    print(f"tau={tau}: kept {frac:.0%} of frames")
