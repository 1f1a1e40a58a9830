"""
Distilling the mixed-geometry benchmark
=======================================

Ten points per class are learned from 2000 training points. A
nearest-class-mean classifier fit on that small set is then compared with
one fit on a random subset of the same size, and with one fit on all the
training points.
"""

import numpy as np

from geodistill.data import MixedSpec, gen_mixed, train_test_split
from geodistill.distill import DistillConfig, init_synthetic, run_distill
from geodistill.evaluation import eval_ncm

ds = gen_mixed(MixedSpec(noise=0.8), 3000, seed=0)
train, test = train_test_split(ds, 1000, seed=0)

cfg = DistillConfig(ipc=10, iters=300)
rep = run_distill(train, cfg, callback=lambda r: r["iter"] % 50 == 0 and print(
    f"iter {r['iter']:4d}  L_total {r['l_total']:.4f}  c_H {r['c_h']:+.3f}  c_S {r['c_s']:+.3f}"))
print(f"{rep.seconds:.1f} s")

random_subset = init_synthetic(train, cfg, np.random.default_rng(123))
print("full training set :", eval_ncm(train, test).accuracy)
print("random 10 / class :", eval_ncm(random_subset, test).accuracy)
print("distilled         :", eval_ncm(rep.synthetic, test).accuracy)
print("learned weights E/H/S:", np.round(rep.geometry.weights, 3))
