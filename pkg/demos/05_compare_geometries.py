"""
Product space against single geometries
=======================================

A short version of the comparison in the acceptance suite: each geometry
gets the whole embedding budget in the single-factor modes. Three seeds and
200 iterations keep this to a couple of minutes.
"""

from geodistill.data import MixedSpec, gen_mixed, train_test_split
from geodistill.distill import DistillConfig
from geodistill.evaluation import compare_geometries

train, test = train_test_split(gen_mixed(MixedSpec(noise=0.8), 3000, seed=0), 1000, seed=0)
cfg = DistillConfig(ipc=10, iters=200)
table = compare_geometries(train, test, cfg, ["product", "euclid", "hyper", "sphere"], seeds=[0, 1, 2],
                           progress=lambda c: print(f"  {c.geometry:<8} seed {c.seed}: {c.accuracy:.3f}"))
print(table.to_text())
