"""
Checking the geometric lemmas numerically
=========================================

Chord versus arc on the sphere, packing growth in the hyperbolic disk, tree
distortion in the disk and in the plane, and exactness of the flat factor.
"""

from geodistill.theory_checks import (check_arc_chord, check_flat_isometry, check_packing_growth,
                                      check_tree_distortion)

arc = check_arc_chord(samples=100_000)
print(arc.summary())
print("  chord/arc ratio range:", arc.stats["ratio_min"], "to", arc.stats["ratio_max"])

pack = check_packing_growth()
print(pack.summary())
print("  hyperbolic counts:", pack.stats["count_hyperbolic"])
print("  euclidean counts :", pack.stats["count_euclidean"])

# the tree check fits 30 Euclidean stress embeddings; expect about half a minute
tree = check_tree_distortion(b=2, h_list=(3, 5, 7))
print(tree.summary())
print("  hyperbolic distortion:", [round(d, 3) for d in tree.stats["hyperbolic_distortion"]])
print("  euclidean distortion :", [round(d, 2) for d in tree.stats["euclidean_distortion"]])

print(check_flat_isometry().summary())
