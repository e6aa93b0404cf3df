"""
Counting attention cost instead of guessing it
==============================================

A horizontal layer scores N sequences of M tokens: N * M^2 entries. A
vertical layer scores M sequences of N tokens: M * N^2. When variates are
few and patches are many, swapping half the stack to vertical is cheaper
than an all-horizontal stack of the same depth. The cost model makes that
an exact integer claim, checked here across dataset shapes.
"""

from gridcast.attention import count_attention_cost
from gridcast.embed import patch_count

D = 16

print(f"{'dataset':<12} {'N':>4} {'M':>4} {'mixed':>10} {'all-horiz':>10} {'cheaper?':>9}")
for name, N, T in [
    ("ETT-style", 7, 336),
    ("weather", 21, 336),
    ("traffic", 862, 96),
    ("exchange", 8, 96),
]:
    M = patch_count(T, 16, 8)
    mixed = count_attention_cost(M, N, D, "alternate", n_layers=2)
    horiz = count_attention_cost(M, N, D, "horizontal_only", n_layers=2)
    cheaper = "yes" if mixed.score_entries < horiz.score_entries else "no"
    print(f"{name:<12} {N:>4} {M:>4} {mixed.score_entries:>10} {horiz.score_entries:>10} {cheaper:>9}")

# The crossover is at N = M: vertical layers win exactly when the variate
# count is below the patch count.
print("\nscore entries per layer at M=42:")
for N in (7, 42, 100):
    h = count_attention_cost(42, N, D, "horizontal_only", n_layers=1)
    v = count_attention_cost(42, N, D, "vertical_only", n_layers=1)
    print(f"  N={N:>3}: horizontal {h.score_entries:>8}, vertical {v.score_entries:>8}")

# MACs just scale entries by the feature width.
c = count_attention_cost(42, 7, D, "alternate", n_layers=2)
print(f"\nalternate depth-2 at (M=42, N=7, D={D}): {c.score_entries} entries, {c.macs} MACs")
