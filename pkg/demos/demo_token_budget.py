"""
Token budgets and pooling sizes
===============================

How many image tokens does a page cost, and which vision pooling size keeps
an average page inside a fixed budget band?
"""

from roitok import BudgetBand, PoolingConfig, count_tokens, feasible_vision_sizes, solve_pooling
from roitok import reference
from roitok.budget import efficiency_report

# A blank page still carries the whole-image spatial token and the 8x8 cross tokens.
def show(label, budget):
    print(label, ", ".join(f"{k}={v}" for k, v in budget.as_dict().items()))


show("empty page:", count_tokens(0, 0))

# A dense page: 293 text lines and one figure.
show("dense page:", count_tokens(293, 1))

# Corpus averages are fractional, so use expected mode (exact rational arithmetic).
nt, nv = reference.CORPUS_AVG_TEXT_REGIONS, reference.CORPUS_AVG_VISION_REGIONS
b = count_tokens(nt, nv, PoolingConfig(1, 4, 8), expected=True)
print(f"average page at s_v=4: {float(b.total):.2f} tokens")

# Tie the global grid to the vision grid (s_g = 2 s_v) and look for the largest
# s_v whose expected total stays within 576 +- 100 tokens.
band = BudgetBand.around(reference.FIXED_GRID_TOKENS, 100)
for s_v, total in feasible_vision_sizes(nt, nv, band).items():
    print(f"  s_v={s_v}: {float(total):.2f}")
cfg = solve_pooling(nt, nv, band)
print("chosen:", cfg)

# Efficiency against a fixed-grid tokenizer, per dataset and averaged.
rep = efficiency_report(reference.REGION_TOKENIZER_TOKENS, reference.DOCOWL15_TOKENS, reference.GROUPS)
print(rep.to_markdown("region tokens", "fixed grid"))
