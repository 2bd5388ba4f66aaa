"""
Correcting a small decision tree, one rule at a time
====================================================

A loan decision over three raw attributes: salary S (numeric), a
repayment record R and a pledged property PP (both boolean). Splits on
S > 30 and S > 20 give four conditions, and the first implies the second.
"""

from importlib.resources import files

from treedistill import oracle
from treedistill.data import binarize_table, load_csv
from treedistill.explain import bt_tree_specific_reason, dt_sufficient_reason
from treedistill.models import loads_model
from treedistill.rectify import distill_step, distill_stream

loan = files("treedistill") / "fixtures" / "loan"
I = loads_model((loan / "i.json").read_text())
P = loads_model((loan / "p.json").read_text())
th = P.conditions.theory
for i, c in enumerate(P.conditions):
    print(f"x{i + 1}: {c.name}")

# %%
# Which feasible instances do the two models disagree on?
print("disagreements:", oracle.exact_diff(I, P, th))

# %%
# Explain the boosted tree on the first of them. Dropping every literal
# except "not S > 30" still forces the negative class.
x = (0, 1, 1, 1)
reason = bt_tree_specific_reason(P, x, th)
print("reason for", x, "->", reason.to_signed())

# %%
# Turn the reason into a rule and rectify the decision tree with it.
# Only paths consistent with the premises change; the result is simplified.
fixed, rule = distill_step(I, P, x, th)
print("rule:", rule.to_json())
print("nodes/depth:", fixed.size(), fixed.depth())
print("still wrong on:", oracle.exact_diff(fixed, P, th))

# %%
# Explanations on the corrected tree are exact and cheap.
print("tree reason for (1,1,1,0):", dt_sufficient_reason(fixed, (1, 1, 1, 0), th).to_signed())

# %%
# Running the whole stream of raw rows settles every disagreement.
stream = binarize_table(load_csv(loan / "stream.csv"), P.conditions)
final, records = distill_stream(I, P, stream, th)
for r in records:
    print(f"step {r.step}: instance {r.instance}, remaining {r.remaining}")
print("equivalent to the boosted tree:", oracle.semantically_equal(final, P, th))
