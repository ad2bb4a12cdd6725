# %% [markdown]
# # Coreference metrics
#
# MUC counts links, B-cubed averages per-mention overlap, CEAF aligns
# clusters one-to-one. The table layout puts B3, MUC and CEAF side by side
# with the mean of the three F1 scores.

# %%
from segcoref.score import PRF, ScoreReport, b_cubed, ceaf, format_markdown, muc

key = [{"A", "B", "C"}]
response = [{"A", "B"}, {"C"}]
for name, s in [("MUC", muc(key, response)), ("B3", b_cubed(key, response)),
                ("CEAF phi4", ceaf(key, response)), ("CEAF phi3", ceaf(key, response, "phi3"))]:
    print(f"{name:10s} P={s.precision:.3f} R={s.recall:.3f} F1={s.f1:.3f}")

# %%
rows = {
    "segmentation": ScoreReport(muc=PRF(.846, .603, .704), b3=PRF(.804, .559, .659), ceaf=PRF(.805, .394, .528)),
    "mention ranking": ScoreReport(muc=PRF(.847, .824, .835), b3=PRF(.765, .740, .753), ceaf=PRF(.741, .698, .719)),
}
print(format_markdown(rows))
