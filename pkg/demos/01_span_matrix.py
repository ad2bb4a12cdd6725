# %% [markdown]
# # Span position matrices
#
# A window of L tokens is described by a K x L matrix: row r holds spans of
# length r, column c holds spans starting at window position c.

# %%
import numpy as np

from segcoref.ingest import Document, Span, Token
from segcoref.spanmat import SpanMatrix, WindowPrediction, decode, encode_spans, merge_predictions
from segcoref.window import segment

m, skipped = encode_spans({Span(4, 5), Span(9, 9), Span(0, 11)}, window_offset=0, window_len=20, K=10, L=20)
print("cells set:", [(int(r) + 1, int(c)) for r, c in np.argwhere(m.values)], "skipped:", skipped)
print(m.to_json())

# %%
# decoding maps cells back to absolute spans
print(sorted(decode(m, window_offset=0, window_len=20, threshold=0.5)))

# %% [markdown]
# Long documents are cut into windows with stride L // 2; the last window is
# pulled back so it ends at the document end.

# %%
doc = Document("demo", 0, tuple(Token(f"w{i}", i) for i in range(400)))
windows = segment(doc, 243)
print([(w.offset, w.end) for w in windows])

# %%
# a span seen by two windows gets the mean of their scores
a, b = np.zeros((10, 243)), np.zeros((10, 243))
a[0, 200] = 0.6
b[0, 200 - 121] = 0.8
merged = merge_predictions([WindowPrediction(0, SpanMatrix(a), 243),
                            WindowPrediction(121, SpanMatrix(b), 243)])
print(merged[Span(200, 200)])
