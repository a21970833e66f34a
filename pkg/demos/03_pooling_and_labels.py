"""Segment pooling, importance labels, and the oracle-weighted pathway.

Shows how a document is cut into overlapping windows, what average pooling
and importance-weighted pooling produce, and how reference-derived labels
steer the weighted pool toward the marked tokens.
"""

import numpy as np

from tdt import (
    RngStream,
    SegmentationSpec,
    Tensor,
    build_importance_labels,
    labels_to_weights,
    pool_average,
    pool_weighted,
    segment_index_map,
)

spec = SegmentationSpec(kernel=8, stride=6)
print("Windows over a 20-token document (kernel 8, stride 6):")
for j, (start, length) in enumerate(segment_index_map(20, spec)):
    real = min(start + length, 20) - start
    pad = length - real
    print(f"    segment {j}: tokens {start}..{start + real - 1}"
          + (f"  (+{pad} padded slots)" if pad else ""))

doc = "the storms hit the northern coast and flooding closed two harbor roads".split()
ref = "storm floods harbors".split()
labels = build_importance_labels(doc, ref)
print("\nDocument:", " ".join(doc))
print("Reference:", " ".join(ref))
print("Labels:   ", " ".join(f"{w}/{l}" for w, l in zip(doc, labels)))

rng = RngStream(1)
states = Tensor(rng.normal((len(doc), 6)))
spec = SegmentationSpec(4, 3)
avg = pool_average(states, spec)
weighted = pool_weighted(states, labels_to_weights(labels), spec)
print(f"\n{len(doc)} tokens -> {avg.shape[0]} segments of width 6")
print("Average pooling row norms:  ",
      np.round(np.linalg.norm(avg.data, axis=1), 3))
print("Oracle-weighted row norms:  ",
      np.round(np.linalg.norm(weighted.data, axis=1), 3))
print("\nWith uniform weights the two rules agree on unpadded windows;")
uniform = pool_weighted(states, np.zeros(len(doc)), spec)
full_windows = [j for j, (s, k) in enumerate(segment_index_map(len(doc), spec))
                if s + k <= len(doc)]
diff = max(np.abs(uniform.data[j] - avg.data[j] * spec.kernel / spec.kernel).max()
           for j in full_windows)
print(f"max difference over full windows: {diff:.2e}")
