"""ROUGE-1/2/L on a worked pair, step by step."""

from tdt import rouge_l, rouge_n
from tdt.rouge import lcs_length, rouge_all

ref = "the cat sat on the mat".split()
hyp = "the cat lay on a mat".split()

print("ref:", " ".join(ref))
print("hyp:", " ".join(hyp))

r1 = rouge_n(ref, hyp, 1)
print(f"\nR-1: overlap of unigrams (clipped) -> P={r1.precision:.3f} "
      f"R={r1.recall:.3f} F1={r1.f1:.3f}")

r2 = rouge_n(ref, hyp, 2)
print(f"R-2: shared bigrams {{'the cat', 'on ...'}} -> P={r2.precision:.3f} "
      f"R={r2.recall:.3f} F1={r2.f1:.3f}")

lcs = lcs_length(ref, hyp)
rl = rouge_l(ref, hyp)
print(f"R-L: longest common subsequence has length {lcs} -> P={rl.precision:.3f} "
      f"R={rl.recall:.3f} F1={rl.f1:.3f}")

print("\nAll three at once:")
for name, score in rouge_all(ref, hyp).items():
    print(f"    {name}: F1={score.f1:.4f}")
