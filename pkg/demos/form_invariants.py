"""Structural checks of the discrete forms.

Runs the randomized invariant suite for both polynomial degrees and all
three variants of the interior penalty diffusion form.
"""
from dataclasses import replace

from oldroyd_dg import FormParams
from oldroyd_dg.invariants import verify_forms

for r in (1, 2):
    for eps in (-1, 0, 1):
        params = replace(FormParams.default_for_degree(r), epsilon=eps)
        results = verify_forms(r=r, n=4, seed=1, samples=20, params=params)
        ok = all(res.passed for res in results)
        print(f"r={r} epsilon={eps:+d}: {'all pass' if ok else 'FAILURES'}")
        for res in results:
            if not res.passed:
                print("   ", res.line())

print()
for res in verify_forms(r=2, n=4, seed=1, samples=20):
    print(res.line())
