"""Fuzz the three deterministic geometric lemmas with random valid instances.

Each lemma has a vectorized instance generator (acceptance rates are
reported so vacuous regimes stay visible) and a checker with 1e-12 slack.

Run:  python demos/04_lemma_fuzz.py
"""

from rst_lab.experiments import replay_lemma, run_lemma_fuzz

for lemma in ("empty-ball", "flatness", "radial-progress"):
    rep = run_lemma_fuzz(lemma, instances=50_000, seed=99, dim=2)
    print(
        f"{lemma:16s} violations={rep.violations}  "
        f"generator acceptance={rep.acceptance_rate:.3f}"
    )
    assert rep.violations == 0

# Any instance can be serialized and replayed through the scalar checker.
print("replay:", replay_lemma("flatness", {"c": [0.05, -1.0], "rho": 0.1, "ell": 0.2}))
