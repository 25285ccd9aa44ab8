"""Regenerate tests/golden/synth_gain.json from the loop reference.

Run from the repository root:

    python3 scripts/make_golden.py

The benchmark numbers are produced by the reference implementations in
tests/oracles.py, not by the package: estimation, factorization, the
sampling transform, augmentation, and classification are all recomputed
here with explicit loops.  Only the experiment inputs are shared with the
engine, i.e. the synthetic store, the episode stream, and the
standard-normal draws, which all come from the same seeded generators.
The engine must land within the margin stored below on the same setup.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from oracles import (  # noqa: E402
    nearest_queries,
    shot_parameters,
    textbook_cholesky,
    way_parameters,
)

from fewgen.episodic import derive_rng, sample_episode  # noqa: E402
from fewgen.harness import SynthSpec, make_synthetic  # noqa: E402

SPEC = dict(n_classes=20, dim=16, per_class_count=40, class_mean_scale=1.6,
            cov_kind="isotropic", cov_scale=0.5, seed=7)
EVAL = dict(n_way=5, k_shot=1, n_query=5, r_neighbors=4, n_gen=20,
            episodes=1000, seed=0)
MARGIN = 0.01

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
JITTER_FLOOR = 1e-12


def ladder_cholesky(cov):
    """First jitter level whose factorization succeeds, textbook routine."""
    d = cov.shape[0]
    trace = float(np.trace(cov))
    scale = trace / d if trace > 0 else 0.0
    candidates = [level * scale for level in JITTER_LADDER]
    if scale == 0.0:
        candidates = [0.0, JITTER_FLOOR]
    tried = set()
    for jitter in candidates:
        if jitter in tried:
            continue
        tried.add(jitter)
        lower = textbook_cholesky(cov + jitter * np.eye(d))
        if lower is not None:
            return lower
    raise RuntimeError("factorization failed at every jitter level")


def predict(queries, protos):
    preds = []
    for q in queries:
        dists = []
        for p in protos:
            acc = 0.0
            for a, b in zip(q, p):
                acc += (float(a) - float(b)) ** 2
            dists.append(acc)
        preds.append(min(range(len(protos)), key=lambda c: dists[c]))
    return preds


def accuracy(preds, labels):
    hits = sum(1 for p, y in zip(preds, labels) if p == int(y))
    return hits / len(labels)


def class_rows(episode, c):
    support = [episode.support_x[i] for i in range(len(episode.support_y))
               if episode.support_y[i] == c]
    return support


def episode_accuracy(episode, strategy, r, n_gen, gen_rng):
    """One episode under the reference pipeline."""
    n_way = episode.n_way
    queries = [episode.query_x[i] for i in range(episode.query_x.shape[0])]
    protos = []
    for c in range(n_way):
        support = class_rows(episode, c)
        rows = list(support)
        if strategy == "way":
            neighbor_lists = [nearest_queries(x, queries, r) for x in support]
            mean, cov = way_parameters(support, neighbor_lists)
            lower = ladder_cholesky(cov)
            z = gen_rng.standard_normal((n_gen, len(mean)))
            for j in range(n_gen):
                rows.append(mean + lower @ z[j])
        elif strategy == "shot":
            k = len(support)
            base, extra = divmod(n_gen, k)
            counts = [base + 1 if i < extra else base for i in range(k)]
            for i, x in enumerate(support):
                nbrs = nearest_queries(x, queries, r)
                mean, cov = shot_parameters(x, nbrs)
                lower = ladder_cholesky(cov)
                z = gen_rng.standard_normal((counts[i], len(mean)))
                for j in range(counts[i]):
                    rows.append(mean + lower @ z[j])
        total = np.zeros(len(rows[0]))
        for row in rows:
            total = total + np.asarray(row, dtype=np.float64)
        protos.append(total / len(rows))
    preds = predict(queries, protos)
    return accuracy(preds, episode.query_y)


def run_benchmark():
    store, _ = make_synthetic(SynthSpec(**SPEC))
    labels = frozenset(store.labels)
    sums = {"baseline": 0.0, "way": 0.0, "shot": 0.0}
    t0 = time.time()
    for i in range(EVAL["episodes"]):
        episode = sample_episode(
            store, labels, EVAL["n_way"], EVAL["k_shot"], EVAL["n_query"],
            derive_rng(EVAL["seed"], "eval-episode", i),
        )
        for name in ("baseline", "way", "shot"):
            strategy = None if name == "baseline" else name
            sums[name] += episode_accuracy(
                episode, strategy, EVAL["r_neighbors"], EVAL["n_gen"],
                derive_rng(EVAL["seed"], "eval-gen", i),
            )
        if (i + 1) % 100 == 0:
            print(f"  {i + 1}/{EVAL['episodes']} episodes, {time.time() - t0:.0f}s")
    return {name: total / EVAL["episodes"] for name, total in sums.items()}


def main():
    accs = run_benchmark()
    doc = {
        "store": SPEC,
        "eval": EVAL,
        "margin": MARGIN,
        "baseline_accuracy": accs["baseline"],
        "way_accuracy": accs["way"],
        "shot_accuracy": accs["shot"],
        "way_gain": accs["way"] - accs["baseline"],
        "shot_gain": accs["shot"] - accs["baseline"],
    }
    out = ROOT / "tests" / "golden" / "synth_gain.json"
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc, indent=2))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
