#!/usr/bin/env python3
"""Independent reference implementation of the trec_eval cut metrics.

Generates 100 random (run, qrels) cases, scores them with a from-scratch
Python evaluator (linear-gain nDCG with log2(i+1) discount, MAP divided by
R, P@k divided by k, recall divided by R, queries without positive
judgments skipped), and freezes everything into
crates/core/tests/fixtures/trec_reference.json so the Rust evaluator can
be checked against an implementation that shares no code with it.

Run from the repository root:  python3 tools/ref_trec_eval.py
"""

import json
import math
import os
import random

METRICS = [
    "ndcg@10",
    "ndcg@100",
    "map@10",
    "map@100",
    "p@10",
    "p@100",
    "recall@10",
    "recall@100",
]


def dcg(gains, k):
    total = 0.0
    for i, g in enumerate(gains[:k]):
        total += g / math.log2(i + 2)
    return total


def ndcg_at(gains, ideal_desc, k):
    ideal = dcg(ideal_desc, k)
    if ideal <= 0.0:
        return 0.0
    return dcg(gains, k) / ideal


def map_at(rels, total_relevant, k):
    if total_relevant == 0:
        return 0.0
    hits = 0
    total = 0.0
    for i, rel in enumerate(rels[:k]):
        if rel:
            hits += 1
            total += hits / (i + 1)
    return total / total_relevant


def precision_at(rels, k):
    return sum(rels[:k]) / k


def recall_at(rels, total_relevant, k):
    if total_relevant == 0:
        return 0.0
    return sum(rels[:k]) / total_relevant


def evaluate(run, qrels):
    """run: {qid: [docid, ...] in rank order}; qrels: {(qid, doc): grade}."""
    grades_by_query = {}
    for (qid, doc), grade in qrels.items():
        grades_by_query.setdefault(qid, {})[doc] = grade

    per_query = {}
    skipped = []
    for qid in run:
        judged = grades_by_query.get(qid, {})
        ideal = sorted((g for g in judged.values() if g > 0), reverse=True)
        if not ideal:
            skipped.append(qid)
            continue
        total_relevant = len(ideal)
        gains = [judged.get(doc, 0) for doc in run[qid]]
        rels = [g > 0 for g in gains]
        row = {}
        for metric in METRICS:
            name, k = metric.split("@")
            k = int(k)
            if name == "ndcg":
                row[metric] = ndcg_at(gains, ideal, k)
            elif name == "map":
                row[metric] = map_at(rels, total_relevant, k)
            elif name == "p":
                row[metric] = precision_at(rels, k)
            else:
                row[metric] = recall_at(rels, total_relevant, k)
        per_query[qid] = row

    means = {}
    if per_query:
        for metric in METRICS:
            # Sum in sorted-query order, matching the Rust accumulation.
            total = 0.0
            for qid in sorted(per_query):
                total += per_query[qid][metric]
            means[metric] = total / len(per_query)
    return per_query, means, sorted(skipped)


def make_case(rng, index):
    n_queries = rng.randint(1, 8)
    run = {}
    qrels = {}
    for qi in range(n_queries):
        qid = f"q{index:03d}_{qi}"
        n_docs = rng.randint(5, 60)
        docs = [f"d{j:03d}" for j in range(n_docs)]
        rng.shuffle(docs)
        run[qid] = docs

        flavor = rng.random()
        for doc in docs:
            roll = rng.random()
            if flavor < 0.1:
                # ~10% of queries: nothing positive (skipped by both sides);
                # still give some judged-zero entries.
                if roll < 0.3:
                    qrels[(qid, doc)] = 0
            elif roll < 0.25:
                qrels[(qid, doc)] = rng.randint(1, 3)
            elif roll < 0.40:
                qrels[(qid, doc)] = 0
        # Judged documents the run never retrieved (count toward R and the
        # ideal ordering).
        for j in range(rng.randint(0, 5)):
            if flavor >= 0.1:
                qrels[(qid, f"ph{j}")] = rng.randint(0, 3)

    per_query, means, skipped = evaluate(run, qrels)

    # Runs carry strictly decreasing scores so the file is a valid run.
    run_with_scores = {
        qid: [[doc, round(1000.0 - i - rng.random() * 0.5, 6)] for i, doc in enumerate(docs)]
        for qid, docs in run.items()
    }
    return {
        "name": f"case{index:03d}",
        "run": run_with_scores,
        "qrels": [[qid, doc, grade] for (qid, doc), grade in sorted(qrels.items())],
        "per_query": per_query,
        "means": means,
        "evaluated": len(per_query),
        "skipped": skipped,
    }


def main():
    rng = random.Random(20260823)
    cases = [make_case(rng, i) for i in range(100)]
    out = {
        "description": "reference values for the trec_eval cut metrics, "
        "computed by tools/ref_trec_eval.py",
        "metrics": METRICS,
        "cases": cases,
    }
    path = os.path.join(
        os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures",
        "trec_reference.json",
    )
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(out, f, indent=1)
        f.write("\n")
    n_queries = sum(len(c["run"]) for c in cases)
    n_skipped = sum(len(c["skipped"]) for c in cases)
    print(f"wrote {len(cases)} cases, {n_queries} queries ({n_skipped} skipped) -> {path}")


if __name__ == "__main__":
    main()
