#!/usr/bin/env python3
"""Generate the bundled toy dataset: 200 documents, 20 queries, graded
qrels, and a ready-to-run pipeline configuration.

Construction: each query carries a unique topic term plus one of five
shared aspect terms. Its four relevant documents (grades 2, 2, 1, 1)
contain the topic term, so first-stage BM25 always retrieves them; the
120 distractors share only the aspect/filler vocabulary. An oracle
reranker therefore reaches nDCG@10 = 1.0, and first-stage recall@1000 is
1.0 by construction. A few documents carry markup or URLs so the cleanup
stage has something to do.

Run from the repository root:  python3 tools/gen_toy_data.py
"""

import json
import os
import random

FILLERS = [
    "archival systems store snapshots of evolving collections",
    "ranking quality depends on the freshness of the corpus",
    "lexical matching remains a strong first stage baseline",
    "evaluation uses graded judgments pooled across systems",
    "temporal change slowly replaces older terminology",
]


def main():
    rng = random.Random(1723)
    root = os.path.join(os.path.dirname(__file__), "..", "data", "toy")
    os.makedirs(root, exist_ok=True)

    docs = []
    qrels_lines = []
    query_lines = []
    counter = 0

    for qi in range(20):
        topic = f"topic{qi:02d}"
        aspect = f"aspect{qi % 5}"
        query_lines.append(f"toyq{qi:02d}\t{topic} {aspect} retrieval\n")
        for j in range(4):
            doc_id = f"d{counter:03d}"
            counter += 1
            grade = 2 if j < 2 else 1
            filler = FILLERS[(qi + j) % len(FILLERS)]
            extra = FILLERS[(qi + j + 2) % len(FILLERS)] if j % 2 == 0 else ""
            text = f"{topic} {aspect} retrieval {filler} {extra}".strip()
            if counter % 7 == 0:
                text = f"<p>{text}</p> see https://example.com/{doc_id} for details"
            docs.append({"id": doc_id, "text": text})
            qrels_lines.append(f"toyq{qi:02d} 0 {doc_id} {grade}\n")

    while counter < 200:
        doc_id = f"d{counter:03d}"
        aspect = f"aspect{counter % 5}"
        filler = FILLERS[counter % len(FILLERS)]
        junk = f"junk{counter:03d}"
        text = f"{aspect} retrieval {junk} {filler}"
        if counter % 9 == 0:
            text = f"{text} contact info{counter}@example.org"
        docs.append({"id": doc_id, "text": text})
        counter += 1

    rng.shuffle(docs)

    with open(os.path.join(root, "corpus.jsonl"), "w") as f:
        for doc in docs:
            f.write(json.dumps(doc) + "\n")
    with open(os.path.join(root, "queries.tsv"), "w") as f:
        f.writelines(query_lines)
    with open(os.path.join(root, "qrels.txt"), "w") as f:
        f.writelines(qrels_lines)

    config = """schema_version = 1

[input]
corpus = "data/toy/corpus.jsonl"
queries = "data/toy/queries.tsv"
cleanup = true

[bm25]
k1 = 0.9
b = 0.4
first_stage_k = 1000

[rerank]
strategy = "tournament"
scorer = "oracle:data/toy/qrels.txt"
match_size = 5
promote = 2
top_k = 10

[output]
run = "target/toy/run.trec"
jsonl = "target/toy/records.jsonl"
trace = "target/toy/trace.json"
tag = "driftrank-toy"
"""
    with open(os.path.join(root, "pipeline.toml"), "w") as f:
        f.write(config)

    print(f"wrote {len(docs)} docs, 20 queries, {len(qrels_lines)} judgments -> {root}")


if __name__ == "__main__":
    main()
