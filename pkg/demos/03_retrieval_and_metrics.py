"""Knowledge-store retrieval plus the evaluation metric suite.

Ingests the packaged demo incident corpus, runs cosine searches, and shows
the deterministic fixture-mode metrics on small worked examples.
"""
from astkit.config import data_path
from astkit.evaluation import (
    RelevanceLabels,
    context_precision,
    context_recall,
    faithfulness,
    jaccard,
    response_relevancy,
)
from astkit.knowledge import build_index, ingest_corpus, search

print("=== ingest the demo incident corpus ===")
manifest, chunks = ingest_corpus(data_path("demo_corpus"))
for name, incidents, tokens in manifest.sources:
    print(f"  {name}: {incidents} incidents, {tokens} tokens")
index = build_index(chunks)

print("\n=== cosine search ===")
for query in ("search for a missing hiker", "package delivery in rain"):
    print(f"query: {query}")
    for chunk, score in search(index, query, 3):
        print(f"  {score:.3f}  {chunk.id}")

print("\n=== retrieval metrics against hand labels ===")
labels = RelevanceLabels.from_dict({
    "hiker": ["regulator-reports/incident-002", "news-archive/incident-102",
              "pilot-reports/incident-202"],
})
retrieved = [c.id for c, _s in search(index, "search for a missing hiker", 3)]
print(f"retrieved: {retrieved}")
print(f"precision: {context_precision(retrieved, labels, 'hiker'):.2f}")
recall, flagged = context_recall(retrieved, labels, "hiker")
print(f"recall:    {recall:.2f} (flagged={flagged})")

print("\n=== response metrics, fixture mode ===")
context = "The drone lost altitude in a sudden gust near the tower."
print(f"faithfulness(copy, ctx)     = {faithfulness(context, [context]):.2f}")
print(f"faithfulness(unrelated)     = {faithfulness('Bananas ripen indoors.', [context]):.2f}")
print(f"relevancy(query == answer)  = {response_relevancy('wind test', 'wind test'):.2f}")
print(f"jaccard('alpha beta', 'beta gamma') = {jaccard('alpha beta', 'beta gamma'):.3f}")
