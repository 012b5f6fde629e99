"""Labeled 10-document retrieval fixture: 5 search-and-rescue, 5 delivery."""
from __future__ import annotations

from astkit.knowledge import DocumentChunk, build_index, embed

SAR_DOCS = {
    "sar-1": "search and rescue drone located a lost hiker in dense forest after hours of searching",
    "sar-2": "rescue team deployed a drone to search for a missing hiker on the mountain trail",
    "sar-3": "search operation used thermal cameras to find a lost climber in mountain fog",
    "sar-4": "drone assisted mountain rescue after a hiker went missing in heavy snow",
    "sar-5": "missing person search covered the forest ridge with aerial rescue sweeps",
}

DELIVERY_DOCS = {
    "del-1": "package delivery drone dropped a parcel at the customer doorstep in the suburb",
    "del-2": "delivery quadcopter carried a medical supplies parcel to a rural clinic customer",
    "del-3": "parcel delivery route crossed the industrial park to reach the warehouse customer",
    "del-4": "drone delivery service completed the parcel run across the harbor to the customer",
    "del-5": "courier drone delivered a package parcel to the apartment balcony downtown",
}

QUERIES = {
    "q-sar-1": ("search and rescue hiker lost", set(SAR_DOCS)),
    "q-sar-2": ("missing hiker mountain search", set(SAR_DOCS)),
    "q-sar-3": ("rescue search for a missing person in the forest", set(SAR_DOCS)),
    "q-del-1": ("package delivery parcel customer", set(DELIVERY_DOCS)),
    "q-del-2": ("parcel delivery to the customer doorstep", set(DELIVERY_DOCS)),
}


def corpus_chunks() -> list[DocumentChunk]:
    chunks = []
    for cid, text in {**SAR_DOCS, **DELIVERY_DOCS}.items():
        source = "sar" if cid.startswith("sar") else "delivery"
        chunks.append(
            DocumentChunk(id=cid, source=source, text=text,
                          token_count=len(text.split()), vector=embed(text))
        )
    return chunks


def corpus_index():
    return build_index(corpus_chunks())


def brute_force_ranking(query: str, chunks: list[DocumentChunk], k: int):
    """Independent oracle: plain-Python dot products, stable sort by (-score, order)."""
    qvec = embed(query)
    scored = []
    for position, chunk in enumerate(chunks):
        score = sum(float(a) * float(b) for a, b in zip(qvec, chunk.vector))
        scored.append((chunk.id, score, position))
    scored.sort(key=lambda row: (-row[1], row[2]))
    return scored[:k]
