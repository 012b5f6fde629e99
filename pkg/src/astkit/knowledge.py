"""RAG knowledge bases: incident corpus and flight-controller parameter docs.

Chunks are embedded into unit vectors (a deterministic hashing embedder by
default, a remote endpoint optionally) and searched with exact brute-force
cosine similarity. At corpus scale (a few hundred incidents) approximate
indexes buy nothing, so the index is a flat matrix.
"""
from __future__ import annotations

import json
import logging
import re
import string
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gateway as gw
from .errors import EmptyCorpus, EmptyIndex, EmptyText

logger = logging.getLogger(__name__)

EMBED_DIM = 384
CHUNK_TOKEN_LIMIT = 1200
INDEX_MAGIC = b"ASTIX1"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def _fnv1a_64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


def embed(text: str, mode: str = "hash", cfg: gw.BackendConfig | None = None) -> np.ndarray:
    """Embed text into a unit-norm vector.

    Hash mode buckets each token by FNV-1a 64 modulo the embedding dim and
    L2-normalizes the counts; it is a pure function of the text. Remote mode
    calls an embedding endpoint and normalizes whatever comes back.
    """
    if not text.strip():
        raise EmptyText("cannot embed empty text")
    if mode == "hash":
        vec = np.zeros(EMBED_DIM, dtype=np.float32)
        for token in tokenize(text):
            vec[_fnv1a_64(token) % EMBED_DIM] += 1.0
    elif mode == "remote":
        if cfg is None:
            raise ValueError("remote embedding requires a backend config")
        vec = np.asarray(gw.embed_remote(text, cfg), dtype=np.float32)
    else:
        raise ValueError(f"unknown embed mode {mode!r}")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise EmptyText("text has no tokens after normalization")
    return vec / norm


@dataclass
class DocumentChunk:
    id: str
    source: str
    text: str
    token_count: int
    vector: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DocumentChunk):
            return NotImplemented
        return (
            self.id == other.id
            and self.source == other.source
            and self.text == other.text
            and self.token_count == other.token_count
            and np.array_equal(self.vector, other.vector)
        )


@dataclass(frozen=True)
class CorpusManifest:
    sources: tuple[tuple[str, int, int], ...]  # (name, incident_count, total_tokens)


@dataclass(frozen=True)
class ParameterDoc:
    name: str
    message_type: str
    description: str
    source_file: str
    flagged: bool = False  # set when the definition carried no comment


@dataclass
class VectorIndex:
    """Immutable-after-build flat cosine index."""

    chunks: list[DocumentChunk]
    dim: int
    _matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        # scores accumulate in f64 so they agree with a scalar re-computation
        if self.chunks:
            self._matrix = np.stack([c.vector for c in self.chunks]).astype(np.float64)
        else:
            self._matrix = np.zeros((0, self.dim), dtype=np.float64)

    def __len__(self) -> int:
        return len(self.chunks)


def build_index(chunks: list[DocumentChunk]) -> VectorIndex:
    dims = {c.vector.shape[0] for c in chunks}
    if len(dims) > 1:
        raise ValueError(f"chunks disagree on vector dim: {sorted(dims)}")
    ids = [c.id for c in chunks]
    if len(ids) != len(set(ids)):
        raise ValueError("chunk ids must be unique per index")
    dim = dims.pop() if dims else EMBED_DIM
    return VectorIndex(chunks=list(chunks), dim=dim)


def search(
    index: VectorIndex, query: str, k: int, mode: str = "hash",
    cfg: gw.BackendConfig | None = None,
) -> list[tuple[DocumentChunk, float]]:
    """Top-k chunks by cosine, ties broken by ascending insertion order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.chunks:
        raise EmptyIndex("cannot search an empty index")
    qvec = embed(query, mode=mode, cfg=cfg).astype(np.float64)
    scores = index._matrix @ qvec
    order = sorted(range(len(index)), key=lambda i: (-float(scores[i]), i))
    return [(index.chunks[i], float(scores[i])) for i in order[: min(k, len(index))]]


# Corpus ingestion

def ingest_corpus(directory: str | Path) -> tuple[CorpusManifest, list[DocumentChunk]]:
    """Load corpus/<source>/<incident>.txt files into embedded chunks.

    Incidents at or under the token limit become one chunk; longer ones are
    split on paragraph boundaries into chunks of at most the limit. Manifest
    counts are per incident file, before any splitting.
    """
    root = Path(directory)
    chunks: list[DocumentChunk] = []
    manifest_rows: list[tuple[str, int, int]] = []
    for source_dir in sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []:
        incident_count = 0
        total_tokens = 0
        for path in sorted(source_dir.glob("*.txt")):
            try:
                text = path.read_text(encoding="utf-8").strip()
            except (OSError, UnicodeDecodeError) as exc:
                logger.warning("skipping unreadable file %s: %s", path, exc)
                continue
            if not text:
                logger.warning("skipping empty incident file %s", path)
                continue
            incident_count += 1
            tokens = len(text.split())
            total_tokens += tokens
            base_id = f"{source_dir.name}/{path.stem}"
            for piece_id, piece in _split_incident(base_id, text):
                chunks.append(
                    DocumentChunk(
                        id=piece_id,
                        source=source_dir.name,
                        text=piece,
                        token_count=len(piece.split()),
                        vector=embed(piece),
                    )
                )
        if incident_count:
            manifest_rows.append((source_dir.name, incident_count, total_tokens))
    if not chunks:
        raise EmptyCorpus(f"no readable incidents under {root}")
    return CorpusManifest(sources=tuple(manifest_rows)), chunks


def _split_incident(base_id: str, text: str) -> list[tuple[str, str]]:
    if len(text.split()) <= CHUNK_TOKEN_LIMIT:
        return [(base_id, text)]
    paragraphs = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    pieces: list[str] = []
    current: list[str] = []
    count = 0
    for para in paragraphs:
        n = len(para.split())
        if n > CHUNK_TOKEN_LIMIT:
            # Pathological single paragraph: hard-split on token boundaries.
            if current:
                pieces.append("\n\n".join(current))
                current, count = [], 0
            words = para.split()
            for i in range(0, len(words), CHUNK_TOKEN_LIMIT):
                pieces.append(" ".join(words[i : i + CHUNK_TOKEN_LIMIT]))
            continue
        if count + n > CHUNK_TOKEN_LIMIT and current:
            pieces.append("\n\n".join(current))
            current, count = [], 0
        current.append(para)
        count += n
    if current:
        pieces.append("\n\n".join(current))
    return [(f"{base_id}#{i}", piece) for i, piece in enumerate(pieces, start=1)]


# Flight-controller message definitions

_MSG_FIELD_RE = re.compile(
    r"^\s*(?P<type>[A-Za-z_][A-Za-z0-9_]*)"
    r"(?:\[(?P<count>\d+)\])?"
    r"\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*$"
)


def parse_msg_definitions(files: list[str | Path]) -> list[ParameterDoc]:
    """Parse .msg-format definition files into one doc per logged field.

    A field line is "<type> <name>"; its description is the contiguous
    comment block immediately above joined with the trailing comment. Array
    fields expand to indexed names sharing the description. Constant lines
    (containing "=") define no logged field and are skipped.
    """
    docs: list[ParameterDoc] = []
    for file in files:
        path = Path(file)
        message_type = path.stem
        pending_comment: list[str] = []
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line:
                pending_comment = []
                continue
            if line.startswith("#"):
                pending_comment.append(line.lstrip("#").strip())
                continue
            body, _, trailing = line.partition("#")
            body = body.strip()
            trailing = trailing.strip()
            if "=" in body:  # constant definition, not a logged field
                pending_comment = []
                continue
            m = _MSG_FIELD_RE.match(body)
            if not m:
                logger.warning("%s:%d: malformed line skipped: %r", path, lineno, raw)
                pending_comment = []
                continue
            parts = [" ".join(pending_comment).strip(), trailing]
            description = " ".join(p for p in parts if p).strip()
            pending_comment = []
            names = (
                [f"{m['name']}[{i}]" for i in range(int(m["count"]))]
                if m["count"]
                else [m["name"]]
            )
            for name in names:
                docs.append(
                    ParameterDoc(
                        name=name,
                        message_type=message_type,
                        description=description,
                        source_file=path.name,
                        flagged=not description,
                    )
                )
    return docs


def param_chunks(docs: list[ParameterDoc]) -> list[DocumentChunk]:
    """Embed parameter docs for semantic search.

    The description is the match text (a goal equal to a description scores
    a perfect cosine); the name stands in when no description exists.
    """
    chunks = []
    for doc in docs:
        text = doc.description.strip() or doc.name
        chunks.append(
            DocumentChunk(
                id=f"{doc.message_type}.{doc.name}",
                source=doc.message_type,
                text=text,
                token_count=len(text.split()),
                vector=embed(text),
            )
        )
    return chunks


def save_param_docs(docs: list[ParameterDoc], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.__dict__) + "\n")


def load_param_docs(path: str | Path) -> list[ParameterDoc]:
    docs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            docs.append(ParameterDoc(**json.loads(line)))
    return docs


# Binary index persistence

def save_index(index: VectorIndex, path: str | Path) -> None:
    """Little-endian layout: magic, u32 dim, u32 count, then per chunk the
    length-prefixed id/source/text and dim f32 vector values."""
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<II", index.dim, len(index.chunks)))
        for chunk in index.chunks:
            for text in (chunk.id, chunk.source, chunk.text):
                raw = text.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
            fh.write(chunk.vector.astype("<f4").tobytes())


def load_index(path: str | Path) -> VectorIndex:
    data = Path(path).read_bytes()
    if data[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        raise ValueError(f"{path} is not an index file")
    pos = len(INDEX_MAGIC)
    dim, count = struct.unpack_from("<II", data, pos)
    pos += 8
    chunks: list[DocumentChunk] = []
    for _ in range(count):
        texts = []
        for _ in range(3):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            texts.append(data[pos : pos + n].decode("utf-8"))
            pos += n
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
        cid, source, text = texts
        chunks.append(
            DocumentChunk(
                id=cid, source=source, text=text,
                token_count=len(text.split()), vector=vec,
            )
        )
    return build_index(chunks)
