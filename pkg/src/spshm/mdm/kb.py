"""Sparse tf-idf knowledge base with passage-level top-k retrieval."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence

DOC_KINDS = (
    "root-cause report",
    "design doc",
    "accident case",
    "maintenance doc",
    "paper/standard",
    "expert consultation",
)
PASSAGE_TOKENS = 400
PASSAGE_OVERLAP = 100
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_LOCATOR_RE = re.compile(r"^(.+)#(\d+)-(\d+)$")


class KnowledgeError(ValueError):
    pass


class EmptyQueryError(KnowledgeError):
    pass


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Lowercased word tokens with their character spans."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def terms(text: str) -> list[str]:
    return [t for t, _, _ in tokenize(text)]


@dataclass(frozen=True)
class KnowledgeDoc:
    id: str
    title: str
    kind: str
    body: str

    def __post_init__(self):
        if not self.id or "#" in self.id:
            raise KnowledgeError(f"invalid document id {self.id!r}")
        if self.kind not in DOC_KINDS:
            raise KnowledgeError(f"unknown document kind {self.kind!r}; expected one of {DOC_KINDS}")
        if not terms(self.body):
            raise KnowledgeError(f"document {self.id!r} has an empty body")


@dataclass
class Passage:
    doc_id: str
    start: int
    end: int
    text: str
    tf: Counter
    vector: dict[str, float] = field(default_factory=dict)
    norm: float = 0.0

    @property
    def locator(self) -> str:
        return f"{self.doc_id}#{self.start}-{self.end}"


def chunk(doc: KnowledgeDoc, size: int = PASSAGE_TOKENS, overlap: int = PASSAGE_OVERLAP) -> list[Passage]:
    """Token windows of ``size`` overlapping by ``overlap``; the last window ends at the last token."""
    if not 0 <= overlap < size:
        raise KnowledgeError("overlap must satisfy 0 <= overlap < size")
    toks = tokenize(doc.body)
    step = size - overlap
    out = []
    a = 0
    while True:
        b = min(a + size, len(toks))
        s, e = toks[a][1], toks[b - 1][2]
        out.append(Passage(doc.id, s, e, doc.body[s:e], Counter(t for t, _, _ in toks[a:b])))
        if b == len(toks):
            return out
        a += step


class Vectorizer(Protocol):
    """Turns term counts into nonnegative sparse weights given corpus statistics."""

    def fit(self, passages: Sequence[Passage]) -> None: ...

    def transform(self, tf: Counter) -> dict[str, float]: ...


class TfidfVectorizer:
    """tf = raw count; idf = ln((1 + N) / (1 + df)) + 1 with N passages and df passage frequency."""

    def __init__(self):
        self.idf: dict[str, float] = {}

    def fit(self, passages: Sequence[Passage]) -> None:
        n = len(passages)
        df = Counter()
        for p in passages:
            df.update(p.tf.keys())
        self.idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}

    def transform(self, tf: Counter) -> dict[str, float]:
        return {t: c * self.idf[t] for t, c in tf.items() if t in self.idf}


def _norm(v: dict[str, float]) -> float:
    return math.sqrt(sum(x * x for x in v.values()))


def cosine(a: dict[str, float], b: dict[str, float], na: Optional[float] = None, nb: Optional[float] = None) -> float:
    na = _norm(a) if na is None else na
    nb = _norm(b) if nb is None else nb
    if na == 0 or nb == 0:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    return min(1.0, sum(w * b.get(t, 0.0) for t, w in a.items()) / (na * nb))


@dataclass(frozen=True)
class Hit:
    passage: Passage
    score: float


class KnowledgeBase:
    def __init__(self, vectorizer: Optional[Vectorizer] = None, size: int = PASSAGE_TOKENS,
                 overlap: int = PASSAGE_OVERLAP):
        self.vectorizer = vectorizer or TfidfVectorizer()
        self.size, self.overlap = size, overlap
        self.docs: dict[str, KnowledgeDoc] = {}
        self.passages: list[Passage] = []
        self._dirty = False

    def __len__(self) -> int:
        return len(self.passages)

    def ingest(self, doc: KnowledgeDoc) -> "KnowledgeBase":
        old = self.docs.get(doc.id)
        if old is not None:
            if old == doc:
                return self
            raise KnowledgeError(f"duplicate document id {doc.id!r}")
        self.docs[doc.id] = doc
        self.passages.extend(chunk(doc, self.size, self.overlap))
        self._dirty = True
        return self

    def ingest_all(self, docs: Iterable[KnowledgeDoc]) -> "KnowledgeBase":
        for d in docs:
            self.ingest(d)
        return self

    def _refresh(self) -> None:
        if not self._dirty:
            return
        self.vectorizer.fit(self.passages)
        for p in self.passages:
            p.vector = self.vectorizer.transform(p.tf)
            p.norm = _norm(p.vector)
        self._dirty = False

    @property
    def vocabulary(self) -> set[str]:
        return {t for p in self.passages for t in p.tf}

    def weights(self) -> list[dict[str, float]]:
        self._refresh()
        return [dict(p.vector) for p in self.passages]

    def query(self, text: str, k: int = 5) -> list[Hit]:
        """Top-``k`` passages by cosine similarity; ties go to the smaller (doc id, start)."""
        if k < 1:
            raise KnowledgeError("k must be at least 1")
        tf = Counter(terms(text))
        if not tf:
            raise EmptyQueryError("query has no tokens")
        if not self.passages:
            return []
        self._refresh()
        q = self.vectorizer.transform(tf)
        nq = _norm(q)
        hits = [Hit(p, cosine(q, p.vector, nq, p.norm)) for p in self.passages]
        hits.sort(key=lambda h: (-h.score, h.passage.doc_id, h.passage.start))
        return hits[:k]

    def resolve(self, locator: str) -> Optional[Passage]:
        m = _LOCATOR_RE.match(locator)
        if not m:
            return None
        doc, s, e = m.group(1), int(m.group(2)), int(m.group(3))
        for p in self.passages:
            if p.doc_id == doc and p.start == s and p.end == e:
                return p
        return None


# ------------------------------------------------------------------ corpora

DEMO_CORPUS = Path(__file__).with_name("corpus")


def load_corpus(directory: str | Path = DEMO_CORPUS) -> list[KnowledgeDoc]:
    """Documents listed in ``manifest.json`` of a corpus directory."""
    directory = Path(directory)
    manifest = directory / "manifest.json"
    try:
        entries = json.loads(manifest.read_text(encoding="utf-8"))["documents"]
    except FileNotFoundError as exc:
        raise KnowledgeError(f"corpus manifest not found: {manifest}") from exc
    docs = []
    for e in entries:
        body = (directory / e["path"]).read_text(encoding="utf-8")
        docs.append(KnowledgeDoc(e["id"], e["title"], e["kind"], body))
    return docs


def demo_knowledge_base() -> KnowledgeBase:
    return KnowledgeBase().ingest_all(load_corpus())
