"""Maintenance decision support: knowledge base, retrieval and report composition."""

from .kb import (
    DEMO_CORPUS,
    DOC_KINDS,
    EmptyQueryError,
    Hit,
    KnowledgeBase,
    KnowledgeDoc,
    KnowledgeError,
    Passage,
    TfidfVectorizer,
    chunk,
    cosine,
    demo_knowledge_base,
    load_corpus,
    tokenize,
)
from .report import (
    NO_KNOWLEDGE,
    SEVERITIES,
    Claim,
    MaintenanceReport,
    Reference,
    ReportStep,
    SeverityRule,
    compose_report,
    verify_citations,
)

__all__ = [
    "DEMO_CORPUS", "DOC_KINDS", "EmptyQueryError", "Hit", "KnowledgeBase", "KnowledgeDoc", "KnowledgeError",
    "Passage", "TfidfVectorizer", "chunk", "cosine", "demo_knowledge_base", "load_corpus", "tokenize",
    "NO_KNOWLEDGE", "SEVERITIES", "Claim", "MaintenanceReport", "Reference", "ReportStep", "SeverityRule",
    "compose_report", "verify_citations",
]
