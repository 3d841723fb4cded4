"""Four-step maintenance report composed only from retrieved passages.

Every claim is a sentence copied verbatim from a retrieved passage and
carries the index of that passage in the reference list, so citation
verification succeeds by construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from ..core import FaultType, get_fault
from .kb import KnowledgeBase, Passage, terms

SEVERITIES = ("catastrophic", "serious", "general", "minor")
NO_KNOWLEDGE = "no knowledge found"

DEFAULT_SEVERITY_KEYWORDS: dict[str, tuple[str, ...]] = {
    "catastrophic": ("catastrophic", "loss of mission", "loss of the spacecraft", "thermal runaway"),
    "serious": ("serious", "payload interruption", "interruption", "major degradation"),
    "minor": ("minor", "negligible"),
    "general": ("general",),
}

_COMPONENT_WORDS = {
    "SA": "solar array",
    "BCR": "battery charge regulator",
    "Bus": "bus",
    "BAT1": "battery pack",
    "BAT2": "battery pack",
    "BAT3": "battery pack",
    "LOAD1": "load",
    "LOAD2": "load",
    "LOAD3": "load",
}

STEP_TITLES = ("Root cause analysis", "Risk assessment", "Maintenance strategy")
STEP_VOCABULARY = (
    "cause causes caused root failed failure fault traced likely",
    "consequence consequences risk severity failure mission payload loss interruption rated",
    "recommended strategy strategies maintenance recovery isolate switch redundant reduce",
)

_SENTENCE_RE = re.compile(r"[^.!?\n]+[.!?]?")
_PARAGRAPH_RE = re.compile(r"\n\s*\n")


@dataclass(frozen=True)
class SeverityRule:
    """Fault-to-severity overrides plus keyword lists scanned over the risk claims.

    Each risk claim is judged by the paragraph it was taken from, in rank
    order; the first one containing a keyword decides and, within it, the
    earliest keyword wins, so "serious ... without loss of the spacecraft"
    stays serious. No risk claims means no rating.
    """

    table: Mapping[str, str] = field(default_factory=dict)
    keywords: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_SEVERITY_KEYWORDS))
    default: str = "general"

    def __post_init__(self):
        for s in (*self.table.values(), *self.keywords, self.default):
            if s not in SEVERITIES:
                raise ValueError(f"severity {s!r} is not one of {SEVERITIES}")

    def rate(self, fault: FaultType, risk_claims: Sequence[str]) -> Optional[str]:
        if fault.id in self.table:
            return self.table[fault.id]
        if not risk_claims:
            return None
        for text in risk_claims:  # ranked: the best-supported claim decides
            low = " ".join(terms(text))
            first = None
            for sev in SEVERITIES:
                for k in self.keywords.get(sev, ()):
                    m = re.search(rf"\b{re.escape(' '.join(terms(k)))}\b", low)
                    if m and (first is None or m.start() < first[0]):
                        first = (m.start(), sev)
            if first is not None:
                return first[1]
        return self.default


@dataclass(frozen=True)
class Claim:
    """A verbatim sentence, the passage indices it cites, and the paragraph it came from."""

    text: str
    citations: tuple[int, ...]
    context: str = ""


@dataclass(frozen=True)
class ReportStep:
    number: int
    title: str
    claims: tuple[Claim, ...]

    @property
    def no_knowledge(self) -> bool:
        return not self.claims


@dataclass(frozen=True)
class Reference:
    index: int
    locator: str
    title: str


@dataclass(frozen=True)
class MaintenanceReport:
    fault: FaultType
    steps: tuple[ReportStep, ...]
    severity: Optional[str]
    references: tuple[Reference, ...]

    def citations(self) -> list[int]:
        return [c for s in self.steps for cl in s.claims for c in cl.citations]

    def render(self) -> str:
        lines = [f"Maintenance decision report: {self.fault.description}", ""]
        for step in self.steps:
            lines.append(f"Step {step.number} - {step.title}:")
            if step.no_knowledge:
                lines.append(f"  ({NO_KNOWLEDGE})")
            for i, cl in enumerate(step.claims, 1):
                cites = "".join(f"[{c}]" for c in cl.citations)
                lines.append(f"  ({i}) {' '.join(cl.text.split())} {cites}")
            if step.number == 2 and self.severity is not None:
                lines.append(f"  Recommended severity rating: [{self.severity}]")
            lines.append("")
        lines.append("Step 4 - References:")
        if not self.references:
            lines.append(f"  ({NO_KNOWLEDGE})")
        lines += [f"  [{r.index}] {r.locator} ({r.title})" for r in self.references]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "fault": self.fault.id,
            "severity": self.severity,
            "steps": [
                {"step": s.number, "title": s.title, "no_knowledge": s.no_knowledge,
                 "claims": [{"text": c.text, "citations": list(c.citations)} for c in s.claims]}
                for s in self.steps
            ],
            "references": [{"index": r.index, "locator": r.locator, "title": r.title} for r in self.references],
        }


def fault_terms(fault: FaultType) -> list[str]:
    words = fault.description + " " + _COMPONENT_WORDS.get(fault.component, "")
    return sorted(set(terms(words)))


def step_query(fault: FaultType, step: int) -> str:
    return " ".join(fault_terms(fault)) + " " + STEP_VOCABULARY[step - 1]


def _contains_phrase(words: list[str], phrase: list[str]) -> bool:
    n = len(phrase)
    return any(words[i:i + n] == phrase for i in range(len(words) - n + 1))


def best_sentence(passage: Passage, fault: FaultType, step_words: set[str], idf: Mapping[str, float]
                  ) -> Optional[tuple[str, str]]:
    """The passage sentence sharing the most weighted fault and step words, with its paragraph.

    Sentences naming the fault description verbatim count three times as
    much. Returns None when no sentence mentions the fault at all.
    """
    fault_words = set(fault_terms(fault))
    phrase = terms(fault.description)
    generic = [w for w in phrase if not w.isdigit()]  # "load 2 open circuit" -> "load open circuit"
    best, best_score = None, 0.0
    for para in _PARAGRAPH_RE.split(passage.text):
        for m in _SENTENCE_RE.finditer(para):
            sent = m.group(0).strip()
            if not sent or sent.startswith("#") or sent[-1] not in ".!?":
                continue  # headings and list fragments carry no claim
            seq = terms(sent)
            fault_hit = set(seq) & fault_words
            if not fault_hit:
                continue
            score = sum(idf.get(w, 1.0) for w in fault_hit) * (1.0 + sum(idf.get(w, 1.0) for w in set(seq) & step_words))
            if _contains_phrase(seq, phrase) or _contains_phrase(seq, generic):
                score *= 3.0
            if score > best_score:
                best, best_score = (sent, para), score
    return best


def compose_report(fault: FaultType | str, kb: KnowledgeBase, k: int = 3,
                   severity_rule: Optional[SeverityRule] = None) -> MaintenanceReport:
    """Fill the three analysis steps from retrieved passages and list every cited passage in step 4."""
    fault = get_fault(fault)
    rule = severity_rule or SeverityRule()
    refs: dict[str, Reference] = {}
    steps = []
    kb.weights()  # refit the vectorizer so the idf below is current
    idf = getattr(kb.vectorizer, "idf", {})
    for n, title in enumerate(STEP_TITLES, 1):
        claims: list[Claim] = []
        seen: set[str] = set()
        hits = kb.query(step_query(fault, n), k) if len(kb) else []
        for h in hits:
            if h.score <= 0:
                continue
            found = best_sentence(h.passage, fault, set(terms(STEP_VOCABULARY[n - 1])), idf)
            if found is None or found[0] in seen:
                continue
            sent, para = found
            seen.add(sent)
            loc = h.passage.locator
            if loc not in refs:
                refs[loc] = Reference(len(refs) + 1, loc, kb.docs[h.passage.doc_id].title)
            claims.append(Claim(sent, (refs[loc].index,), para))
        steps.append(ReportStep(n, title, tuple(claims)))
    severity = rule.rate(fault, [c.context or c.text for c in steps[1].claims])
    return MaintenanceReport(fault, tuple(steps), severity, tuple(refs.values()))


_REF_LINE = re.compile(r"^\s*\[(\d+)\]\s+(\S+)")


def verify_citations(report: MaintenanceReport | str, kb: KnowledgeBase) -> tuple[int, int, list[str]]:
    """(resolvable, total, unresolved locators) over the references a report cites.

    A citation resolves when its locator names an ingested document and the
    exact span of one of its passages, and the inline index is listed.
    """
    if isinstance(report, MaintenanceReport):
        listed = {r.index: r.locator for r in report.references}
        cited = report.citations()
    else:
        listed, cited, in_refs = {}, [], False
        for line in report.splitlines():
            if line.startswith("Step 4"):
                in_refs = True
                continue
            m = _REF_LINE.match(line)
            if in_refs and m:
                listed[int(m.group(1))] = m.group(2)
            elif not in_refs:
                cited += [int(x) for x in re.findall(r"\[(\d+)\]", line)]
    locators = [listed.get(c, f"[{c}]") for c in cited] if cited else list(listed.values())
    unresolved = [loc for loc in locators if kb.resolve(loc) is None]
    return len(locators) - len(unresolved), len(locators), unresolved
