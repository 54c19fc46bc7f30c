"""Extraction and normalization of New Mexico legal citations.

The regex extractor is the deterministic offline path; the LLM extractor
wraps a chat client behind the same Citation shape and falls back to the
regex path whenever the reply cannot be parsed or the transport fails.

Key formats: statutes "NMSA 41-5-1", cases "SMITH V. SOUTH (1955)" or a bare
neutral citation "1994-NMSC-125", constitution clauses "NM CONST ART IV § 22",
court rules "RULE 11-702".
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

logger = logging.getLogger(__name__)

CITATION_KINDS = ("nmsa_statute", "nm_case", "constitution_clause", "rule", "other")

LLM_EXTRACTOR_SYSTEM_PROMPT = (
    "You are an expert legal document analyzer. Your job is to find all "
    "references to the Constitution, Case Law, or Statutes in the text."
)

# chapter-article-section numbers like 41-5-1 or 32A-4-28.1
_SEC = r"\d{1,3}[A-Za-z]?-\d{1,3}[A-Za-z]?-\d{1,4}(?:\.\d+)?"
_SEC_RE = re.compile(_SEC)

# statute anchors; the trailing tail picks up ", 41-5-13 and 41-5-15" lists
_SEC_TAIL = rf"(?:\s*(?:,|;|and|or|to|through)\s*(?:§§?\s*)?{_SEC})*"
_NMSA_PATTERNS = [
    re.compile(rf"NMSA(?:\s+1978)?\s*,?\s*(?:§§?\s*)?({_SEC}{_SEC_TAIL})"),
    re.compile(rf"Sections?\s+({_SEC}{_SEC_TAIL})\s+NMSA", re.IGNORECASE),
    re.compile(rf"§§?\s*({_SEC}{_SEC_TAIL})"),
]
# "Chapter 50, Article 17, Section 3" is statute structure, not a constitution clause
_CHAPTER_RE = re.compile(
    r"Chapter\s+(\d{1,3}[A-Za-z]?),?\s+Article\s+(\d{1,3}[A-Za-z]?),?\s+Section\s+(\d{1,4}(?:\.\d+)?)",
    re.IGNORECASE,
)

# "Smith v. South, 1955" / "CERVANTES v. FORBIS (1964)" / "Gomez v. Chua, 1994-NMSC-125"
_NAME = r"[A-Z][\w'&.-]*(?:[,.]?\s+(?:[A-Z][\w'&.-]*|of|the|ex|rel\.?|de|la|Inc\.?|Co\.?|Corp\.?|Ltd\.?|LLC))*"
_CASE_RE = re.compile(
    rf"({_NAME})\s+v\.?\s+({_NAME})\s*[,(]\s*(\d{{4}})(?:-NM(?:SC|CA)-\d+)?\)?",
)
_NEUTRAL_RE = re.compile(r"\b(\d{4})-(NMSC|NMCA)-(\d{1,4})\b")

_CONST_PATTERNS = [
    re.compile(
        r"N\.?\s?M\.?\s+Const\.?,?\s+art(?:icle|\.)?\s+([IVXLCDM]+|\d+)\s*,?\s*§\s*(\d+[A-Za-z]?)",
        re.IGNORECASE,
    ),
    re.compile(
        r"Article\s+([IVXLCDM]+|\d+)(?:\s*[-–—]+\s*[\w' ]{0,60}?)?\s*[-–—,]*\s*"
        r"(?:§|Section)\s*(\d+[A-Za-z]?)",
    ),
]

_RULE_RE = re.compile(r"Rule\s+(\d{1,2}-\d{1,4}(?:\([A-Za-z0-9]+\))?)(?:\s+NMRA)?", re.IGNORECASE)

# sentence-leading words that the case-name regex must not absorb
_NAME_STOPWORDS = frozenset(
    "in the see at on from under of as and but or to a an by for with that "
    "this however also was is were citing cf compare accord".split()
)

_ROMAN = {"I": 1, "V": 5, "X": 10, "L": 50, "C": 100, "D": 500, "M": 1000}


@dataclass
class Citation:
    raw: str
    kind: str
    key: str
    resolved_node: str | None = None
    source: str = "regex"  # "regex" or "llm"

    def __post_init__(self):
        if not self.key:
            raise ValueError("citation key must be non-empty")


def _to_roman_upper(article: str) -> str:
    article = article.upper()
    if all(ch in _ROMAN for ch in article):
        return article
    try:
        n = int(article)
    except ValueError:
        return article
    out = []
    for value, sym in ((1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"),
                       (90, "XC"), (50, "L"), (40, "XL"), (10, "X"), (9, "IX"),
                       (5, "V"), (4, "IV"), (1, "I")):
        while n >= value:
            out.append(sym)
            n -= value
    return "".join(out)


def normalize_case_name(left: str, right: str, year: str) -> str:
    left = re.sub(r"\s+", " ", left).strip().strip(",")
    words = left.split()
    while words and words[0].lower().strip(".,") in _NAME_STOPWORDS:
        words.pop(0)
    left = " ".join(words) or left
    right = re.sub(r"\s+", " ", right).strip().strip(",")
    return f"{left.upper()} V. {right.upper()} ({year})"


def statute_key(section: str) -> str:
    return f"NMSA {section.upper()}"


def constitution_key(article: str, section: str) -> str:
    return f"NM CONST ART {_to_roman_upper(article)} § {section.upper()}"


def extract_citations_regex(text: str) -> list[Citation]:
    """Find all statute, case, constitution, and rule citations in `text`.

    Matches are deduplicated by normalized key in order of first occurrence.
    """
    found: list[tuple[int, Citation]] = []
    claimed: list[tuple[int, int]] = []  # spans already consumed by a match

    def claim(start: int, end: int) -> bool:
        for s, e in claimed:
            if start < e and end > s:
                return False
        claimed.append((start, end))
        return True

    # chapter-article-section is statute structure; claim it before the
    # constitution patterns can read its "Article ..., Section ..." tail
    for m in _CHAPTER_RE.finditer(text):
        if claim(m.start(), m.end()):
            found.append((m.start(), Citation(
                raw=m.group(0), kind="nmsa_statute",
                key=statute_key(f"{m.group(1)}-{m.group(2)}-{m.group(3)}"),
            )))

    for pat in _CONST_PATTERNS:
        for m in pat.finditer(text):
            if claim(m.start(), m.end()):
                found.append((m.start(), Citation(
                    raw=m.group(0), kind="constitution_clause",
                    key=constitution_key(m.group(1), m.group(2)),
                )))

    for m in _CASE_RE.finditer(text):
        if claim(m.start(), m.end()):
            found.append((m.start(), Citation(
                raw=m.group(0), kind="nm_case",
                key=normalize_case_name(m.group(1), m.group(2), m.group(3)),
            )))

    for m in _NEUTRAL_RE.finditer(text):
        if claim(m.start(), m.end()):
            found.append((m.start(), Citation(
                raw=m.group(0), kind="nm_case",
                key=f"{m.group(1)}-{m.group(2)}-{m.group(3)}",
            )))

    for m in _RULE_RE.finditer(text):
        if claim(m.start(), m.end()):
            found.append((m.start(), Citation(
                raw=m.group(0), kind="rule", key=f"RULE {m.group(1).upper()}",
            )))

    for pat in _NMSA_PATTERNS:
        for m in pat.finditer(text):
            if not claim(m.start(), m.end()):
                continue
            for sec in _SEC_RE.findall(m.group(1)):
                found.append((m.start(), Citation(
                    raw=m.group(0), kind="nmsa_statute", key=statute_key(sec),
                )))

    found.sort(key=lambda pair: pair[0])
    seen: set[str] = set()
    out: list[Citation] = []
    for _, cit in found:
        if cit.key not in seen:
            seen.add(cit.key)
            out.append(cit)
    return out


_ENUM_LINE = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s*(.+)$")


def extract_citations_llm(text: str, chat) -> list[Citation]:
    """Extract citations through a chat client's enumerated-list reply.

    Each list item is normalized with the regex extractor; items that do not
    contain a recognizable citation are kept as kind "other". On transport
    failure or an unparseable reply the regex extractor runs on the original
    text instead, and every citation carries its provenance in `source`.
    """
    try:
        reply = chat.complete(LLM_EXTRACTOR_SYSTEM_PROMPT, text)
    except Exception as exc:  # noqa: BLE001 - degrade to the offline extractor
        logger.warning("LLM citation extraction failed, using regex fallback: %s", exc)
        return extract_citations_regex(text)

    items = [m.group(1).strip() for m in
             (_ENUM_LINE.match(line) for line in reply.splitlines()) if m]
    if not items:
        logger.warning("LLM reply had no enumerated items, using regex fallback")
        return extract_citations_regex(text)

    seen: set[str] = set()
    out: list[Citation] = []
    for item in items:
        parsed = extract_citations_regex(item)
        if parsed:
            for cit in parsed:
                if cit.key not in seen:
                    seen.add(cit.key)
                    out.append(Citation(raw=item, kind=cit.kind, key=cit.key, source="llm"))
        else:
            key = re.sub(r"\s+", " ", item).strip().upper()
            if key and key not in seen:
                seen.add(key)
                out.append(Citation(raw=item, kind="other", key=key, source="llm"))
    return out
