"""Report section selection."""

import re

from ..errors import EmptyDocumentError

SELECTED_SECTIONS = ("impression", "findings", "conclusion", "recommendation")

_SELECTED = re.compile(
    r"\b(impressions?|findings?|conclusions?|recommendations?)[ \t]*:", re.IGNORECASE
)
# Any other header that can close a selected section: an all-caps label
# ("COMPARISON:", "CLINICAL HISTORY:") or a label opening a line.
_ANY_HEADER = re.compile(
    r"\b[A-Z][A-Z /&-]*[A-Z][ \t]*:|^[ \t]*[A-Za-z][A-Za-z /&-]{0,40}[ \t]*:", re.MULTILINE
)
_FINAL_REPORT = re.compile(r"^[ \t]*final report\b[ \t]*:?", re.IGNORECASE | re.MULTILINE)


def _clean(body):
    return " ".join(body.split())


def extract_sections(raw_text):
    """Return the text the labeler and the text encoder should see.

    Bodies of IMPRESSION / FINDINGS / CONCLUSION / RECOMMENDATION headers are
    joined in document order.  Without any of them, everything after a
    ``FINAL REPORT`` line is used, and failing that the whole report.

    >>> extract_sections("FINDINGS: clear lungs. IMPRESSION: no edema.")
    'clear lungs. no edema.'
    """
    if raw_text is None or not raw_text.strip():
        raise EmptyDocumentError("report text is empty")

    selected = list(_SELECTED.finditer(raw_text))
    if selected:
        boundaries = sorted({m.start() for m in _ANY_HEADER.finditer(raw_text)}
                            | {m.start() for m in selected})
        bodies = []
        for m in selected:
            end = next((b for b in boundaries if b >= m.end()), len(raw_text))
            body = _clean(raw_text[m.end():end])
            if body:
                bodies.append(body)
        return " ".join(bodies)

    final = _FINAL_REPORT.search(raw_text)
    if final:
        return _clean(raw_text[final.end():])
    return _clean(raw_text)
