"""Forward-scope negation detection in the NegEx style."""

NEGATION_TRIGGERS = (
    ("no",),
    ("without",),
    ("free", "of"),
    ("absence", "of"),
    ("resolved",),
    ("negative", "for"),
    ("clear", "of"),
    ("no", "evidence", "of"),
)
SCOPE_TERMINATORS = frozenset({".", ",", ";", "but", "however", "although"})
SCOPE_WINDOW = 6

# longest trigger first so "no evidence of" beats "no"
_TRIGGERS_BY_LENGTH = sorted(NEGATION_TRIGGERS, key=len, reverse=True)


def match_trigger(tokens, i):
    """Length of the longest negation trigger starting at ``tokens[i]`` (0 if none)."""
    for trig in _TRIGGERS_BY_LENGTH:
        if tuple(tokens[i:i + len(trig)]) == trig:
            return len(trig)
    return 0


def detect_negation(tokens, window=SCOPE_WINDOW, terminators=SCOPE_TERMINATORS):
    """Indices of tokens that fall inside a negation scope.

    Each trigger negates up to ``window`` following tokens.  A terminator
    closes the scope early and is not itself negated.
    """
    tokens = list(tokens)
    negated = set()
    i = 0
    while i < len(tokens):
        n = match_trigger(tokens, i)
        if not n:
            i += 1
            continue
        for k in range(i + n, min(i + n + window, len(tokens))):
            if tokens[k] in terminators:
                break
            negated.add(k)
        i += n
    return negated
