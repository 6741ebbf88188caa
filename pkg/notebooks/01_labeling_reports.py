# %% [markdown]
# Labeling free-text reports
#
# Reports are reduced to their impression/findings sections, tokenized,
# scanned for negation cues and matched against the keyword ruleset.

# %%
from edemajoint.textlab import (ReportDocument, default_ruleset, detect_negation, label_corpus,
                                label_text, rules_by_level, tokenize)

rules = default_ruleset()
for level, group in sorted(rules_by_level(rules).items()):
    print(level, [" ".join(r.phrase) for r in group][:4], "...")

# %%
report = """INDICATION: dyspnea, history of CHF.
COMPARISON: prior radiograph.
FINDINGS: Heart size is enlarged. No pleural effusion, mild pulmonary vascular congestion.
IMPRESSION: Mild pulmonary vascular congestion without interstitial edema."""

doc = ReportDocument.from_text("r1", report)
print(doc.selected_text)

# %%
# the comma closes the first scope; "without" negates "interstitial edema"
words = [t.text for t in doc.tokens]
negated = detect_negation(words)
print([w + ("*" if i in negated else "") for i, w in enumerate(words)])

# %%
result = label_text(report)
print(result.level, [(" ".join(e.rule.phrase), e.negated) for e in result.evidence])

# %%
# worst finding wins when several keywords fire
print(label_text("IMPRESSION: cephalization and patchy opacities").level)
print(label_text("IMPRESSION: pulmonary edema").level)  # no severity qualifier

# %%
corpus = label_corpus([
    ("a", "IMPRESSION: No acute cardiopulmonary process."),
    ("b", "FINDINGS: Kerley B lines."),
    ("c", ""),
])
print(corpus.summary)
print(tokenize("Kerley-B lines"))
