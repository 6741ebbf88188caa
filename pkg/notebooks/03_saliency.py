# %% [markdown]
# Where the model looks
#
# Grad-CAM on the image stream and BOS-query attention on the text stream,
# exported as a PGM heatmap and a token-weight list.

# %%
from pathlib import Path

import numpy as np

from edemajoint.encoders import gradcam, gradcam_map, pgm_bytes, saliency_json, text_saliency
from edemajoint.synthgen import GenConfig, gen_dataset
from edemajoint.trainkit import config_from_dict, infer_image, train

# %%
# the hand case: one channel, unit gradients
print(gradcam_map(np.array([[[1.0, 2.0], [3.0, 4.0]]]), np.ones((1, 2, 2))))

# %%
data = gen_dataset(GenConfig(n_labeled=120, n_unlabeled=120, seed=4))
ckpt = train(config_from_dict({"phase1_epochs": 2, "phase2_epochs": 10, "seed": 4}), data).checkpoint

# %%
ex = next(e for e in data.labeled if e.label == 3)
probs = infer_image(ckpt, ex.image)
heat = gradcam(ex.image, ckpt.params, int(np.argmax(probs)))
print(np.round(probs, 3))
print((heat[::4, ::4] * 9).round().astype(int))

# %%
words = data.decode(ex.tokens)
weights = text_saliency(ex.tokens, ckpt.params)
for w, a in sorted(zip(words, weights), key=lambda p: -p[1])[:5]:
    print(f"{w:>14s} {a:.3f}")

# %%
out = Path("saliency_out")
out.mkdir(exist_ok=True)
(out / "heatmap.pgm").write_bytes(pgm_bytes(heat))
(out / "tokens.json").write_text(saliency_json(words, weights))
print(sorted(p.name for p in out.iterdir()))
