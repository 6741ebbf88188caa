"""Image and text encoders, the two severity classifiers, and saliency maps.

The image stream is a small residual CNN; the text stream is a post-norm
self-attention encoder pooled at the BOS position.  Both end in an affine
map into a shared ``embed_dim``-dimensional space, and each has its own
``embed_dim -> 4`` softmax classifier.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError
from .gradnet import ParameterStore, tensor as T
from .rng import Rng

N_CLASSES = 4
PAD, BOS, EOS, UNK = 0, 1, 2, 3


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    image_channels: tuple = (8, 16, 32)
    stem_stride: int = 2
    embed_dim: int = 64
    vocab_size: int = 128
    text_width: int = 32
    text_layers: int = 2
    text_heads: int = 2
    text_ffn: int = 64
    max_seq_len: int = 64

    def __post_init__(self):
        object.__setattr__(self, "image_channels", tuple(int(c) for c in self.image_channels))
        if self.text_width % self.text_heads:
            raise ParameterError("text_width must be divisible by text_heads")
        if not self.image_channels:
            raise ParameterError("image_channels must name at least one residual block")

    def to_dict(self):
        d = asdict(self)
        d["image_channels"] = list(self.image_channels)
        return d


@dataclass
class AttentionRecord:
    """Attention weights of one sequence: one (heads, T, T) array per block."""

    blocks: list
    truncated: bool = False
    pooled: np.ndarray = field(init=False)

    def __post_init__(self):
        # BOS query of the final block, averaged over heads
        self.pooled = self.blocks[-1][:, 0, :].mean(axis=0)


# ------------------------------------------------------------------ parameters

def init_params(model, seed=0, gain=1.0):
    """Uniform(+-gain/sqrt(fan_in)) initialisation; layer-norm gains start at 1."""
    rng = Rng(seed, stream=0x1A17)
    store = ParameterStore(model)

    def uni(shape, fan_in):
        bound = gain / np.sqrt(fan_in)
        return (2.0 * rng.uniform(shape) - 1.0) * bound

    def conv(name, c_in, c_out, k, owner="image_encoder"):
        store.add(f"{name}.w", uni((c_out, c_in, k, k), c_in * k * k), owner)
        store.add(f"{name}.b", uni((c_out,), c_in * k * k), owner)

    def lin(name, n_in, n_out, owner, bias=True):
        store.add(f"{name}.w", uni((n_in, n_out), n_in), owner)
        if bias:
            store.add(f"{name}.b", uni((n_out,), n_in), owner)

    chans = model.image_channels
    conv("img.stem", 1, chans[0], 3)
    c_in = chans[0]
    for k, c in enumerate(chans):
        conv(f"img.block{k}.conv1", c_in, c, 3)
        conv(f"img.block{k}.conv2", c, c, 3)
        if k > 0 or c != c_in:
            conv(f"img.block{k}.proj", c_in, c, 1)
        c_in = c
    lin("img.out", c_in, model.embed_dim, "image_encoder")

    w = model.text_width
    store.add("txt.tok_embed", uni((model.vocab_size, w), w), "text_encoder")
    store.add("txt.pos_embed", uni((model.max_seq_len, w), w), "text_encoder")
    for layer in range(model.text_layers):
        p = f"txt.block{layer}"
        for proj in ("q", "k", "v", "o"):
            # a key bias shifts every score of a query row equally: softmax ignores it
            lin(f"{p}.{proj}", w, w, "text_encoder", bias=proj != "k")
        store.add(f"{p}.ln1.g", np.ones(w), "text_encoder")
        store.add(f"{p}.ln1.b", np.zeros(w), "text_encoder")
        lin(f"{p}.ffn1", w, model.text_ffn, "text_encoder")
        lin(f"{p}.ffn2", model.text_ffn, w, "text_encoder")
        store.add(f"{p}.ln2.g", np.ones(w), "text_encoder")
        store.add(f"{p}.ln2.b", np.zeros(w), "text_encoder")
    lin("txt.out", w, model.embed_dim, "text_encoder")

    lin("cls_img", model.embed_dim, N_CLASSES, "image_classifier")
    lin("cls_txt", model.embed_dim, N_CLASSES, "text_classifier")
    return store


def _const(params):
    return params.tensors(requires_grad=False)


# --------------------------------------------------------------- image stream

def image_forward(P, model, images):
    """(B, H, W) images -> ((B, d) embeddings, final residual-block maps)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[1:] != (model.image_size, model.image_size):
        raise ShapeError(
            f"image batch {images.shape} does not match model image size {model.image_size}")
    x = T.relu(T.conv2d(images[:, None], P["img.stem.w"], P["img.stem.b"],
                        stride=model.stem_stride))
    for k in range(len(model.image_channels)):
        p = f"img.block{k}"
        stride = 1 if k == 0 else 2
        h = T.relu(T.conv2d(x, P[f"{p}.conv1.w"], P[f"{p}.conv1.b"], stride=stride))
        h = T.conv2d(h, P[f"{p}.conv2.w"], P[f"{p}.conv2.b"])
        if f"{p}.proj.w" in P:
            x = T.conv2d(x, P[f"{p}.proj.w"], P[f"{p}.proj.b"], stride=stride, padding=0)
        x = T.relu(h + x)
    emb = T.affine(T.global_avg_pool(x), P["img.out.w"], P["img.out.b"])
    return emb, x


def encode_image(image, params):
    """Joint-space embedding of a single (H, W) image."""
    emb, _ = image_forward(_const(params), params.model, np.asarray(image)[None])
    return emb.data[0]


def encode_images(images, params):
    emb, _ = image_forward(_const(params), params.model, images)
    return emb.data


# ---------------------------------------------------------------- text stream

def pad_tokens(sequences, max_len):
    """Right-pad id sequences into an array; longer inputs are cut to ``max_len``."""
    seqs = [np.asarray(s, dtype=np.int64) for s in sequences]
    if any(len(s) == 0 for s in seqs):
        raise ShapeError("token sequence must contain at least the BOS marker")
    truncated = [len(s) > max_len for s in seqs]
    seqs = [s[:max_len] for s in seqs]
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = True
    return ids, mask, truncated


def text_forward(P, model, sequences):
    """Token-id sequences -> ((B, d) embeddings, per-block attention arrays, truncation flags)."""
    ids, mask, truncated = pad_tokens(sequences, model.max_seq_len)
    if ids.max() >= model.vocab_size:
        raise ShapeError(f"token id {ids.max()} outside vocabulary of {model.vocab_size}")
    b, t = ids.shape
    w, nh = model.text_width, model.text_heads
    dk = w // nh
    key_mask = mask[:, None, None, :]
    x = T.embedding(ids, P["txt.tok_embed"]) + P["txt.pos_embed"][:t]
    attn = []
    for layer in range(model.text_layers):
        p = f"txt.block{layer}"

        def heads(name):
            w_ = P[f"{p}.{name}.w"]
            y = T.affine(x, w_, P[f"{p}.{name}.b"]) if f"{p}.{name}.b" in P else x @ w_
            return y.reshape(b, t, nh, dk).transpose(0, 2, 1, 3)

        q, k, v = heads("q"), heads("k"), heads("v")
        scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dk))
        a = T.softmax(scores, axis=-1, mask=key_mask)
        attn.append(a.data)
        ctx = (a @ v).transpose(0, 2, 1, 3).reshape(b, t, w)
        x = T.layer_norm(x + T.affine(ctx, P[f"{p}.o.w"], P[f"{p}.o.b"]),
                         P[f"{p}.ln1.g"], P[f"{p}.ln1.b"])
        f = T.affine(T.relu(T.affine(x, P[f"{p}.ffn1.w"], P[f"{p}.ffn1.b"])),
                     P[f"{p}.ffn2.w"], P[f"{p}.ffn2.b"])
        x = T.layer_norm(x + f, P[f"{p}.ln2.g"], P[f"{p}.ln2.b"])
    emb = T.affine(x[:, 0, :], P["txt.out.w"], P["txt.out.b"])
    return emb, attn, truncated


def encode_text(tokens, params):
    """Embedding and attention record for one token-id sequence."""
    model = params.model
    emb, attn, truncated = text_forward(_const(params), model, [tokens])
    n = min(len(tokens), model.max_seq_len)
    record = AttentionRecord([a[0][:, :n, :n] for a in attn], truncated=truncated[0])
    return emb.data[0], record


def encode_texts(sequences, params):
    emb, _, _ = text_forward(_const(params), params.model, sequences)
    return emb.data


# ---------------------------------------------------------------- classifiers

_CLASSIFIER = {"image": "cls_img", "text": "cls_txt"}


def classifier_logits(P, emb, stream):
    name = _CLASSIFIER[stream]
    return T.affine(emb, P[f"{name}.w"], P[f"{name}.b"])


def classify(embedding, params, stream="image"):
    """Severity distribution from a joint-space embedding (or a batch of them)."""
    if stream not in _CLASSIFIER:
        raise ParameterError(f"stream must be 'image' or 'text', got {stream!r}")
    embedding = np.asarray(embedding, dtype=np.float64)
    if embedding.shape[-1] != params.model.embed_dim:
        raise ShapeError(
            f"embedding length {embedding.shape[-1]} vs classifier input {params.model.embed_dim}")
    logits = classifier_logits(_const(params), T.Tensor(embedding), stream)
    return T.softmax(logits, axis=-1).data


# ------------------------------------------------------------------- saliency

def gradcam_map(activations, gradients):
    """Grad-CAM from (C, h, w) activation maps and their score gradients.

    Channel weights are the spatial means of the gradients; the weighted sum
    is rectified and min-max scaled to [0, 1].  A map that is zero
    everywhere after rectification stays zero.
    """
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    weights = gradients.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, activations, axes=1), 0.0)
    lo, hi = cam.min(), cam.max()
    if hi <= 0:
        return np.zeros_like(cam)
    if hi == lo:
        return np.ones_like(cam)
    return (cam - lo) / (hi - lo)


def upsample_nearest(grid, height, width):
    h, w = grid.shape
    rows = (np.arange(height) * h) // height
    cols = (np.arange(width) * w) // width
    return grid[rows][:, cols]


def gradcam(image, params, class_index):
    """Heatmap in [0, 1] of regions driving the image classifier's class score."""
    if class_index not in range(N_CLASSES):
        raise ParameterError(f"class_index must be in 0..3, got {class_index!r}")
    P = params.tensors(requires_grad=True)
    image = np.asarray(image, dtype=np.float64)
    emb, maps = image_forward(P, params.model, image[None])
    score = classifier_logits(P, emb, "image")[0, class_index]
    score.backward()
    cam = gradcam_map(maps.data[0], maps.grad[0])
    return upsample_nearest(cam, *image.shape)


def text_saliency(tokens, params):
    """Final-block attention of the BOS query, averaged over heads."""
    _, record = encode_text(tokens, params)
    return record.pooled


# --------------------------------------------------------------------- export

def pgm_bytes(heatmap):
    """Binary PGM (P5, maxval 255) of a [0, 1] grid."""
    grid = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    pixels = np.rint(grid * 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_pgm(data):
    """Parse bytes written by :func:`pgm_bytes` into a uint8 array."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise ValueError("not a binary PGM with maxval 255")
    w, h = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != w * h:
        raise ValueError("PGM pixel payload has the wrong size")
    return pixels.reshape(h, w)


def saliency_json(words, weights):
    return json.dumps([{"token": t, "weight": float(w)} for t, w in zip(words, weights)],
                      indent=1)
