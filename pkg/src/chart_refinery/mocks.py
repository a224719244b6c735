"""Deterministic offline stand-ins for the model backends.

Any backend config whose endpoint_url starts with ``mock:`` is routed here
instead of HTTP, so the whole pipeline (and its test suite) runs with no
model weights and no network. Every function is a pure map from its inputs,
keyed by content hashes, so repeated runs produce identical sessions.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

MOCK_SCHEME = "mock:"


def is_mock(endpoint_url: str) -> bool:
    return endpoint_url.startswith(MOCK_SCHEME)


def _hash_int(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# -- de-render fixtures -------------------------------------------------------

_FIXTURE_SCRIPTS = [
    """\
import matplotlib.pyplot as plt

months = ["Jan", "Feb", "Mar", "Apr", "May", "Jun"]
revenue = [12.4, 15.1, 14.2, 18.9, 17.3, 21.0]

fig, ax = plt.subplots(figsize=(6, 4))
ax.bar(months, revenue)
ax.set_title("Revenue")
""",
    """\
import matplotlib.pyplot as plt

years = [2016, 2017, 2018, 2019, 2020, 2021, 2022]
temp = [14.8, 14.9, 15.0, 15.2, 15.3, 15.2, 15.6]

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(years, temp, marker="o")
ax.set_ylabel("temp")
""",
    """\
import matplotlib.pyplot as plt

x = [1.2, 2.1, 2.9, 3.4, 4.8, 5.5, 6.1, 7.0, 7.7, 8.3]
y = [2.3, 2.9, 3.1, 4.4, 4.1, 5.8, 5.2, 6.9, 7.1, 8.4]

fig, ax = plt.subplots(figsize=(5, 5))
ax.scatter(x, y, c="red")
""",
    """\
import matplotlib.pyplot as plt

share = [42, 23, 18, 10, 7]
names = ["A", "B", "C", "D", "E"]

fig, ax = plt.subplots(figsize=(5, 5))
ax.pie(share, labels=names)
ax.set_title("Market share")
""",
    """\
import matplotlib.pyplot as plt
import numpy as np

labels = ["Q1", "Q2", "Q3", "Q4"]
old = [3.1, 3.4, 2.9, 4.0]
new = [3.6, 3.2, 3.8, 4.4]
pos = np.arange(len(labels))

fig, ax = plt.subplots(figsize=(6, 4))
ax.bar(pos - 0.2, old, width=0.4, label="2023")
ax.bar(pos + 0.2, new, width=0.4, label="2024")
ax.set_xticks(pos)
ax.set_xticklabels(labels)
ax.legend()
""",
    """\
import matplotlib.pyplot as plt

values = [3, 4, 4, 5, 5, 5, 6, 6, 6, 6, 7, 7, 7, 8, 8, 9, 10, 11, 12, 14]

fig, ax = plt.subplots(figsize=(6, 4))
ax.hist(values, bins=8)
ax.set_xlabel("value")
""",
]


def fixture_script_for_hash(image_sha256: str) -> str:
    """Deterministic plotting script keyed by image content hash."""
    return _FIXTURE_SCRIPTS[_hash_int("derender", image_sha256) % len(_FIXTURE_SCRIPTS)]


def derender_completion(image_sha256: str) -> str:
    """Mimic a chart-to-code model reply: prose around a fenced script."""
    script = fixture_script_for_hash(image_sha256)
    return f"Here is the reconstructed plotting script:\n```python\n{script}```\n"


# -- critique -----------------------------------------------------------------

_CANNED_CRITIQUES = [
    "Y-axis lacks a unit label, leaving values ambiguous",
    "Color palette is not colorblind-safe",
    "Legend overlaps the plot area and hides data points",
    "Axis tick labels are too small to read at publication size",
    "Gridlines are missing, making values hard to compare",
    "Chart title is generic and does not describe the data",
    "X-axis years are shown as raw numbers without formatting",
    "Low contrast between marks and the background",
    "Figure resolution is too low for print output",
    "Categories are not ordered meaningfully",
    "Pie slices are too numerous to compare accurately",
    "Data labels are absent so exact values cannot be read",
]

_CRITIQUES_PER_ROUND = 5


def critique_completion(prompt: str) -> str:
    """Return five deterministic `#` lines chosen by prompt content hash."""
    rng = np.random.default_rng(_hash_int("critique", prompt))
    picks = rng.choice(len(_CANNED_CRITIQUES), size=_CRITIQUES_PER_ROUND, replace=False)
    return "\n".join(f"# {_CANNED_CRITIQUES[i]}" for i in sorted(picks))


# -- edit ----------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_NUMBERED_RE = re.compile(r"^\s*\d+\.\s+(.*\S)\s*$", re.MULTILINE)


def edit_completion(prompt: str) -> str:
    """Apply requested changes as a benign, always-renderable script edit.

    Extracts the base script and the numbered change list from the edit
    prompt, then appends a change log plus a visible title marker so the
    re-rendered image differs from the original.
    """
    fence = _FENCE_RE.search(prompt)
    base = fence.group(1) if fence else prompt
    changes = _NUMBERED_RE.findall(prompt.split("```", 1)[0])
    log = "\n".join(f"# applied: {text}" for text in changes)
    edited = (
        f"{base.rstrip()}\n\n{log}\n"
        "import matplotlib.pyplot as plt\n"
        f'plt.gcf().suptitle("refined (+{len(changes)} changes)", fontsize=9)\n'
    )
    return f"```python\n{edited}```"


# -- embeddings -----------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _token_vector(token: str, dims: int) -> np.ndarray:
    rng = np.random.default_rng(_hash_int("token", token))
    vec = rng.standard_normal(dims)
    vec[0] = 0.0  # dimension 0 is reserved for the shared component
    return vec / np.linalg.norm(vec)


def embed_texts(texts: list[str], dims: int = 1536) -> list[list[float]]:
    """Deterministic pseudo-embeddings with token-overlap locality.

    Each text maps to (g + u)/sqrt(2) where g is a fixed shared direction and
    u is the normalized sum of near-orthogonal per-token basis vectors, so
    cos(vA, vB) = (1 + uA.uB)/2. Texts whose token sets overlap by >= 60%
    (Jaccard) therefore land at cosine >= 0.8, while disjoint texts sit near
    the 0.5 baseline; the construction is a rigid motion of the token-sum
    geometry, so clustering structure is preserved exactly.
    """
    if dims < 2:
        raise ValueError("mock embedder needs dims >= 2")
    out = []
    for text in texts:
        tokens = sorted(set(_TOKEN_RE.findall(text.lower())))
        if tokens:
            u = np.sum([_token_vector(t, dims) for t in tokens], axis=0)
        else:
            u = _token_vector(f"empty::{text}", dims)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            u = _token_vector(f"zero::{text}", dims)
            norm = 1.0
        u = u / norm
        vec = u / np.sqrt(2.0)
        vec[0] = 1.0 / np.sqrt(2.0)
        out.append(vec.tolist())
    return out


# -- synthetic oracle corpora ----------------------------------------------------

def synthetic_blob_matrix(
    n_clusters: int = 10,
    per_cluster: int = 100,
    dims: int = 1536,
    sigma: float = 0.1,
    center_distance: float = 10.0,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs with known labels for clustering oracles.

    Centers are scaled standard basis vectors, pairwise center distance
    ``center_distance * sqrt(2)`` >= ``center_distance``.
    """
    if n_clusters > dims:
        raise ValueError("need dims >= n_clusters for basis-vector centers")
    rng = np.random.default_rng(seed)
    values = np.empty((n_clusters * per_cluster, dims))
    labels = np.repeat(np.arange(n_clusters), per_cluster)
    for c in range(n_clusters):
        center = np.zeros(dims)
        center[c] = center_distance
        block = slice(c * per_cluster, (c + 1) * per_cluster)
        values[block] = center + rng.standard_normal((per_cluster, dims)) * sigma
    perm = rng.permutation(len(values))
    return values[perm], labels[perm]


_TOPIC_STEMS = [
    ("axis", ["axis", "tick", "label", "scale", "unit", "baseline", "zero", "truncated", "logarithmic", "format"]),
    ("color", ["color", "palette", "colorblind", "contrast", "hue", "saturation", "safe", "background", "marks", "accessibility"]),
    ("legend", ["legend", "overlap", "placement", "entries", "order", "outside", "plot", "area", "series", "duplicate"]),
    ("font", ["font", "size", "readability", "small", "text", "typeface", "bold", "title", "caption", "legibility"]),
    ("resolution", ["resolution", "dpi", "pixelated", "raster", "export", "print", "blurry", "image", "quality", "vector"]),
    ("gridline", ["gridline", "grid", "reference", "lines", "clutter", "minor", "major", "spacing", "horizontal", "density"]),
    ("annotation", ["annotation", "callout", "highlight", "arrow", "note", "emphasis", "outlier", "marking", "context", "explain"]),
    ("encoding", ["encoding", "chart", "type", "bar", "line", "pie", "trend", "comparison", "switch", "representation"]),
    ("spacing", ["spacing", "margin", "padding", "whitespace", "crowded", "layout", "aspect", "ratio", "cramped", "balance"]),
    ("data", ["data", "values", "precision", "rounding", "missing", "source", "attribution", "units", "table", "exact"]),
]


def synthetic_recommendation_texts(
    n_topics: int = 10,
    per_topic: int = 100,
    seed: int = 0,
) -> tuple[list[str], np.ndarray]:
    """Texts whose mock embeddings form one tight blob per topic.

    Every text keeps its topic's full stem vocabulary plus two unique filler
    tokens, so intra-topic token overlap stays high while topics stay
    disjoint. Returns (texts, topic labels).
    """
    if n_topics > len(_TOPIC_STEMS):
        raise ValueError(f"at most {len(_TOPIC_STEMS)} topics available")
    texts = []
    labels = []
    for topic_idx in range(n_topics):
        name, stems = _TOPIC_STEMS[topic_idx]
        for i in range(per_topic):
            filler = f"{name}x{i} v{seed}n{i}"
            texts.append(f"Fix {' '.join(stems)} issue {filler}")
            labels.append(topic_idx)
    return texts, np.array(labels)
