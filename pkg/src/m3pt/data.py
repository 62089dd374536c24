"""Synthetic corpus generation, dataset persistence, and loading.

Stands in for the proprietary POI data: each tag owns a latent concept (a
token name plus an image pattern), POIs draw gold tags, and texts/images
emit tag-correlated evidence at configurable signal strengths.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .vocab import TagVocab, TokenVocab

MAGIC = b"MPTI"
GRID_VERSION = 1

_ADJECTIVES = [
    "sunny", "ancient", "quiet", "lively", "hidden", "famous", "coastal",
    "rustic", "modern", "scenic", "cozy", "grand", "misty", "golden",
    "wild", "royal", "local", "tiny", "breezy", "stone", "green", "lake",
    "night", "spring",
]
_NOUNS = [
    "beach", "temple", "garden", "market", "museum", "cafe", "harbor",
    "trail", "tower", "bridge", "orchard", "gallery", "plaza", "springs",
    "forest", "castle", "bakery", "winery", "aquarium", "lighthouse",
    "canyon", "pagoda", "teahouse", "pier",
]
_CATEGORIES = [
    "restaurant", "park", "shop", "hotel", "landmark", "entertainment",
    "culture", "nature",
]
_DISTRACTORS = [
    "the", "and", "with", "very", "nice", "place", "visit", "great", "here",
    "good", "time", "family", "trip", "day", "view", "lovely", "stay",
    "food", "people", "friendly", "clean", "worth", "again", "around",
    "walk", "near", "open", "best", "really", "quite", "busy", "small",
    "large", "price", "ticket", "queue", "service", "staff", "weather",
    "morning", "evening", "weekend", "holiday", "photo", "crowd", "easy",
    "parking", "hours", "close", "enjoy", "relax", "fun", "kids", "tour",
    "guide", "entry", "free", "spot", "area", "street", "city", "town",
    "north", "south", "east", "west", "center", "side", "top", "bottom",
]
_TEMPLATE_WORDS = ["this", "is", "a", "of", "poi"]


@dataclass
class ImageGrid:
    grid: np.ndarray  # (G, G, C) float32
    source_id: str


@dataclass
class PoiRecord:
    poi_id: str
    name: str
    category: str
    description: str
    comments: list[str]
    images: list[ImageGrid]
    gold_tags: set[int]

    @property
    def texts(self) -> list[str]:
        return [self.name, self.category, self.description] + self.comments


@dataclass(frozen=True)
class CorpusSpec:
    poi_count: int = 500
    tag_count: int = 20
    tags_per_poi: float = 3.0
    images_per_poi: float = 4.0
    texts_per_poi: float = 6.0
    text_signal: float = 0.8
    image_signal: float = 0.8
    image_tag_coverage: float = 0.5
    noise: float = 0.2
    seed: int = 0
    G: int = 8
    C: int = 3


PROFILES = {
    "desk": CorpusSpec(),
    # shaped after the curated dataset: 6,415 POIs, 286 tags, ~4/8/16 per POI
    "mptd2": CorpusSpec(poi_count=6415, tag_count=286, tags_per_poi=4.0,
                        images_per_poi=8.0, texts_per_poi=16.0,
                        text_signal=0.9, image_signal=0.9,
                        image_tag_coverage=0.2, noise=0.3),
    # shaped after the raw dataset, scaled down ~10x: noisier, 3 tags per POI
    "mptd1": CorpusSpec(poi_count=6342, tag_count=354, tags_per_poi=3.0,
                        images_per_poi=8.0, texts_per_poi=13.0,
                        text_signal=0.7, image_signal=0.7,
                        image_tag_coverage=0.2, noise=0.5),
}


def validate_spec(spec: CorpusSpec) -> CorpusSpec:
    if spec.poi_count < 1:
        raise ValueError("poi_count must be >= 1")
    if spec.tag_count < 1:
        raise ValueError("tag_count must be >= 1")
    if spec.tags_per_poi > spec.tag_count:
        raise ValueError("tags_per_poi exceeds tag_count")
    for name in ("text_signal", "image_signal", "image_tag_coverage"):
        val = getattr(spec, name)
        if not 0.0 <= val <= 1.0:
            raise ValueError(f"{name} outside [0,1]")
    if spec.noise < 0:
        raise ValueError("noise must be >= 0")
    if spec.G < 2 or spec.C < 1:
        raise ValueError("grid shape too small")
    if spec.tag_count > len(_ADJECTIVES) * len(_NOUNS):
        raise ValueError("tag_count exceeds the name pool")
    return spec


# ----- grid files ---------------------------------------------------------

def write_grid(path, grid: np.ndarray) -> None:
    grid = np.ascontiguousarray(grid, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", GRID_VERSION, grid.shape[0], grid.shape[2]))
        fh.write(grid.tobytes())


def read_grid(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, G, C = struct.unpack("<III", blob[4:16])
    if version != GRID_VERSION:
        raise ValueError(f"{path}: unsupported grid version {version}")
    payload = np.frombuffer(blob[16:], dtype="<f4")
    if payload.size != G * G * C:
        raise ValueError(f"{path}: payload size {payload.size} != {G}*{G}*{C}")
    return payload.reshape(G, G, C).copy()


# ----- generation ---------------------------------------------------------

def make_tag_names(tag_count: int, rng: np.random.Generator) -> list[str]:
    """Unique 1- or 2-token tag names drawn from the word pools."""
    combos = [f"{a} {n}" for a in _ADJECTIVES for n in _NOUNS]
    rng.shuffle(combos)
    names: list[str] = []
    # roughly a third of tags are single-token (the bare noun)
    singles = list(_NOUNS)
    rng.shuffle(singles)
    # keep most nouns free for two-token names so large vocabularies fit
    n_single = min(tag_count // 3, len(_NOUNS) // 3)
    names.extend(singles[:n_single])
    used_words = set(names)
    for combo in combos:
        if len(names) == tag_count:
            break
        if combo.split()[1] in used_words:
            continue  # two-token tag must not collide with a single-token one
        if combo not in names:
            names.append(combo)
    if len(names) < tag_count:
        raise ValueError("could not generate enough unique tag names")
    return names


def build_token_vocab(tag_names: list[str]) -> TokenVocab:
    words = set(_TEMPLATE_WORDS) | set(_CATEGORIES) | set(_DISTRACTORS)
    for name in tag_names:
        words.update(name.split())
    return TokenVocab.build(words)


def _tag_patterns(spec: CorpusSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, 1.0, size=(spec.tag_count, spec.G, spec.G, spec.C))


def _gen_poi(spec: CorpusSpec, poi_idx: int, tag_names: list[str],
             patterns: np.ndarray, seed_root: int) -> PoiRecord:
    rng = np.random.default_rng([seed_root, poi_idx])
    poi_id = f"p{poi_idx:06d}"

    n_tags = min(spec.tag_count, max(1, int(rng.poisson(spec.tags_per_poi))))
    gold = sorted(rng.choice(spec.tag_count, size=n_tags, replace=False).tolist())

    covered_text = [t for t in gold if rng.random() < spec.text_signal]

    def distractors(n):
        return [_DISTRACTORS[i] for i in rng.integers(len(_DISTRACTORS), size=n)]

    name_words = distractors(2)
    if covered_text:
        # POI names usually carry the dominant concept ("golden pagoda inn")
        t = covered_text[int(rng.integers(len(covered_text)))]
        name_words[:0] = tag_names[t].split()
    name = " ".join(name_words)
    category = _CATEGORIES[int(rng.integers(len(_CATEGORIES)))]
    desc_words: list[str] = []
    for t in covered_text:
        desc_words.extend(tag_names[t].split())
    desc_words.extend(distractors(6))
    rng.shuffle(desc_words)
    description = " ".join(desc_words)

    n_comments = max(0, int(rng.poisson(max(0.0, spec.texts_per_poi - 3))))
    comments = []
    for _ in range(n_comments):
        words = distractors(int(rng.integers(5, 11)))
        if covered_text and rng.random() < 0.85:
            t = covered_text[int(rng.integers(len(covered_text)))]
            pos = int(rng.integers(len(words) + 1))
            words[pos:pos] = tag_names[t].split()
        # misleading mention, drawn independently of the gold set
        if rng.random() < spec.noise:
            t = int(rng.integers(spec.tag_count))
            words.extend(tag_names[t].split())
        comments.append(" ".join(words))

    n_images = int(rng.poisson(spec.images_per_poi))
    images = []
    for j in range(n_images):
        grid = rng.normal(0.0, spec.noise, size=(spec.G, spec.G, spec.C))
        covered_img = [t for t in gold if rng.random() < spec.image_tag_coverage]
        for t in covered_img:
            if rng.random() >= spec.image_signal:
                continue
            # full-grid latent pattern with a little exposure jitter
            grid += rng.uniform(0.7, 1.3) * patterns[t]
        images.append(ImageGrid(grid.astype(np.float32), f"{poi_id}_{j}"))

    return PoiRecord(poi_id, name, category, description, comments, images, set(gold))


def generate_corpus(spec: CorpusSpec, out_dir) -> "Dataset":
    """Generate, persist, and return a dataset.  Byte-identical per seed."""
    validate_spec(spec)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    tag_names = make_tag_names(spec.tag_count, rng)
    token_vocab = build_token_vocab(tag_names)
    patterns = _tag_patterns(spec, rng)

    pois = [
        _gen_poi(spec, i, tag_names, patterns, spec.seed)
        for i in range(spec.poi_count)
    ]

    order = rng.permutation(spec.poi_count)
    n_val = round(0.1 * spec.poi_count)
    n_test = round(0.1 * spec.poi_count)
    split_of = {}
    for rank, idx in enumerate(order):
        if rank < n_val:
            split_of[pois[idx].poi_id] = "val"
        elif rank < n_val + n_test:
            split_of[pois[idx].poi_id] = "test"
        else:
            split_of[pois[idx].poi_id] = "train"

    token_vocab.save(out / "tokens.txt")
    (out / "vocab.txt").write_text("\n".join(tag_names) + "\n", encoding="utf-8")
    with open(out / "split.txt", "w", encoding="utf-8") as fh:
        for poi in pois:
            fh.write(f"{poi.poi_id}\t{split_of[poi.poi_id]}\n")
    with open(out / "pois.jsonl", "w", encoding="utf-8") as fh:
        for poi in pois:
            refs = []
            for img in poi.images:
                ref = f"images/{img.source_id}.bin"
                write_grid(out / ref, img.grid)
                refs.append(ref)
            rec = {
                "poi_id": poi.poi_id,
                "name": poi.name,
                "category": poi.category,
                "description": poi.description,
                "comments": poi.comments,
                "images": refs,
                "gold_tags": [tag_names[t] for t in sorted(poi.gold_tags)],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")

    tag_vocab = TagVocab.build(tag_names, token_vocab)
    return Dataset(token_vocab, tag_vocab, pois, split_of, spec.G, spec.C)


# ----- loading ------------------------------------------------------------

@dataclass
class Dataset:
    tokens: TokenVocab
    tags: TagVocab
    pois: list[PoiRecord]
    split_of: dict[str, str]
    G: int
    C: int

    def split(self, name: str) -> list[PoiRecord]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown split {name!r}")
        return [p for p in self.pois if self.split_of[p.poi_id] == name]


def load_dataset(path) -> Dataset:
    path = Path(path)
    token_vocab = TokenVocab.load(path / "tokens.txt")
    tag_vocab = TagVocab.load(path / "vocab.txt", token_vocab)

    split_of = {}
    for lineno, line in enumerate((path / "split.txt").read_text("utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in ("train", "val", "test"):
            raise ValueError(f"split.txt line {lineno}: malformed entry")
        split_of[parts[0]] = parts[1]

    pois = []
    G = C = None
    for lineno, line in enumerate((path / "pois.jsonl").read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            images = []
            for ref in rec["images"]:
                img_path = path / ref
                if not img_path.exists():
                    raise ValueError(f"dangling image reference {ref}")
                grid = read_grid(img_path)
                images.append(ImageGrid(grid, Path(ref).stem))
                if G is None:
                    G, C = grid.shape[0], grid.shape[2]
            gold = {tag_vocab.index[t] for t in rec["gold_tags"]}
            poi = PoiRecord(rec["poi_id"], rec["name"], rec["category"],
                            rec["description"], list(rec["comments"]), images, gold)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"pois.jsonl line {lineno}: {exc}") from exc
        if poi.poi_id not in split_of:
            raise ValueError(f"pois.jsonl line {lineno}: {poi.poi_id} missing from split.txt")
        pois.append(poi)
    if G is None:
        G, C = 0, 0
    return Dataset(token_vocab, tag_vocab, pois, split_of, G, C)


def corpus_stats(pois: list[PoiRecord], n_tags: int) -> dict:
    """Counts and per-POI averages mirroring the dataset statistics table."""
    n = len(pois)
    if n == 0:
        return {"poi_count": 0, "tag_count": n_tags, "pair_count": 0,
                "avg_tags_per_poi": 0.0, "avg_images_per_poi": 0.0,
                "avg_texts_per_poi": 0.0}
    pairs = sum(len(p.gold_tags) for p in pois)
    return {
        "poi_count": n,
        "tag_count": n_tags,
        "pair_count": pairs,
        "avg_tags_per_poi": pairs / n,
        "avg_images_per_poi": sum(len(p.images) for p in pois) / n,
        "avg_texts_per_poi": sum(len(p.texts) for p in pois) / n,
    }
