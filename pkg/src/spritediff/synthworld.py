"""Procedural sprite world: concept identities, scene rendering, dataset I/O.

Every scene is one striped sprite on a uniform background.  The caption
grammar deliberately names only (style, shape, background, position); the
fine identity channels (continuous fill hue, stripe angle/frequency) never
appear in text, so they can only reach a generator through the image pathway.
"""

from __future__ import annotations

import io
import json
import hashlib
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError

SHAPES = ("circle", "square", "triangle", "star", "cross", "diamond")
STYLES = ("photo", "sketch")
POSITIONS = ("left", "right", "top", "bottom", "center")

# named background colors, RGB in [0,1]
BACKGROUNDS = {
    "red": (0.78, 0.15, 0.15),
    "blue": (0.17, 0.30, 0.78),
    "green": (0.16, 0.62, 0.23),
    "yellow": (0.88, 0.82, 0.22),
    "purple": (0.55, 0.22, 0.68),
    "orange": (0.90, 0.52, 0.14),
    "white": (0.95, 0.95, 0.95),
    "gray": (0.50, 0.50, 0.50),
}
BACKGROUND_NAMES = tuple(BACKGROUNDS)

# fractional (dx, dy) offsets of the sprite center from the image center;
# 0.19 keeps the largest sprite (size 0.6) fully inside the frame
POSITION_OFFSETS = {
    "center": (0.0, 0.0),
    "left": (-0.19, 0.0),
    "right": (0.19, 0.0),
    "top": (0.0, -0.19),
    "bottom": (0.0, 0.19),
}

SIZE_RANGE = (0.25, 0.6)
STRIPE_FREQ_RANGE = (2.0, 8.0)
STRIPE_DEPTH = 0.45
SUPERSAMPLE = 4

CAPTION_TEMPLATE = "a {style} of a {shape} on a {background} background at the {position}"


@dataclass(frozen=True)
class ConceptIdentity:
    """Ground-truth parameters of one concept (what must be preserved)."""

    shape_id: int
    fill_hue: float
    stripe_angle: float
    stripe_freq: float
    size: float

    def validate(self) -> None:
        if not 0 <= self.shape_id < len(SHAPES):
            raise ValidationError(f"shape_id out of range: {self.shape_id}")
        if not 0.0 <= self.fill_hue < 1.0:
            raise ValidationError(f"fill_hue out of range: {self.fill_hue}")
        if not 0.0 <= self.stripe_angle < np.pi:
            raise ValidationError(f"stripe_angle out of range: {self.stripe_angle}")
        if not STRIPE_FREQ_RANGE[0] <= self.stripe_freq <= STRIPE_FREQ_RANGE[1]:
            raise ValidationError(f"stripe_freq out of range: {self.stripe_freq}")
        if not SIZE_RANGE[0] <= self.size <= SIZE_RANGE[1]:
            raise ValidationError(f"size out of range: {self.size}")

    @property
    def shape_name(self) -> str:
        return SHAPES[self.shape_id]


@dataclass(frozen=True)
class SceneSpec:
    """One rendered scene; caption is derivable from the other fields."""

    identity: ConceptIdentity
    position: str
    background: str
    style: str
    seed: int = 0

    def validate(self) -> None:
        self.identity.validate()
        if self.position not in POSITIONS:
            raise ValidationError(f"position not in {POSITIONS}: {self.position}")
        if self.background not in BACKGROUNDS:
            raise ValidationError(f"background unknown: {self.background}")
        if self.style not in STYLES:
            raise ValidationError(f"style not in {STYLES}: {self.style}")

    @property
    def caption(self) -> str:
        return CAPTION_TEMPLATE.format(
            style=self.style,
            shape=self.identity.shape_name,
            background=self.background,
            position=self.position,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["identity"] = asdict(self.identity)
        return d

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        ident = ConceptIdentity(**d["identity"])
        return SceneSpec(
            identity=ident,
            position=d["position"],
            background=d["background"],
            style=d["style"],
            seed=d["seed"],
        )


@dataclass
class DatasetRecord:
    image: np.ndarray  # (H, W, 3) float32 in [0,1]
    mask: np.ndarray   # (H, W) uint8 in {0,1}
    caption: str
    scene: SceneSpec

    @property
    def mask_ratio(self) -> float:
        return float(self.mask.mean())


def parse_caption(caption: str) -> dict:
    """Inverse of the caption grammar; recovers (style, shape, background, position)."""
    words = caption.split()
    try:
        style, shape, background, position = words[1], words[4], words[7], words[-1]
    except IndexError:
        raise ValidationError(f"caption does not follow the grammar: {caption!r}")
    if (
        style not in STYLES
        or shape not in SHAPES
        or background not in BACKGROUNDS
        or position not in POSITIONS
    ):
        raise ValidationError(f"caption does not follow the grammar: {caption!r}")
    return {"style": style, "shape": shape, "background": background, "position": position}


def hue_to_rgb(h: np.ndarray, s: float, v: float) -> np.ndarray:
    """Vectorized HSV->RGB for scalar saturation/value; h in [0,1)."""
    h6 = (np.asarray(h) % 1.0) * 6.0
    i = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    ones = np.ones_like(f)
    table = np.stack([
        np.stack([ones * v, t, ones * p], -1),
        np.stack([q, ones * v, ones * p], -1),
        np.stack([ones * p, ones * v, t], -1),
        np.stack([ones * p, q, ones * v], -1),
        np.stack([t, ones * p, ones * v], -1),
        np.stack([ones * v, ones * p, q], -1),
    ])
    return np.take_along_axis(table, i[None, ..., None], axis=0)[0]


def _inside(shape: str, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Footprint test in sprite-local coordinates (|q| <= 1 is the bounding box)."""
    if shape == "circle":
        return qx**2 + qy**2 <= 1.0
    if shape == "square":
        return np.maximum(np.abs(qx), np.abs(qy)) <= 0.82
    if shape == "diamond":
        return np.abs(qx) + np.abs(qy) <= 1.0
    if shape == "cross":
        return ((np.abs(qx) <= 0.34) | (np.abs(qy) <= 0.34)) & (
            np.maximum(np.abs(qx), np.abs(qy)) <= 1.0
        )
    if shape == "triangle":
        # upward equilateral triangle spanning the box
        return (qy <= 1.0) & (qy >= -1.0 + 2.0 * np.abs(qx))
    if shape == "star":
        # 5-point star: radius threshold modulated by angle
        ang = np.arctan2(qy, qx)
        r = np.sqrt(qx**2 + qy**2)
        m = np.mod(ang * 5.0 / (2 * np.pi) + 0.25, 1.0)
        tri = 1.0 - 2.0 * np.abs(m - 0.5)
        return r <= 0.40 + 0.60 * tri
    raise ValidationError(f"unknown shape {shape!r}")


def render_scene(spec: SceneSpec, image_size: int) -> DatasetRecord:
    """Deterministic render of (image, mask, caption) at the given size.

    The mask is the sprite footprint (supersampled coverage >= 0.5); pixels
    outside the mask equal the background color exactly.
    """
    if image_size < 16:
        raise ValidationError(f"image_size must be >= 16, got {image_size}")
    spec.validate()

    S, ss = image_size, SUPERSAMPLE
    ident = spec.identity
    n = S * ss
    # subpixel center coordinates in [0,1)
    coords = (np.arange(n) + 0.5) / n
    u, v = np.meshgrid(coords, coords)  # u: x (cols), v: y (rows)

    dx, dy = POSITION_OFFSETS[spec.position]
    cx, cy = 0.5 + dx, 0.5 + dy
    half = ident.size / 2.0
    qx = (u - cx) / half
    qy = (v - cy) / half
    inside = _inside(ident.shape_name, qx, qy)

    # stripes: brightness modulation along stripe_angle, stripe_freq cycles per sprite
    proj = (qx * np.cos(ident.stripe_angle) + qy * np.sin(ident.stripe_angle)) / 2.0
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * ident.stripe_freq * proj)
    shade = 1.0 - STRIPE_DEPTH * wave

    bg = np.array(BACKGROUNDS[spec.background], dtype=np.float64)
    fill = hue_to_rgb(np.array(ident.fill_hue), 0.85, 0.92)

    if spec.style == "photo":
        sprite = fill[None, None, :] * shade[..., None]
        page = np.broadcast_to(bg, (n, n, 3)).copy()
    else:
        # sketch: light paper tinted by the background + outline band in the fill
        # color, interior washed with shaded fill
        paper = 0.78 + 0.22 * bg
        inner = _inside(ident.shape_name, qx / 0.80, qy / 0.80)
        wash = paper * (1 - 0.38 * shade[..., None]) + 0.38 * fill[None, None, :] * shade[..., None]
        sprite = np.where(inner[..., None], wash, fill[None, None, :] * shade[..., None])
        page = np.broadcast_to(paper, (n, n, 3)).copy()

    # fold supersamples: coverage and mean sprite color per output pixel
    inside_f = inside.astype(np.float64)
    cov = inside_f.reshape(S, ss, S, ss).mean(axis=(1, 3))
    sprite_sum = (sprite * inside_f[..., None]).reshape(S, ss, S, ss, 3).sum(axis=(1, 3))
    page_px = page.reshape(S, ss, S, ss, 3).mean(axis=(1, 3))

    mask = (cov >= 0.5).astype(np.uint8)
    cnt = inside_f.reshape(S, ss, S, ss).sum(axis=(1, 3))
    sprite_px = sprite_sum / np.maximum(cnt[..., None], 1.0)
    img = np.where(mask[..., None].astype(bool), sprite_px, page_px)

    # quantize once so disk round trips are bit-exact
    img8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    image = (img8.astype(np.float32)) / 255.0
    return DatasetRecord(image=image, mask=mask, caption=spec.caption, scene=spec)


def filter_record(record: DatasetRecord, lo: float = 0.1, hi: float = 0.7) -> bool:
    """Region-ratio data filter; keeps records with lo <= mean(mask) <= hi."""
    if not 0 <= lo < hi <= 1:
        raise ValidationError(f"filter bounds must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})")
    return lo <= record.mask_ratio <= hi


def sample_identity(rng: np.random.Generator) -> ConceptIdentity:
    return ConceptIdentity(
        shape_id=int(rng.integers(len(SHAPES))),
        fill_hue=float(rng.uniform(0.0, 1.0)),
        stripe_angle=float(rng.uniform(0.0, np.pi)),
        stripe_freq=float(rng.uniform(*STRIPE_FREQ_RANGE)),
        size=float(rng.uniform(*SIZE_RANGE)),
    )


def sample_scene(rng: np.random.Generator, identity: ConceptIdentity) -> SceneSpec:
    return SceneSpec(
        identity=identity,
        position=POSITIONS[int(rng.integers(len(POSITIONS)))],
        background=BACKGROUND_NAMES[int(rng.integers(len(BACKGROUND_NAMES)))],
        style=STYLES[int(rng.integers(len(STYLES)))],
        seed=int(rng.integers(2**31 - 1)),
    )


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def save_record(root: Path, split: str, concept_id: str, scene_id: str,
                record: DatasetRecord) -> dict:
    """Write one record to ``<root>/<split>/<concept_id>/<scene_id>.{img,msk}``."""
    d = root / split / concept_id
    d.mkdir(parents=True, exist_ok=True)
    img8 = np.clip(np.round(record.image * 255.0), 0, 255).astype(np.uint8)
    (d / f"{scene_id}.img").write_bytes(_png_bytes(img8))
    (d / f"{scene_id}.msk").write_bytes(_png_bytes(record.mask * 255))
    return {
        "split": split,
        "concept_id": concept_id,
        "scene_id": scene_id,
        "caption": record.caption,
        "mask_ratio": record.mask_ratio,
        "scene": record.scene.to_dict(),
    }


def load_record(root: Path, entry: dict) -> DatasetRecord:
    d = Path(root) / entry["split"] / entry["concept_id"]
    img = np.asarray(Image.open(d / f"{entry['scene_id']}.img"), dtype=np.float32) / 255.0
    msk = (np.asarray(Image.open(d / f"{entry['scene_id']}.msk")) > 127).astype(np.uint8)
    return DatasetRecord(
        image=img, mask=msk, caption=entry["caption"],
        scene=SceneSpec.from_dict(entry["scene"]),
    )


def generate_split(root: str | Path, split: str, n_concepts: int,
                   scenes_per_concept: int, seed: int, image_size: int = 32,
                   filter_lo: float = 0.1, filter_hi: float = 0.7,
                   exclude: set | None = None) -> list[dict]:
    """Sample identities and write one split; returns its manifest entries.

    Identities whose canonical render fails the region-ratio filter are
    resampled, so stored datasets are filter-clean.  ``exclude`` holds
    identity tuples already used by another split (disjointness guarantee).
    """
    if n_concepts < 1:
        raise ValidationError("n_concepts must be >= 1")
    root = Path(root)
    rng = np.random.default_rng(seed)
    exclude = exclude if exclude is not None else set()
    entries = []
    for ci in range(n_concepts):
        for _attempt in range(200):
            ident = sample_identity(rng)
            key = dataclasses_key(ident)
            probe = render_scene(
                SceneSpec(ident, "center", "gray", "photo", 0), image_size
            )
            if key not in exclude and filter_record(probe, filter_lo, filter_hi):
                break
        else:
            raise ValidationError("could not sample a filter-clean identity in 200 tries")
        exclude.add(key)
        concept_id = f"c{ci:04d}"
        for si in range(scenes_per_concept):
            spec = sample_scene(rng, ident)
            record = render_scene(spec, image_size)
            try:
                entries.append(save_record(root, split, concept_id, f"s{si:02d}", record))
            except OSError as e:
                raise OSError(f"failed writing record under {root / split / concept_id}: {e}") from e
    return entries


def dataclasses_key(ident: ConceptIdentity) -> tuple:
    return (ident.shape_id, ident.fill_hue, ident.stripe_angle, ident.stripe_freq, ident.size)


def generate_dataset(root: str | Path, n_train_concepts: int, scenes_per_concept: int,
                     n_test_concepts: int, test_scenes_per_concept: int,
                     seed: int, image_size: int = 32,
                     filter_lo: float = 0.1, filter_hi: float = 0.7) -> list[dict]:
    """Write train+test splits (disjoint identities) and the manifest."""
    root = Path(root)
    used: set = set()
    entries = generate_split(root, "train", n_train_concepts, scenes_per_concept,
                             seed, image_size, filter_lo, filter_hi, exclude=used)
    entries += generate_split(root, "test", n_test_concepts, test_scenes_per_concept,
                              seed + 1, image_size, filter_lo, filter_hi, exclude=used)
    write_manifest(root, entries)
    return entries


def write_manifest(root: str | Path, entries: list[dict]) -> None:
    path = Path(root) / "manifest"
    try:
        with open(path, "w") as f:
            for e in entries:
                f.write(json.dumps(e, sort_keys=True) + "\n")
    except OSError as e:
        raise OSError(f"failed writing manifest at {path}: {e}") from e


def load_manifest(root: str | Path) -> list[dict]:
    path = Path(root) / "manifest"
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def manifest_by_concept(entries: list[dict], split: str) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    for e in entries:
        if e["split"] == split:
            out.setdefault(e["concept_id"], []).append(e)
    for v in out.values():
        v.sort(key=lambda e: e["scene_id"])
    return out


def image_digest(record: DatasetRecord) -> str:
    img8 = np.clip(np.round(record.image * 255.0), 0, 255).astype(np.uint8)
    return hashlib.sha256(img8.tobytes() + record.mask.tobytes()).hexdigest()
