"""Dataset manifests, stratified splits, P6 image I/O and augmentation."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BadMagic, BadRatios, EmptyClass, TruncatedPixels, UnknownLabel
from .ir import BIN_LABELS
from .kernels import optimized

SOURCES = ("trashnet", "collected")
MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x``; used to derive sub-seeds."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sub_seed(master: int, index: int) -> int:
    return splitmix64((splitmix64(master & MASK64) + index) & MASK64)


# --- manifests -------------------------------------------------------------

@dataclass(frozen=True)
class Entry:
    path: str
    label: str
    source: str = "collected"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[Entry, ...] = ()
    labels: tuple[str, ...] = field(default=BIN_LABELS)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.label not in self.labels:
                raise UnknownLabel(f"{e.path}: label {e.label!r} not in {self.labels}")
            if e.source not in SOURCES:
                raise ValueError(f"{e.path}: source {e.source!r} not in {SOURCES}")
            if e.path in seen:
                raise ValueError(f"duplicate path {e.path}")
            seen.add(e.path)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def counts(self) -> dict[str, int]:
        out = {label: 0 for label in self.labels}
        for e in self.entries:
            out[e.label] += 1
        return out

    def by_label(self, label):
        return [e for e in self.entries if e.label == label]

    @classmethod
    def read_csv(cls, path) -> "DatasetManifest":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(Entry(r["path"], r["label"], r.get("source") or "collected") for r in rows))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "label", "source"])
            for e in self.entries:
                w.writerow([e.path, e.label, e.source])


def synthetic_manifest(counts: dict[str, int], source="trashnet") -> DatasetManifest:
    """Placeholder entries with the given per-class counts."""
    entries = [Entry(f"{label}/{label}{i + 1}.ppm", label, source)
               for label, n in counts.items() for i in range(n)]
    return DatasetManifest(tuple(entries))


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(not math.isfinite(r) or r < 0 for r in ratios):
        raise BadRatios(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios {ratios} sum to {sum(ratios)}, not 1")
    return ratios


def allocate(n: int, ratios) -> list[int]:
    """Largest-remainder apportionment of ``n`` items; every share is within
    one of ``n * ratio`` and the shares sum to ``n``."""
    exact = [n * r for r in ratios]
    sizes = [math.floor(x) for x in exact]
    by_remainder = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in by_remainder[:n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split(manifest: DatasetManifest, ratios=(0.7, 0.15, 0.15), seed=0, classes=None):
    """Stratified (train, val, test) split.

    ``classes`` lists the labels that must be present (default: every label
    that occurs). Each class is shuffled with its own seeded generator and
    apportioned independently, so adding a class never moves items of
    another class.
    """
    ratios = _check_ratios(ratios)
    counts = manifest.counts()
    if classes is None:
        classes = [c for c in manifest.labels if counts[c]]
        if not classes:
            raise EmptyClass("manifest has no entries")
    for c in classes:
        if counts.get(c, 0) == 0:
            raise EmptyClass(f"class {c!r} has no entries")
    parts = ([], [], [])
    for ci, label in enumerate(manifest.labels):
        items = manifest.by_label(label)
        if not items:
            continue
        rng = np.random.default_rng(sub_seed(seed, ci))
        order = rng.permutation(len(items))
        start = 0
        for part, size in zip(parts, allocate(len(items), ratios)):
            part.extend(items[j] for j in order[start:start + size])
            start += size
    return tuple(DatasetManifest(tuple(p), manifest.labels) for p in parts)


# --- P6 images -------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_ppm(data: bytes) -> np.ndarray:
    """Binary P6 pixmap with 8-bit channels -> float32 (H, W, 3) in [0, 1]."""
    pos, fields = 0, []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise BadMagic("truncated P6 header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P6":
        raise BadMagic(f"expected P6 magic, got {fields[0][:8]!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise BadMagic(f"malformed P6 header {fields!r}") from None
    if width < 1 or height < 1 or maxval != 255:
        raise BadMagic(f"unsupported P6 header: {width}x{height}, maxval {maxval}")
    pixels = data[pos + 1:]  # exactly one whitespace byte ends the header
    expected = width * height * 3
    if len(pixels) != expected:
        raise TruncatedPixels(f"{width}x{height} image needs {expected} bytes, found {len(pixels)}")
    img = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return img.astype(np.float32) / np.float32(255.0)


def encode_ppm(image) -> bytes:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    q = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = q.shape
    return b"P6\n%d %d\n255\n" % (w, h) + q.tobytes()


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_ppm(fh.read())


def save_image(path, image) -> None:
    """Debug writer; round-trips exactly with ``load_image`` for 8-bit data."""
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def resize_bilinear(image, target) -> np.ndarray:
    """Bilinear resize to ``target`` = (w, h) using half-pixel centres."""
    w, h = target
    if w < 1 or h < 1:
        raise ValueError(f"target size must be positive, got {target}")
    img = np.asarray(image, dtype=np.float32)
    return optimized.resize(img[None], (h, w))[0]


# --- augmentation ------------------------------------------------------------

FLIPS = ("none", "h", "v", "hv")


@dataclass(frozen=True)
class AugmentConfig:
    flip: str = "none"
    max_rotation_deg: float = 0.0
    max_translation_frac: float = 0.0
    max_zoom_frac: float = 0.0
    max_shear_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.flip not in FLIPS:
            raise ValueError(f"flip must be one of {FLIPS}")
        if not 0 <= self.max_rotation_deg <= 180:
            raise ValueError("max_rotation_deg must be in [0, 180]")
        for name in ("max_translation_frac", "max_zoom_frac", "max_shear_frac"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")


# augmentation used for the bin's 7-class model (rotation up to 180 degrees,
# 10% shift, 75% zoom, both flips)
BIN_AUGMENT = AugmentConfig("hv", 180.0, 0.1, 0.75, 0.0)

# augmentation used for the K210 MobileNet V1 model (rotation up to 180
# degrees, shift up to 20% (the larger of its two shift bounds), shear 50%)
V1_AUGMENT = AugmentConfig("none", 180.0, 0.2, 0.0, 0.5)


@dataclass(frozen=True)
class Transform:
    """One concrete draw: flips, then rotate/shear/zoom about the centre,
    then translate. Translation is in pixels (rows, cols)."""

    flip_h: bool = False
    flip_v: bool = False
    rotation_deg: float = 0.0
    shear: float = 0.0
    zoom: float = 1.0
    translate: tuple[float, float] = (0.0, 0.0)

    @property
    def is_identity(self):
        return (not self.flip_h and not self.flip_v and self.rotation_deg == 0
                and self.shear == 0 and self.zoom == 1 and self.translate == (0.0, 0.0))

    def matrix(self) -> np.ndarray:
        """Forward 2x2 map in (row, col) coordinates."""
        t = math.radians(self.rotation_deg)
        c, s = math.cos(t), math.sin(t)
        rot = np.array([[c, -s], [s, c]])
        shear = np.array([[1.0, 0.0], [self.shear, 1.0]])
        return rot @ shear * self.zoom


def _snap(m, tol=1e-12):
    r = np.rint(m)
    return np.where(np.abs(m - r) < tol, r, m)


def sample_transform(config: AugmentConfig, rng: np.random.Generator, shape) -> Transform:
    h, w = shape[:2]
    flip_h = "h" in config.flip and bool(rng.random() < 0.5)
    flip_v = "v" in config.flip and bool(rng.random() < 0.5)
    rot = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg)
    ty, tx = rng.uniform(-config.max_translation_frac, config.max_translation_frac, size=2)
    zoom = rng.uniform(1 - config.max_zoom_frac, 1 + config.max_zoom_frac)
    shear = rng.uniform(-config.max_shear_frac, config.max_shear_frac)
    # zoom of exactly 0 would collapse the image
    zoom = max(zoom, 1e-3)
    return Transform(flip_h, flip_v, float(rot), float(shear), float(zoom), (float(ty * h), float(tx * w)))


def apply_transform(image, tf: Transform) -> np.ndarray:
    """Warp ``image`` with bilinear sampling; out-of-frame pixels are 0."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected a 3-channel (H, W, 3) image, got {img.shape}")
    if tf.flip_h:
        img = img[:, ::-1]
    if tf.flip_v:
        img = img[::-1]
    geometric = Transform(rotation_deg=tf.rotation_deg, shear=tf.shear, zoom=tf.zoom,
                          translate=tf.translate)
    if geometric.is_identity:
        return np.ascontiguousarray(img)
    inv = _snap(np.linalg.inv(geometric.matrix()))
    centre = (np.array(img.shape[:2], dtype=np.float64) - 1) / 2
    offset = _snap(centre - inv @ (centre + np.asarray(tf.translate)))
    out = np.empty_like(img)
    for ch in range(3):
        ndimage.affine_transform(img[:, :, ch], inv, offset=offset, output=out[:, :, ch],
                                 order=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def augment(image, config: AugmentConfig, draw_seed: int = 0) -> np.ndarray:
    """Random flip/rotate/translate/zoom/shear within ``config`` bounds.

    The draw is a pure function of ``(config.seed, draw_seed)``.
    """
    img = np.asarray(image, dtype=np.float32)
    rng = np.random.default_rng(sub_seed(config.seed, draw_seed))
    return apply_transform(img, sample_transform(config, rng, img.shape))


def augment_batch(images, config: AugmentConfig) -> np.ndarray:
    return np.stack([augment(img, config, i) for i, img in enumerate(images)])
