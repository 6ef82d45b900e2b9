"""Dataset plumbing: image loading, resizing, manifests, the train/test split,
and a synthetic signature generator for desk-scale runs.

A corpus is described by a manifest (UTF-8 CSV, header ``path,person,kind``,
kind in {genuine, simple, skilled, opposite}); relative paths resolve against
the manifest's directory. Genuine samples carry class label 1, every forgery
kind carries label 0.

The split protocol: per person, 25 randomly chosen genuine and 25 randomly
chosen simple forgeries go to training; the test set gets all remaining
genuine plus all remaining simple, all skilled, and all opposite-hand
forgeries.

The synthetic generator renders seeded smooth curves ("styles") as grayscale
strokes: genuine samples jitter a person's own style slightly, skilled
forgeries jitter it more, opposite-hand forgeries add a coarse wave
distortion, and simple forgeries use the style of a different (non-enrolled)
person. It exists to make training and evaluation testable without a real
corpus and makes no claim of signature realism.
"""

from __future__ import annotations

import csv
import io
import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, ShapeError
from .tensor import Rng, Tensor

KINDS = ("genuine", "simple", "skilled", "opposite")

TRAIN_GENUINE_PER_PERSON = 25
TRAIN_SIMPLE_PER_PERSON = 25
EXPECTED_TEST_GENUINE = 2


def label_for_kind(kind: str) -> int:
    """Binary class: genuine -> 1, every forgery kind -> 0."""
    return 1 if kind == "genuine" else 0


@dataclass(frozen=True)
class CatalogEntry:
    path: str               # as written in the manifest
    person: str
    kind: str
    resolved: str = ""      # absolute path used for loading

    def load_path(self) -> str:
        return self.resolved or self.path


@dataclass
class SignatureImage:
    pixels: Tensor          # [1, H, W], values in [0, 1]
    person: str
    kind: str
    source_path: str = ""

    @property
    def label(self) -> int:
        return label_for_kind(self.kind)


class DatasetCatalog:
    """Per-person, per-kind lists of sample references."""

    def __init__(self, entries):
        self.entries = list(entries)
        seen = set()
        for e in self.entries:
            if e.kind not in KINDS:
                raise DataError(f"{e.path}: unknown kind {e.kind!r}, expected one of {KINDS}")
            if e.path in seen:
                raise DataError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)

    def persons(self) -> list[str]:
        return sorted({e.person for e in self.entries})

    def by_kind(self, person: str) -> dict[str, list[CatalogEntry]]:
        """Entries for one person, grouped by kind, sorted by path."""
        groups = {k: [] for k in KINDS}
        for e in self.entries:
            if e.person == person:
                groups[e.kind].append(e)
        for k in groups:
            groups[k].sort(key=lambda e: e.path)
        return groups

    def __len__(self):
        return len(self.entries)


@dataclass
class DatasetSplit:
    train: list[CatalogEntry]
    test: list[CatalogEntry]
    seed: int


# ---------------------------------------------------------------------------
# Manifest I/O


def read_manifest(path) -> DatasetCatalog:
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "person", "kind"]:
        raise DataError(f"{path}: manifest header must be 'path,person,kind', "
                        f"got {reader.fieldnames}")
    entries = []
    for row in reader:
        p = row["path"].strip()
        resolved = p if os.path.isabs(p) else os.path.join(base, p)
        entries.append(CatalogEntry(path=p, person=row["person"].strip(),
                                    kind=row["kind"].strip(), resolved=resolved))
    return DatasetCatalog(entries)


def write_manifest(entries, path, header_comments=()):
    """Write entries as a manifest; paths are rewritten relative to the manifest dir."""
    out_dir = os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for comment in header_comments:
            fh.write(f"# {comment}\n")
        fh.write("path,person,kind\n")
        for e in entries:
            rel = os.path.relpath(e.load_path(), out_dir) if e.resolved else e.path
            fh.write(f"{rel},{e.person},{e.kind}\n")


# ---------------------------------------------------------------------------
# Image loading and resizing


def load_image(path) -> Tensor:
    """Decode a PGM or PNG file to a [1, H, W] tensor of floats in [0, 1].

    Color images are reduced to luminance (0.299 R + 0.587 G + 0.114 B).
    No binarization, inversion, or cropping is applied.
    """
    try:
        with Image.open(path) as img:
            gray = img.convert("L")
            arr = np.asarray(gray, dtype=np.float32)
    except UnidentifiedImageError as exc:
        raise DataError(f"{path}: unsupported or undecodable image format") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise DataError(f"{path}: image has a zero dimension")
    return Tensor((arr / 255.0)[None, :, :])


def resize(pixels: Tensor, out_h: int = 270, out_w: int = 360) -> Tensor:
    """Bilinear resize of a [c, H, W] tensor, corner-aligned sample mapping."""
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"resize target must be positive, got {out_h}x{out_w}")
    if pixels.data.ndim != 3:
        raise ShapeError(f"resize input must be [channels, height, width], got {pixels.shape}")
    c, h, w = pixels.shape
    if (h, w) == (out_h, out_w):
        return pixels

    src = pixels.data.astype(np.float64)
    ys = np.linspace(0.0, h - 1, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[None, :, None]
    wx = (xs - x0)[None, None, :]

    tl = src[:, y0[:, None], x0[None, :]]
    tr = src[:, y0[:, None], x1[None, :]]
    bl = src[:, y1[:, None], x0[None, :]]
    br = src[:, y1[:, None], x1[None, :]]
    out = ((1 - wy) * (1 - wx) * tl + (1 - wy) * wx * tr
           + wy * (1 - wx) * bl + wy * wx * br)
    # Interpolation is a convex combination; clamp away rounding spill.
    out = np.clip(out, src.min(), src.max())
    return Tensor(out.astype(pixels.data.dtype))


def load_samples(catalog_entries, target_hw=None) -> list[SignatureImage]:
    """Load and (optionally) resize every entry into memory."""
    images = []
    for e in catalog_entries:
        pixels = load_image(e.load_path())
        if target_hw is not None:
            pixels = resize(pixels, target_hw[0], target_hw[1])
        images.append(SignatureImage(pixels=pixels, person=e.person, kind=e.kind,
                                     source_path=e.load_path()))
    return images


# ---------------------------------------------------------------------------
# Train/test split


def split_dataset(catalog: DatasetCatalog, rng: Rng) -> DatasetSplit:
    """25 genuine + 25 simple per person to train; everything else to test.

    Selection is uniform, driven by per-person child streams of ``rng``, so
    the result depends only on the (order-normalized) catalog and the seed.
    """
    train, test = [], []
    for person in catalog.persons():
        groups = catalog.by_kind(person)
        n_gen, n_simple = len(groups["genuine"]), len(groups["simple"])
        if n_gen < TRAIN_GENUINE_PER_PERSON + 1:
            raise DataError(f"person {person!r}: needs at least "
                            f"{TRAIN_GENUINE_PER_PERSON + 1} genuine samples "
                            f"(25 train + >=1 test), found {n_gen}")
        if n_simple < TRAIN_SIMPLE_PER_PERSON:
            raise DataError(f"person {person!r}: needs at least {TRAIN_SIMPLE_PER_PERSON} "
                            f"simple forgeries, found {n_simple}")
        if n_gen - TRAIN_GENUINE_PER_PERSON != EXPECTED_TEST_GENUINE:
            warnings.warn(f"person {person!r}: {n_gen - TRAIN_GENUINE_PER_PERSON} genuine "
                          f"test samples remain (expected {EXPECTED_TEST_GENUINE})",
                          stacklevel=2)

        gen_pick = set(rng.child(f"split:{person}:genuine")
                       .choice(n_gen, TRAIN_GENUINE_PER_PERSON).tolist())
        simple_pick = set(rng.child(f"split:{person}:simple")
                          .choice(n_simple, TRAIN_SIMPLE_PER_PERSON).tolist())
        train += [e for i, e in enumerate(groups["genuine"]) if i in gen_pick]
        test += [e for i, e in enumerate(groups["genuine"]) if i not in gen_pick]
        train += [e for i, e in enumerate(groups["simple"]) if i in simple_pick]
        test += [e for i, e in enumerate(groups["simple"]) if i not in simple_pick]
        test += groups["skilled"] + groups["opposite"]
    return DatasetSplit(train=train, test=test, seed=rng.seed)


# ---------------------------------------------------------------------------
# Synthetic corpus generation


@dataclass
class SynthConfig:
    persons: int = 4
    genuine: int = 27
    simple: int = 25
    skilled: int = 3
    opposite: int = 3
    canvas_h: int = 54
    canvas_w: int = 72
    control_points: int = 9
    jitter_genuine: float = 0.012   # control-point jitter, fraction of min canvas side
    jitter_skilled: float = 0.06
    seed: int = 0

    def __post_init__(self):
        if self.persons < 1:
            raise DataError("synth config needs at least one person")
        if min(self.canvas_h, self.canvas_w) < 16:
            raise DataError("synth canvas must be at least 16x16")
        if self.control_points < 4:
            raise DataError("synth needs at least 4 control points")


def _style_control_points(style_id: int, cfg: SynthConfig, root: Rng) -> np.ndarray:
    """A person's base stroke: points wandering left to right across the canvas."""
    rng = root.child(f"style:{style_id}")
    h, w = cfg.canvas_h, cfg.canvas_w
    n = cfg.control_points
    xs = np.linspace(0.12 * w, 0.88 * w, n) + rng.uniform(-0.03 * w, 0.03 * w, n)
    steps = rng.uniform(-0.22 * h, 0.22 * h, n)
    ys = np.clip(0.5 * h + np.cumsum(steps) - steps.mean() * np.arange(1, n + 1),
                 0.15 * h, 0.85 * h)
    return np.stack([xs, ys], axis=1)


def _catmull_rom(points: np.ndarray, samples_per_seg: int = 20) -> np.ndarray:
    """Smooth polyline through all control points (centripetal-free, uniform)."""
    pts = np.concatenate([points[:1], points, points[-1:]], axis=0)
    out = []
    for i in range(len(points) - 1):
        p0, p1, p2, p3 = pts[i], pts[i + 1], pts[i + 2], pts[i + 3]
        t = np.linspace(0.0, 1.0, samples_per_seg, endpoint=False)[:, None]
        out.append(0.5 * ((2 * p1) + (-p0 + p2) * t
                          + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t ** 2
                          + (-p0 + 3 * p1 - 3 * p2 + p3) * t ** 3))
    out.append(points[-1:])
    return np.concatenate(out, axis=0)


def _render_stroke(polyline: np.ndarray, h: int, w: int,
                   stroke_width: float, ink: float = 0.1) -> np.ndarray:
    """Anti-aliased rendering: coverage from pixel-center distance to the curve."""
    yy, xx = np.mgrid[0:h, 0:w]
    px = xx + 0.5
    py = yy + 0.5
    min_d2 = np.full((h, w), np.inf)
    a = polyline[:-1]
    b = polyline[1:]
    ab = b - a
    ab_len2 = np.maximum((ab ** 2).sum(axis=1), 1e-12)
    for i in range(len(a)):
        t = ((px - a[i, 0]) * ab[i, 0] + (py - a[i, 1]) * ab[i, 1]) / ab_len2[i]
        t = np.clip(t, 0.0, 1.0)
        dx = px - (a[i, 0] + t * ab[i, 0])
        dy = py - (a[i, 1] + t * ab[i, 1])
        min_d2 = np.minimum(min_d2, dx * dx + dy * dy)
    coverage = np.clip(0.5 + (stroke_width / 2 - np.sqrt(min_d2)), 0.0, 1.0)
    return 1.0 - coverage * (1.0 - ink)


def _sample_image(style_pts: np.ndarray, jitter_sigma: float, wave_amp: float,
                  cfg: SynthConfig, rng: Rng) -> np.ndarray:
    pts = style_pts.copy()
    if wave_amp > 0:
        phase = rng.uniform(0, 2 * np.pi)
        pts[:, 1] += wave_amp * np.sin(2 * np.pi * pts[:, 0] / cfg.canvas_w + phase)
    if jitter_sigma > 0:
        # uniform draw widened by sqrt(3) so its std equals jitter_sigma
        pts += rng.uniform(-jitter_sigma, jitter_sigma, pts.shape) * 1.7321
    pts[:, 0] = np.clip(pts[:, 0], 1.0, cfg.canvas_w - 1.0)
    pts[:, 1] = np.clip(pts[:, 1], 1.0, cfg.canvas_h - 1.0)
    width = max(1.8, 0.06 * min(cfg.canvas_h, cfg.canvas_w))
    return _render_stroke(_catmull_rom(pts), cfg.canvas_h, cfg.canvas_w, width)


def write_pgm(pixels: np.ndarray, path):
    """Binary 8-bit portable graymap."""
    h, w = pixels.shape
    data = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def synth_generate(cfg: SynthConfig, out_dir) -> DatasetCatalog:
    """Render a synthetic corpus under out_dir and write its manifest.

    Style assignment: person i signs with style i; simple forgeries of person
    i are rendered in style (persons + i), a forger who is a different,
    non-enrolled individual, so genuine and simple-forged distributions stay
    distinguishable even in multi-person corpora.
    """
    root = Rng(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)

    unit = min(cfg.canvas_h, cfg.canvas_w)
    plans = {
        "genuine": (cfg.genuine, 0, cfg.jitter_genuine * unit, 0.0),
        "simple": (cfg.simple, None, cfg.jitter_genuine * unit, 0.0),
        "skilled": (cfg.skilled, 0, cfg.jitter_skilled * unit, 0.0),
        "opposite": (cfg.opposite, 0, cfg.jitter_skilled * 0.6 * unit, 0.10 * cfg.canvas_h),
    }

    entries = []
    for p in range(cfg.persons):
        person = f"p{p:02d}"
        person_dir = os.path.join(out_dir, person)
        os.makedirs(person_dir, exist_ok=True)
        own_style = _style_control_points(p, cfg, root)
        forger_style = _style_control_points(cfg.persons + p, cfg, root)
        for kind in KINDS:
            count, style_sel, sigma, wave = plans[kind]
            style = forger_style if style_sel is None else own_style
            for i in range(count):
                rng = root.child(f"{person}:{kind}:{i}")
                img = _sample_image(style, sigma, wave, cfg, rng)
                rel = os.path.join(person, f"{kind}_{i:02d}.pgm")
                write_pgm(img, os.path.join(out_dir, rel))
                entries.append(CatalogEntry(path=rel, person=person, kind=kind,
                                            resolved=os.path.join(out_dir, rel)))
    catalog = DatasetCatalog(entries)
    write_manifest(entries, os.path.join(out_dir, "manifest.csv"),
                   header_comments=[f"seed={cfg.seed}", f"synth={_synth_descr(cfg)}"])
    return catalog


def _synth_descr(cfg: SynthConfig) -> str:
    return (f"persons:{cfg.persons},genuine:{cfg.genuine},simple:{cfg.simple},"
            f"skilled:{cfg.skilled},opposite:{cfg.opposite},"
            f"canvas:{cfg.canvas_h}x{cfg.canvas_w},ctrl:{cfg.control_points}")
