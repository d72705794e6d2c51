"""Procedural face generator with ground-truth landmark masks.

Each sample is an anti-aliased drawing: a filled head ellipse over a smooth
value-noise background, two dark eye ellipses with specular highlights, and
a mouth stroke whose curvature and aperture encode the class label. Eyes and
mouth are deliberately small, high-contrast structures (hard to reconstruct
from context) while the background is low-frequency (easy), so masking
behavior over these regions is directly measurable against the stored
landmark masks.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from pathlib import Path

from simfle.data import ImageDataset, write_split_manifest
from simfle.rng import RNGStream

# (mouth bend px at size 64, mouth aperture px at size 64) per class
_MOUTH_STYLES = [
    (4.0, 0.0),   # broad smile
    (-4.0, 0.0),  # frown
    (3.0, 3.0),   # open smile
    (0.0, 3.5),   # round open mouth
    (-3.0, 3.0),  # open frown
    (0.0, 0.0),   # flat neutral line
    (2.0, 1.5),   # slight smile, parted lips
    (-2.0, 1.5),  # slight frown, parted lips
]

MAX_CLASSES = len(_MOUTH_STYLES)


def _smoothstep(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _ellipse_alpha(yy, xx, cy, cx, ry, rx, feather=1.0):
    """Coverage in [0,1]: 1 inside, anti-aliased edge of ~feather pixels."""
    rho = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    edge = (1.0 - rho) * min(rx, ry) / feather + 0.5
    return _smoothstep(edge)


def _value_noise(rng, size, cells, lo, hi):
    """Bilinear interpolation of a coarse random grid: smooth texture."""
    grid = rng.uniform(lo, hi, size=(cells, cells)).astype(np.float64)
    im = Image.fromarray(grid)
    return np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.float64)


def _blend(canvas, color, alpha):
    canvas *= 1.0 - alpha[..., None]
    canvas += alpha[..., None] * np.asarray(color, dtype=np.float64)


def render_face(label: int, rng: np.random.Generator, size: int = 64):
    """Draw one face; returns (image H,W,3 float32 in [0,1], mask H,W bool)."""
    s = size / 64.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    # smooth tinted background: one coarse luminance field + gentle detail
    base = _value_noise(rng, size, 5, 0.30, 0.72)
    detail = _value_noise(rng, size, 16, -0.05, 0.05)
    tint = rng.uniform(-0.08, 0.08, size=3)
    canvas = np.clip(
        base[..., None] + detail[..., None] + tint[None, None, :], 0.02, 0.95
    )

    # head: filled ellipse, mild radial shading toward the rim
    cx = size / 2 + rng.uniform(-2.0, 2.0) * s
    cy = size / 2 - 1.0 * s + rng.uniform(-2.0, 2.0) * s
    head_rx = rng.uniform(19.0, 23.0) * s
    head_ry = rng.uniform(24.0, 28.0) * s
    skin = np.array([0.78, 0.62, 0.52]) + rng.uniform(-0.06, 0.06, size=3)
    head_alpha = _ellipse_alpha(yy, xx, cy, cx, head_ry, head_rx, feather=1.2 * s)
    rho = np.sqrt(((xx - cx) / head_rx) ** 2 + ((yy - cy) / head_ry) ** 2)
    shade = 1.0 - 0.18 * np.clip(rho, 0.0, 1.0) ** 2
    _blend(canvas, skin, head_alpha)
    canvas *= 1.0 - head_alpha[..., None] * (1.0 - shade[..., None])

    landmark = np.zeros((size, size), dtype=np.float64)

    # eyes: dark ellipses with a bright specular point
    eye_dx = rng.uniform(7.0, 9.0) * s
    eye_dy = rng.uniform(5.0, 7.0) * s
    eye_r = rng.uniform(4.5, 5.5) * s
    iris = np.array([0.08, 0.07, 0.10]) + rng.uniform(0.0, 0.05, size=3)
    for side in (-1.0, 1.0):
        ex, ey = cx + side * eye_dx, cy - eye_dy
        a = _ellipse_alpha(yy, xx, ey, ex, eye_r * 0.8, eye_r, feather=0.8 * s)
        _blend(canvas, iris, a)
        spec = _ellipse_alpha(
            yy, xx, ey - 1.0 * s, ex + side * 1.2 * s, 1.0 * s, 1.0 * s, feather=0.7 * s
        )
        _blend(canvas, (0.95, 0.95, 0.97), spec)
        landmark = np.maximum(landmark, a)

    # mouth: parabolic stroke, class sets curvature and aperture
    bend, aperture = _MOUTH_STYLES[label]
    bend = (bend + rng.uniform(-0.7, 0.7)) * s
    aperture = max(aperture + rng.uniform(-0.4, 0.4), 0.0) * s if aperture else 0.0
    mx = cx + rng.uniform(-1.0, 1.0) * s
    my = cy + rng.uniform(10.0, 13.0) * s
    half_w = rng.uniform(8.0, 10.0) * s
    width = rng.uniform(2.2, 2.8) * s
    lip = np.array([0.45, 0.13, 0.14]) + rng.uniform(-0.04, 0.04, size=3)

    t = (xx - mx) / half_w
    curve_y = my + bend * (t**2 - 0.5)
    dist = np.abs(yy - curve_y)
    stroke = _smoothstep((width / 2 - dist) / (0.8 * s) + 0.5)
    stroke *= _smoothstep((1.0 - np.abs(t)) * half_w / (1.0 * s) + 0.5)
    _blend(canvas, lip, stroke)
    mouth_alpha = stroke.copy()

    if aperture > 0:
        inner = _ellipse_alpha(yy, xx, my, mx, aperture + 0.8 * s, half_w * 0.65,
                               feather=0.8 * s)
        _blend(canvas, (0.13, 0.04, 0.05), inner)
        mouth_alpha = np.maximum(mouth_alpha, inner)

    landmark = np.maximum(landmark, mouth_alpha)
    return (
        np.clip(canvas, 0.0, 1.0).astype(np.float32),
        landmark > 0.5,
    )


def synth_faces(
    n: int,
    classes: int,
    seed: int,
    size: int = 64,
    test_fraction: float = 0.2,
) -> ImageDataset:
    """Generate n faces over the given class count, with landmark masks.

    Labels cycle round-robin so classes stay balanced; every fifth cycle is
    held out as the test split. Generation is bit-identical for a fixed
    (n, classes, seed, size).
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not (2 <= classes <= MAX_CLASSES):
        raise ValueError(f"classes must be in [2, {MAX_CLASSES}], got {classes}")

    stream = RNGStream(seed, "data")
    images = np.empty((n, size, size, 3), dtype=np.float32)
    masks = np.empty((n, size, size), dtype=bool)
    labels = np.empty(n, dtype=np.int64)
    test_every = max(int(round(1.0 / test_fraction)), 2) if test_fraction > 0 else 0
    splits = np.full(n, "train", dtype="<U5")
    for i in range(n):
        labels[i] = i % classes
        images[i], masks[i] = render_face(int(labels[i]), stream.generator(i), size)
        if test_every and (i // classes) % test_every == test_every - 1:
            splits[i] = "test"

    return ImageDataset(
        images=images,
        labels=labels,
        masks=masks,
        splits=splits,
        class_names=tuple(f"class{c}" for c in range(classes)),
        fingerprint=f"synth-n{n}-c{classes}-seed{seed}-size{size}",
        root=None,
    )


def export_folder(ds: ImageDataset, out_dir: str | Path) -> Path:
    """Write the dataset as <split>/<class>/*.png plus landmark masks."""
    out = Path(out_dir)
    for i in range(len(ds)):
        split = ds.splits[i]
        cls = ds.class_names[ds.labels[i]] if ds.labels is not None else "unlabeled"
        folder = out / split / cls
        folder.mkdir(parents=True, exist_ok=True)
        img = ds.images[i]
        if img.dtype != np.uint8:
            img = np.clip(img * 255.0 + 0.5, 0, 255).astype(np.uint8)
        Image.fromarray(img).save(folder / f"{i:06d}.png")
        if ds.masks is not None:
            mask_dir = out / "masks" / split / cls
            mask_dir.mkdir(parents=True, exist_ok=True)
            Image.fromarray(ds.masks[i].astype(np.uint8) * 255).save(
                mask_dir / f"{i:06d}.png"
            )
    write_split_manifest(ds, out / "split_manifest.csv")
    return out
