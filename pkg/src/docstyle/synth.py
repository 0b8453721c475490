"""Synthetic document rendering: stroke-pattern pages, no real glyphs.

Each recipe draws a class-specific layout (address blocks, rules, column
text, filled display shapes, ...) onto a white canvas with dark strokes.
Randomness comes from a per-image generator derived from (global seed, flat
image index), so corpora regenerate bit-identically. A global ink-strength
draw makes overall darkness overlap across classes while the spatial layout
stays class-typical.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Entry, Manifest, save_manifest
from .imaging import resize_bilinear, save_pgm
from .seeding import derive_rng, parallel_map


@dataclass
class SynthConfig:
    classes: list
    per_class: int = 100
    height: int = 64
    width: int = 64
    seed: int = 0
    noise: float = 0.5


def _rows(frac0: float, frac1: float, n: int):
    a = int(round(frac0 * n))
    b = int(round(frac1 * n))
    a = max(0, min(a, n - 1))
    return a, max(a + 1, min(b, n))


def _rect(canvas, r0, r1, c0, c1, dark):
    h, w = canvas.shape
    ra, rb = _rows(r0, r1, h)
    ca, cb = _rows(c0, c1, w)
    canvas[ra:rb, ca:cb] *= 1.0 - dark


def _hline(canvas, r, c0, c1, dark, thickness=0.012):
    _rect(canvas, r, r + thickness, c0, c1, dark)


def _vline(canvas, c, r0, r1, dark, thickness=0.012):
    _rect(canvas, r0, r1, c, c + thickness, dark)


def _ellipse(canvas, cy, cx, ry, rx, dark):
    h, w = canvas.shape
    yy, xx = np.ogrid[:h, :w]
    mask = ((yy / h - cy) / ry) ** 2 + ((xx / w - cx) / rx) ** 2 <= 1.0
    canvas[mask] *= 1.0 - dark


def _dash_row(canvas, rng, r, c0, c1, dark, thickness=0.018, fill=0.7):
    """One text-like line: dark dashes separated by gaps."""
    pos = c0
    while pos < c1 - 0.01:
        seg = rng.uniform(0.03, 0.09)
        end = min(pos + seg, c1)
        if rng.random() < fill:
            _rect(canvas, r, r + thickness, pos, end, dark)
        pos = end + rng.uniform(0.008, 0.03)


def _text_block(canvas, rng, r0, r1, c0, c1, n_lines, dark, thickness=0.018,
                fill=0.7, ragged=0.3):
    """A paragraph of dash lines with a ragged right edge."""
    if n_lines < 1:
        return
    rs = np.linspace(r0, r1 - thickness, n_lines)
    for r in rs:
        right = c1 - rng.uniform(0.0, ragged) * (c1 - c0)
        _dash_row(canvas, rng, float(r), c0, right, dark, thickness, fill)


def _scribble(canvas, rng, r0, r1, c0, c1, dark):
    """A looping pen path, for signatures and handwriting."""
    h, w = canvas.shape
    t = np.linspace(0.0, 1.0, 220)
    f1, f2 = rng.uniform(2.0, 5.0), rng.uniform(6.0, 14.0)
    p1, p2 = rng.uniform(0, 2 * np.pi, 2)
    rows = (r0 + r1) / 2 + (r1 - r0) * 0.42 * np.sin(2 * np.pi * f1 * t + p1)
    cols = c0 + (c1 - c0) * (t + 0.06 * np.sin(2 * np.pi * f2 * t + p2))
    rr = np.clip((rows * h).astype(int), 0, h - 1)
    cc = np.clip((cols * w).astype(int), 0, w - 1)
    for dr in (0, 1):
        for dc in (0, 1):
            r_idx = np.clip(rr + dr, 0, h - 1)
            c_idx = np.clip(cc + dc, 0, w - 1)
            canvas[r_idx, c_idx] = np.minimum(canvas[r_idx, c_idx], 1.0 - dark)


def _jit(rng, base: float, amp: float) -> float:
    return base + rng.uniform(-amp, amp)


# --- recipes ------------------------------------------------------------
# Each draws onto a white canvas; ink scales the stroke darkness globally.

def _letter(canvas, rng, ink):
    _rect(canvas, 0.03, _jit(rng, 0.075, 0.01), 0.10, _jit(rng, 0.52, 0.05), 0.88 * ink)
    base = _jit(rng, 0.11, 0.015)
    _text_block(canvas, rng, base, base + 0.19, 0.10, 0.5, 5, 0.9 * ink,
                thickness=0.026, fill=0.92, ragged=0.2)
    _dash_row(canvas, rng, _jit(rng, 0.12, 0.015), 0.64, 0.90, 0.88 * ink,
              thickness=0.024, fill=0.9)
    top = _jit(rng, 0.37, 0.03)
    n = rng.integers(6, 13)
    _text_block(canvas, rng, top, top + 0.4, 0.10, 0.90, n, 0.72 * ink,
                fill=rng.uniform(0.5, 0.8))
    _scribble(canvas, rng, 0.83, 0.93, 0.12, _jit(rng, 0.42, 0.06), 0.8 * ink)


def _memo(canvas, rng, ink):
    r = _jit(rng, 0.06, 0.015)
    for _ in range(3):
        _dash_row(canvas, rng, r, 0.08, 0.21, 0.9 * ink, thickness=0.024, fill=0.95)
        _dash_row(canvas, rng, r, 0.25, _jit(rng, 0.58, 0.08), 0.75 * ink,
                  thickness=0.024, fill=0.85)
        r += 0.065
    _hline(canvas, _jit(rng, 0.29, 0.015), 0.06, 0.94, 0.9 * ink, thickness=0.02)
    n = rng.integers(7, 12)
    _text_block(canvas, rng, 0.36, 0.92, 0.08, 0.92, n, 0.7 * ink,
                fill=rng.uniform(0.55, 0.8))


def _form(canvas, rng, ink):
    # sparse top: one short title dash, the rule grid lives below the header
    _dash_row(canvas, rng, _jit(rng, 0.06, 0.015), 0.08, _jit(rng, 0.3, 0.05),
              0.55 * ink, thickness=0.014, fill=0.5)
    top = _jit(rng, 0.36, 0.02)
    _vline(canvas, 0.05, top, 0.94, 0.7 * ink, thickness=0.009)
    _vline(canvas, 0.94, top, 0.94, 0.7 * ink, thickness=0.009)
    _hline(canvas, 0.93, 0.05, 0.95, 0.7 * ink, thickness=0.009)
    r = top
    while r < 0.9:
        _hline(canvas, r, 0.05, 0.95, 0.7 * ink, thickness=0.009)
        if r > top and rng.random() < 0.5:
            _dash_row(canvas, rng, r - 0.05, 0.08, _jit(rng, 0.3, 0.08),
                      0.55 * ink, thickness=0.014, fill=0.55)
        r += rng.uniform(0.08, 0.13)
    for frac in (0.38, 0.66):
        _vline(canvas, _jit(rng, frac, 0.04), top, 0.93, 0.65 * ink, thickness=0.009)


def _news(canvas, rng, ink):
    top = _jit(rng, 0.05, 0.01)
    _rect(canvas, top, top + 0.07, 0.08, _jit(rng, 0.88, 0.04), 0.92 * ink)
    _hline(canvas, top + 0.1, 0.08, 0.92, 0.7 * ink, thickness=0.01)
    body_top = top + 0.14
    n = rng.integers(16, 22)
    for c0, c1 in ((0.08, 0.48), (0.52, 0.92)):
        _text_block(canvas, rng, body_top, 0.95, c0, c1, n, 0.68 * ink,
                    thickness=0.014, fill=rng.uniform(0.6, 0.85), ragged=0.12)


def _email(canvas, rng, ink):
    r = _jit(rng, 0.04, 0.01)
    for _ in range(rng.integers(5, 8)):
        _dash_row(canvas, rng, r, 0.05, 0.17, 0.88 * ink, thickness=0.02, fill=0.95)
        _dash_row(canvas, rng, r, 0.20, _jit(rng, 0.8, 0.1), 0.7 * ink,
                  thickness=0.02, fill=0.9)
        r += 0.045
    _hline(canvas, r + 0.015, 0.05, 0.95, 0.85 * ink, thickness=0.016)
    n = rng.integers(4, 8)
    _text_block(canvas, rng, r + 0.07, r + 0.07 + n * 0.05, 0.05, 0.85, n,
                0.68 * ink, fill=rng.uniform(0.5, 0.75))


def _ad(canvas, rng, ink):
    if rng.random() < 0.5:
        _ellipse(canvas, _jit(rng, 0.38, 0.08), _jit(rng, 0.5, 0.1),
                 rng.uniform(0.16, 0.26), rng.uniform(0.2, 0.32), 0.55 * ink)
    else:
        cy, cx = _jit(rng, 0.35, 0.08), _jit(rng, 0.5, 0.1)
        hh, ww = rng.uniform(0.12, 0.2), rng.uniform(0.18, 0.3)
        _rect(canvas, cy - hh, cy + hh, cx - ww, cx + ww, 0.5 * ink)
    _rect(canvas, _jit(rng, 0.68, 0.03), _jit(rng, 0.76, 0.03), 0.2, 0.8, 0.85 * ink)
    _dash_row(canvas, rng, _jit(rng, 0.85, 0.03), 0.25, 0.75, 0.7 * ink,
              thickness=0.024, fill=0.8)
    if rng.random() < 0.6:
        _ellipse(canvas, _jit(rng, 0.15, 0.05), _jit(rng, 0.82, 0.06),
                 0.06, 0.08, 0.75 * ink)


def _invoice(canvas, rng, ink):
    _rect(canvas, 0.05, 0.13, 0.07, _jit(rng, 0.24, 0.03), 0.8 * ink)
    _text_block(canvas, rng, 0.05, 0.14, 0.62, 0.92, 3, 0.8 * ink,
                thickness=0.018, fill=0.85)
    top = _jit(rng, 0.3, 0.02)
    _hline(canvas, top, 0.07, 0.93, 0.85 * ink, thickness=0.014)
    r = top + 0.07
    while r < 0.78:
        _dash_row(canvas, rng, r, 0.09, 0.5, 0.65 * ink, thickness=0.015, fill=0.75)
        _dash_row(canvas, rng, r, 0.72, 0.9, 0.75 * ink, thickness=0.015, fill=0.95)
        _hline(canvas, r + 0.035, 0.07, 0.93, 0.5 * ink, thickness=0.008)
        r += rng.uniform(0.07, 0.1)
    _rect(canvas, 0.84, 0.9, 0.64, 0.92, 0.35 * ink)
    _dash_row(canvas, rng, 0.855, 0.68, 0.9, 0.9 * ink, thickness=0.02, fill=0.95)


def _resume(canvas, rng, ink):
    _rect(canvas, 0.05, 0.1, 0.28, 0.72, 0.9 * ink)
    _vline(canvas, _jit(rng, 0.33, 0.02), 0.16, 0.95, 0.75 * ink, thickness=0.01)
    n_left = rng.integers(10, 15)
    _text_block(canvas, rng, 0.17, 0.94, 0.06, 0.3, n_left, 0.7 * ink,
                thickness=0.014, fill=0.7, ragged=0.35)
    r = 0.17
    while r < 0.88:
        _dash_row(canvas, rng, r, 0.38, 0.58, 0.88 * ink, thickness=0.02, fill=0.95)
        _text_block(canvas, rng, r + 0.04, r + 0.12, 0.38, 0.93, 2, 0.65 * ink,
                    thickness=0.014, fill=0.7)
        r += rng.uniform(0.16, 0.22)


def _presentation(canvas, rng, ink):
    top = _jit(rng, 0.3, 0.05)
    _rect(canvas, top, top + 0.1, 0.16, _jit(rng, 0.82, 0.05), 0.85 * ink)
    r = top + 0.18
    for _ in range(rng.integers(2, 5)):
        _ellipse(canvas, r + 0.012, 0.2, 0.014, 0.014, 0.85 * ink)
        _dash_row(canvas, rng, r, 0.25, _jit(rng, 0.72, 0.1), 0.7 * ink,
                  thickness=0.02, fill=0.85)
        r += 0.09
    _ellipse(canvas, 0.93, 0.92, 0.015, 0.015, 0.8 * ink)


def _budget(canvas, rng, ink):
    _dash_row(canvas, rng, _jit(rng, 0.05, 0.01), 0.3, 0.7, 0.9 * ink,
              thickness=0.024, fill=0.9)
    cols = np.linspace(0.08, 0.92, rng.integers(5, 7))
    for c in cols:
        _vline(canvas, float(c), 0.14, 0.92, 0.7 * ink, thickness=0.009)
    _hline(canvas, 0.14, 0.08, 0.92, 0.8 * ink, thickness=0.012)
    _hline(canvas, 0.92, 0.08, 0.92, 0.8 * ink, thickness=0.012)
    r = 0.19
    while r < 0.89:
        for c0, c1 in zip(cols[:-1], cols[1:]):
            if rng.random() < 0.85:
                _dash_row(canvas, rng, r, float(c0) + 0.015, float(c1) - 0.015,
                          0.6 * ink, thickness=0.013, fill=0.9)
        r += 0.055


def _report(canvas, rng, ink):
    _dash_row(canvas, rng, _jit(rng, 0.07, 0.01), 0.28, 0.72, 0.9 * ink,
              thickness=0.024, fill=0.95)
    _hline(canvas, 0.12, 0.3, 0.7, 0.7 * ink, thickness=0.01)
    n = rng.integers(12, 18)
    _text_block(canvas, rng, 0.2, 0.86, 0.1, 0.9, n, 0.68 * ink,
                fill=rng.uniform(0.55, 0.8), ragged=0.15)
    _ellipse(canvas, 0.94, 0.5, 0.013, 0.013, 0.8 * ink)


def _handwritten(canvas, rng, ink):
    r = _jit(rng, 0.1, 0.03)
    while r < 0.9:
        _scribble(canvas, rng, r, r + 0.05, _jit(rng, 0.08, 0.03),
                  _jit(rng, 0.85, 0.1), rng.uniform(0.5, 0.8) * ink)
        r += rng.uniform(0.08, 0.13)


RECIPES = {
    "letter": _letter,
    "memo": _memo,
    "form": _form,
    "news": _news,
    "email": _email,
    "ad": _ad,
    "invoice": _invoice,
    "resume": _resume,
    "presentation": _presentation,
    "budget": _budget,
    "report": _report,
    "handwritten": _handwritten,
}
DEFAULT_CLASSES = ("letter", "memo", "form", "news", "email", "ad")


def render_document(class_name: str, height: int, width: int,
                    rng: np.random.Generator, noise: float = 0.5) -> np.ndarray:
    """Draw one page of the given class. noise in [0, 1] scales the additive
    grain and speckle applied after the strokes."""
    if class_name not in RECIPES:
        raise ValueError(f"unknown document class {class_name!r}")
    canvas = np.ones((height, width), dtype=np.float64)
    ink = rng.uniform(0.3, 1.0)
    RECIPES[class_name](canvas, rng, ink)
    # photocopy-style placement jitter: the page shrinks by a roughly constant
    # factor and lands at a random offset, so layouts never line up exactly
    # between samples while the blank margin share stays comparable
    scale = rng.uniform(0.78, 0.84)
    sub_h = max(1, int(round(scale * height)))
    sub_w = max(1, int(round(scale * width)))
    if (sub_h, sub_w) != (height, width):
        off_r = int(rng.integers(0, height - sub_h + 1))
        off_c = int(rng.integers(0, width - sub_w + 1))
        page = np.ones((height, width), dtype=np.float64)
        page[off_r:off_r + sub_h, off_c:off_c + sub_w] = resize_bilinear(canvas, sub_h, sub_w)
        canvas = page
    if noise > 0:
        canvas += rng.normal(0.0, 0.035 * noise, size=canvas.shape)
        n_speck = int(0.004 * noise * height * width)
        if n_speck:
            rr = rng.integers(0, height, n_speck)
            cc = rng.integers(0, width, n_speck)
            canvas[rr, cc] = rng.random(n_speck)
    return np.clip(canvas, 0.0, 1.0).astype(np.float32)


def generate_synthetic(config: SynthConfig, out_dir, threads: int = 1) -> Manifest:
    """Render the corpus to <out_dir>/images/<class>/ and write manifest.tsv.

    The per-image generator is derived from (seed, flat index), where the
    flat index runs class-major, so any single image can be regenerated
    without touching the rest.
    """
    if len(set(config.classes)) != len(config.classes):
        raise ValueError("class list contains duplicates")
    for name in config.classes:
        if name not in RECIPES:
            raise ValueError(f"unknown document class {name!r}")
    out_dir = Path(out_dir)
    jobs = []
    for ci, name in enumerate(config.classes):
        (out_dir / "images" / name).mkdir(parents=True, exist_ok=True)
        for j in range(config.per_class):
            flat = ci * config.per_class + j
            jobs.append((ci, name, j, flat))

    def _one(job):
        ci, name, j, flat = job
        rng = derive_rng("synth", config.seed, flat)
        img = render_document(name, config.height, config.width, rng, config.noise)
        rel = f"images/{name}/{name}_{j:05d}.pgm"
        save_pgm(img, out_dir / rel)
        return Entry(rel, ci, "unassigned")

    entries = parallel_map(_one, jobs, threads=threads)
    manifest = Manifest(list(config.classes), entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.tsv")
    return manifest
