"""Deterministic synthetic face fixtures in the expected dataset layout.

Images are crude cartoon faces with matching label maps and 68-point
landmark files. The makeup domain gets saturated lips and an eye-shadow
tint so the transfer objective has real signal at tiny resolutions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import (
    BROW_LABELS,
    DOMAIN_NAMES,
    EYE_LABELS,
    HAIR,
    LIP_LABELS,
    MAKEUP,
    NOSE,
    SKIN,
)


def _ellipse(res: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    ys, xs = np.mgrid[0:res, 0:res]
    return ((xs - cx * res) / (rx * res)) ** 2 + ((ys - cy * res) / (ry * res)) ** 2 <= 1.0


def _face_geometry(res: int, jitter: np.ndarray) -> dict:
    """Region masks for one face; jitter shifts features by a few percent."""
    jx, jy = float(jitter[0]), float(jitter[1])
    head = _ellipse(res, 0.5 + jx, 0.55 + jy, 0.34, 0.42)
    crown = _ellipse(res, 0.5 + jx, 0.42 + jy, 0.38, 0.36)
    hair = crown & ~_ellipse(res, 0.5 + jx, 0.58 + jy, 0.33, 0.40)
    l_eye = _ellipse(res, 0.38 + jx, 0.48 + jy, 0.05, 0.035)
    r_eye = _ellipse(res, 0.62 + jx, 0.48 + jy, 0.05, 0.035)
    l_brow = _ellipse(res, 0.38 + jx, 0.40 + jy, 0.07, 0.02)
    r_brow = _ellipse(res, 0.62 + jx, 0.40 + jy, 0.07, 0.02)
    nose = _ellipse(res, 0.5 + jx, 0.60 + jy, 0.045, 0.07)
    u_lip = _ellipse(res, 0.5 + jx, 0.745 + jy, 0.11, 0.028)
    l_lip = _ellipse(res, 0.5 + jx, 0.785 + jy, 0.11, 0.030) & ~u_lip
    return {
        "head": head, "hair": hair, "l_eye": l_eye, "r_eye": r_eye,
        "l_brow": l_brow, "r_brow": r_brow, "nose": nose,
        "u_lip": u_lip, "l_lip": l_lip,
    }


def _label_map(res: int, geo: dict) -> np.ndarray:
    seg = np.zeros((res, res), dtype=np.uint8)
    seg[geo["head"]] = SKIN
    seg[geo["nose"]] = NOSE
    seg[geo["l_brow"]] = BROW_LABELS[0]
    seg[geo["r_brow"]] = BROW_LABELS[1]
    seg[geo["l_eye"]] = EYE_LABELS[0]
    seg[geo["r_eye"]] = EYE_LABELS[1]
    seg[geo["u_lip"]] = LIP_LABELS[0]
    seg[geo["l_lip"]] = LIP_LABELS[1]
    seg[geo["hair"] & (seg == 0)] = HAIR
    return seg


def _render(res: int, geo: dict, domain: int, rng: np.random.Generator) -> np.ndarray:
    img = np.empty((res, res, 3), dtype=np.float64)
    img[:] = rng.uniform(30, 80, size=3)  # background
    skin = np.array([205, 170, 140]) + rng.uniform(-18, 18, size=3)
    img[geo["head"]] = skin
    img[geo["hair"]] = np.array([60, 40, 25]) + rng.uniform(-12, 12, size=3)
    img[geo["nose"]] = skin * 0.9
    for k in ("l_brow", "r_brow"):
        img[geo[k]] = [70, 50, 35]
    if domain == MAKEUP:
        shadow = np.array([150, 60, 140]) + rng.uniform(-15, 15, size=3)
        for k in ("l_eye", "r_eye"):
            ys, xs = np.nonzero(geo[k])
            if len(ys):
                cy, cx = ys.mean(), xs.mean()
                ring = _ellipse(res, cx / res, cy / res, 0.085, 0.06) & geo["head"]
                img[ring & ~geo[k]] = shadow
        lip_color = np.array([190, 25, 60]) + rng.uniform(-15, 15, size=3)
    else:
        lip_color = skin * np.array([0.95, 0.75, 0.75])
    img[geo["u_lip"]] = lip_color * 0.92
    img[geo["l_lip"]] = lip_color
    for k in ("l_eye", "r_eye"):
        img[geo[k]] = [245, 245, 245]
        ys, xs = np.nonzero(geo[k])
        if len(ys):
            iris = _ellipse(res, xs.mean() / res, ys.mean() / res, 0.018, 0.018)
            img[iris & geo[k]] = [40, 30, 30]
    return np.clip(img, 0, 255).astype(np.uint8)


def _landmarks(res: int, geo: dict, rng: np.random.Generator) -> np.ndarray:
    """68 deterministic points: jaw arc, brows, nose, eyes, lip outline."""
    pts = []
    ys, xs = np.nonzero(geo["head"])
    cx, cy = xs.mean(), ys.mean()
    for t in np.linspace(np.pi * 0.15, np.pi * 0.85, 17):  # jaw
        pts.append((cx + 0.33 * res * np.cos(t + np.pi / 2 - np.pi / 2) * np.sin(t),
                    cy + 0.40 * res * np.sin(t) * 0.9))
    for mask_key, count in (("l_brow", 5), ("r_brow", 5), ("nose", 9),
                            ("l_eye", 6), ("r_eye", 6), ("u_lip", 12), ("l_lip", 8)):
        ys, xs = np.nonzero(geo[mask_key])
        if len(xs) == 0:  # tiny resolutions can rasterize a feature away
            pts.extend([(cx, cy)] * count)
            continue
        order = np.argsort(xs)
        pick = np.linspace(0, len(order) - 1, count).astype(int)
        for i in pick:
            pts.append((float(xs[order[i]]), float(ys[order[i]])))
    pts = np.array(pts, dtype=np.float64)
    pts += rng.uniform(-0.4, 0.4, size=pts.shape)
    return np.clip(pts, 0, res - 1)


def write_synthetic_dataset(root, per_domain: int = 3, resolution: int = 64,
                            seed: int = 0, landmarks: bool = True) -> Path:
    """Write `per_domain` faces per domain under `root`; returns `root`."""
    root = Path(root)
    for sub in ("images", "segs") + (("landmarks",) if landmarks else ()):
        for name in DOMAIN_NAMES:
            (root / sub / name).mkdir(parents=True, exist_ok=True)
    for domain, name in enumerate(DOMAIN_NAMES):
        for i in range(per_domain):
            rng = np.random.default_rng((seed, domain, i))
            jitter = rng.uniform(-0.03, 0.03, size=2)
            geo = _face_geometry(resolution, jitter)
            seg = _label_map(resolution, geo)
            img = _render(resolution, geo, domain, rng)
            stem = f"face_{i:03d}"
            Image.fromarray(img, mode="RGB").save(root / "images" / name / f"{stem}.png")
            Image.fromarray(seg, mode="L").save(root / "segs" / name / f"{stem}.png")
            if landmarks:
                pts = _landmarks(resolution, geo, rng)
                lines = "\n".join(f"{x:.3f} {y:.3f}" for x, y in pts)
                (root / "landmarks" / name / f"{stem}.txt").write_text(lines + "\n")
    return root
