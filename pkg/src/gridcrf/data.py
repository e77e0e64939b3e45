"""Synthetic depth dataset and the foreground accuracy metric.

Scenes are articulated stick figures: L-1 axis-aligned rectangular parts over
background label 0, in a fixed topology (head above a split torso, limbs
attached below/beside).  Mirrored parts (torso halves, leg pair, arm pair)
share the same depth value, so the depth channel alone cannot tell left from
right; only spatial context can.
"""

import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ContractViolation, FormatError
from . import pgm
from . import rng

BACKGROUND_DEPTH = 1.0
NOISE_SIGMA = 0.05  # fraction of the unit depth range


@dataclass
class Sample:
    image: np.ndarray  # (1, H, W) float64 in [0, 1]
    labels: np.ndarray  # (H*W,) int labels, 0 = background

    def __post_init__(self):
        c, h, w = self.image.shape
        if c != 1:
            raise ContractViolation("depth input must have one channel")
        if self.labels.shape != (h * w,):
            raise ContractViolation("sample image and labels disagree on geometry")


@dataclass
class Dataset:
    samples: List[Sample]
    num_labels: int

    def __post_init__(self):
        if not self.samples:
            raise ContractViolation("dataset must contain at least one sample")
        for s in self.samples:
            if s.labels.max(initial=0) >= self.num_labels:
                raise ContractViolation("sample label exceeds dataset label count")


# depth per part role; mirrored roles share a value on purpose
_PART_DEPTHS = {
    "head": 0.35,
    "torso": 0.55,
    "leg": 0.75,
    "arm": 0.65,
    "extra": 0.45,
}


def _figure_plan(num_labels: int, height: int, width: int):
    """Base part sizes; raises if the grid cannot hold the figure."""
    parts = num_labels - 1
    h_head = max(3, height // 8)
    h_torso = max(4, (height * 4) // 9)
    h_leg = max(3, height // 3)
    w_head = max(3, width // 5)
    w_torso = max(6, (width * 7) // 10)
    w_torso -= w_torso % 2
    w_leg = max(2, width // 8)
    w_arm = max(1, width // 12)
    n_extra = max(0, parts - 7)
    h_extra = 2 * n_extra
    body_h = h_head + h_torso + (h_leg if parts >= 4 else 0) + h_extra
    body_w = w_torso + (2 * w_arm + 2 if parts >= 6 else 0)
    if body_h + 2 > height or body_w + 2 > width:
        raise ContractViolation(
            f"grid {height}x{width} too small to place {parts} figure parts")
    return dict(h_head=h_head, h_torso=h_torso, h_leg=h_leg, w_head=w_head,
                w_torso=w_torso, w_leg=w_leg, w_arm=w_arm, body_h=body_h,
                body_w=body_w)


def _shrink(gen, size: int, by: int, floor: int, even: bool = False) -> int:
    """Randomly shrink a base size by up to `by`, never below `floor`."""
    room = max(0, size - floor)
    cut = int(gen.integers(0, min(by, room) + 1))
    if even:
        cut -= cut % 2
    return size - cut


def _render_figure(labels, plan, parts, top, cx, gen):
    """Paint part rectangles into the (H, W) label map; returns depth per label."""
    depth_of = {0: BACKGROUND_DEPTH}

    def paint(label, r0, r1, c0, c1, depth):
        labels[r0:r1, c0:c1] = label
        depth_of[label] = depth

    # per-sample sizes only ever shrink from the plan, so the fit check holds
    h_head = _shrink(gen, plan["h_head"], 2, 3)
    w_head = _shrink(gen, plan["w_head"], 2, 3)
    h_torso = _shrink(gen, plan["h_torso"], 3, 4)
    w_t = _shrink(gen, plan["w_torso"], 4, 6, even=True)
    h_leg = _shrink(gen, plan["h_leg"], 3, 3)
    x0 = cx - w_t // 2
    x1 = x0 + w_t
    r = top
    if parts >= 2:
        c0 = cx - w_head // 2
        paint(1, r, r + h_head, c0, c0 + w_head, _PART_DEPTHS["head"])
        r += h_head
    torso_top = r
    if parts == 1:
        paint(1, r, r + h_torso, x0, x1, _PART_DEPTHS["torso"])
    elif parts == 2:
        paint(2, r, r + h_torso, x0, x1, _PART_DEPTHS["torso"])
    else:
        paint(2, r, r + h_torso, x0, cx, _PART_DEPTHS["torso"])
        paint(3, r, r + h_torso, cx, x1, _PART_DEPTHS["torso"])
    r += h_torso
    legs_top = r
    if parts >= 4:
        w_l = plan["w_leg"]
        jl = int(gen.integers(0, max(1, cx - x0 - w_l)))
        paint(4, r, r + h_leg, x0 + jl, x0 + jl + w_l, _PART_DEPTHS["leg"])
    if parts >= 5:
        w_l = plan["w_leg"]
        jr = int(gen.integers(0, max(1, x1 - cx - w_l)))
        paint(5, r, r + h_leg, x1 - jr - w_l, x1 - jr, _PART_DEPTHS["leg"])
    if parts >= 6:
        h_a = max(2, h_torso // 2)
        paint(6, torso_top + 1, torso_top + 1 + h_a,
              x0 - plan["w_arm"] - 1, x0 - 1, _PART_DEPTHS["arm"])
    if parts >= 7:
        h_a = max(2, h_torso // 2)
        paint(7, torso_top + 1, torso_top + 1 + h_a,
              x1 + 1, x1 + 1 + plan["w_arm"], _PART_DEPTHS["arm"])
    r = legs_top + (h_leg if parts >= 4 else 0)
    for p in range(8, parts + 1):  # stacked extra segments, alternating sides
        side_left = (p % 2) == 0
        w_l = plan["w_leg"]
        if side_left:
            paint(p, r, r + 2, x0, x0 + w_l, _PART_DEPTHS["extra"])
        else:
            paint(p, r, r + 2, x1 - w_l, x1, _PART_DEPTHS["extra"])
            r += 2
    return depth_of


def generate_synthetic(count: int, height: int, width: int, num_labels: int,
                       seed: int) -> Dataset:
    """Deterministic stick-figure dataset; sample i depends only on (seed, i)."""
    if count < 1:
        raise ContractViolation("dataset must contain at least one sample")
    if num_labels < 2:
        raise ContractViolation("need at least a background and one part label")
    plan = _figure_plan(num_labels, height, width)
    parts = num_labels - 1
    samples = []
    for idx in range(count):
        gen = rng.stream(seed, rng.TAG_DATASET, counter=idx)
        labels = np.zeros((height, width), dtype=np.int64)
        slack_y = height - plan["body_h"] - 2
        top = 1 + int(gen.integers(0, slack_y + 1))
        half = plan["body_w"] // 2 + 1
        cx = int(gen.integers(half, width - half + 1))
        depth_of = _render_figure(labels, plan, parts, top, cx, gen)
        depth = np.empty((height, width))
        for label, value in depth_of.items():
            depth[labels == label] = value
        depth += NOISE_SIGMA * gen.standard_normal((height, width))
        np.clip(depth, 0.0, 1.0, out=depth)
        samples.append(Sample(image=depth[None, :, :], labels=labels.ravel()))
    return Dataset(samples=samples, num_labels=num_labels)


def accuracy(pred: np.ndarray, truth: np.ndarray) -> Optional[float]:
    """Fraction of non-background sites labeled correctly.

    Returns None when the truth has no foreground at all (undefined rather
    than 0 or 1).
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ContractViolation(
            f"prediction shape {pred.shape} != truth shape {truth.shape}")
    fg = truth != 0
    if not fg.any():
        return None
    return float((pred[fg] == truth[fg]).mean())


def pooled_accuracy(pairs) -> Optional[float]:
    """Foreground accuracy pooled over (pred, truth) pairs."""
    correct = total = 0
    for pred, truth in pairs:
        fg = truth != 0
        correct += int((pred[fg] == truth[fg]).sum())
        total += int(fg.sum())
    if total == 0:
        return None
    return correct / total


# --- dataset directories -------------------------------------------------
#
# <dir>/meta.txt                key = value: label_count, height, width,
#                               <split>_count per stored split
# <dir>/<split>/depth_NNNN.pgm  16-bit depth input
# <dir>/<split>/labels_NNNN.pgm 8-bit ground-truth label map


def save_dataset(directory: str, dataset: Dataset, split: str) -> None:
    os.makedirs(os.path.join(directory, split), exist_ok=True)
    meta_path = os.path.join(directory, "meta.txt")
    meta = _read_meta(meta_path) if os.path.exists(meta_path) else {}
    c, h, w = dataset.samples[0].image.shape
    meta.update({"label_count": dataset.num_labels, "height": h, "width": w,
                 f"{split}_count": len(dataset.samples)})
    with open(meta_path, "w", encoding="ascii") as f:
        for key in sorted(meta):
            f.write(f"{key} = {meta[key]}\n")
    for i, s in enumerate(dataset.samples):
        base = os.path.join(directory, split)
        pgm.write_pgm(os.path.join(base, f"depth_{i:04d}.pgm"), s.image[0])
        pgm.write_label_map(os.path.join(base, f"labels_{i:04d}.pgm"),
                            s.labels.reshape(h, w))


def _read_meta(path) -> dict:
    meta = {}
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"meta line {line!r}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            meta[key] = int(value)
    return meta


def load_dataset(directory: str, split: str) -> Dataset:
    meta = _read_meta(os.path.join(directory, "meta.txt"))
    for key in ("label_count", "height", "width", f"{split}_count"):
        if key not in meta:
            raise FormatError(f"meta {key}: missing from dataset directory")
    count = meta[f"{split}_count"]
    samples = []
    for i in range(count):
        base = os.path.join(directory, split)
        depth = pgm.read_pgm(os.path.join(base, f"depth_{i:04d}.pgm"))
        labels = pgm.read_label_map(os.path.join(base, f"labels_{i:04d}.pgm"),
                                    meta["label_count"])
        # per-sample geometry is allowed; depth and labels must agree
        if depth.shape != labels.shape:
            raise FormatError(f"sample {i}: depth and label map shapes differ")
        samples.append(Sample(image=depth[None, :, :], labels=labels.ravel()))
    return Dataset(samples=samples, num_labels=meta["label_count"])
