"""Turn per-pixel camera probabilities into detection instances and score them.

A probability map is thresholded, the binary mask is dilated once with a 3x3
kernel so nearby fragments of one physical camera merge, and 8-connected
components of the dilated mask group the original pixels into instances.
Components smaller than the size threshold are dropped as noise. Instances
keep their pre-dilation pixels (as run-length data); only the grouping comes
from the dilated mask.

Scoring is pixel-level (IoU / accuracy / F1 pooled over an image set) and
instance-level (greedy one-to-one matching at an IoU threshold).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from PIL import Image
from scipy import ndimage

_EIGHT = np.ones((3, 3), dtype=bool)


class ProbabilityMap:
    """A float32 (height, width) grid of camera probabilities in [0, 1]."""

    __slots__ = ("image_id", "values")

    def __init__(self, image_id: str, values):
        v = np.asarray(values, dtype=np.float32)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"{image_id}: probability map must be a non-empty 2-d grid")
        if not np.isfinite(v).all():
            raise ValueError(f"{image_id}: probability map contains NaN or infinity")
        if float(v.min()) < 0.0 or float(v.max()) > 1.0:
            raise ValueError(f"{image_id}: probabilities must lie in [0, 1]")
        self.image_id = image_id
        self.values = v

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def write_probability_map(pmap: ProbabilityMap, path) -> None:
    """Header line ``P <width> <height>`` then row-major little-endian float32."""
    h, w = pmap.shape
    with open(path, "wb") as fh:
        fh.write(f"P {w} {h}\n".encode("ascii"))
        fh.write(pmap.values.astype("<f4").tobytes())


def read_probability_map(path, image_id: str = None) -> ProbabilityMap:
    with open(path, "rb") as fh:
        header = fh.readline()
        try:
            magic, w, h = header.decode("ascii").split()
            if magic != "P":
                raise ValueError
            w, h = int(w), int(h)
        except ValueError:
            raise ValueError(f"{path}: bad probability map header {header!r}") from None
        data = fh.read()
    expected = w * h * 4
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4").reshape(h, w)
    if image_id is None:
        image_id = _stem(path)
    return ProbabilityMap(image_id, values)


def _stem(path) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0]


@dataclass
class DetectionInstance:
    """One detected camera: pre-dilation pixels stored as (row, col, length) runs."""

    image_id: str
    runs: List[Tuple[int, int, int]]
    size: int
    bbox: Tuple[int, int, int, int]  # x, y, width, height

    def pixels(self) -> set:
        out = set()
        for row, col, length in self.runs:
            for c in range(col, col + length):
                out.add((row, c))
        return out

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        for row, col, length in self.runs:
            m[row, col:col + length] = True
        return m

    def to_json(self) -> str:
        return json.dumps(
            {"image_id": self.image_id, "bbox": list(self.bbox), "size": self.size,
             "runs": [list(r) for r in self.runs]},
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "DetectionInstance":
        d = json.loads(line)
        return DetectionInstance(
            image_id=d["image_id"],
            runs=[tuple(r) for r in d["runs"]],
            size=d["size"],
            bbox=tuple(d["bbox"]),
        )

    @staticmethod
    def from_mask(image_id: str, mask: np.ndarray) -> "DetectionInstance":
        ys, xs = np.nonzero(mask)
        if ys.size == 0:
            raise ValueError("cannot build an instance from an empty mask")
        return _instance_from_pixels(image_id, ys, xs)


def _instance_from_pixels(image_id: str, ys: np.ndarray, xs: np.ndarray) -> DetectionInstance:
    order = np.lexsort((xs, ys))
    ys, xs = ys[order], xs[order]
    runs: List[Tuple[int, int, int]] = []
    start_row, start_col, run_len = int(ys[0]), int(xs[0]), 1
    for k in range(1, len(ys)):
        if ys[k] == start_row and xs[k] == start_col + run_len:
            run_len += 1
        else:
            runs.append((start_row, start_col, run_len))
            start_row, start_col, run_len = int(ys[k]), int(xs[k]), 1
    runs.append((start_row, start_col, run_len))
    bbox = (int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    return DetectionInstance(image_id=image_id, runs=runs, size=int(len(ys)), bbox=bbox)


def extract_instances(
    pmap: ProbabilityMap,
    prob_threshold: float = 0.75,
    size_threshold: int = 50,
) -> List[DetectionInstance]:
    """Threshold, dilate once (3x3), group 8-connected, drop small components.

    ``size`` counts pre-dilation pixels, and the size filter applies to that
    count. Instances come back in scan order of their dilated components.
    """
    if not 0.0 < prob_threshold <= 1.0:
        raise ValueError(f"prob_threshold must lie in (0, 1], got {prob_threshold}")
    if size_threshold < 1:
        raise ValueError(f"size_threshold must be >= 1, got {size_threshold}")
    mask = pmap.values >= prob_threshold
    if not mask.any():
        return []
    dilated = ndimage.binary_dilation(mask, structure=_EIGHT)
    labels, n_labels = ndimage.label(dilated, structure=_EIGHT)
    ys, xs = np.nonzero(mask)
    pixel_labels = labels[ys, xs]
    out: List[DetectionInstance] = []
    for lab in range(1, n_labels + 1):
        sel = pixel_labels == lab
        count = int(np.count_nonzero(sel))
        if count < size_threshold:
            continue
        out.append(_instance_from_pixels(pmap.image_id, ys[sel], xs[sel]))
    return out


def pixel_metrics(pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]) -> dict:
    """Pooled pixel-level IoU (camera class), accuracy and F1 over aligned mask pairs."""
    if len(pred_masks) != len(gt_masks):
        raise ValueError("prediction and ground-truth sets differ in length")
    tp = fp = fn = tn = 0
    for i, (pred, gt) in enumerate(zip(pred_masks, gt_masks)):
        pred = np.asarray(pred, dtype=bool)
        gt = np.asarray(gt, dtype=bool)
        if pred.shape != gt.shape:
            raise ValueError(f"pair {i}: mask shapes differ: {pred.shape} vs {gt.shape}")
        tp += int(np.count_nonzero(pred & gt))
        fp += int(np.count_nonzero(pred & ~gt))
        fn += int(np.count_nonzero(~pred & gt))
        tn += int(np.count_nonzero(~pred & ~gt))
    union = tp + fp + fn
    denom_f1 = 2 * tp + fp + fn
    total = tp + fp + fn + tn
    return {
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
        "iou": tp / union if union else 0.0,
        "accuracy": (tp + tn) / total if total else 0.0,
        "f1": 2 * tp / denom_f1 if denom_f1 else 0.0,
    }


def _mask_iou(a: DetectionInstance, b: DetectionInstance) -> float:
    pa, pb = a.pixels(), b.pixels()
    inter = len(pa & pb)
    union = len(pa) + len(pb) - inter
    return inter / union if union else 0.0


def instance_pr(
    predictions: Sequence[DetectionInstance],
    ground_truth: Sequence[DetectionInstance],
    iou_threshold: float = 0.5,
) -> dict:
    """Greedy one-to-one matching by descending mask IoU, per image.

    A prediction is a true positive when matched to a ground-truth instance
    at IoU >= iou_threshold. With no predictions (or no ground truth) the
    corresponding 0/0 ratio is reported as 0.
    """
    by_image: Dict[str, Tuple[list, list]] = {}
    for p in predictions:
        by_image.setdefault(p.image_id, ([], []))[0].append(p)
    for g in ground_truth:
        by_image.setdefault(g.image_id, ([], []))[1].append(g)
    tp = 0
    for preds, gts in by_image.values():
        pairs = []
        for i, p in enumerate(preds):
            for j, g in enumerate(gts):
                iou = _mask_iou(p, g)
                if iou >= iou_threshold:
                    pairs.append((iou, i, j))
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        used_p, used_g = set(), set()
        for iou, i, j in pairs:
            if i in used_p or j in used_g:
                continue
            used_p.add(i)
            used_g.add(j)
            tp += 1
    n_pred = len(predictions)
    n_gt = len(ground_truth)
    return {
        "tp": tp,
        "fp": n_pred - tp,
        "fn": n_gt - tp,
        "precision": tp / n_pred if n_pred else 0.0,
        "recall": tp / n_gt if n_gt else 0.0,
    }


def sweep_thresholds(
    maps: Sequence[ProbabilityMap],
    ground_truth: Sequence[DetectionInstance],
    prob_thresholds: Sequence[float],
    size_thresholds: Sequence[int],
    iou_threshold: float = 0.5,
) -> List[dict]:
    """Precision/recall over a grid of operating points."""
    if not maps:
        raise ValueError("sweep needs at least one probability map")
    rows = []
    for prob_t in prob_thresholds:
        for size_t in size_thresholds:
            preds: List[DetectionInstance] = []
            for pmap in maps:
                preds.extend(extract_instances(pmap, prob_t, size_t))
            pr = instance_pr(preds, ground_truth, iou_threshold)
            rows.append(
                {"prob_threshold": prob_t, "size_threshold": size_t,
                 "precision": pr["precision"], "recall": pr["recall"],
                 "tp": pr["tp"], "fp": pr["fp"], "fn": pr["fn"]}
            )
    return rows


def gt_instances_from_mask(image_id: str, mask: np.ndarray) -> List[DetectionInstance]:
    """Ground-truth instances: plain 8-connected components, no dilation or size filter."""
    mask = np.asarray(mask, dtype=bool)
    labels, n_labels = ndimage.label(mask, structure=_EIGHT)
    out = []
    for lab in range(1, n_labels + 1):
        ys, xs = np.nonzero(labels == lab)
        out.append(_instance_from_pixels(image_id, ys, xs))
    return out


def read_mask_png(path) -> np.ndarray:
    """8-bit grayscale PNG with values exactly 0 or 255."""
    arr = np.asarray(Image.open(path).convert("L"))
    bad = ~np.isin(arr, (0, 255))
    if bad.any():
        raise ValueError(f"{path}: mask has values other than 0 and 255")
    return arr == 255


def write_mask_png(mask: np.ndarray, path) -> None:
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def write_detections(instances: Sequence[DetectionInstance], path) -> None:
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(inst.to_json() + "\n")


def read_detections(path) -> List[DetectionInstance]:
    with open(path) as fh:
        return [DetectionInstance.from_json(line) for line in fh if line.strip()]
