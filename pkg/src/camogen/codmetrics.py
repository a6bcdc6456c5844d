"""MAE, S-measure, E-measure and weighted F-measure for COD predictions.

All functions take ``pred`` in [0, 1] and binary ``gt`` as 2-D arrays of
equal shape and return a float in [0, 1].
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

EPS = np.finfo(np.float64).eps
METRIC_KEYS = ("S", "E", "Fw", "MAE")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionPair:
    pred: np.ndarray
    gt: np.ndarray
    name: str = ""

    def __post_init__(self):
        pred = np.clip(np.asarray(self.pred, dtype=np.float64), 0.0, 1.0)
        gt = np.asarray(self.gt) > 0.5
        if pred.ndim != 2 or pred.shape != gt.shape:
            raise MetricError(f"{self.name}: pred {pred.shape} vs gt {gt.shape}")
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "gt", gt)


def _pair(pred, gt) -> PredictionPair:
    return pred if isinstance(pred, PredictionPair) else PredictionPair(pred, gt)


def mae(pred, gt=None) -> float:
    p = _pair(pred, gt)
    return float(np.abs(p.pred - p.gt).mean())


# --- S-measure ----------------------------------------------------------------

def _s_object(x: np.ndarray, region: np.ndarray) -> float:
    vals = x[region]
    if vals.size == 0:
        return 0.0
    mu = vals.mean()
    sigma = vals.std(ddof=1) if vals.size > 1 else 0.0
    return 2 * mu / (mu * mu + 1 + sigma + EPS)


def _object_score(pred, gt) -> float:
    u = gt.mean()
    fg = _s_object(pred, gt)
    bg = _s_object(1 - pred, ~gt)
    return u * fg + (1 - u) * bg


def _ssim(pred, gt) -> float:
    n = pred.size
    x, y = pred.mean(), gt.mean()
    sx = ((pred - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((gt - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((pred - x) * (gt - y)).sum() / (n - 1 + EPS)
    alpha = 4 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0:
        return alpha / (beta + EPS)
    return 1.0 if beta == 0 else 0.0


def centroid(gt: np.ndarray) -> tuple[int, int]:
    """Split point ``(row, col)``: rounded foreground centroid plus one."""
    h, w = gt.shape
    if not gt.any():
        return round(h / 2), round(w / 2)
    rows, cols = np.nonzero(gt)
    return int(np.round(rows.mean())) + 1, int(np.round(cols.mean())) + 1


def _region_score(pred, gt) -> float:
    h, w = gt.shape
    r, c = centroid(gt)
    g = gt.astype(np.float64)
    score = 0.0
    for rs, cs in ((slice(0, r), slice(0, c)), (slice(0, r), slice(c, w)),
                   (slice(r, h), slice(0, c)), (slice(r, h), slice(c, w))):
        block = g[rs, cs]
        if block.size == 0:
            continue
        score += block.size / (h * w) * _ssim(pred[rs, cs], block)
    return score


def s_measure(pred, gt=None, alpha: float = 0.5) -> float:
    p = _pair(pred, gt)
    y = p.gt.mean()
    if y == 0:
        return float(1 - p.pred.mean())
    if y == 1:
        return float(p.pred.mean())
    score = alpha * _object_score(p.pred, p.gt) + (1 - alpha) * _region_score(p.pred, p.gt)
    return float(min(max(score, 0.0), 1.0))


# --- E-measure ----------------------------------------------------------------

def e_measure(pred, gt=None) -> float:
    p = _pair(pred, gt)
    y = p.gt.mean()
    if y == 0:
        return float((1 - p.pred).mean())
    if y == 1:
        return float(p.pred.mean())
    g = p.gt.astype(np.float64)
    fg, fp = g - g.mean(), p.pred - p.pred.mean()
    num, den = 2 * fg * fp, fg * fg + fp * fp
    align = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(((1 + align) ** 2 / 4).mean())


# --- weighted F-measure ---------------------------------------------------------

def gaussian_kernel(size: int = 7, sigma: float = 5.0) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))
    return k / k.sum()


def _lattice_offsets(n: int) -> list[tuple[int, int]]:
    """Integer offsets with dr^2 + dc^2 == n, in raster order."""
    r = math.isqrt(n)
    out = []
    for dr in range(-r, r + 1):
        dc2 = n - dr * dr
        dc = math.isqrt(dc2)
        if dc * dc == dc2:
            out.extend([(dr, -dc), (dr, dc)] if dc else [(dr, 0)])
    return out


def nearest_foreground(gt: np.ndarray):
    """Distance to and index of the nearest foreground pixel, for every pixel.

    Equidistant candidates resolve to the first one in raster order, so the
    result does not depend on the EDT implementation's internal scan order.
    """
    h, w = gt.shape
    dist = ndimage.distance_transform_edt(~gt)
    d2 = np.rint(dist ** 2).astype(np.int64)
    ri, ci = np.indices(gt.shape)
    ri, ci = ri.copy(), ci.copy()
    for n in np.unique(d2[~gt]):
        ys, xs = np.nonzero(d2 == n)
        todo = np.ones(len(ys), bool)
        for dr, dc in _lattice_offsets(int(n)):
            a, b = ys + dr, xs + dc
            ok = todo & (a >= 0) & (a < h) & (b >= 0) & (b < w)
            ok[ok] = gt[a[ok], b[ok]]
            ri[ys[ok], xs[ok]] = a[ok]
            ci[ys[ok], xs[ok]] = b[ok]
            todo &= ~ok
            if not todo.any():
                break
    return dist, (ri, ci)


def weighted_f_measure(pred, gt=None, beta2: float = 1.0) -> float:
    p = _pair(pred, gt)
    gt = p.gt
    if not gt.any():
        warnings.warn(f"weighted F-measure undefined for empty ground truth {p.name!r}; returning 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    err = np.abs(p.pred - gt)
    dist, (ri, ci) = nearest_foreground(gt)
    et = err.copy()
    et[~gt] = err[ri[~gt], ci[~gt]]
    ea = ndimage.convolve(et, gaussian_kernel(), mode="constant", cval=0.0)
    min_e_ea = np.where(gt & (ea < err), ea, err)
    b = np.where(gt, 1.0, 2 - np.exp(np.log(0.5) / 5 * dist))
    ew = min_e_ea * b
    tpw = gt.sum() - ew[gt].sum()
    fpw = ew[~gt].sum()
    recall = 1 - ew[gt].mean()
    precision = tpw / (EPS + tpw + fpw)
    q = (1 + beta2) * recall * precision / (EPS + recall + beta2 * precision)
    return float(min(max(q, 0.0), 1.0))


def evaluate_pair(pred, gt=None) -> dict:
    p = _pair(pred, gt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fw = weighted_f_measure(p)
    return {"S": s_measure(p), "E": e_measure(p), "Fw": fw, "MAE": mae(p)}


# --- directory evaluation ------------------------------------------------------

@dataclass
class MetricReport:
    per_image: list[dict] = field(default_factory=list)
    means: dict = field(default_factory=dict)
    count: int = 0
    warnings: list[str] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: list[dict], warns=()) -> "MetricReport":
        rows = sorted(rows, key=lambda r: r["name"])
        means = {k: float(np.mean([r[k] for r in rows])) if rows else float("nan") for k in METRIC_KEYS}
        return cls(rows, means, len(rows), list(warns))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def table(self) -> str:
        header = f"{'name':<32} {'S_alpha':>8} {'E_phi':>8} {'F_w':>8} {'MAE':>8}"
        lines = [header, "-" * len(header)]
        for r in self.per_image + [{"name": "mean", **self.means}]:
            lines.append(f"{r['name']:<32} {r['S']:8.3f} {r['E']:8.3f} {r['Fw']:8.3f} {r['MAE']:8.3f}")
        return "\n".join(lines)

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_json() + "\n")
        path.with_suffix(".txt").write_text(self.table() + "\n")


def _read_gray(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except OSError as e:
        raise MetricError(f"cannot read {path}: {e}") from e


def load_prediction(pred_path, gt_path, name="") -> PredictionPair:
    gt = _read_gray(gt_path)
    with Image.open(pred_path) as im:
        im = im.convert("L")
        if im.size != (gt.shape[1], gt.shape[0]):
            im = im.resize((gt.shape[1], gt.shape[0]), Image.BILINEAR)
        pred = np.asarray(im, dtype=np.float64) / 255.0
    return PredictionPair(pred, gt > 0.5, name)


def evaluate_directory(pred_dir, gt_dir) -> MetricReport:
    """Metrics for every basename present in both directories.

    Predictions are resized bilinearly to the ground-truth size if needed.
    """
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    exts = {".png", ".jpg", ".jpeg", ".bmp"}
    preds = {p.stem: p for p in pred_dir.iterdir() if p.suffix.lower() in exts}
    gts = {p.stem: p for p in gt_dir.iterdir() if p.suffix.lower() in exts}
    unpaired = sorted(set(preds) ^ set(gts))
    if unpaired:
        raise MetricError(f"unpaired files: {unpaired[:5]}")
    if not gts:
        raise MetricError(f"no ground-truth maps in {gt_dir}")
    rows, warns = [], []
    for name in sorted(gts):
        pair = load_prediction(preds[name], gts[name], name)
        if not pair.gt.any():
            warns.append(f"{name}: empty ground truth, weighted F-measure set to 0")
        rows.append({"name": name, **evaluate_pair(pair)})
    return MetricReport.from_rows(rows, warns)
