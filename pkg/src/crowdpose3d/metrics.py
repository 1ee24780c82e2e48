"""Evaluation metrics: MPJPE, PA-MPJPE, 3DPCK, MPVPE, CrowdIndex, bbox IoU.

All joint/vertex metrics expect millimeter inputs that were root-centered by
the caller (the pelvis superset joint by convention); PA-MPJPE additionally
aligns the prediction to the ground truth with the optimal similarity
transform (positive scale, proper rotation).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ShapeMismatchError
from .pose2d import BBox, Pose2D

PCK_THRESHOLD_MM = 150.0


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance per joint (mm)."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def procrustes_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Optimal similarity alignment s*R*pred + t of pred onto gt.

    Least-squares over positive scale, proper rotation (det R = +1 enforced
    via reflection correction of the SVD), and translation.
    """
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeMismatchError(f"need matching (N, 3) arrays, got {pred.shape}, {gt.shape}")
    if pred.shape[0] < 3:
        raise AlignmentError("alignment needs at least 3 points")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    p0, g0 = pred - mu_p, gt - mu_g
    norm_p = np.sqrt((p0 ** 2).sum())
    if norm_p < 1e-12 or np.linalg.matrix_rank(g0, tol=1e-9 * max(1.0, np.abs(g0).max())) < 2:
        raise AlignmentError("degenerate point configuration")

    h = p0.T @ g0
    u, s, vt = np.linalg.svd(h)
    d = np.ones(3)
    d[-1] = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag(d) @ u.T
    scale = (s * d).sum() / (norm_p ** 2)
    trans = mu_g - scale * rot @ mu_p
    return (scale * (rot @ pred.T)).T + trans


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after Procrustes alignment (mm)."""
    return mpjpe(procrustes_align(pred, gt), gt)


def pck3d(pred: np.ndarray, gt: np.ndarray, threshold_mm: float = PCK_THRESHOLD_MM) -> float:
    """Percentage of joints within threshold_mm of GT (inclusive boundary)."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"shape mismatch {pred.shape} vs {gt.shape}")
    dist = np.linalg.norm(pred - gt, axis=-1)
    return float(100.0 * (dist <= threshold_mm).mean())


def mpvpe(pred_vertices: np.ndarray, gt_vertices: np.ndarray) -> float:
    """Mean per-vertex Euclidean distance (mm); topology must match."""
    pred = np.asarray(pred_vertices, dtype=np.float64)
    gt = np.asarray(gt_vertices, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"vertex topology mismatch {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def _in_box(points: np.ndarray, bbox: BBox) -> np.ndarray:
    return ((points[:, 0] >= bbox.x_min) & (points[:, 0] <= bbox.x_max)
            & (points[:, 1] >= bbox.y_min) & (points[:, 1] <= bbox.y_max))


def crowd_index(target: Pose2D, others: list[Pose2D], bbox: BBox) -> float:
    """Ratio of other people's joints to the target's joints inside the box."""
    n_target = int(_in_box(target.joints, bbox).sum())
    if n_target == 0:
        raise ValueError("crowd index undefined: no target joints inside the box")
    n_other = sum(int(_in_box(o.joints, bbox).sum()) for o in others)
    return n_other / n_target


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two axis-aligned boxes."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.width * a.height + b.width * b.height - inter
    return inter / union if union > 0 else 0.0


@dataclass
class MetricsReport:
    mpjpe_mm: float
    pa_mpjpe_mm: float
    pck3d_percent: float
    mpvpe_mm: float
    n_samples: int
    rows: list[dict] = field(default_factory=list)  # per-person breakdown

    def to_dict(self) -> dict:
        return {
            "mpjpe_mm": self.mpjpe_mm,
            "pa_mpjpe_mm": self.pa_mpjpe_mm,
            "pck3d_percent": self.pck3d_percent,
            "mpvpe_mm": self.mpvpe_mm,
            "n_samples": self.n_samples,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_table(self) -> str:
        """Fixed-width text table with one row per evaluated person."""
        header = (f"{'sample':>8} {'person':>6} {'mpjpe':>10} {'pa_mpjpe':>10} "
                  f"{'pck3d':>8} {'mpvpe':>10}")
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(f"{row['sample']:>8} {row['person']:>6} {row['mpjpe_mm']:>10.2f} "
                         f"{row['pa_mpjpe_mm']:>10.2f} {row['pck3d_percent']:>8.2f} "
                         f"{row.get('mpvpe_mm', float('nan')):>10.2f}")
        lines.append("-" * len(header))
        lines.append(f"{'mean':>8} {self.n_samples:>6} {self.mpjpe_mm:>10.2f} "
                     f"{self.pa_mpjpe_mm:>10.2f} {self.pck3d_percent:>8.2f} "
                     f"{self.mpvpe_mm:>10.2f}")
        return "\n".join(lines)

    @staticmethod
    def from_rows(rows: list[dict]) -> "MetricsReport":
        if not rows:
            return MetricsReport(0.0, 0.0, 0.0, 0.0, 0)

        def mean(key):  # joints-only records (interchange files) carry no mpvpe
            vals = [r[key] for r in rows if key in r]
            return float(np.mean(vals)) if vals else 0.0

        return MetricsReport(
            mpjpe_mm=mean("mpjpe_mm"),
            pa_mpjpe_mm=mean("pa_mpjpe_mm"),
            pck3d_percent=mean("pck3d_percent"),
            mpvpe_mm=mean("mpvpe_mm"),
            n_samples=len(rows),
            rows=rows,
        )

    def save(self, json_path: str | Path, table_path: str | Path | None = None) -> None:
        Path(json_path).write_text(self.to_json())
        if table_path is not None:
            Path(table_path).write_text(self.to_table() + "\n")


def save_joint_records(records: list[dict], path: str | Path) -> None:
    """Prediction/GT interchange file: one JSON record per evaluated person,
    with root-centered joint arrays in millimeters."""
    out = []
    for rec in records:
        out.append({
            "sample": rec["sample"],
            "person": rec["person"],
            "pred_joints_mm": np.asarray(rec["pred_joints_mm"]).tolist(),
            "gt_joints_mm": np.asarray(rec["gt_joints_mm"]).tolist(),
        })
    Path(path).write_text(json.dumps(out, indent=0))


def load_joint_records(path: str | Path) -> list[dict]:
    records = json.loads(Path(path).read_text())
    for rec in records:
        rec["pred_joints_mm"] = np.asarray(rec["pred_joints_mm"], dtype=np.float64)
        rec["gt_joints_mm"] = np.asarray(rec["gt_joints_mm"], dtype=np.float64)
    return records


def report_from_records(records: list[dict],
                        pck_threshold_mm: float = PCK_THRESHOLD_MM) -> MetricsReport:
    """Score an interchange file's joint arrays (no mesh, so no MPVPE rows)."""
    rows = []
    for rec in records:
        pred, gt = rec["pred_joints_mm"], rec["gt_joints_mm"]
        rows.append({
            "sample": rec["sample"],
            "person": rec["person"],
            "mpjpe_mm": mpjpe(pred, gt),
            "pa_mpjpe_mm": pa_mpjpe(pred, gt),
            "pck3d_percent": pck3d(pred, gt, pck_threshold_mm),
        })
    return MetricsReport.from_rows(rows)
