"""Detection metrics and experiment protocols.

Frame decisions are binary (``person`` vs ``empty``). Sessions are whole
recordings; FAR and recall pool frames across sessions, and the bootstrap
resamples whole sessions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .cfar import CfarConfig

EMPTY = "empty"
PERSON = "person"
LABELS = (EMPTY, PERSON)
CONFUSION_METRICS = ("accuracy", "balanced_accuracy", "f1_empty", "f1_person", "macro_f1")


def default_k_grid(points: int = 64, k_min: float = 0.5, k_max: float = 8.0) -> np.ndarray:
    return np.geomspace(k_min, k_max, points)


# --------------------------------------------------------------------------- SNR

def background_ring(shape: tuple[int, int], bbox: tuple[int, int, int, int], cfg: CfarConfig) -> np.ndarray:
    """Boolean mask of the CFAR training ring around a bounding box.

    The box is grown by ``guard + train`` cells for the outer edge and by
    ``guard`` cells for the inner edge, clipped to the map.
    """
    r0, c0, r1, c1 = bbox
    rows, cols = shape
    ring = np.zeros(shape, dtype=bool)
    h, g = cfg.half_width, cfg.guard
    ring[max(r0 - h, 0): min(r1 + h + 1, rows), max(c0 - h, 0): min(c1 + h + 1, cols)] = True
    ring[max(r0 - g, 0): min(r1 + g + 1, rows), max(c0 - g, 0): min(c1 + g + 1, cols)] = False
    return ring


def snr_zscore(values: np.ndarray, bbox: Optional[tuple[int, int, int, int]], cfg: CfarConfig,
               db: bool = True) -> float:
    """Box-vs-ring z-score ``(mean_B - mean_N) / std_N``.

    Returns NaN when the box or ring is empty, the ring has zero spread, or
    (in dB mode) the linear score is not positive.
    """
    if bbox is None:
        return math.nan
    values = np.asarray(values, dtype=float)
    r0, c0, r1, c1 = bbox
    box = values[r0: r1 + 1, c0: c1 + 1]
    ring = values[background_ring(values.shape, bbox, cfg)]
    if box.size == 0 or ring.size == 0:
        return math.nan
    sigma = ring.std()
    if not sigma > 0:
        return math.nan
    z = (box.mean() - ring.mean()) / sigma
    if not db:
        return float(z)
    return float(10 * np.log10(z)) if z > 0 else math.nan


def mean_db(values: Sequence[float]) -> tuple[float, int]:
    """Mean of the finite dB values and the count of excluded (NaN) frames."""
    arr = np.asarray(values, dtype=float)
    ok = np.isfinite(arr)
    return (float(arr[ok].mean()) if ok.any() else math.nan), int((~ok).sum())


# -------------------------------------------------------------- records/metrics

@dataclass
class FrameRecord:
    session_id: str
    frame_index: int
    ground_truth: str
    decision: str
    max_component_area: int = 0
    snr_db: float = math.nan


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fn + other.fn, self.fp + other.fp, self.tn + other.tn)

    @classmethod
    def from_arrays(cls, truth: np.ndarray, decision: np.ndarray) -> "Confusion":
        truth = np.asarray(truth, dtype=bool)
        decision = np.asarray(decision, dtype=bool)
        return cls(int(np.sum(truth & decision)), int(np.sum(truth & ~decision)),
                   int(np.sum(~truth & decision)), int(np.sum(~truth & ~decision)))

    @classmethod
    def from_records(cls, records: Sequence[FrameRecord]) -> "Confusion":
        truth = np.array([r.ground_truth == PERSON for r in records], dtype=bool)
        decision = np.array([r.decision == PERSON for r in records], dtype=bool)
        return cls.from_arrays(truth, decision)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def _nanmean(*vals: float) -> float:
    ok = [v for v in vals if not math.isnan(v)]
    return sum(ok) / len(ok) if ok else math.nan


def metrics_from_confusion(c: Confusion) -> dict:
    """Accuracy, balanced accuracy, per-class F1 and macro-F1.

    A class with neither truths nor predictions has undefined F1 (NaN) and is
    listed under ``"undefined"``; macro-F1 and balanced accuracy then average
    only the defined terms. A class with truths but no predictions (or the
    reverse) gets F1 = 0 as usual.
    """
    n = c.tp + c.fn + c.fp + c.tn
    f1_person = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    f1_empty = _ratio(2 * c.tn, 2 * c.tn + c.fn + c.fp)
    tpr = _ratio(c.tp, c.tp + c.fn)
    tnr = _ratio(c.tn, c.tn + c.fp)
    undefined = [name for name, v in ((EMPTY, f1_empty), (PERSON, f1_person)) if math.isnan(v)]
    absent = [name for name, cnt in ((EMPTY, c.tn + c.fp), (PERSON, c.tp + c.fn)) if cnt == 0]
    return {
        "accuracy": _ratio(c.tp + c.tn, n),
        "balanced_accuracy": _nanmean(tpr, tnr),
        "f1_empty": f1_empty,
        "f1_person": f1_person,
        "macro_f1": _nanmean(f1_empty, f1_person),
        "undefined": undefined,
        "absent_classes": absent,
    }


def classification_metrics(records: Sequence[FrameRecord]) -> dict:
    return metrics_from_confusion(Confusion.from_records(records))


# ----------------------------------------------------------------- k sweeps

@dataclass
class SweepSession:
    """Per-frame presence of one session across a k grid, ``presence[frame, k]``."""

    session_id: str
    label: str
    presence: np.ndarray

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        self.presence = np.asarray(self.presence, dtype=bool)


@dataclass
class RocCurve:
    k: np.ndarray
    recall: np.ndarray
    far: np.ndarray
    auc: float
    recall_at_far: dict = field(default_factory=dict)
    session_far: dict = field(default_factory=dict)

    def points(self):
        return list(zip(self.k.tolist(), self.recall.tolist(), self.far.tolist()))


def _pooled_rate(sessions: Sequence[SweepSession]) -> np.ndarray:
    stacked = np.concatenate([s.presence for s in sessions], axis=0)
    return stacked.mean(axis=0)


def curve_auc(far: np.ndarray, recall: np.ndarray) -> float:
    """Trapezoidal area under recall-vs-FAR with (0, 0) and (1, 1) appended."""
    x = np.concatenate([[0.0], np.asarray(far, float), [1.0]])
    y = np.concatenate([[0.0], np.asarray(recall, float), [1.0]])
    order = np.lexsort((y, x))
    return float(np.trapezoid(y[order], x[order]))


def recall_at(far: np.ndarray, recall: np.ndarray, far_target: float) -> float:
    """Recall at ``far_target`` by linear interpolation along the closed curve.

    Where several sweep points share a FAR, the best recall is used.
    """
    x = np.concatenate([[0.0], np.asarray(far, float), [1.0]])
    y = np.concatenate([[0.0], np.asarray(recall, float), [1.0]])
    ux = np.unique(x)
    uy = np.array([y[x == v].max() for v in ux])
    return float(np.interp(far_target, ux, uy))


def sweep_k(sessions: Sequence[SweepSession], k_grid: np.ndarray,
            far_targets: Sequence[float] = (0.01, 0.05)) -> RocCurve:
    """Pooled recall and FAR per k, the AUC, and recall at the FAR targets."""
    k_grid = np.asarray(k_grid, dtype=float)
    if np.any(np.diff(k_grid) < 0):
        raise ValueError("k grid must be ascending")
    empties = [s for s in sessions if s.label == EMPTY]
    persons = [s for s in sessions if s.label == PERSON]
    if not empties:
        raise ValueError("FAR is undefined without empty sessions")
    if not persons:
        raise ValueError("recall is undefined without person sessions")
    for s in sessions:
        if s.presence.shape[1] != k_grid.size:
            raise ValueError(f"session {s.session_id} was swept on a different k grid")
    far = _pooled_rate(empties)
    recall = _pooled_rate(persons)
    return RocCurve(
        k=k_grid, recall=recall, far=far, auc=curve_auc(far, recall),
        recall_at_far={t: recall_at(far, recall, t) for t in far_targets},
        session_far={s.session_id: s.presence.mean(axis=0) for s in empties},
    )


def matched_far_operating_point(empty_sessions: Sequence[SweepSession], k_grid: np.ndarray,
                                far_target: float = 0.01) -> float:
    """Grid k minimising ``|FAR(k) - far_target|``; ties go to the larger k."""
    if not 0 < far_target < 1:
        raise ValueError("far_target must lie in (0, 1)")
    k_grid = np.asarray(k_grid, dtype=float)
    far = _pooled_rate(empty_sessions)
    err = np.abs(far - far_target)
    best = np.flatnonzero(err == err.min())
    return float(k_grid[best[-1]])


def tune_k_macro_f1(sessions: Sequence[SweepSession], k_grid: np.ndarray) -> float:
    """Grid k maximising pooled macro-F1 on a development set; ties go to the larger k."""
    k_grid = np.asarray(k_grid, dtype=float)
    scores = np.array([macro_f1_at(sessions, i) for i in range(k_grid.size)])
    scores = np.where(np.isnan(scores), -np.inf, scores)
    best = np.flatnonzero(scores == scores.max())
    return float(k_grid[best[-1]])


def macro_f1_at(sessions: Sequence[SweepSession], k_index: int) -> float:
    total = Confusion()
    for s in sessions:
        truth = np.full(s.presence.shape[0], s.label == PERSON)
        total = total + Confusion.from_arrays(truth, s.presence[:, k_index])
    return metrics_from_confusion(total)["macro_f1"]


# ---------------------------------------------------------------- bootstrap

@dataclass
class BootstrapSummary:
    metric: str
    point_estimate: float
    replicates: np.ndarray
    ci_low: float
    ci_high: float
    p_value: Optional[float] = None

    @property
    def b(self) -> int:
        return int(self.replicates.size)

    @property
    def median(self) -> float:
        """Median over replicates where the metric is defined."""
        ok = self.replicates[np.isfinite(self.replicates)]
        return float(np.median(ok)) if ok.size else math.nan

    def p_report(self) -> str:
        """Empirical p-value, floored at 1/B for display (never reported as 0)."""
        if self.p_value is None:
            return ""
        floor = 1.0 / self.b
        return f"<={floor:g}" if self.p_value < floor else f"{self.p_value:g}"


def _session_confusions(records: Sequence[FrameRecord] | Mapping[str, Sequence[FrameRecord]]):
    if isinstance(records, Mapping):
        groups = {sid: list(recs) for sid, recs in records.items()}
    else:
        groups: dict[str, list] = {}
        for r in records:
            groups.setdefault(r.session_id, []).append(r)
    ids = sorted(groups)
    return ids, [Confusion.from_records(groups[sid]) for sid in ids]


def _metric_fn(metric: str | Callable[[Confusion], float]) -> tuple[str, Callable[[Confusion], float]]:
    if callable(metric):
        return getattr(metric, "__name__", "metric"), metric
    if metric not in CONFUSION_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {CONFUSION_METRICS}")
    return metric, lambda c: metrics_from_confusion(c)[metric]


def _resample_indices(n_sessions: int, b: int, seed: int) -> np.ndarray:
    # Replicate i draws from its own counter-based stream so replicates can be
    # computed in any order (or in parallel) with identical results.
    out = np.empty((b, n_sessions), dtype=np.intp)
    for i in range(b):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i,)))
        out[i] = rng.integers(0, n_sessions, n_sessions)
    return out


def _sum_confusions(confs: Sequence[Confusion], idx: np.ndarray) -> Confusion:
    arr = np.array([[c.tp, c.fn, c.fp, c.tn] for c in confs], dtype=np.int64)
    tot = arr[idx].sum(axis=0)
    return Confusion(*(int(v) for v in tot))


def _percentiles(reps: np.ndarray) -> tuple[float, float]:
    ok = reps[np.isfinite(reps)]
    if ok.size == 0:
        return math.nan, math.nan
    lo, hi = np.percentile(ok, [2.5, 97.5])
    return float(lo), float(hi)


def bootstrap(records, metric: str | Callable = "macro_f1", b: int = 1000, seed: int = 0) -> BootstrapSummary:
    """Session-level percentile bootstrap of a confusion-matrix metric."""
    name, fn = _metric_fn(metric)
    ids, confs = _session_confusions(records)
    if not ids:
        raise ValueError("bootstrap needs at least one session")
    idx = _resample_indices(len(ids), b, seed)
    point = fn(sum(confs, Confusion()))
    reps = np.array([fn(_sum_confusions(confs, row)) for row in idx], dtype=float)
    lo, hi = _percentiles(reps)
    return BootstrapSummary(name, float(point), reps, lo, hi)


def paired_delta(records_a, records_b, metric: str | Callable = "macro_f1", b: int = 1000,
                 seed: int = 0) -> BootstrapSummary:
    """Paired session bootstrap of ``metric(A) - metric(B)``.

    Both pipelines are resampled with the same session indices per replicate.
    ``p_value`` is the one-sided fraction of replicates with delta <= 0.
    """
    name, fn = _metric_fn(metric)
    ids_a, conf_a = _session_confusions(records_a)
    ids_b, conf_b = _session_confusions(records_b)
    if ids_a != ids_b:
        raise ValueError("paired bootstrap needs identical session sets")
    if not ids_a:
        raise ValueError("bootstrap needs at least one session")
    idx = _resample_indices(len(ids_a), b, seed)
    point = fn(sum(conf_a, Confusion())) - fn(sum(conf_b, Confusion()))
    reps = np.array([fn(_sum_confusions(conf_a, row)) - fn(_sum_confusions(conf_b, row)) for row in idx])
    lo, hi = _percentiles(reps)
    p = float(np.mean(reps <= 0))
    return BootstrapSummary(f"delta_{name}", float(point), reps, lo, hi, p_value=p)


def records_at_k(session: SweepSession, k_index: int, areas: Optional[np.ndarray] = None,
                 snr: Optional[np.ndarray] = None, frame_offset: int = 0) -> list[FrameRecord]:
    out = []
    for i, flag in enumerate(session.presence[:, k_index]):
        out.append(FrameRecord(
            session_id=session.session_id,
            frame_index=frame_offset + i,
            ground_truth=session.label,
            decision=PERSON if flag else EMPTY,
            max_component_area=int(areas[i]) if areas is not None else 0,
            snr_db=float(snr[i]) if snr is not None else math.nan,
        ))
    return out

