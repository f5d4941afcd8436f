"""Preservation/rejection rates and per-stage timing summaries.

Rates are point-level over processed (post-downsample) points. Ground points
count as preserved; undetermined points still pending at the end of the
sequence count as static.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .core import PointClass, UNSET
from .errors import InputError


@dataclass(frozen=True)
class PrRrResult:
    preserved_static: int
    total_static: int
    rejected_dynamic: int
    total_dynamic: int

    @property
    def pr(self) -> float | None:
        return None if self.total_static == 0 else 100.0 * self.preserved_static / self.total_static

    @property
    def rr(self) -> float | None:
        return None if self.total_dynamic == 0 else 100.0 * self.rejected_dynamic / self.total_dynamic

    def to_dict(self) -> dict:
        d = asdict(self)
        d["PR"] = self.pr
        d["RR"] = self.rr
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def table(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{v:.2f}"

        rows = [
            ("metric", "value", "count"),
            ("PR (%)", pct(self.pr), f"{self.preserved_static}/{self.total_static}"),
            ("RR (%)", pct(self.rr), f"{self.rejected_dynamic}/{self.total_dynamic}"),
        ]
        w = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join("  ".join(c.ljust(w[i]) for i, c in enumerate(r)).rstrip() for r in rows)


def score(point_class, gt_dynamic) -> PrRrResult:
    """Score final verdicts against ground-truth dynamic tags."""
    cls = np.asarray(point_class)
    gt = np.asarray(gt_dynamic, dtype=bool)
    if cls.shape != gt.shape:
        raise InputError(f"{len(cls)} verdicts but {len(gt)} ground-truth tags")
    if (cls == UNSET).any():
        raise InputError(f"{int((cls == UNSET).sum())} points lack a verdict")
    rejected = cls == PointClass.DYNAMIC
    return PrRrResult(
        preserved_static=int((~gt & ~rejected).sum()),
        total_static=int((~gt).sum()),
        rejected_dynamic=int((gt & rejected).sum()),
        total_dynamic=int(gt.sum()),
    )


# Column order follows the per-module runtime breakdown; state estimation is
# supplied externally (poses are inputs) and reported as None.
TIMING_COLUMNS = (
    "cloud_processing",
    "state_estimation",
    "ground_fitting",
    "label_consistency_detection",
    "dynamic_removal_total",
    "sum",
)


def timing_summary(reports) -> dict[str, float | None]:
    reports = list(reports)
    if not reports:
        raise ValueError("timing_summary needs at least one report")

    def mean(key):
        return float(np.mean([r.timings_ms.get(key, 0.0) for r in reports]))

    gf = mean("ground_fitting")
    lcd = mean("detection")
    cp = mean("cloud_processing")
    mu = mean("map_update")
    return {
        "cloud_processing": cp,
        "state_estimation": None,
        "ground_fitting": gf,
        "label_consistency_detection": lcd,
        "dynamic_removal_total": gf + lcd,
        # map updates are part of the LIO's remaining work
        "sum": cp + gf + lcd + mu,
        "map_update": mu,
        "sweeps": len(reports),
    }


def timing_table(summary: dict) -> str:
    head = ["Cloud Processing", "State Estimation", "Ground Fitting",
            "Label Consistency Detection", "Total", "Sum"]
    vals = ["external" if summary[k] is None else f"{summary[k]:.2f}" for k in TIMING_COLUMNS]
    w = [max(len(h), len(v)) for h, v in zip(head, vals)]
    line = " | ".join(h.ljust(x) for h, x in zip(head, w))
    return line + "\n" + " | ".join(v.ljust(x) for v, x in zip(vals, w)) + "\n(unit: ms, mean per sweep)"
