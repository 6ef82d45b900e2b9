"""Decision-based verification metrics and comparative reporting.

FAR is the percent of forged samples incorrectly accepted, FRR the percent
of genuine samples incorrectly rejected, accuracy the percent of all samples
labeled correctly. Decisions come from argmax over the two class
probabilities (equivalently a 0.5 threshold on the genuine probability); all
three forgery kinds pool into the single FAR, with per-kind FARs emitted as
supplementary columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import MetricUndefinedError, ShapeError
from .network import Network
from .tensor import Tensor

FORGERY_KINDS = ("simple", "skilled", "opposite")

# Published baseline numbers, shipped for side-by-side display only; this
# toolkit never claims to reproduce them (they come from a full-scale corpus
# run). Tuples are (accuracy, far, frr); None where not published.
PAPER_REPORTED = {
    "CNN": (65.06, 37.83, 29.69),
    "FCN": (76.71, 27.47, 15.72),
    "SVM": (None, 21.29, 39.27),
}


@dataclass
class ConfusionCounts:
    genuine_accepted: int = 0
    genuine_rejected: int = 0
    forged_accepted: int = 0
    forged_rejected: int = 0

    @property
    def genuine_total(self) -> int:
        return self.genuine_accepted + self.genuine_rejected

    @property
    def forged_total(self) -> int:
        return self.forged_accepted + self.forged_rejected

    @property
    def total(self) -> int:
        return self.genuine_total + self.forged_total


def far(c: ConfusionCounts) -> float:
    """Percent of forged samples incorrectly accepted."""
    if c.forged_total == 0:
        raise MetricUndefinedError("FAR is undefined: no forged samples evaluated")
    return 100.0 * c.forged_accepted / c.forged_total


def frr(c: ConfusionCounts) -> float:
    """Percent of genuine samples incorrectly rejected."""
    if c.genuine_total == 0:
        raise MetricUndefinedError("FRR is undefined: no genuine samples evaluated")
    return 100.0 * c.genuine_rejected / c.genuine_total


def accuracy(c: ConfusionCounts) -> float:
    """Percent of all samples labeled correctly."""
    if c.total == 0:
        raise MetricUndefinedError("accuracy is undefined: no samples evaluated")
    return 100.0 * (c.genuine_accepted + c.forged_rejected) / c.total


def classify(net: Network, x: Tensor) -> int:
    """1 = accept as genuine, 0 = reject as forged."""
    probs, _ = net.forward(x)
    return int(np.argmax(probs.data))


def tally(labels, decisions) -> ConfusionCounts:
    if len(labels) != len(decisions):
        raise ShapeError(f"{len(labels)} labels vs {len(decisions)} decisions")
    c = ConfusionCounts()
    for label, dec in zip(labels, decisions):
        if label == 1:
            if dec == 1:
                c.genuine_accepted += 1
            else:
                c.genuine_rejected += 1
        else:
            if dec == 1:
                c.forged_accepted += 1
            else:
                c.forged_rejected += 1
    return c


def evaluate(net: Network, testset) -> ConfusionCounts:
    """Tally accept/reject decisions over (input tensor, label) pairs."""
    samples = list(testset)
    if not samples:
        raise ValueError("test set is empty")
    decisions = [classify(net, x) for x, _label in samples]
    return tally([label for _x, label in samples], decisions)


def evaluate_images(net: Network, images) -> tuple[ConfusionCounts, dict]:
    """Evaluate SignatureImages; also returns per-forgery-kind (accepted, total)."""
    images = list(images)
    if not images:
        raise ValueError("test set is empty")
    decisions = [classify(net, img.pixels) for img in images]
    counts = tally([img.label for img in images], decisions)
    by_kind = {}
    for k in FORGERY_KINDS:
        sub = [(d, img) for d, img in zip(decisions, images) if img.kind == k]
        by_kind[k] = (sum(d for d, _ in sub), len(sub))
    return counts, by_kind


def kind_far(by_kind: dict, kind: str):
    accepted, total = by_kind.get(kind, (0, 0))
    return None if total == 0 else 100.0 * accepted / total


# ---------------------------------------------------------------------------
# Reporting


@dataclass
class MetricsRow:
    model: str
    accuracy: float | None
    far: float | None
    frr: float | None
    far_simple: float | None = None
    far_skilled: float | None = None
    far_opposite: float | None = None


def row_from_counts(model: str, counts: ConfusionCounts, by_kind=None) -> MetricsRow:
    by_kind = by_kind or {}
    return MetricsRow(model=model, accuracy=accuracy(counts), far=far(counts),
                      frr=frr(counts),
                      far_simple=kind_far(by_kind, "simple"),
                      far_skilled=kind_far(by_kind, "skilled"),
                      far_opposite=kind_far(by_kind, "opposite"))


def reference_rows() -> list[MetricsRow]:
    return [MetricsRow(model=f"{name} (paper-reported)", accuracy=acc, far=f, frr=r)
            for name, (acc, f, r) in PAPER_REPORTED.items()]


def _round2(v) -> str:
    if v is None:
        return "-"
    return str(Decimal(repr(float(v))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_text_table(rows) -> str:
    """Fixed-width table, values rounded half-up to two decimals."""
    header = ["Model", "Accuracy", "FAR", "FRR", "FAR(simple)", "FAR(skilled)", "FAR(opposite)"]
    cells = [[r.model, _round2(r.accuracy), _round2(r.far), _round2(r.frr),
              _round2(r.far_simple), _round2(r.far_skilled), _round2(r.far_opposite)]
             for r in rows]
    widths = [max(len(header[i]), *(len(row[i]) for row in cells)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(row[i].ljust(widths[i]) for i in range(len(header))) for row in cells]
    return "\n".join(lines) + "\n"


CSV_HEADER = "model,accuracy,far,frr,far_simple,far_skilled,far_opposite"


def _fmt6(v) -> str:
    return "" if v is None else f"{float(v):.6f}"


def render_csv(rows, header_comments=()) -> str:
    lines = [f"# {c}" for c in header_comments]
    lines.append(CSV_HEADER)
    for r in rows:
        lines.append(",".join([r.model, _fmt6(r.accuracy), _fmt6(r.far), _fmt6(r.frr),
                               _fmt6(r.far_simple), _fmt6(r.far_skilled),
                               _fmt6(r.far_opposite)]))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[MetricsRow]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"bad metrics header: {lines[:1]}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        vals = [None if p == "" else float(p) for p in parts[1:]]
        rows.append(MetricsRow(parts[0], *vals))
    return rows


def report(rows, reference=False) -> tuple[str, str]:
    """(plain-text table, machine-readable CSV) for the given rows.

    With reference=True the fixed published baseline rows are appended,
    labeled "(paper-reported)".
    """
    rows = list(rows)
    if not rows:
        raise ValueError("report needs at least one row")
    if reference:
        rows = rows + reference_rows()
    return render_text_table(rows), render_csv(rows)
