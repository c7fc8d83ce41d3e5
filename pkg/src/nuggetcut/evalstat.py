"""Dice overlap, volumetry summaries and small-sample significance tests.

The summary statistics mirror the usual reporting style for segmentation
studies: per-case rows (volumes, voxel counts, DSC percent) followed by
min / max / mean / sample standard deviation lines, a paired Wilcoxon
signed-rank test between the two volume columns and a Mann-Whitney test
between subgroup DSC values.  With a dozen cases the normal
approximations of both tests are unreliable, so exact enumeration is
used up to ENUMERATION_LIMIT observations and the approximation (with
continuity and tie corrections) beyond.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTestError, GeometryMismatchError, UndefinedDSCError
from .volume import BinaryMask

ALPHA = 0.05
ENUMERATION_LIMIT = 12


def dice(m: BinaryMask, s: BinaryMask) -> float:
    """2 |M and S| / (|M| + |S|) over voxel counts (spacing cancels)."""
    if not m.same_geometry(s):
        raise GeometryMismatchError(
            f"mask geometries differ: {m.dims}/{m.spacing}/{m.origin} vs "
            f"{s.dims}/{s.spacing}/{s.origin}"
        )
    a = m.voxel_count
    b = s.voxel_count
    if a == 0 and b == 0:
        raise UndefinedDSCError("DSC of two empty masks is undefined")
    inter = int(np.count_nonzero(m.bits & s.bits))
    return 2.0 * inter / (a + b)


@dataclass(frozen=True)
class SummaryRow:
    min: float
    max: float
    mean: float
    stddev: float


def summarize(values) -> SummaryRow:
    """min / max / mean / sample (n-1) standard deviation."""
    v = np.asarray(list(values), dtype=float)
    if len(v) < 2:
        raise ValueError(f"need at least 2 values, got {len(v)}")
    return SummaryRow(
        min=float(v.min()),
        max=float(v.max()),
        mean=float(v.mean()),
        stddev=float(v.std(ddof=1)),
    )


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _two_sided_from_distribution(dist: np.ndarray, observed: float) -> float:
    eps = 1e-9
    total = len(dist)
    lo = np.count_nonzero(dist <= observed + eps) / total
    hi = np.count_nonzero(dist >= observed - eps) / total
    return min(1.0, 2.0 * min(lo, hi))


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Paired two-sided Wilcoxon signed-rank test.

    Returns (W, p) with W = min(W+, W-).  Zero differences are dropped;
    at least 5 nonzero pairs are required.  p is exact (all 2^n sign
    assignments over the observed ranks) for n <= ENUMERATION_LIMIT, else
    a normal approximation with continuity and tie corrections.
    """
    x = np.asarray(list(a), dtype=float)
    y = np.asarray(list(b), dtype=float)
    if len(x) != len(y):
        raise ValueError("paired samples must have equal length")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    if n < 5:
        raise DegenerateTestError(
            f"only {n} nonzero differences; need at least 5"
        )
    ranks = _rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= ENUMERATION_LIMIT:
        sums = np.zeros(1)
        for r in ranks:
            sums = np.concatenate([sums, sums + r])
        p = _two_sided_from_distribution(sums, w_plus)
        return stat, p
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float(((counts ** 3 - counts) / 48.0).sum())
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        raise DegenerateTestError("zero variance in signed-rank statistic")
    # stat = min(W+, W-) sits in the lower tail; continuity-corrected.
    z = (stat - mean + 0.5) / math.sqrt(var)
    return stat, min(1.0, 2.0 * _normal_sf(-z))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Two-sided Mann-Whitney test between independent samples.

    Returns (U, p) with U = min(U_a, U_b).  p is exact (all splits of the
    pooled sample) for len(a) + len(b) <= ENUMERATION_LIMIT, else a
    normal approximation with continuity and tie corrections.
    """
    x = np.asarray(list(a), dtype=float)
    y = np.asarray(list(b), dtype=float)
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise DegenerateTestError("both samples must be nonempty")
    pooled = np.concatenate([x, y])
    ranks = _rankdata(pooled)
    u_a = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    u_b = n1 * n2 - u_a
    stat = min(u_a, u_b)
    total = n1 + n2
    if total <= ENUMERATION_LIMIT:
        dist = np.array([
            ranks[list(combo)].sum() - n1 * (n1 + 1) / 2.0
            for combo in itertools.combinations(range(total), n1)
        ])
        p = _two_sided_from_distribution(dist, u_a)
        return stat, p
    mean = n1 * n2 / 2.0
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts ** 3 - counts).sum())
    var = (n1 * n2 / 12.0) * (total + 1 - tie_term / (total * (total - 1)))
    if var <= 0:
        raise DegenerateTestError("zero variance in rank-sum statistic")
    # stat = min(U_a, U_b) sits in the lower tail; continuity-corrected.
    z = (stat - mean + 0.5) / math.sqrt(var)
    return stat, min(1.0, 2.0 * _normal_sf(-z))


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseRow:
    case_id: str
    manual_volume_mm3: float
    automatic_volume_mm3: float
    manual_voxels: int
    automatic_voxels: int
    dsc_percent: float
    subgroup: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.dsc_percent <= 100.0:
            raise ValueError(
                f"dsc_percent must be in [0, 100], got {self.dsc_percent}"
            )


@dataclass(frozen=True)
class TestOutcome:
    name: str
    statistic: float
    p_value: float
    significant: bool


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[CaseRow, ...]
    overall: dict[str, SummaryRow]
    subgroup_summaries: dict[str, dict[str, SummaryRow]]
    volume_test: TestOutcome | None
    volume_test_note: str
    subgroup_test: TestOutcome | None
    subgroup_test_note: str
    alpha: float = ALPHA

    def to_dict(self) -> dict:
        def summary_dict(s: SummaryRow) -> dict:
            return {"min": s.min, "max": s.max, "mean": s.mean,
                    "stddev": s.stddev}

        def test_dict(t: TestOutcome | None) -> dict | None:
            if t is None:
                return None
            return {"name": t.name, "statistic": t.statistic,
                    "p_value": t.p_value, "significant": t.significant}

        return {
            "alpha": self.alpha,
            "cases": [
                {
                    "case_id": r.case_id,
                    "manual_volume_mm3": r.manual_volume_mm3,
                    "automatic_volume_mm3": r.automatic_volume_mm3,
                    "manual_voxels": r.manual_voxels,
                    "automatic_voxels": r.automatic_voxels,
                    "dsc_percent": r.dsc_percent,
                    "subgroup": r.subgroup,
                }
                for r in self.rows
            ],
            "overall": {k: summary_dict(v) for k, v in self.overall.items()},
            "subgroups": {
                tag: {k: summary_dict(v) for k, v in cols.items()}
                for tag, cols in self.subgroup_summaries.items()
            },
            "volume_test": test_dict(self.volume_test),
            "volume_test_note": self.volume_test_note,
            "subgroup_test": test_dict(self.subgroup_test),
            "subgroup_test_note": self.subgroup_test_note,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        header = (f"{'case':>8} {'manual mm3':>12} {'auto mm3':>12} "
                  f"{'manual vox':>11} {'auto vox':>9} {'DSC %':>7} subgroup")
        lines.append(header)
        lines.append("-" * len(header))
        for r in self.rows:
            lines.append(
                f"{r.case_id:>8} {r.manual_volume_mm3:>12.1f} "
                f"{r.automatic_volume_mm3:>12.1f} {r.manual_voxels:>11d} "
                f"{r.automatic_voxels:>9d} {r.dsc_percent:>7.2f} "
                f"{r.subgroup or '-'}"
            )
        lines.append("")

        def block(title: str, cols: dict[str, SummaryRow]):
            lines.append(title)
            for name, s in cols.items():
                lines.append(
                    f"  {name:<22} min {s.min:>10.2f}  max {s.max:>10.2f}  "
                    f"mean {s.mean:>10.2f} +/- {s.stddev:.2f}"
                )

        block("overall summary", self.overall)
        for tag, cols in self.subgroup_summaries.items():
            lines.append("")
            block(f"subgroup {tag!r} ({sum(1 for r in self.rows if r.subgroup == tag)} cases)",
                  cols)
        lines.append("")
        lines.append(f"significance level: {self.alpha}")
        for t, note in ((self.volume_test, self.volume_test_note),
                        (self.subgroup_test, self.subgroup_test_note)):
            if t is None:
                lines.append(f"  {note}")
            else:
                verdict = "significant" if t.significant else "not significant"
                lines.append(
                    f"  {t.name}: statistic {t.statistic:.2f}, "
                    f"p = {t.p_value:.4f} ({verdict})"
                )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["case_id,manual_volume_mm3,automatic_volume_mm3,"
                 "manual_voxels,automatic_voxels,dsc_percent,subgroup"]
        for r in self.rows:
            lines.append(
                f"{r.case_id},{r.manual_volume_mm3:.6g},"
                f"{r.automatic_volume_mm3:.6g},{r.manual_voxels},"
                f"{r.automatic_voxels},{r.dsc_percent:.2f},{r.subgroup or ''}"
            )
        return "\n".join(lines) + "\n"


def build_report(cases, subgroups=None) -> EvalReport:
    """Assemble rows, summaries and significance tests.

    ``cases`` is an iterable of CaseRow; ``subgroups`` optionally maps
    case_id to a tag, overriding per-row tags.
    """
    rows = []
    for row in cases:
        if subgroups is not None and row.case_id in subgroups:
            row = CaseRow(
                case_id=row.case_id,
                manual_volume_mm3=row.manual_volume_mm3,
                automatic_volume_mm3=row.automatic_volume_mm3,
                manual_voxels=row.manual_voxels,
                automatic_voxels=row.automatic_voxels,
                dsc_percent=row.dsc_percent,
                subgroup=subgroups[row.case_id],
            )
        rows.append(row)
    if not rows:
        raise ValueError("need at least one case")

    def columns(rws) -> dict[str, SummaryRow]:
        if len(rws) < 2:
            return {}
        return {
            "manual volume mm3": summarize(r.manual_volume_mm3 for r in rws),
            "automatic volume mm3": summarize(
                r.automatic_volume_mm3 for r in rws),
            "manual voxels": summarize(r.manual_voxels for r in rws),
            "automatic voxels": summarize(r.automatic_voxels for r in rws),
            "DSC percent": summarize(r.dsc_percent for r in rws),
        }

    overall = columns(rows)
    tags = sorted({r.subgroup for r in rows if r.subgroup is not None})
    subgroup_summaries = {}
    for tag in tags:
        members = [r for r in rows if r.subgroup == tag]
        cols = columns(members)
        if cols:
            subgroup_summaries[tag] = cols

    volume_test = None
    volume_note = ""
    try:
        stat, p = wilcoxon_signed_rank(
            [r.manual_volume_mm3 for r in rows],
            [r.automatic_volume_mm3 for r in rows],
        )
        volume_test = TestOutcome("Wilcoxon signed-rank (manual vs automatic volume)",
                                  stat, p, p < ALPHA)
    except DegenerateTestError as exc:
        volume_note = f"volume test omitted: {exc}"

    subgroup_test = None
    subgroup_note = ""
    if len(tags) == 2:
        a = [r.dsc_percent for r in rows if r.subgroup == tags[0]]
        b = [r.dsc_percent for r in rows if r.subgroup == tags[1]]
        try:
            stat, p = mann_whitney_u(a, b)
            subgroup_test = TestOutcome(
                f"Mann-Whitney (DSC, {tags[0]} vs {tags[1]})", stat, p,
                p < ALPHA)
        except DegenerateTestError as exc:
            subgroup_note = f"subgroup test omitted: {exc}"
    elif len(tags) < 2:
        subgroup_note = ("subgroup test omitted: need exactly two subgroups, "
                         f"got {len(tags)}")
    else:
        subgroup_note = ("subgroup test omitted: need exactly two subgroups, "
                         f"got {len(tags)} ({', '.join(tags)})")

    return EvalReport(
        rows=tuple(rows),
        overall=overall,
        subgroup_summaries=subgroup_summaries,
        volume_test=volume_test,
        volume_test_note=volume_note,
        subgroup_test=subgroup_test,
        subgroup_test_note=subgroup_note,
    )


def case_rows_from_json(text: str) -> tuple[list[CaseRow], dict]:
    """Parse the cases.json document: {"cases": [{case_id, ...}, ...]}."""
    doc = json.loads(text)
    rows = []
    for c in doc["cases"]:
        rows.append(CaseRow(
            case_id=str(c["case_id"]),
            manual_volume_mm3=float(c["manual_volume_mm3"]),
            automatic_volume_mm3=float(c["automatic_volume_mm3"]),
            manual_voxels=int(c["manual_voxels"]),
            automatic_voxels=int(c["automatic_voxels"]),
            dsc_percent=float(c["dsc_percent"]),
            subgroup=c.get("subgroup"),
        ))
    return rows, doc
