"""Image-token arithmetic, pooling-size selection and efficiency reporting.

Per page, every detected region contributes one spatial token, text regions
contribute ``s_t**2`` semantic tokens, vision regions ``s_v**2``, and the
global branch adds ``s_g**2`` cross-modality tokens plus one spatial token
for the whole-image region.
"""

from __future__ import annotations

import csv
import io
import numbers
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Mapping, Sequence

from .types import PoolingConfig


class InfeasibleBudgetError(ValueError):
    """No pooling size puts the expected token total inside the band."""


def as_fraction(x) -> Fraction:
    # str() first so 293.37 becomes 29337/100 rather than its binary expansion
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class TokenBudget:
    spatial: Fraction
    semantic_text: Fraction
    semantic_vision: Fraction
    semantic_cross: Fraction

    @property
    def semantic(self) -> Fraction:
        return self.semantic_text + self.semantic_vision + self.semantic_cross

    @property
    def total(self) -> Fraction:
        return self.spatial + self.semantic

    def as_dict(self) -> dict[str, Fraction]:
        return {
            "spatial": self.spatial,
            "semantic_text": self.semantic_text,
            "semantic_vision": self.semantic_vision,
            "semantic_cross": self.semantic_cross,
            "semantic": self.semantic,
            "total": self.total,
        }


@dataclass(frozen=True)
class BudgetBand:
    """Half-open interval (lower_exclusive, upper_inclusive] of acceptable totals."""

    lower_exclusive: Fraction = Fraction(476)
    upper_inclusive: Fraction = Fraction(676)

    def __post_init__(self):
        lo, hi = as_fraction(self.lower_exclusive), as_fraction(self.upper_inclusive)
        if lo < 0 or hi <= 0 or not lo < hi:
            raise ValueError(f"invalid budget band ({lo}, {hi}]")
        object.__setattr__(self, "lower_exclusive", lo)
        object.__setattr__(self, "upper_inclusive", hi)

    @classmethod
    def around(cls, target=576, slack=100) -> BudgetBand:
        return cls(Fraction(target - slack), Fraction(target + slack))

    def __contains__(self, total) -> bool:
        return self.lower_exclusive < total <= self.upper_inclusive


def count_tokens(n_text, n_vision, cfg: PoolingConfig = PoolingConfig(), *,
                 expected: bool = False) -> TokenBudget:
    """Token counts for a page with ``n_text`` text and ``n_vision`` vision regions.

    With ``expected=True`` the counts may be fractional corpus averages; the
    result is then an exact rational expectation. Otherwise both must be
    non-negative integers.
    """
    if not expected:
        for name, v in (("n_text", n_text), ("n_vision", n_vision)):
            if isinstance(v, bool) or not isinstance(v, numbers.Integral):
                raise TypeError(f"{name} must be an integer outside expected mode, got {v!r}")
    nt, nv = as_fraction(n_text), as_fraction(n_vision)
    if nt < 0 or nv < 0:
        raise ValueError(f"region counts must be non-negative, got ({n_text}, {n_vision})")
    return TokenBudget(
        spatial=nt + nv + 1,
        semantic_text=nt * cfg.s_t**2,
        semantic_vision=nv * cfg.s_v**2,
        semantic_cross=Fraction(cfg.s_g**2),
    )


def _candidates(n_text_avg, n_vision_avg, band, s_t, link, d):
    """Yield (s_v, total) for s_v = 1, 2, ... until totals leave the band from above."""
    s_v = 1
    while True:
        s_g = link * s_v
        if s_t <= s_v:
            cfg = PoolingConfig(s_t, s_v, s_g, d)
            total = count_tokens(n_text_avg, n_vision_avg, cfg, expected=True).total
            if total > band.upper_inclusive:
                return
            yield s_v, total
        s_v += 1


def feasible_vision_sizes(n_text_avg, n_vision_avg, band: BudgetBand = BudgetBand(),
                          s_t: int = 1, link: int = 2, d: int = 256) -> dict[int, Fraction]:
    """Every vision pooling side whose expected total falls in ``band``, with that total.

    The cross-modality side is tied to the vision side as ``s_g = link * s_v``,
    which makes the total strictly increasing in ``s_v``.
    """
    if link < 1:
        raise ValueError("link factor must be >= 1")
    return {s_v: total for s_v, total in _candidates(n_text_avg, n_vision_avg, band, s_t, link, d)
            if total in band}


def solve_pooling(n_text_avg, n_vision_avg, band: BudgetBand = BudgetBand(),
                  s_t: int = 1, link: int = 2, d: int = 256) -> PoolingConfig:
    """Largest vision pooling side (and linked global side) that keeps the budget in band."""
    feasible = feasible_vision_sizes(n_text_avg, n_vision_avg, band, s_t, link, d)
    if not feasible:
        smallest = next(_candidates(n_text_avg, n_vision_avg, BudgetBand(0, 10**12), s_t, link, d))
        raise InfeasibleBudgetError(
            f"no s_v >= 1 gives a total in ({band.lower_exclusive}, {band.upper_inclusive}]; "
            f"smallest attainable total is {float(smallest[1]):g} at s_v={smallest[0]}")
    s_v = max(feasible)
    return PoolingConfig(s_t, s_v, link * s_v, d)


def round_half_up(x, places: int = 1) -> Decimal:
    q = Decimal(1).scaleb(-places)
    return Decimal(str(float(x))).quantize(q, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class EfficiencyRow:
    name: str
    ours_tokens: float
    baseline_tokens: float
    is_aggregate: bool = False

    @property
    def reduction_ratio(self) -> float:
        return self.baseline_tokens / self.ours_tokens

    @property
    def rounded_ratio(self) -> Decimal:
        return round_half_up(self.reduction_ratio, 1)


@dataclass(frozen=True)
class EfficiencyReport:
    rows: tuple[EfficiencyRow, ...]
    overall: EfficiencyRow

    def row(self, name: str) -> EfficiencyRow:
        for r in self.rows + (self.overall,):
            if r.name == name:
                return r
        raise KeyError(name)

    def all_rows(self) -> tuple[EfficiencyRow, ...]:
        return self.rows + (self.overall,)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "tokens_ours", "tokens_baseline", "reduction_ratio", "ratio_rounded"])
        for r in self.all_rows():
            w.writerow([r.name, f"{r.ours_tokens:g}", f"{r.baseline_tokens:g}",
                        f"{r.reduction_ratio:.4f}", str(r.rounded_ratio)])
        return buf.getvalue()

    def to_plot_csv(self) -> str:
        """Per-dataset (dataset, tokens_ours, tokens_baseline) for bar charts."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "tokens_ours", "tokens_baseline"])
        for r in self.rows:
            if not r.is_aggregate:
                w.writerow([r.name, f"{r.ours_tokens:g}", f"{r.baseline_tokens:g}"])
        return buf.getvalue()

    def to_markdown(self, ours_label: str = "ours", baseline_label: str = "baseline") -> str:
        rows = self.all_rows()
        header = "| | " + " | ".join(r.name for r in rows) + " |"
        sep = "|---|" + "---|" * len(rows)
        base = f"| {baseline_label} | " + " | ".join(f"{r.baseline_tokens:.0f}" for r in rows) + " |"
        ours = f"| {ours_label} | " + " | ".join(f"{r.ours_tokens:.0f}" for r in rows) + " |"
        ratio = "| | " + " | ".join(f"({r.rounded_ratio}×↓)" for r in rows) + " |"
        return "\n".join([header, sep, base, ours, ratio]) + "\n"


def _mean(values):
    values = list(values)
    return sum(values) / len(values)


def efficiency_report(ours: Mapping[str, float], baseline: Mapping[str, float],
                      groups: Mapping[str, Sequence[str]] | None = None,
                      overall_name: str = "Overall") -> EfficiencyReport:
    """Compare average image tokens per document against a fixed-token baseline.

    ``groups`` maps an aggregate row name (e.g. an in-domain average) to the
    datasets it averages; each group row is appended after its members. The
    overall row averages every dataset.
    """
    if set(ours) != set(baseline):
        raise ValueError(f"dataset keys differ: {sorted(set(ours) ^ set(baseline))}")
    if not ours:
        raise ValueError("no datasets given")
    for name in ours:
        if not (ours[name] > 0 and baseline[name] > 0):
            raise ValueError(f"{name}: token counts must be positive")
    rows = []
    placed = set()
    for gname, members in (groups or {}).items():
        missing = [m for m in members if m not in ours]
        if missing or not members:
            raise ValueError(f"group {gname!r} refers to unknown datasets {missing}")
        for m in members:
            if m not in placed:
                rows.append(EfficiencyRow(m, float(ours[m]), float(baseline[m])))
                placed.add(m)
        rows.append(EfficiencyRow(gname, _mean(ours[m] for m in members),
                                  _mean(baseline[m] for m in members), is_aggregate=True))
    for name in ours:
        if name not in placed:
            rows.append(EfficiencyRow(name, float(ours[name]), float(baseline[name])))
    overall = EfficiencyRow(overall_name, _mean(ours.values()), _mean(baseline.values()),
                            is_aggregate=True)
    return EfficiencyReport(tuple(rows), overall)
