"""Confidence Gain: area between a confidence curve and the baseline accuracy.

The curve is integrated over ``coverage in [coverage_floor, 1]`` with the
trapezoid rule, which is exact for the piecewise-linear curves produced by
:mod:`nngate.gate`. The normaliser is the rectangle between ``acc_b`` and
perfect accuracy over the same coverage range.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ConfidenceCurve, GainReport


@dataclass(frozen=True)
class IntegrationConfig:
    coverage_floor: float = 0.1
    extrapolation_points: int = 20

    def __post_init__(self) -> None:
        if not 0.0 < self.coverage_floor < 1.0:
            raise ValueError(f"coverage_floor must lie in (0, 1), got {self.coverage_floor}")
        if self.extrapolation_points < 2:
            raise ValueError(f"extrapolation_points must be >= 2, got {self.extrapolation_points}")


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Ordinary least squares ``y = slope * x + intercept``."""
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    return slope, float(ym - slope * xm)


def _clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


def extrapolate_to_full_coverage(curve: ConfidenceCurve, cfg: IntegrationConfig = IntegrationConfig()) -> ConfidenceCurve:
    """Extend a curve that stops short of coverage 1.

    A least-squares line through the ``cfg.extrapolation_points``
    highest-coverage points (all of them if there are fewer) is evaluated at
    coverage 1, clamped to [0, 1] and appended. Curves already reaching
    coverage 1 are returned unchanged.
    """
    if len(curve) and curve.coverage[-1] == 1.0:
        return curve
    if len(curve) < 2:
        raise ValueError(f"need at least 2 points to extrapolate, got {len(curve)}")
    tail = slice(-cfg.extrapolation_points, None)
    slope, intercept = _line_fit(curve.coverage[tail], curve.accuracy[tail])
    end = _clamp01(slope + intercept)
    return ConfidenceCurve(
        curve.n,
        np.append(curve.coverage, 1.0),
        np.append(curve.accuracy, end),
        curve.acc_b,
    )


def _value_at_floor(cov: np.ndarray, acc: np.ndarray, floor: float, cfg: IntegrationConfig) -> tuple[float, bool]:
    """Curve accuracy at ``floor``; second item is True if it had to be extrapolated."""
    i = int(np.searchsorted(cov, floor))
    if i < cov.size and cov[i] == floor:
        return float(acc[i]), False
    if i > 0:
        c0, c1, a0, a1 = cov[i - 1], cov[i], acc[i - 1], acc[i]
        return float(a0 + (floor - c0) * (a1 - a0) / (c1 - c0)), False
    # curve starts above the floor: continue the low-coverage trend leftwards
    if cov.size == 1:
        return float(acc[0]), True
    head = slice(0, cfg.extrapolation_points)
    slope, intercept = _line_fit(cov[head], acc[head])
    return _clamp01(slope * floor + intercept), True


def confidence_gain(curve: ConfidenceCurve, cfg: IntegrationConfig = IntegrationConfig()) -> GainReport:
    """Integrate ``accuracy(c) - acc_b`` over ``[cfg.coverage_floor, 1]``.

    The gain is not clamped and can be negative for curves that sit below
    the baseline. ``normalized_confidence_gain`` is ``gain / max_gain``,
    defined as 0 when ``acc_b == 1`` leaves no headroom.
    """
    if len(curve) == 0 or curve.coverage[-1] != 1.0:
        raise ValueError("curve must reach coverage 1; run extrapolate_to_full_coverage first")
    acc_b = float(curve.acc_b)
    if not 0.0 <= acc_b <= 1.0:
        raise ValueError(f"acc_b must lie in [0, 1], got {acc_b}")
    floor = cfg.coverage_floor
    cov, acc = curve.coverage, curve.accuracy

    start, left = _value_at_floor(cov, acc, floor, cfg)
    keep = cov > floor
    xs = np.concatenate(([floor], cov[keep]))
    ys = np.concatenate(([start], acc[keep])) - acc_b
    gain = float(np.sum(0.5 * np.diff(xs) * (ys[1:] + ys[:-1])))

    max_gain = (1.0 - floor) * (1.0 - acc_b)
    normalized = gain / max_gain if max_gain > 0 else 0.0
    return GainReport(
        acc_b=acc_b,
        confidence_gain=gain,
        max_confidence_gain=max_gain,
        normalized_confidence_gain=normalized,
        n=curve.n,
        extrapolated_left=left,
    )


def evaluate_curve(curve: ConfidenceCurve, cfg: IntegrationConfig = IntegrationConfig()) -> GainReport:
    """Extrapolate (if needed) then integrate, recording whether extension happened."""
    full = extrapolate_to_full_coverage(curve, cfg)
    report = confidence_gain(full, cfg)
    if len(full) != len(curve):
        report = replace(report, extrapolated_right=True)
    return report
