# File: scripts/fits.py (Q2FMM)
"""Least-squares fits of resource curves against candidate growth forms."""

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from app.models import FitCandidate, FitReport
from scripts.errors import Q2FMMError

logger = logging.getLogger(__name__)

GROWTH_FORMS: Dict[str, Callable[[float, float], float]] = {
    "sqrt_N": lambda n, q: math.sqrt(n),
    "logN": lambda n, q: math.log2(n),
    "logN_logQ": lambda n, q: math.log2(n) * math.log2(max(q, 2)),
    "N": lambda n, q: float(n),
}


def fit_scaling(sizes: Sequence[int], values: Sequence[float], forms: Sequence[str],
                q_values: Optional[Sequence[int]] = None, quantity: str = "depth",
                model_kind: str = "") -> FitReport:
    """
    Fits values = slope * f(N) + intercept for every form and ranks by R^2.

    Args:
        sizes: lattice site counts N.
        values: measured quantity per size.
        forms: keys of GROWTH_FORMS.
        q_values: electron counts per size (needed by logN_logQ; defaults to N / 2).
    """
    if len(sizes) != len(values) or len(sizes) < 3:
        raise Q2FMMError(f"fit needs at least 3 matching points, got {len(sizes)} sizes / {len(values)} values")
    qs = list(q_values) if q_values is not None else [max(1, n // 2) for n in sizes]
    y = np.asarray(values, dtype=float)
    candidates: List[FitCandidate] = []
    for form in forms:
        if form not in GROWTH_FORMS:
            raise Q2FMMError(f"unknown growth form '{form}', expected one of {sorted(GROWTH_FORMS)}")
        x = np.array([GROWTH_FORMS[form](n, q) for n, q in zip(sizes, qs)])
        result = stats.linregress(x, y)
        r2 = float(result.rvalue ** 2) if np.ptp(y) > 0 else 1.0
        candidates.append(FitCandidate(form=form, slope=float(result.slope), intercept=float(result.intercept),
                                       r_squared=r2))
    best = max(candidates, key=lambda c: c.r_squared)
    logger.info(f"Fit {quantity} ({model_kind}): best {best.form} with R^2={best.r_squared:.4f}")
    return FitReport(quantity=quantity, model_kind=model_kind, candidates=candidates, best=best.form)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Slope of log(y) against log(x); used for convergence and Trotter-order checks."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    return float(stats.linregress(lx, ly).slope)


def geometric_rate(orders: Sequence[int], errors: Sequence[float]) -> Optional[float]:
    """
    Slope of ln(error) against the expansion order. Zero errors (exact
    levels) are skipped; None when fewer than two points remain.
    """
    points = [(p, e) for p, e in zip(orders, errors) if e > 0.0 and math.isfinite(e)]
    if len(points) < 2:
        return None
    p, e = zip(*points)
    return float(stats.linregress(np.asarray(p, dtype=float), np.log(np.asarray(e))).slope)
