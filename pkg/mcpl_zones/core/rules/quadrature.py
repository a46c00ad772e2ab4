"""Composite Gauss-Legendre rules and adaptive panel doubling.

All oscillatory integrals in the field solvers are split into equal panels
carrying a fixed low-order Gauss-Legendre rule; accuracy is raised by doubling
the panel count until successive estimates agree.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

# Phase covered by one panel of the default rule
PANEL_PHASE = 4.0 * math.pi


class QuadratureError(RuntimeError):
    """Raised when a quadrature does not reach its tolerance."""

    def __init__(self, message: str, estimate=None, error_bound: float = math.inf):
        super().__init__(f"{message} (achieved error bound {error_bound:.3e})")
        self.estimate = estimate
        self.error_bound = error_bound


@lru_cache(maxsize=64)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def composite_rule(
    a: float, b: float, panels: int, order: int = 16
) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width panels on [a, b], `order` nodes each."""
    edges = np.linspace(a, b, panels + 1)
    return _rule_on_edges(edges, order)


def graded_rule(
    a: float, b: float, first: float, nodes: int, order: int = 8
) -> tuple[np.ndarray, np.ndarray]:
    """Geometrically growing panels on [a, b], the first of width `first`.

    The panel count is ceil(nodes / order).
    """
    panels = max(1, math.ceil(nodes / order))
    if panels == 1 or first * panels >= (b - a):
        return composite_rule(a, b, panels, order)
    ratio = _growth_ratio((b - a) / first, panels)
    widths = first * ratio ** np.arange(panels)
    edges = a + np.concatenate([[0.0], np.cumsum(widths)])
    edges[-1] = b
    return _rule_on_edges(edges, order)


def _growth_ratio(span_over_first: float, panels: int) -> float:
    """Solve (r^panels - 1)/(r - 1) = span_over_first for r > 1 by bisection."""
    lo, hi = 1.0, 2.0
    while (hi ** panels - 1.0) / (hi - 1.0) < span_over_first:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (mid ** panels - 1.0) / (mid - 1.0) < span_over_first:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _rule_on_edges(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def panels_for_phase(phase: float, minimum: int = 2) -> int:
    return max(minimum, math.ceil(phase / PANEL_PHASE))


def relative_change(new, old) -> float:
    new = np.asarray(new)
    old = np.asarray(old)
    scale = float(np.max(np.abs(new)))
    if scale == 0.0:
        return float(np.max(np.abs(new - old)))
    return float(np.max(np.abs(new - old))) / scale


def adaptive_doubling(
    evaluate: Callable[[int], np.ndarray],
    start: int,
    rel_tol: float,
    max_doublings: int,
    label: str = "quadrature",
) -> tuple[np.ndarray, float]:
    """Evaluate with `start`, 2*start, ... panels until the relative change
    drops below `rel_tol`. Returns (estimate, last relative change)."""
    panels = start
    previous = evaluate(panels)
    change = math.inf
    if max_doublings == 0:
        return previous, change
    for _ in range(max_doublings):
        panels *= 2
        current = evaluate(panels)
        change = relative_change(current, previous)
        logger.debug("%s: %d panels, relative change %.3e", label, panels, change)
        previous = current
        if change < rel_tol:
            return current, change
    raise QuadratureError(
        f"{label} did not converge to {rel_tol:.1e} within {max_doublings} doublings",
        estimate=previous,
        error_bound=change,
    )
