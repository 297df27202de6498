"""
Kruzhkov change of variables between damped and undamped eikonal problems.

``v = (1 - exp(-lam u)) / lam`` maps a solution of ``|grad u| = f`` to one of
``|grad v| + lam f v = f``; the inverse is ``u = -log(1 - lam v) / lam``.
Errors in ``v`` are amplified by roughly ``exp(lam u)`` in ``u``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["KruzhkovDomainError", "forward", "inverse", "amplification"]


class KruzhkovDomainError(ValueError):
    """``lam * v >= 1``: no preimage under the forward map."""


def _check_lam(lam):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")


def forward(u, lam: float):
    """``(1 - exp(-lam u)) / lam``, pointwise."""
    _check_lam(lam)
    return -np.expm1(-lam * np.asarray(u, dtype=float)) / lam


def inverse(v, lam: float, strict: bool = True, floor: float = 1e-30):
    """``-log(1 - lam v) / lam``, pointwise.

    In strict mode ``lam v >= 1`` raises; otherwise ``1 - lam v`` is clamped
    to ``floor`` (diagnostic use only).
    """
    _check_lam(lam)
    v = np.asarray(v, dtype=float)
    arg = 1.0 - lam * v
    if strict:
        if np.any(arg <= 0):
            raise KruzhkovDomainError("lam * v >= 1 has no preimage")
        return -np.log1p(-lam * v) / lam
    return -np.log(np.maximum(arg, floor)) / lam


def amplification(u, lam: float):
    """``exp(lam u)``: local factor between errors in ``v`` and in ``u``."""
    return np.exp(lam * np.asarray(u, dtype=float))
