"""Small numerical helpers shared by several modules."""

from __future__ import annotations

import warnings

from scipy.integrate import IntegrationWarning, quad


def endpoint_quad(fn, a: float, b: float) -> float:
    """``int_a^b fn`` for integrands with integrable singularities at the endpoints.

    The smoothstep substitution ``x = a + (b - a)(3w^2 - 2w^3)`` has a
    vanishing derivative at both ends, which cancels ``1/sqrt`` type blow-up.
    """
    h = b - a
    if h == 0:
        return 0.0

    def g(w):
        return fn(a + h * w * w * (3.0 - 2.0 * w)) * 6.0 * h * w * (1.0 - w)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return float(quad(g, 0.0, 1.0, limit=200, epsabs=1e-14, epsrel=1e-12)[0])
