"""Independent reference computations used by the tests.

Written with plain loops, ``math``, ``decimal`` and ``statistics`` so they
share no code path with the package.
"""

import math
import statistics
from decimal import Decimal, getcontext


def sine_synthesis(coeffs, x):
    """``sum_k c_k sqrt(2) sin(k pi x)`` at one point."""
    return sum(c * math.sqrt(2.0) * math.sin((k + 1) * math.pi * x) for k, c in enumerate(coeffs))


def convolution_by_summation(increments, lam, dt):
    """``W^n = sum_{k=1}^n (1 + dt lam)^{-(n-k+1)} dW^k`` for one mode."""
    rho = 1.0 / (1.0 + dt * lam)
    out = [0.0]
    for n in range(1, len(increments) + 1):
        out.append(sum(rho ** (n - k + 1) * increments[k - 1] for k in range(1, n + 1)))
    return out


def ou_moments_quadrature(q, lam, dt, nodes=4000):
    """Variance of ``Y`` and ``Cov(X, Y)`` by midpoint quadrature of the
    Ito isometry integrals."""
    h = dt / nodes
    var_y = cov = 0.0
    for i in range(nodes):
        s = (i + 0.5) * h
        var_y += math.exp(-2 * lam * (dt - s)) * h
        cov += math.exp(-lam * (dt - s)) * h
    return q * var_y, q * cov


def conditional_variance_ratio(x, digits=60):
    """``(1 - e^{-2x})/(2x) - ((1 - e^{-x})/x)^2`` in high precision."""
    getcontext().prec = digits
    x = Decimal(x)
    a = (1 - (-2 * x).exp()) / (2 * x)
    b = (1 - (-x).exp()) / x
    return float(a - b * b)


def ols_slope(dts, errors):
    fit = statistics.linear_regression([math.log(d) for d in dts], [math.log(e) for e in errors])
    return fit.slope, fit.intercept
