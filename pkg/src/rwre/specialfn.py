"""Scalar special functions used by the environment laws.

``log_gamma`` delegates to the C library through :mod:`math`. ``digamma`` is
evaluated with the standard recurrence plus the de Moivre asymptotic series;
the cutoff and term count keep the absolute error near machine precision,
which the tests pin against independently computed references.
"""

import math

# Coefficients of the asymptotic series psi(x) ~ ln x - 1/(2x) - sum c_k x^(-2k),
# i.e. B_{2k}/(2k) for k = 1..6.
_ASYMPTOTIC = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
)

_RECURRENCE_CUTOFF = 10.0


def log_gamma(x):
    """Natural log of Gamma(x) for x > 0."""
    if x <= 0.0:
        raise ValueError("log_gamma requires x > 0, got %r" % (x,))
    return math.lgamma(x)


def digamma(x):
    """Logarithmic derivative of Gamma at x, for x > 0."""
    if x <= 0.0:
        raise ValueError("digamma requires x > 0, got %r" % (x,))
    x = float(x)
    acc = 0.0
    while x < _RECURRENCE_CUTOFF:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coeff in _ASYMPTOTIC:
        series += coeff * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x - series


def beta_fn(a, b):
    """Euler Beta function B(a, b) for a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("beta_fn requires a > 0 and b > 0")
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
