import math

from scipy.optimize import brentq


def window_mu(lam: float, level: float, window_end: float, eps: float = 0.0) -> float:
    """Closed-form μ(λ, ε) for a constant rate on [0, A] with a uniform kernel"""
    s = lam + level + eps
    return 2.0 * (level + eps) * (1.0 - math.exp(-s * window_end)) / s


def window_lambda(level: float, window_end: float) -> float:
    """Root of μ(λ) = 1, negative for a subcritical window"""
    return brentq(lambda lam: window_mu(lam, level, window_end) - 1.0, -level + 1e-6, 10.0, xtol=1e-14)


CONFIG_TEMPLATE = """[growth]
kind = case1
c1 = 1.0
x_max = 1.0

[division]
kind = constant_window
level = {level}
window_end = 2.0

[kernel]
kind = uniform

[grid]
n_x = 33
n_a = 81
a_max = 4.0

[solver]
epsilon_schedule = 1e-3, 1e-4
"""
