"""Small statistics helpers shared by the measurement and attack reports."""

import math


def wilson_interval(successes: int, trials: int, z: float = 1.959964) -> tuple[float, float]:
    """Wilson score 95% confidence interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError("successes out of range")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials))
    return (max(0.0, center - half), min(1.0, center + half))


def dispersion_test(counts, trials_per_unit: int) -> dict:
    """Chi-square overdispersion test for per-unit hit counts.

    Under the null that every unit shares one hit probability, the statistic
    sum((k_i - k_bar)^2) / (k_bar * (1 - p_bar)) is approximately
    chi-square with len(counts) - 1 degrees of freedom.  Returns the
    statistic, its degrees of freedom, and a normal-approximation z-score;
    z > 1.645 rejects equal-probability at the 95% level (one-sided).
    """
    n = len(counts)
    if n < 2:
        raise ValueError("need at least two units")
    k_bar = sum(counts) / n
    if k_bar == 0:
        return {"statistic": 0.0, "dof": n - 1, "z": 0.0, "overdispersed": False}
    p_bar = k_bar / trials_per_unit
    stat = sum((k - k_bar) ** 2 for k in counts) / (k_bar * (1.0 - p_bar))
    dof = n - 1
    # Wilson-Hilferty cube-root normal approximation of the chi-square.
    x = (stat / dof) ** (1.0 / 3.0)
    z = (x - (1.0 - 2.0 / (9.0 * dof))) / math.sqrt(2.0 / (9.0 * dof))
    return {"statistic": stat, "dof": dof, "z": z, "overdispersed": z > 1.645}
