"""Independent reference implementations used only by the tests.

Everything here is deliberately written with plain Python loops (or a
scipy LP, for transport), never by calling package code, so that a bug
in the implementation cannot hide inside its own oracle.
"""
import math


def utility(r, phi, ref):
    """Kinked utility: slope 1 above ref, slope 1 + phi below."""
    return r - phi * max(ref - r, 0.0)


def portfolio_return(weights, row):
    return sum(w * x for w, x in zip(weights, row))


def quad_form(weights, sigma):
    total = 0.0
    for i, wi in enumerate(weights):
        for j, wj in enumerate(weights):
            total += wi * sigma[i][j] * wj
    return total


def robust_objective(weights, scenario_rows, phi, ref, theta, sigma,
                     risk_aversion):
    """Loop-based dual objective: SAA utility - theta*lam - (A/2) x'Sx.

    With theta = 0 this is the plain sample-average objective, which the
    robust value must collapse to exactly.
    """
    s = len(scenario_rows)
    avg = 0.0
    for row in scenario_rows:
        avg += utility(portfolio_return(weights, row), phi, ref)
    avg /= s
    lam = (1.0 + phi) * max(abs(w) for w in weights)
    return avg - theta * lam - 0.5 * risk_aversion * quad_form(weights, sigma)


def sample_covariance(rows):
    """ddof=1 covariance of a list of lists, plain loops."""
    s = len(rows)
    n = len(rows[0])
    means = [sum(row[j] for row in rows) / s for j in range(n)]
    out = [[0.0] * n for _ in range(n)]
    for row in rows:
        for i in range(n):
            for j in range(n):
                out[i][j] += (row[i] - means[i]) * (row[j] - means[j])
    for i in range(n):
        for j in range(n):
            out[i][j] /= (s - 1)
    return out


def transport_lp(weights, scenario_rows, phi, ref, theta, d_cap):
    """Exact worst-case expected utility by LP over breakpoint magnitudes.

    The adversary moves scenario mass along the steepest coordinate
    ``-e_{j*}``; per scenario the utility-versus-distance curve is
    piecewise linear with a single breakpoint where the moved return
    crosses the reference, so an optimal plan only ever places mass at
    distances {0, breakpoint, d_cap}.  Minimizing expected utility over
    those atoms subject to the budget is a small LP.
    """
    import numpy as np
    from scipy.optimize import linprog

    x = list(weights)
    x_star = max(x)
    j_star = x.index(x_star)
    assert j_star >= 0
    s = len(scenario_rows)
    cols = []          # (scenario, distance, utility at moved point)
    for i, row in enumerate(scenario_rows):
        r = portfolio_return(x, row)
        if x_star > 0:
            crossing = max(r - ref, 0.0) / x_star
        else:
            crossing = 0.0
        for d in sorted({0.0, min(crossing, d_cap), d_cap}):
            cols.append((i, d, utility(r - x_star * d, phi, ref)))
    c = np.array([u for (_, _, u) in cols])
    a_eq = np.zeros((s, len(cols)))
    for idx, (i, _, _) in enumerate(cols):
        a_eq[i, idx] = 1.0
    b_eq = np.full(s, 1.0 / s)
    a_ub = np.array([[d for (_, d, _) in cols]])
    res = linprog(c, A_ub=a_ub, b_ub=[theta], A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    return float(res.fun)


def best_subset_brute(objective, n, k):
    """Argmax of ``objective(support)`` over all k-subsets, lexicographic ties."""
    import itertools
    best = None
    best_val = -math.inf
    for support in itertools.combinations(range(n), k):
        val = objective(support)
        if val > best_val:
            best_val, best = val, support
    return best, best_val
