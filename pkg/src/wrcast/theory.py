"""Closed-form analysis of the constrained weighted combination.

For two components the optimal single weight has a closed form, and a
convex quadratic in the estimate decides whether an individual component
gets closer to its true value at that optimum. This module implements
those formulas together with independent brute-force oracles, the
region map for joint improvement, the box-constrained optimal-weight
solver for any number of components, and a Monte Carlo study of how
often all components improve as the weight interval widens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (ConfigError, DegenerateInstanceError, DomainError,
                     NoEffectError)

REGION_NAMES = ("neither", "only_1", "only_2", "both")


@dataclass(frozen=True)
class TheoryInstance:
    """A (y, true components, estimates) triple set."""

    y: float
    l_true: np.ndarray
    l_est: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "l_true", np.asarray(self.l_true, float))
        object.__setattr__(self, "l_est", np.asarray(self.l_est, float))
        if self.l_true.shape != self.l_est.shape or self.l_true.ndim != 1:
            raise DomainError("l_true and l_est must be 1-d and aligned")
        if len(self.l_true) < 2:
            raise DomainError("need at least two components")

    @property
    def n(self) -> int:
        return len(self.l_true)


@dataclass(frozen=True)
class ImprovementVerdict:
    improved: bool            # brute force, independent of the predicate
    predicted: bool           # sign-rule prediction
    w_star: np.ndarray


def optimal_weight_n2(y: float, l1_est: float, l2_est: float) -> float:
    """The unique error-minimizing weight for two components.

    The combination w*l1_est + (2-w)*l2_est reproduces y exactly at the
    returned w. Undefined when the two estimates coincide.
    """
    if l1_est == l2_est:
        raise DegenerateInstanceError(
            "equal estimates: the combination is constant in w")
    return (y - 2.0 * l2_est) / (l1_est - l2_est)


def improvement_quadratic(y: float, l_i: float, est_i: float,
                          est_other: float) -> float:
    """Convex quadratic in est_i whose sign decides bias reduction.

    Paired with the sign of (y - est_i - est_other): the modified
    estimate w_i* est_i is strictly less biased than est_i iff the
    additive combination under-shoots y and this value is negative, or
    over-shoots and it is positive.
    """
    return (est_i * est_i + est_i * (y - 3.0 * est_other - 2.0 * l_i)
            + 2.0 * l_i * est_other)


def sign_rule_improves(inst: TheoryInstance, i: int) -> bool:
    if inst.n != 2:
        raise DomainError("sign rule is defined for two components")
    est_sum = float(inst.l_est.sum())
    q = improvement_quadratic(inst.y, inst.l_true[i], inst.l_est[i],
                              inst.l_est[1 - i])
    if inst.y > est_sum:
        return q < 0.0
    if inst.y < est_sum:
        return q > 0.0
    return False


def optimal_weights_n2(y: float, l_est) -> np.ndarray:
    w = optimal_weight_n2(y, float(l_est[0]), float(l_est[1]))
    return np.array([w, 2.0 - w])


def brute_force_improves(inst: TheoryInstance, i: int) -> bool:
    """Direct |w* est - true| < |est - true| check at the optimum."""
    w = optimal_weights_n2(inst.y, inst.l_est)
    return bool(abs(w[i] * inst.l_est[i] - inst.l_true[i])
                < abs(inst.l_est[i] - inst.l_true[i]))


def verdict(inst: TheoryInstance, i: int) -> ImprovementVerdict:
    return ImprovementVerdict(improved=brute_force_improves(inst, i),
                              predicted=sign_rule_improves(inst, i),
                              w_star=optimal_weights_n2(inst.y, inst.l_est))


def weight_reduces_bias(l_true: float, l_est: float, w: float) -> bool:
    """Factored predicate: est*(w-1)*((w+1)*est - 2*true) < 0.

    Equivalent to |w*est - true| < |est - true| for any sign of est.
    """
    return l_est * (w - 1.0) * ((w + 1.0) * l_est - 2.0 * l_true) < 0.0


def improvement_interval(l_true: float, l_est: float):
    """Open interval of weights that strictly reduce |w*est - true|.

    The endpoints are the roots 1 and 2*true/est - 1 of the bias
    difference; the same interval form covers negative estimates. Empty
    (None) when the estimate is already exact.
    """
    if l_est == 0.0:
        raise NoEffectError("reweighting a zero estimate has no effect")
    if l_est == l_true:
        return None
    other = 2.0 * l_true / l_est - 1.0
    return (min(1.0, other), max(1.0, other))


# ---------------------------------------------------------------------------
# joint improvement region map (two components)

def _both_roots(y, l2, l1_est):
    """Roots of the component-2 quadratic for fixed l1_est."""
    b = y - 3.0 * l1_est - 2.0 * l2
    c = 2.0 * l2 * l1_est
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return None, None
    s = math.sqrt(disc)
    return (-b - s) / 2.0, (-b + s) / 2.0


def corollary_both_improve(l1, l2, l1_est, l2_est, tol=1e-9):
    """Threshold characterization of the 'both improve' region.

    Returns True/False when the characterization applies to the cell,
    None when it does not (estimate-1 at or below the midpoint, or the
    cell touches a boundary within tol).
    """
    y = l1 + l2
    mid = y / 2.0
    if not (l1_est > l2_est > 0.0):
        return None
    if l1_est <= mid + tol:
        return None
    if abs(l1_est - l1) <= tol:
        return None
    root_lo, root_hi = _both_roots(y, l2, l1_est)
    if root_lo is None:
        return False
    if mid < l1_est < l1:
        # threshold sits between l2 and the midpoint
        thr = root_lo if l2 < root_lo < mid else root_hi
        lo, hi = thr, y - l1_est
    else:
        # over-estimated component 1: threshold below l2
        thr = root_lo if 0.0 < root_lo < l2 else root_hi
        lo, hi = y - l1_est, thr
    if abs(l2_est - lo) <= tol or abs(l2_est - hi) <= tol:
        return None
    return bool(lo < l2_est < hi)


@dataclass
class RegionMap:
    l1: float
    l2: float
    l1_est: np.ndarray
    l2_est: np.ndarray
    w_star: np.ndarray
    region: np.ndarray            # indices into REGION_NAMES
    sign_rule_checked: int = 0
    sign_rule_mismatches: int = 0
    corollary_checked: int = 0
    corollary_mismatches: int = 0
    observation_checked: int = 0
    observation_violations: int = 0

    def rows(self):
        for k in range(len(self.w_star)):
            yield {"l1": self.l1, "l2": self.l2,
                   "l1_est": float(self.l1_est[k]),
                   "l2_est": float(self.l2_est[k]),
                   "w_star": float(self.w_star[k]),
                   "region": REGION_NAMES[int(self.region[k])]}


def joint_improvement_map_n2(l1: float, l2: float, step: float = 0.5,
                             est_max: float | None = None,
                             tol: float = 1e-9) -> RegionMap:
    """Classify every grid cell by brute force and check the predicates.

    Cells are (l1_est, l2_est) pairs with l1_est > l2_est > 0 on a
    uniform grid. Each cell is labelled both/only-1/only-2/neither from
    the direct error comparison at the optimal weights; the sign rule
    and the threshold characterization are verified against that label
    wherever they apply (boundary cells excluded within tol).
    """
    if not l1 > l2 > 0:
        raise DomainError("requires l1 > l2 > 0")
    y = l1 + l2
    if est_max is None:
        est_max = y
    grid = np.arange(step, est_max + step / 2, step)
    e1, e2 = np.meshgrid(grid, grid, indexing="ij")
    keep = e1 > e2
    e1, e2 = e1[keep], e2[keep]

    w1 = (y - 2.0 * e2) / (e1 - e2)
    w2 = 2.0 - w1
    imp1 = np.abs(w1 * e1 - l1) < np.abs(e1 - l1)
    imp2 = np.abs(w2 * e2 - l2) < np.abs(e2 - l2)
    region = np.where(imp1 & imp2, 3, np.where(imp1, 1, np.where(imp2, 2, 0)))

    rm = RegionMap(l1=l1, l2=l2, l1_est=e1, l2_est=e2, w_star=w1,
                   region=region)

    est_sum = e1 + e2
    q1 = e1 * e1 + e1 * (y - 3.0 * e2 - 2.0 * l1) + 2.0 * l1 * e2
    q2 = e2 * e2 + e2 * (y - 3.0 * e1 - 2.0 * l2) + 2.0 * l2 * e1
    nondeg = (np.abs(y - est_sum) > tol) & (np.abs(q1) > tol) \
        & (np.abs(q2) > tol) & (np.abs(e1 - e2) > tol)
    under = y > est_sum
    pred1 = np.where(under, q1 < 0, q1 > 0)
    pred2 = np.where(under, q2 < 0, q2 > 0)
    rm.sign_rule_checked = int(nondeg.sum()) * 2
    rm.sign_rule_mismatches = int((nondeg & (pred1 != imp1)).sum()
                                  + (nondeg & (pred2 != imp2)).sum())

    mid = y / 2.0
    for k in np.nonzero(nondeg)[0]:
        pred = corollary_both_improve(l1, l2, float(e1[k]), float(e2[k]),
                                      tol=tol)
        if pred is None:
            continue
        rm.corollary_checked += 1
        if pred != bool(region[k] == 3):
            rm.corollary_mismatches += 1

    # optimal-weight range check on the 'both' cells past the midpoint
    both = (region == 3) & nondeg & (e1 > mid + tol) & (np.abs(e1 - l1) > tol)
    rm.observation_checked = int(both.sum())
    in02 = (w1 > 0) & (w1 < 2)
    lower_half = e1 < l1
    in_sub = np.where(lower_half, (w1 > 1) & (w1 < 2), (w1 > 0) & (w1 < 1))
    rm.observation_violations = int((both & ~(in02 & in_sub)).sum())
    return rm


# ---------------------------------------------------------------------------
# constrained optimum for any number of components

def constrained_optimal_weights(y: float, l_est, alpha: float) -> np.ndarray:
    """Minimize (y - sum(w*est))^2 on the box-constrained simplex slice.

    Weights satisfy sum(w) = n and each w in
    [1 - alpha/n, 1 - alpha/n + alpha]. Starting from all-ones, mass is
    transferred between the most effective admissible pair until the
    target is matched exactly or the reachable range is exhausted, which
    yields a boundary minimizer.
    """
    l_est = np.asarray(l_est, float)
    n = len(l_est)
    if n < 2:
        raise DomainError("need at least two components")
    if not 0.0 <= alpha <= n:
        raise ConfigError(f"alpha={alpha} outside [0, {n}]")
    if np.all(l_est == l_est[0]):
        raise DegenerateInstanceError("all estimates equal")
    lo = 1.0 - alpha / n
    hi = lo + alpha
    w = np.ones(n)
    need = y - float(l_est.sum())
    if need == 0.0 or alpha == 0.0:
        return w
    sign = 1.0 if need > 0.0 else -1.0
    # raise weights on the high side of sign*l_est, lower on the low side
    inc = sorted(range(n), key=lambda k: (-sign * l_est[k], k))
    dec = sorted(range(n), key=lambda k: (sign * l_est[k], k))
    i = j = 0
    remaining = abs(need)
    while remaining > 0.0 and i < n and j < n:
        a, b = inc[i], dec[j]
        gap = sign * (l_est[a] - l_est[b])
        if a == b or gap <= 0.0:
            break
        cap_a = hi - w[a]
        cap_b = w[b] - lo
        if cap_a <= 0.0:
            i += 1
            continue
        if cap_b <= 0.0:
            j += 1
            continue
        delta = min(cap_a, cap_b, remaining / gap)
        w[a] += delta
        w[b] -= delta
        remaining -= delta * gap
        # clamp-and-advance so fp rounding cannot stall the scan
        if delta >= cap_a * (1.0 - 1e-15):
            w[a] = hi
            i += 1
        if delta >= cap_b * (1.0 - 1e-15):
            w[b] = lo
            j += 1
    assert lo - 1e-12 <= w.min() and w.max() <= hi + 1e-12
    return w


# ---------------------------------------------------------------------------
# Monte Carlo: how often do all components improve?

def conjecture_monte_carlo(n_components: int, trials: int, alpha_grid,
                           noise_sigma: float = 0.2, seed: int = 0,
                           bias=None, component_low: float = 1.0,
                           component_high: float = 10.0):
    """Estimate P(all components improve) per weight-interval size.

    True components are uniform, estimates get componentwise
    multiplicative lognormal noise (optionally a fixed bias factor
    first). For each interval size the box-constrained optimum is
    computed and strict improvement of every component is recorded.
    Returns a list of {alpha, prob_all_improve, mean_abs_weight_dev}.
    """
    if trials < 1:
        raise DomainError("trials must be positive")
    rng = np.random.default_rng(seed)
    alphas = [float(a) for a in alpha_grid]
    bias = np.ones(n_components) if bias is None else np.asarray(bias, float)
    hits = {a: 0 for a in alphas}
    dev = {a: 0.0 for a in alphas}
    for _ in range(trials):
        l_true = rng.uniform(component_low, component_high, n_components)
        l_est = l_true * bias * np.exp(rng.normal(0.0, noise_sigma,
                                                  n_components))
        y = float(l_true.sum())
        base_err = np.abs(l_est - l_true)
        for a in alphas:
            w = constrained_optimal_weights(y, l_est, a)
            if np.all(np.abs(w * l_est - l_true) < base_err):
                hits[a] += 1
            dev[a] += float(np.mean(np.abs(w - 1.0)))
    return [{"alpha": a,
             "prob_all_improve": hits[a] / trials,
             "mean_abs_weight_dev": dev[a] / trials}
            for a in alphas]


# ---------------------------------------------------------------------------
# machine-checked suite

def theory_report(seed: int = 0, n_random: int = 10_000, grid_hi: int = 10,
                  mc_trials: int = 2000) -> dict:
    """Run every closed-form check; returns a pass/fail report.

    Covers: weight-normalization constraints, exact reconstruction at
    the two-component optimum, sign-rule and threshold agreement with
    brute force over the full grid, improvement-interval equivalence
    with the factored predicate (both estimate signs), the constrained
    solver's exactness identity, and the Monte Carlo improvement table.
    """
    from .combiner import normalize_weights

    rng = np.random.default_rng(seed)
    checks = {}

    # weight constraints
    worst_sum = 0.0
    worst_box = 0.0
    per_n = max(1, n_random // 7)
    for n in range(2, 9):
        for _ in range(per_n // 50 + 1):
            logits = rng.normal(0.0, 3.0, (n, 50))
            alpha = float(rng.uniform(0.0, n))
            w = normalize_weights(logits, alpha, axis=0)
            lo = 1.0 - alpha / n
            worst_sum = max(worst_sum,
                            float(np.abs(w.sum(axis=0) - n).max()))
            worst_box = max(worst_box,
                            float(max((lo - w).max(), (w - lo - alpha).max())))
    checks["weight_constraints"] = {
        "passed": worst_sum <= 1e-9 and worst_box <= 1e-12,
        "worst_sum_gap": worst_sum, "worst_box_overrun": worst_box}

    # two-component optimum reconstructs exactly and beats plain addition
    y = rng.uniform(-10, 20, n_random)
    e1 = rng.uniform(-10, 10, n_random)
    e2 = rng.uniform(-10, 10, n_random)
    keep = np.abs(e1 - e2) > 1e-6
    y, e1, e2 = y[keep], e1[keep], e2[keep]
    w = (y - 2.0 * e2) / (e1 - e2)
    err_star = (y - (w * e1 + (2.0 - w) * e2)) ** 2
    err_one = (y - e1 - e2) ** 2
    strict = np.abs(y - e1 - e2) > 1e-9
    checks["optimal_weight_reconstruction"] = {
        "passed": bool(np.all(err_star <= 1e-9)
                       and np.all(err_star <= err_one + 1e-12)
                       and np.all(err_star[strict] < err_one[strict])),
        "worst_reconstruction": float(err_star.max())}

    # grid maps: sign rule, thresholds, optimal-weight ranges
    sr_checked = sr_bad = co_checked = co_bad = ob_checked = ob_bad = 0
    for l1 in range(1, grid_hi + 1):
        for l2 in range(1, l1):
            rm = joint_improvement_map_n2(float(l1), float(l2))
            sr_checked += rm.sign_rule_checked
            sr_bad += rm.sign_rule_mismatches
            co_checked += rm.corollary_checked
            co_bad += rm.corollary_mismatches
            ob_checked += rm.observation_checked
            ob_bad += rm.observation_violations
    checks["sign_rule_vs_brute_force"] = {
        "passed": sr_bad == 0, "checked": sr_checked, "mismatches": sr_bad}
    checks["joint_improvement_thresholds"] = {
        "passed": co_bad == 0, "checked": co_checked, "mismatches": co_bad}
    checks["optimal_weight_ranges"] = {
        "passed": ob_bad == 0, "checked": ob_checked, "violations": ob_bad}

    # improvement interval vs factored predicate, both estimate signs
    lt = rng.uniform(-5, 5, n_random)
    le = rng.uniform(-5, 5, n_random)
    le[np.abs(le) < 1e-6] = 1.0
    ws = rng.uniform(-3, 5, n_random)
    bad = 0
    for k in range(n_random):
        iv = improvement_interval(float(lt[k]), float(le[k]))
        inside = iv is not None and iv[0] < ws[k] < iv[1]
        if inside != weight_reduces_bias(float(lt[k]), float(le[k]),
                                         float(ws[k])):
            bad += 1
    checks["improvement_interval"] = {
        "passed": bad == 0, "checked": n_random, "mismatches": bad}

    # constrained solver: exactness and the three-component identity
    solver_bad = 0
    worst_res = 0.0
    for _ in range(500):
        est = rng.uniform(1.0, 10.0, 3)
        if np.ptp(est) < 1e-9:
            continue
        target = float(est.sum() + rng.normal(0.0, 1.0))
        w3 = constrained_optimal_weights(target, est, 1.0)
        resid = target - float(np.dot(w3, est))
        span_lo = float(np.dot(_extreme_weights(est, 1.0, False), est))
        span_hi = float(np.dot(_extreme_weights(est, 1.0, True), est))
        if span_lo - 1e-9 <= target <= span_hi + 1e-9:
            worst_res = max(worst_res, abs(resid))
            w2_expected = (target + w3[0] * (est[2] - est[0])
                           - 3.0 * est[2]) / (est[1] - est[2])
            if abs(w3[1] - w2_expected) > 1e-9:
                solver_bad += 1
    checks["constrained_solver"] = {
        "passed": solver_bad == 0 and worst_res <= 1e-9,
        "worst_reachable_residual": worst_res, "identity_failures": solver_bad}

    # Monte Carlo: no improvement at alpha=0, interior maximum
    table = conjecture_monte_carlo(3, mc_trials, [0.0, 0.5, 1.0, 2.0, 3.0],
                                   seed=seed)
    probs = [row["prob_all_improve"] for row in table]
    arg = int(np.argmax(probs))
    checks["improvement_monte_carlo"] = {
        "passed": probs[0] == 0.0 and 0 < arg < len(probs) - 1
        and probs[-1] < probs[arg],
        "table": table}

    checks["all_passed"] = all(
        v["passed"] for k, v in checks.items() if isinstance(v, dict))
    return checks


def _extreme_weights(est, alpha, maximize):
    n = len(est)
    lo = 1.0 - alpha / n
    w = np.full(n, lo)
    order = np.argsort(est)
    pick = order[-1] if maximize else order[0]
    w[pick] = lo + alpha
    return w
