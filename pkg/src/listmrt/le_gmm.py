"""GMM estimation and validity testing for list experiments.

The forward model maps the control response distribution to the treatment
distribution, so each response level contributes one moment condition:
the model-implied treatment probability minus its empirical counterpart.
The J+2 moments sum to zero identically at any empirical input, so one
redundant moment is dropped before estimation; the overidentification
statistic T_n = n * min_theta psi_bar' W psi_bar is asymptotically
chi-square with (moments used) - (free parameters) degrees of freedom.

Also houses the modified-design consistency check (direct question asked of
the control group) and the auxiliary z-test that the control mean equals J/2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from ._optim import box_lattice, multistart_nelder_mead
from .errors import DomainError, IdentificationError
from .le_core import (
    ControlDistribution,
    LeParams,
    LeSample,
    Spec,
    TreatmentDistribution,
    _forward_probs,
    empirical_distributions,
)

logger = logging.getLogger(__name__)

# Free parameters per specification: (delta, p0, p1) / (delta, p) / (delta,) /
# (delta, p).
FREE_PARAMS = {
    Spec.UNRESTRICTED: 3,
    Spec.EQUAL_P: 2,
    Spec.NO_MISREPORT: 1,
    Spec.STRATEGIC: 2,
}

_PARAM_HI = 0.999  # open upper edge of the parameter box (rates live in [0, 1))
_COND_LIMIT = 1e12  # condition number beyond which the weight matrix is ridged

#: Printed alongside the modified-design gap: a zero gap is necessary but not
#: sufficient for truthful reporting.
MODIFIED_LE_CAVEAT = (
    "A zero gap between the mean difference and the direct-question rate does "
    "not establish truthful reporting: with direct-question misreporting rates "
    "q1 (trait carriers denying) and q0 (non-carriers affirming), the gap is "
    "zero whenever (1-q1)*delta + q0*(1-delta) equals delta + p*(1-2*delta)/2."
)


@dataclass(frozen=True)
class MomentSpec:
    """Which misreporting specification to estimate and which moment to drop."""

    j_count: int
    spec: Spec = Spec.UNRESTRICTED
    dropped_index: int = 0

    def __post_init__(self) -> None:
        if self.j_count < 1:
            raise DomainError(f"j_count must be >= 1, got {self.j_count}")
        if not 0 <= self.dropped_index <= self.j_count + 1:
            raise DomainError(
                f"dropped_index must lie in 0..{self.j_count + 1}, got {self.dropped_index}"
            )

    @property
    def n_free(self) -> int:
        return FREE_PARAMS[self.spec]

    @property
    def dof(self) -> int:
        """Degrees of freedom of the overidentification test: (J+1) - free."""
        return (self.j_count + 1) - self.n_free


@dataclass(frozen=True)
class Fixed:
    """Drop policy: always remove the moment at `index`."""

    index: int


@dataclass(frozen=True)
class MinPValueOverDrops:
    """Drop policy: run every possible drop and report the smallest p-value."""


DropPolicy = Fixed | MinPValueOverDrops


@dataclass(frozen=True, eq=False)
class GmmResult:
    """Two-step GMM estimate and overidentification test for one drop choice."""

    theta_hat: LeParams
    t_stat: float
    dof: int
    p_value: float
    weight_matrix: np.ndarray
    converged: bool
    dropped_index: int
    ridged: bool
    spec: MomentSpec
    n: int


PopulationInput = tuple[ControlDistribution, TreatmentDistribution, float, float]


def _freqs(
    data: LeSample | PopulationInput,
) -> tuple[np.ndarray, np.ndarray, float, float, int | None, int]:
    """Normalize either input form to (p0hat, p1hat, c0, c1, n, j_count)."""
    if isinstance(data, LeSample):
        control, treatment, c0, c1 = empirical_distributions(data)
        return control.probs, treatment.probs, c0, c1, data.n, data.j_count
    control, treatment, c0, c1 = data
    if control.j_count != treatment.j_count:
        raise DomainError("control and treatment j_count differ")
    if not (c0 > 0.0 and c1 > 0.0):
        raise DomainError(f"group shares must be positive, got c0={c0}, c1={c1}")
    if abs(c0 + c1 - 1.0) > 1e-9:
        raise DomainError(f"group shares must sum to 1, got {c0 + c1}")
    return control.probs, treatment.probs, float(c0), float(c1), None, control.j_count


def _check_theta_spec(theta: LeParams, spec: Spec) -> None:
    if spec is Spec.STRATEGIC:
        if theta.spec is not Spec.STRATEGIC:
            raise DomainError("strategic moments require strategic parameters")
        return
    if theta.spec is Spec.STRATEGIC:
        raise DomainError("strategic parameters passed to a uniform-misreporting spec")
    if spec is Spec.EQUAL_P and theta.p0 != theta.p1:
        raise DomainError("equal_p moments require p0 == p1")
    if spec is Spec.NO_MISREPORT and (theta.p0 != 0.0 or theta.p1 != 0.0):
        raise DomainError("no_misreport moments require p0 == p1 == 0")


def moment_values(
    data: LeSample | PopulationInput, theta: LeParams, spec: MomentSpec
) -> np.ndarray:
    """All J+2 moment values (model-implied minus observed treatment probs).

    The vector sums to zero identically, so only J+1 entries are informative;
    callers drop `spec.dropped_index` before weighting.
    """
    _check_theta_spec(theta, spec.spec)
    p0hat, p1hat, _, _, _, j = _freqs(data)
    if j != spec.j_count:
        raise DomainError(f"data has j_count={j}, spec expects {spec.j_count}")
    if theta.p0 >= 1.0:
        raise DomainError("p0 must be < 1")
    return _forward_probs(theta, p0hat, j) - p1hat


def _g0_matrix(theta: LeParams, j: int) -> np.ndarray:
    """Jacobian of the moment vector with respect to the control probabilities."""
    g = np.zeros((j + 2, j + 1))
    idx = np.arange(j + 1)
    if theta.spec is Spec.STRATEGIC:
        d, p = theta.delta, theta.p
        sub = np.arange(j)
        g[sub, sub] += 1.0 - d
        g[sub + 1, sub] += d
        g[j, j] += (1.0 - d) + d * p
        g[j + 1, j] += d * (1.0 - p)
        return g
    d = theta.delta
    kappa = (1.0 - theta.p1) / (1.0 - theta.p0)
    g[idx, idx] += (1.0 - d) * kappa
    g[idx + 1, idx] += d * kappa
    return g


def moment_covariance(
    theta: LeParams, p0hat: np.ndarray, p1hat: np.ndarray, c0: float, c1: float
) -> np.ndarray:
    """Asymptotic covariance of sqrt(n) times the full moment vector.

    The moments are G0 @ P0hat + const(theta) - P1hat with P0hat, P1hat
    independent multinomial frequency vectors based on shares c0, c1 of the
    sample, so the covariance is
    G0 Omega0 G0' / c0 + Omega1 / c1 with Omega = diag(P) - P P'.
    """
    j = p0hat.size - 1
    g0 = _g0_matrix(theta, j)
    om0 = np.diag(p0hat) - np.outer(p0hat, p0hat)
    om1 = np.diag(p1hat) - np.outer(p1hat, p1hat)
    return g0 @ om0 @ g0.T / c0 + om1 / c1


def _unpack(vec: np.ndarray, spec: Spec) -> LeParams:
    if spec is Spec.UNRESTRICTED:
        return LeParams.unrestricted(vec[0], vec[1], vec[2])
    if spec is Spec.EQUAL_P:
        return LeParams.equal_p(vec[0], vec[1])
    if spec is Spec.NO_MISREPORT:
        return LeParams.no_misreport(vec[0])
    return LeParams.strategic(vec[0], vec[1])


def _pack(theta: LeParams) -> np.ndarray:
    if theta.spec is Spec.UNRESTRICTED:
        return np.array([theta.delta, theta.p0, theta.p1])
    if theta.spec is Spec.EQUAL_P:
        return np.array([theta.delta, theta.p0])
    if theta.spec is Spec.NO_MISREPORT:
        return np.array([theta.delta])
    return np.array([theta.delta, theta.p])


def _forward_raw(vec: np.ndarray, p0hat: np.ndarray, j: int, spec: Spec) -> np.ndarray:
    """Model-implied treatment probabilities straight from a parameter vector."""
    if spec is Spec.STRATEGIC:
        d, p = vec[0], vec[1]
        out = np.empty(j + 2)
        out[0] = (1.0 - d) * p0hat[0]
        out[1:j] = (1.0 - d) * p0hat[1:j] + d * p0hat[: j - 1]
        out[j] = (1.0 - d) * p0hat[j] + d * p0hat[j - 1] + d * p * p0hat[j]
        out[j + 1] = d * (1.0 - p) * p0hat[j]
        return out
    d = vec[0]
    p0 = vec[1] if spec is not Spec.NO_MISREPORT else 0.0
    if spec is Spec.UNRESTRICTED:
        p1 = vec[2]
    elif spec is Spec.EQUAL_P:
        p1 = vec[1]
    else:
        p1 = 0.0
    kappa = (1.0 - p1) / (1.0 - p0)
    floor = p0 / (j + 1)
    inner = np.empty(j + 2)
    inner[0] = (1.0 - d) * (p0hat[0] - floor)
    inner[1 : j + 1] = d * p0hat[:j] + (1.0 - d) * p0hat[1:] - floor
    inner[j + 1] = d * (p0hat[j] - floor)
    return kappa * inner + p1 / (j + 2)


def _starts(spec: Spec, bounds) -> list[np.ndarray]:
    """Eight deterministic starting points spanning the parameter box."""
    if spec is Spec.UNRESTRICTED:
        return box_lattice(bounds, [[0.25, 0.75], [0.1, 0.4], [0.1, 0.4]])
    if spec is Spec.NO_MISREPORT:
        return box_lattice(bounds, [np.linspace(0.05, 0.9, 8)])
    return box_lattice(bounds, [[0.1, 0.35, 0.6, 0.85], [0.1, 0.4]])


def _weight_from_cov(sigma: np.ndarray) -> tuple[np.ndarray, bool]:
    k = sigma.shape[0]
    ridged = False
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        ridge = 1e-10 * float(np.trace(sigma)) / k
        ridged = True
        if ridge <= 0.0:
            # Fully degenerate covariance (point-mass groups): fall back to
            # identity weighting rather than invert a zero matrix.
            return np.eye(k), True
        sigma = sigma + ridge * np.eye(k)
        if np.linalg.cond(sigma) > 1e15:
            return np.eye(k), True
    w = np.linalg.inv(sigma)
    return (w + w.T) / 2.0, ridged


def gmm_estimate(
    data: LeSample | PopulationInput,
    spec: MomentSpec,
    n_for_stat: int | None = None,
) -> GmmResult:
    """Two-step GMM fit of the forward model with an overidentification test.

    Step 1 minimizes the identity-weighted moment norm from a deterministic
    lattice of starting points; step 2 re-minimizes under the inverse of the
    moment covariance evaluated at the step-1 solution (ridge-regularized and
    flagged when near-singular). T_n is n times the step-2 minimum and is
    referred to the chi-square upper tail with dof = (J+1) - free parameters.

    Args:
      data: an LeSample, or (ControlDistribution, TreatmentDistribution,
        c0, c1) population/frequency input.
      spec: specification and dropped-moment choice.
      n_for_stat: sample size used to scale T_n when `data` is the population
        tuple (defaults to 1; ignored for LeSample input).
    """
    if spec.j_count < 3:
        raise IdentificationError(
            f"estimation needs at least three nonsensitive items, got j_count={spec.j_count}"
        )
    p0hat, p1hat, c0, c1, n, j = _freqs(data)
    if j != spec.j_count:
        raise DomainError(f"data has j_count={j}, spec expects {spec.j_count}")
    if n is None:
        n = 1 if n_for_stat is None else int(n_for_stat)
    keep = np.ones(j + 2, dtype=bool)
    keep[spec.dropped_index] = False

    def objective_factory(w: np.ndarray | None):
        if w is None:

            def obj(vec: np.ndarray) -> float:
                psi = (_forward_raw(vec, p0hat, j, spec.spec) - p1hat)[keep]
                return float(psi @ psi)

        else:

            def obj(vec: np.ndarray) -> float:
                psi = (_forward_raw(vec, p0hat, j, spec.spec) - p1hat)[keep]
                return float(psi @ w @ psi)

        return obj

    n_par = spec.n_free
    bounds = [(0.0, _PARAM_HI)] * n_par
    starts = _starts(spec.spec, bounds)

    x1, _, conv1 = multistart_nelder_mead(
        objective_factory(None), starts, bounds, xatol=1e-7, fatol=1e-13
    )
    theta1 = _unpack(x1, spec.spec)

    sigma = moment_covariance(theta1, p0hat, p1hat, c0, c1)
    sigma_kept = sigma[np.ix_(keep, keep)]
    w, ridged = _weight_from_cov(sigma_kept)

    x2, f2, conv2 = multistart_nelder_mead(
        objective_factory(w), starts + [x1], bounds, xatol=1e-7, fatol=1e-13
    )
    theta2 = _unpack(x2, spec.spec)

    t_stat = max(0.0, n * f2)
    dof = spec.dof
    p_value = float(stats.chi2.sf(t_stat, dof)) if dof >= 1 else math.nan
    return GmmResult(
        theta_hat=theta2,
        t_stat=t_stat,
        dof=dof,
        p_value=p_value,
        weight_matrix=w,
        converged=conv1 and conv2,
        dropped_index=spec.dropped_index,
        ridged=ridged,
        spec=spec,
        n=n,
    )


def j_test(
    data: LeSample | PopulationInput,
    spec: MomentSpec,
    drop_policy: DropPolicy = MinPValueOverDrops(),
    n_for_stat: int | None = None,
) -> GmmResult:
    """Overidentification test under a drop policy.

    MinPValueOverDrops (the default, the conservative reporting convention)
    runs one estimation per possible dropped moment and returns the run with
    the smallest p-value; ties break toward the lowest index. Fixed(k) runs a
    single estimation with moment k dropped.
    """
    if isinstance(drop_policy, Fixed):
        return gmm_estimate(data, replace(spec, dropped_index=drop_policy.index), n_for_stat)
    results = [
        gmm_estimate(data, replace(spec, dropped_index=k), n_for_stat)
        for k in range(spec.j_count + 2)
    ]
    return min(results, key=lambda r: (r.p_value, r.dropped_index))


@dataclass(frozen=True)
class ModifiedLeResult:
    """Gap between the list-experiment mean difference and the direct rate."""

    mean_diff: float
    direct_rate: float
    gap: float
    gap_se: float
    caveat: str = MODIFIED_LE_CAVEAT


def modified_le_check(
    sample: LeSample,
    direct_responses=None,
    n_boot: int = 1000,
    seed=0,
) -> ModifiedLeResult:
    """Compare the mean-difference estimate against a direct question.

    In the modified design the control group is also asked the sensitive
    question directly. Under fully truthful reporting the two estimates of
    the sensitive-trait share coincide, so gap = mean_diff - direct_rate has
    expectation zero; the converse fails (see MODIFIED_LE_CAVEAT). The gap's
    standard error comes from a stratified bootstrap that resamples the
    control and treatment groups independently, keeping each control record's
    (count, direct answer) pair intact.

    Args:
      sample: list-experiment records.
      direct_responses: 0/1 vector aligned with the control records in sample
        order; defaults to sample.x_direct on control rows.
      n_boot: bootstrap replications for gap_se.
      seed: RNG seed for the bootstrap.
    """
    mask0 = sample.t == 0
    y0 = sample.y[mask0].astype(float)
    y1 = sample.y[~mask0].astype(float)
    if direct_responses is None:
        if sample.x_direct is None:
            raise DomainError("no direct responses: pass direct_responses or set x_direct")
        direct = sample.x_direct[mask0].astype(float)
    else:
        direct = np.asarray(direct_responses, dtype=float)
        if direct.ndim != 1 or direct.size != y0.size:
            raise DomainError(
                f"direct_responses must have one entry per control record "
                f"({y0.size}), got shape {direct.shape}"
            )
        if not np.isin(direct, (0.0, 1.0)).all():
            raise DomainError("direct_responses must be 0/1")
    if n_boot < 2:
        raise DomainError("n_boot must be >= 2")

    mean_diff = float(y1.mean() - y0.mean())
    direct_rate = float(direct.mean())
    gap = mean_diff - direct_rate

    rng = np.random.default_rng(seed)
    n0, n1 = y0.size, y1.size
    gaps = np.empty(n_boot)
    for b in range(n_boot):
        i0 = rng.integers(0, n0, size=n0)
        i1 = rng.integers(0, n1, size=n1)
        gaps[b] = (y1[i1].mean() - y0[i0].mean()) - direct[i0].mean()
    gap_se = float(gaps.std(ddof=1))
    return ModifiedLeResult(mean_diff=mean_diff, direct_rate=direct_rate, gap=gap, gap_se=gap_se)


@dataclass(frozen=True)
class ZTestResult:
    """Two-sided z-test of a sample mean against a reference value."""

    statistic: float
    p_value: float
    mean: float
    se: float


def control_mean_ztest(sample: LeSample) -> ZTestResult:
    """z-test of whether the control mean equals J/2.

    Under a design whose nonsensitive items each have affirmative probability
    1/2, the control count mean is J/2; a rejection flags either item
    imbalance or control-group misreporting toward the middle of the support.
    """
    y0 = sample.y[sample.t == 0].astype(float)
    target = sample.j_count / 2.0
    mean = float(y0.mean())
    se = float(y0.std(ddof=1) / math.sqrt(y0.size)) if y0.size > 1 else 0.0
    if se == 0.0:
        z = 0.0 if mean == target else math.inf * math.copysign(1.0, mean - target)
        p = 1.0 if mean == target else 0.0
        return ZTestResult(statistic=z, p_value=p, mean=mean, se=se)
    z = (mean - target) / se
    return ZTestResult(statistic=z, p_value=float(2.0 * stats.norm.sf(abs(z))), mean=mean, se=se)


def mean_difference_empirical(sample: LeSample) -> tuple[float, float]:
    """Treatment-minus-control mean and its unpooled (Welch) standard error."""
    y0 = sample.y[sample.t == 0].astype(float)
    y1 = sample.y[sample.t == 1].astype(float)
    diff = float(y1.mean() - y0.mean())
    se = math.sqrt(y0.var(ddof=1) / y0.size + y1.var(ddof=1) / y1.size)
    return diff, float(se)
