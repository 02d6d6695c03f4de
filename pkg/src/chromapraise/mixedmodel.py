"""Random-intercept linear mixed model fit by profiled maximum likelihood.

The model is y = X beta + Z u + eps with one random intercept per group,
u_j ~ N(0, sigma_u^2) and eps ~ N(0, sigma_e^2).  Writing lambda =
sigma_u^2 / sigma_e^2, the marginal covariance is sigma_e^2 V(lambda)
with V = I + lambda Z Z^T, block diagonal by group, so V inverts in
closed form per group (Woodbury): V_j^{-1} = I - w_j 1 1^T with
w_j = lambda / (1 + lambda n_j).

Everything the deviance needs reduces to per-group sufficient statistics
(X^T X, X^T y, y^T y, column sums, response sums, group sizes), computed
once with exactly rounded summation (math.fsum) so results do not depend
on row order.  Each deviance evaluation is then O(J p^2 + p^3)
independent of N, which keeps profile-likelihood confidence intervals
(a one-dimensional search with an inner lambda optimization per probe)
cheap enough to run hundreds of replicates.

The scalar lambda is minimized by golden section on a hybrid scale that
is linear on [0, 1] and logarithmic on [1, 1e4].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import chi2, norm

_LAMBDA_MAX = 1e4
_U_MAX = 1.0 + math.log(_LAMBDA_MAX)
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_ITERS = 60  # interval 10.2 shrinks below 1e-12


class SingularityError(ValueError):
    """Design matrix is rank deficient."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(
            "design matrix is rank deficient; offending columns: " + ", ".join(columns)
        )


def _fsum_dot(a: np.ndarray, b: np.ndarray) -> float:
    return math.fsum((a * b).tolist())


@dataclass
class _Stats:
    """Sufficient statistics for the profiled deviance."""

    xtx: np.ndarray  # (p, p)
    xty: np.ndarray  # (p,)
    yty: float
    gx: np.ndarray  # (J, p) per-group column sums of X
    gy: np.ndarray  # (J,) per-group sums of y
    n: np.ndarray  # (J,) group sizes
    n_obs: int

    @property
    def p(self) -> int:
        return self.xtx.shape[0]

    def constrained(self, j: int, t: float) -> "_Stats":
        """Statistics of the model with column j eliminated at beta_j = t,
        i.e. design X without column j against response y - t X_j."""
        keep = [i for i in range(self.p) if i != j]
        return _Stats(
            xtx=self.xtx[np.ix_(keep, keep)],
            xty=self.xty[keep] - t * self.xtx[keep, j],
            yty=self.yty - 2.0 * t * self.xty[j] + t * t * self.xtx[j, j],
            gx=self.gx[:, keep],
            gy=self.gy - t * self.gx[:, j],
            n=self.n,
            n_obs=self.n_obs,
        )


@dataclass
class DesignData:
    """Validated regression data with precomputed group statistics."""

    y: np.ndarray
    X: np.ndarray
    groups: np.ndarray
    names: list[str]
    group_labels: np.ndarray = field(init=False)
    stats: _Stats = field(init=False, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.X = np.asarray(self.X, dtype=np.float64)
        self.groups = np.asarray(self.groups)
        if self.X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        n, p = self.X.shape
        if self.y.shape != (n,) or self.groups.shape != (n,):
            raise ValueError("y, X and groups must agree on the number of rows")
        if len(self.names) != p:
            raise ValueError("names must match the number of columns")
        if not (np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.X))):
            raise ValueError("y and X must be finite")
        if n <= p:
            raise ValueError(f"need more rows than columns (N={n}, p={p})")
        check_full_rank(self.X, self.names)
        self.group_labels, inverse = np.unique(self.groups, return_inverse=True)
        self.stats = self._build_stats(inverse)

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_groups(self) -> int:
        return len(self.group_labels)

    def _build_stats(self, inverse: np.ndarray) -> _Stats:
        n, p = self.X.shape
        j_groups = len(self.group_labels)
        xtx = np.empty((p, p))
        for i in range(p):
            for k in range(i, p):
                xtx[i, k] = xtx[k, i] = _fsum_dot(self.X[:, i], self.X[:, k])
        xty = np.array([_fsum_dot(self.X[:, i], self.y) for i in range(p)])
        yty = _fsum_dot(self.y, self.y)
        gx = np.empty((j_groups, p))
        gy = np.empty(j_groups)
        sizes = np.empty(j_groups)
        for j in range(j_groups):
            rows = inverse == j
            for i in range(p):
                gx[j, i] = math.fsum(self.X[rows, i].tolist())
            gy[j] = math.fsum(self.y[rows].tolist())
            sizes[j] = rows.sum()
        return _Stats(xtx, xty, yty, gx, gy, sizes, n)


def check_full_rank(X: np.ndarray, names: list[str]) -> None:
    """Raises SingularityError naming the redundant columns."""
    if X.shape[1] == 0:
        return
    _, r, pivot = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag.max() * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise SingularityError([names[i] for i in sorted(pivot[rank:])])


def _deviance_at(stats: _Stats, lam: float, reml: bool = False):
    """Profiled deviance and the implied GLS estimates at a given lambda.

    Returns (deviance, beta, sigma_e2, xtvx).
    """
    w = lam / (1.0 + lam * stats.n)
    xtvx = stats.xtx - (stats.gx * w[:, None]).T @ stats.gx
    xtvy = stats.xty - stats.gx.T @ (w * stats.gy)
    ytvy = stats.yty - float(np.sum(w * stats.gy**2))
    if stats.p:
        try:
            beta = linalg.solve(xtvx, xtvy, assume_a="pos")
        except linalg.LinAlgError as exc:
            raise SingularityError(["<unknown>"]) from exc
        quad = ytvy - float(beta @ xtvy)
    else:
        beta = np.zeros(0)
        quad = ytvy
    quad = max(quad, 1e-300)  # guard exact fits
    logdet_v = float(np.sum(np.log1p(lam * stats.n)))
    n = stats.n_obs
    if reml:
        dof = n - stats.p
        sigma_e2 = quad / dof
        logdet_x = float(np.linalg.slogdet(xtvx)[1]) if stats.p else 0.0
        dev = dof * math.log(2.0 * math.pi * sigma_e2) + logdet_v + logdet_x + dof
    else:
        sigma_e2 = quad / n
        dev = n * math.log(2.0 * math.pi * sigma_e2) + logdet_v + n
    return dev, beta, sigma_e2, xtvx


def profiled_deviance(data: DesignData, lam: float, reml: bool = False):
    """Deviance with beta and sigma_e2 profiled out at fixed lambda.

    Returns (deviance, beta_hat, sigma_e2_hat).
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    dev, beta, sigma_e2, _ = _deviance_at(data.stats, lam, reml)
    return dev, beta, sigma_e2


def _lambda_of_u(u: float) -> float:
    return u if u <= 1.0 else math.exp(u - 1.0)


def _minimize_lambda(stats: _Stats, reml: bool = False) -> float:
    """Golden-section search for the deviance-minimizing variance ratio."""

    def objective(u: float) -> float:
        return _deviance_at(stats, _lambda_of_u(u), reml)[0]

    a, b = 0.0, _U_MAX
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = objective(c), objective(d)
    for _ in range(_GOLDEN_ITERS):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = objective(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = objective(d)
    u = (a + b) / 2.0
    # snap to the boundary when the optimum sits at zero
    if objective(0.0) <= objective(u):
        return 0.0
    return _lambda_of_u(u)


@dataclass
class ModelFit:
    beta: np.ndarray
    se: np.ndarray
    sigma_u2: float
    sigma_e2: float
    lam: float
    loglik: float
    group_labels: np.ndarray
    group_effects: np.ndarray
    r2_marginal: float
    r2_conditional: float
    names: list[str]
    reml: bool

    @property
    def deviance(self) -> float:
        return -2.0 * self.loglik


def r_squared(sigma_f2: float, sigma_u2: float, sigma_e2: float) -> tuple[float, float]:
    """Marginal and conditional proportions of explained variance."""
    total = sigma_f2 + sigma_u2 + sigma_e2
    return sigma_f2 / total, (sigma_f2 + sigma_u2) / total


def fit(data: DesignData, reml: bool = False) -> ModelFit:
    """Maximum-likelihood fit (REML on request)."""
    lam = _minimize_lambda(data.stats, reml)
    dev, beta, sigma_e2, xtvx = _deviance_at(data.stats, lam, reml)
    sigma_u2 = lam * sigma_e2
    se = np.sqrt(np.diag(linalg.inv(xtvx)) * sigma_e2)
    # BLUP of the group intercepts from the per-group residual sums
    resid_sums = data.stats.gy - data.stats.gx @ beta
    effects = lam / (1.0 + lam * data.stats.n) * resid_sums
    fitted = data.X @ beta
    sigma_f2 = float(np.var(fitted))
    r2m, r2c = r_squared(sigma_f2, sigma_u2, sigma_e2)
    return ModelFit(
        beta=beta,
        se=se,
        sigma_u2=sigma_u2,
        sigma_e2=sigma_e2,
        lam=lam,
        loglik=-dev / 2.0,
        group_labels=data.group_labels,
        group_effects=effects,
        r2_marginal=r2m,
        r2_conditional=r2c,
        names=list(data.names),
        reml=reml,
    )


def _constrained_deviance(stats: _Stats, j: int, t: float, reml: bool) -> float:
    """Deviance profile at beta_j = t (everything else re-optimized)."""
    sub = stats.constrained(j, t)
    lam = _minimize_lambda(sub, reml)
    return _deviance_at(sub, lam, reml)[0]


def profile_ci(
    data: DesignData, model: ModelFit, j: int, level: float = 0.95
) -> tuple[float, float]:
    """Profile-likelihood confidence interval for coefficient j.

    Endpoints are where the constrained deviance exceeds the optimum by
    the chi-square(1) quantile.  An endpoint the profile never reaches is
    reported as -inf or +inf.
    """
    if not 0 <= j < data.stats.p:
        raise IndexError("coefficient index out of range")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    cutoff = model.deviance + float(chi2.ppf(level, 1))
    center = float(model.beta[j])
    step = float(model.se[j])
    if not math.isfinite(step) or step <= 0.0:
        step = max(abs(center), 1.0)

    def excess(t: float) -> float:
        return _constrained_deviance(data.stats, j, t, model.reml) - cutoff

    def endpoint(direction: float) -> float:
        width = step
        inside = center
        for _ in range(200):
            probe = center + direction * width
            if excess(probe) > 0.0:
                lo, hi = inside, probe
                while abs(hi - lo) > 1e-6 * max(1.0, abs(hi), abs(lo)):
                    mid = (lo + hi) / 2.0
                    if excess(mid) > 0.0:
                        hi = mid
                    else:
                        lo = mid
                return (lo + hi) / 2.0
            inside = probe
            width *= 2.0
        return direction * math.inf

    return endpoint(-1.0), endpoint(1.0)


def group_variance_se(data: DesignData, model: ModelFit) -> float:
    """Asymptotic standard error of sigma_u2 from the 2x2 Fisher
    information of the variance components."""
    n = data.stats.n
    lam, s2 = model.lam, model.sigma_e2
    shrink = 1.0 + lam * n
    i_uu = 0.5 * np.sum(n**2 / (s2**2 * shrink**2))
    i_ue = 0.5 * np.sum(n / (s2**2 * shrink**2))
    i_ee = 0.5 * np.sum((n - 1.0) / s2**2 + 1.0 / (s2**2 * shrink**2))
    info = np.array([[i_uu, i_ue], [i_ue, i_ee]])
    cov = linalg.inv(info)
    return float(math.sqrt(max(cov[0, 0], 0.0)))


@dataclass
class CoefRow:
    name: str
    estimate: float
    se: float
    z: float
    p_value: float
    ci_low: float
    ci_high: float
    std_estimate: float

    @property
    def stars(self) -> str:
        if self.p_value < 0.001:
            return "***"
        if self.p_value < 0.01:
            return "**"
        if self.p_value < 0.05:
            return "*"
        return ""


@dataclass
class CoefReport:
    rows: list[CoefRow]
    group_var: float
    group_var_se: float
    sigma_e2: float
    r2_marginal: float
    r2_conditional: float
    loglik: float
    n_obs: int
    n_groups: int
    ci_level: float = 0.95


def is_binary(column: np.ndarray) -> bool:
    return bool(np.all((column == 0.0) | (column == 1.0)))


def _standardized_fit(data: DesignData, reml: bool) -> np.ndarray:
    """Refit with non-binary, non-constant columns scaled to unit
    population variance (binary flags and the intercept keep their scale)."""
    X = data.X.copy()
    for i in range(X.shape[1]):
        col = X[:, i]
        if is_binary(col) or np.ptp(col) == 0.0:
            continue
        sd = float(np.std(col))
        X[:, i] = (col - col.mean()) / sd
    scaled = DesignData(data.y, X, data.groups, list(data.names))
    return fit(scaled, reml).beta


def coef_report(data: DesignData, model: ModelFit, ci_level: float = 0.95) -> CoefReport:
    """Wald table with profile CIs and standardized coefficients."""
    std_beta = _standardized_fit(data, model.reml)
    rows = []
    for j, name in enumerate(model.names):
        est, se = float(model.beta[j]), float(model.se[j])
        z = est / se
        p = 2.0 * float(norm.sf(abs(z)))
        lo, hi = profile_ci(data, model, j, level=ci_level)
        rows.append(CoefRow(name, est, se, z, p, lo, hi, float(std_beta[j])))
    return CoefReport(
        rows=rows,
        group_var=model.sigma_u2,
        group_var_se=group_variance_se(data, model),
        sigma_e2=model.sigma_e2,
        r2_marginal=model.r2_marginal,
        r2_conditional=model.r2_conditional,
        loglik=model.loglik,
        n_obs=data.n_obs,
        n_groups=data.n_groups,
        ci_level=ci_level,
    )


def _fmt(x: float, width: int = 10) -> str:
    if math.isinf(x):
        return ("-inf" if x < 0 else "+inf").rjust(width)
    return f"{x: .4f}".rjust(width)


def render_coef_table(report: CoefReport) -> str:
    """Aligned text table in the style of a regression summary."""
    name_w = max(12, max(len(r.name) for r in report.rows) + 1, len("Group Var") + 1)
    tail = (1.0 - report.ci_level) / 2.0
    head = (
        f"{'':<{name_w}}{'Coef.':>10}{'Std.Err.':>10}{'z':>9}{'P>|z|':>9}"
        f"{f'[{tail:.3f}':>11}{f'{1.0 - tail:.3f}]':>11}  "
    )
    lines = [head, "-" * len(head)]
    for r in report.rows:
        lines.append(
            f"{r.name:<{name_w}}{_fmt(r.estimate)}{_fmt(r.se)}"
            f"{r.z:>9.3f}{r.p_value:>9.3f}{_fmt(r.ci_low, 11)}{_fmt(r.ci_high, 11)}"
            f"  {r.stars}"
        )
    lines.append(
        f"{'Group Var':<{name_w}}{_fmt(report.group_var)}{_fmt(report.group_var_se)}"
    )
    lines.append("-" * len(head))
    lines.append(
        f"Residual Var {report.sigma_e2:.4f}   "
        f"Marginal R2 {report.r2_marginal:.3f}   "
        f"Conditional R2 {report.r2_conditional:.3f}"
    )
    lines.append(
        f"Log-likelihood {report.loglik:.3f}   "
        f"N {report.n_obs}   Groups {report.n_groups}"
    )
    lines.append("Signif.: *** p<0.001, ** p<0.01, * p<0.05")
    return "\n".join(lines) + "\n"


def coef_csv(report: CoefReport) -> str:
    """Machine-readable coefficient table."""
    out = ["name,estimate,std_err,z,p_value,ci_low,ci_high,std_estimate,stars"]
    for r in report.rows:
        out.append(
            f"{r.name},{r.estimate!r},{r.se!r},{r.z!r},{r.p_value!r},"
            f"{r.ci_low!r},{r.ci_high!r},{r.std_estimate!r},{r.stars}"
        )
    out.append(f"Group Var,{report.group_var!r},{report.group_var_se!r},,,,,,")
    return "\n".join(out) + "\n"
