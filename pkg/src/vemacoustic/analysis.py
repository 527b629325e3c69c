"""Reference spectra, convergence-order fits, study tables and sigma sweeps."""

from __future__ import annotations

import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .eigensolve import DENSE_AUTO, EigenSolverConfig, recover_frequencies, solve
from .errors import ConfigError, FieldError, FitError, VemError
from .mesh import Domain, MeshFamilySpec, compute_quality, generate_crossed_triangles, generate_family
from .vem import CONSTANT, MIN_SIGMA, TANGENTIAL, MaterialParams, StabilizationKind, assemble, cell_projections

log = logging.getLogger(__name__)

NU = "nu"
OMEGA = "omega"
OMEGA_OVER_C = "omega_over_c"
NORMALIZATIONS = (NU, OMEGA, OMEGA_OVER_C)

XI_WINDOW = (0.1, 6.0)
XI_GRID_STEP = 1e-2
XI_TOL = 1e-5


# --------------------------------------------------------------------------- exact spectra


@dataclass(frozen=True)
class ExactMode:
    n: int
    m: int
    lambda_nm: float  # pi^2 (n^2/a^2 + m^2/b^2)
    nu: float  # n^2/a^2 + m^2/b^2


@dataclass(frozen=True)
class ExactSpectrum:
    a: float
    b: float
    modes: tuple

    @property
    def nus(self) -> np.ndarray:
        return np.array([md.nu for md in self.modes])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([md.lambda_nm for md in self.modes])

    def values(self, normalization=NU, c=1.0) -> np.ndarray:
        """Exact reference in a table normalization for sound speed ``c``."""
        lam = c ** 2 * self.lambdas
        if normalization == NU:
            return lam / np.pi ** 2
        if normalization == OMEGA:
            return np.sqrt(lam)
        if normalization == OMEGA_OVER_C:
            return np.sqrt(lam) / c
        raise ConfigError(f"unknown normalization {normalization!r}")


def exact_rectangle(a: float, b: float, k: int) -> ExactSpectrum:
    """First ``k`` Neumann eigenpairs of the Laplacian on ``(0,a) x (0,b)``, unit ``c``.

    The constant (0, 0) mode is excluded. Every mode below ``k**2 / a**2``
    (which already bounds ``k`` modes with ``m = 0``) has ``n <= k`` and
    ``m <= k b / a``, so that box is enumerated and sorted. Ties are broken
    by ``(n, m)``.
    """
    if not (a > 0 and b > 0):
        raise ConfigError(f"rectangle sides must be positive, got a={a}, b={b}")
    if int(k) != k or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k}")
    nmax = int(k)
    mmax = int(math.ceil(k * b / a))
    n, m = np.meshgrid(np.arange(nmax + 1), np.arange(mmax + 1), indexing="ij")
    n, m = n.ravel(), m.ravel()
    keep = (n + m) > 0
    n, m = n[keep], m[keep]
    nu = (n / a) ** 2 + (m / b) ** 2
    order = np.lexsort((m, n, nu))[:k]
    modes = tuple(ExactMode(int(n[i]), int(m[i]), float(np.pi ** 2 * nu[i]), float(nu[i])) for i in order)
    return ExactSpectrum(float(a), float(b), modes)


def exact_displacement(n, m, a, b, x, y) -> np.ndarray:
    """Displacement of rectangle mode ``(n, m)``, up to the normalization of ``p``.

    ``(n/a sin(n pi x/a) cos(m pi y/b), m/b cos(n pi x/a) sin(m pi y/b))``,
    i.e. a multiple of the gradient of ``cos(n pi x/a) cos(m pi y/b)``.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    sx, cx = np.sin(n * np.pi * x / a), np.cos(n * np.pi * x / a)
    sy, cy = np.sin(m * np.pi * y / b), np.cos(m * np.pi * y / b)
    return np.stack([n / a * sx * cy, m / b * cx * sy], axis=-1)


def lshape_reference(k=5, N=64, c=1.0) -> np.ndarray:
    """Reference Neumann eigenvalues ``lambda - 1`` on the L-shape from linear triangles.

    Uses the crossed-triangle mesh, on which the virtual element matrices are
    exactly the linear finite element ones. Only a sanity reference: the
    first mode converges at the reduced rate of the re-entrant corner.
    """
    mesh = generate_crossed_triangles(Domain.lshape(), N)
    system = assemble(mesh, MaterialParams(rho=1.0, c=c))
    spec = solve(system, EigenSolverConfig(k=k + 1))
    return spec.lambdas[1:] - 1.0


# --------------------------------------------------------------------------- order fitting


@dataclass(frozen=True)
class ConvergenceFit:
    """``value(h) ~ extrapolated + C h**order`` in the least-squares sense."""

    extrapolated: float
    C: float
    order: float
    rms: float


def _inner_fit(hs, v, xi):
    X = np.column_stack([np.ones_like(hs), hs ** xi])
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    r = X @ coef - v
    return float(r @ r), coef


def fit_order(h_sequence, value_sequence, window=XI_WINDOW) -> ConvergenceFit:
    """Least-squares fit of ``value ~ w + C h**xi`` over ``xi`` in ``window``.

    For each ``xi`` the pair ``(w, C)`` solves a linear least-squares
    problem; ``xi`` is located on a grid of step 0.01 and then refined by a
    bounded Brent/golden-section search to below 1e-5. ``h`` is scaled by
    its largest value and the values by their spread, so the fitted order
    does not depend on units.

    Raises
    ------
    FitError
        Fewer than 3 points, ``h`` not strictly decreasing, non-finite input
        or a constant value sequence.
    """
    h = np.asarray(h_sequence, dtype=float)
    v = np.asarray(value_sequence, dtype=float)
    if h.shape != v.shape or h.ndim != 1:
        raise FitError("h and value sequences must be 1-D and of equal length")
    if len(h) < 3:
        raise FitError(f"need at least 3 refinements, got {len(h)}")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
        raise FitError("non-finite entries in the sequence")
    if np.any(h <= 0) or np.any(np.diff(h) >= 0):
        raise FitError("h must be positive and strictly decreasing")
    centre = float(v.mean())
    spread = float(np.max(np.abs(v - centre)))
    if spread <= 1e-13 * max(abs(centre), np.finfo(float).tiny):
        raise FitError("degenerate (constant) value sequence")
    hs = h / h[0]
    vs = (v - centre) / spread

    lo, hi = window
    grid = np.arange(lo, hi + 0.5 * XI_GRID_STEP, XI_GRID_STEP)
    grid[-1] = min(grid[-1], hi)
    sse = np.array([_inner_fit(hs, vs, xi)[0] for xi in grid])
    i = int(np.argmin(sse))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda xi: _inner_fit(hs, vs, xi)[0], bounds=(a, b), method="bounded",
                          options={"xatol": XI_TOL})
    xi = float(res.x) if res.fun <= sse[i] else float(grid[i])
    s, (w, C) = _inner_fit(hs, vs, xi)
    return ConvergenceFit(
        extrapolated=centre + spread * float(w),
        C=float(spread * C / h[0] ** xi),
        order=xi,
        rms=spread * math.sqrt(s / len(h)),
    )


# --------------------------------------------------------------------------- tables


def _normalize(shifted, normalization, c):
    shifted = np.maximum(np.asarray(shifted, dtype=float), 0.0)
    if normalization == NU:
        return shifted / np.pi ** 2
    if normalization == OMEGA:
        return np.sqrt(shifted)
    if normalization == OMEGA_OVER_C:
        return np.sqrt(shifted) / c
    raise ConfigError(f"unknown normalization {normalization!r}")


@dataclass(frozen=True)
class ModeRow:
    index: int  # 1-based physical mode index
    values: tuple  # per refinement; nan where the refinement failed
    fit: ConvergenceFit | None
    exact: float | None


@dataclass(frozen=True)
class ConvergenceTable:
    """Per-mode values over a refinement sequence with fitted orders.

    ``shifted`` keeps the raw ``lambda - 1`` (modes x refinements) so that
    the table can be re-expressed in another normalization.
    """

    Ns: tuple
    h: tuple
    ratios: tuple
    rows: tuple
    normalization: str
    shifted: np.ndarray
    metadata: dict = field(default_factory=dict)
    partial: bool = False
    failures: tuple = ()
    exact_shifted: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([r.values for r in self.rows])

    @property
    def orders(self) -> np.ndarray:
        return np.array([r.fit.order if r.fit else np.nan for r in self.rows])

    @property
    def extrapolated(self) -> np.ndarray:
        return np.array([r.fit.extrapolated if r.fit else np.nan for r in self.rows])

    def with_normalization(self, normalization) -> "ConvergenceTable":
        c = self.metadata.get("c", 1.0)
        return _build_table(self.Ns, self.h, self.ratios, self.shifted, normalization, c,
                            self.exact_shifted, self.metadata, self.failures)

    def to_csv(self) -> str:
        """One line per mode: refinement values, order, extrapolated, exact."""
        buf = io.StringIO()
        for k in sorted(self.metadata):
            buf.write(f"# {k}={self.metadata[k]}\n")
        if self.partial:
            buf.write("# partial=true\n")
            for msg in self.failures:
                buf.write(f"# failed: {msg}\n")
        buf.write(",".join(["mode"] + [f"N={n}" for n in self.Ns] + ["order", "extrapolated", "exact"]) + "\n")
        for r in self.rows:
            cells = [f"{self.normalization}_{r.index}"] + [_fmt_value(x) for x in r.values]
            cells += [_fmt_order(r.fit), _fmt_value(r.fit.extrapolated if r.fit else None), _fmt_value(r.exact)]
            buf.write(",".join(cells) + "\n")
        buf.write(",".join(["ratio"] + [_fmt_ratio(x) for x in self.ratios] + ["", "", ""]) + "\n")
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned layout with the refinements as columns."""
        last = "Exact" if any(r.exact is not None for r in self.rows) else "Extrap."
        header = [self.normalization] + [f"N = {n}" for n in self.Ns] + ["Order", "Extrap.", last][: 3 if last == "Exact" else 2]
        body = []
        for r in self.rows:
            line = [f"{self.normalization}_{r.index}"] + [_fmt_value(x) for x in r.values]
            line += [_fmt_order(r.fit), _fmt_value(r.fit.extrapolated if r.fit else None)]
            if last == "Exact":
                line.append(_fmt_value(r.exact))
            body.append(line)
        ratio = ["Ratio"] + [_fmt_ratio(x) for x in self.ratios]
        return _align([header] + body + [ratio], title=_title(self.metadata, self.partial))


def _fmt_value(x):
    if x is None or not np.isfinite(x):
        return ""
    return f"{x:.5f}"


def _fmt_order(fit):
    return "" if fit is None else f"{fit.order:.2f}"


def _fmt_ratio(x):
    return "" if x is None or not np.isfinite(x) else f"{x:.4e}"


def _title(meta, partial):
    keys = ("family", "stabilization", "sigma", "rho", "c")
    txt = ", ".join(f"{k}={meta[k]:g}" if isinstance(meta[k], float) else f"{k}={meta[k]}" for k in keys if k in meta)
    return txt + (" [PARTIAL]" if partial else "")


def _align(rows, title=""):
    width = max(len(r) for r in rows)
    rows = [r + [""] * (width - len(r)) for r in rows]
    w = [max(len(r[j]) for r in rows) for j in range(width)]
    out = [title] if title else []
    for r in rows:
        out.append("  ".join(s.rjust(w[j]) if j else s.ljust(w[j]) for j, s in enumerate(r)).rstrip())
    return "\n".join(out) + "\n"


def _build_table(Ns, h, ratios, shifted, normalization, c, exact_shifted, metadata, failures):
    shifted = np.asarray(shifted, dtype=float)
    vals = _normalize(np.nan_to_num(shifted, nan=0.0), normalization, c)
    vals[np.isnan(shifted)] = np.nan
    ok = ~np.isnan(shifted).any(axis=0)
    h_ok = np.asarray(h, dtype=float)[ok]
    exact = None
    if exact_shifted is not None:
        exact = _normalize(exact_shifted, normalization, c)
    rows = []
    for i in range(shifted.shape[0]):
        fit = None
        if ok.sum() >= 3:
            try:
                fit = fit_order(h_ok, vals[i, ok])
            except FitError as exc:
                log.warning("mode %d: %s", i + 1, exc)
        rows.append(ModeRow(i + 1, tuple(float(x) for x in vals[i]), fit,
                            None if exact is None else float(exact[i])))
    return ConvergenceTable(
        Ns=tuple(Ns), h=tuple(h), ratios=tuple(ratios), rows=tuple(rows), normalization=normalization,
        shifted=shifted, metadata=dict(metadata, normalization=normalization),
        partial=bool(failures), failures=tuple(failures), exact_shifted=exact_shifted,
    )


# --------------------------------------------------------------------------- studies


@dataclass(frozen=True)
class StudyConfig:
    family: str = "T1"
    Ns: tuple = (8, 16, 32, 64)
    materials: MaterialParams = MaterialParams()
    stabilization: StabilizationKind = StabilizationKind()
    normalization: str = NU
    n_modes: int = 5
    M0: float = 4.0
    domain: Domain | None = None
    solver_mode: str = DENSE_AUTO
    tol: float = 1e-9

    def __post_init__(self):
        if len(self.Ns) == 0:
            raise ConfigError("empty refinement list")
        if any(int(n) != n or n < 2 for n in self.Ns):
            raise ConfigError(f"refinements must be integers >= 2, got {self.Ns}")
        if len(set(self.Ns)) != len(self.Ns):
            raise ConfigError(f"repeated refinement in {self.Ns}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {self.normalization!r}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ConfigError(f"n_modes must be a positive integer, got {self.n_modes}")
        object.__setattr__(self, "Ns", tuple(sorted(int(n) for n in self.Ns)))

    def mesh_spec(self, N) -> MeshFamilySpec:
        return MeshFamilySpec(self.family, N, self.M0, self.domain)


def _threads():
    raw = os.environ.get("VEM_THREADS")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"VEM_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _one_refinement(cfg: StudyConfig, N):
    mesh = generate_family(cfg.mesh_spec(N))
    q = compute_quality(mesh, kernel_check=False)
    system = assemble(mesh, cfg.materials, cfg.stabilization)
    spec = solve(system, EigenSolverConfig(k=cfg.n_modes + 1, tol=cfg.tol, mode=cfg.solver_mode))
    # the first pair is the constant mode
    shifted = spec.lambdas[1:] - 1.0
    return q.h, q.ratio, shifted


def run_study(cfg: StudyConfig) -> ConvergenceTable:
    """Mesh, assemble, solve and fit every refinement of ``cfg``.

    A refinement that raises is recorded in ``failures`` and the table is
    marked partial; its column is NaN. ``VEM_THREADS`` caps the number of
    refinements processed concurrently; results are ordered by ``N``.
    """
    def task(N):
        try:
            return _one_refinement(cfg, N)
        except VemError as exc:
            log.error("refinement N=%d failed: %s", N, exc)
            return exc

    nthreads = min(_threads(), len(cfg.Ns))
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as pool:
            results = list(pool.map(task, cfg.Ns))
    else:
        results = [task(N) for N in cfg.Ns]

    k = cfg.n_modes
    shifted = np.full((k, len(cfg.Ns)), np.nan)
    h = [math.nan] * len(cfg.Ns)
    ratios = [math.nan] * len(cfg.Ns)
    failures = []
    for j, (N, res) in enumerate(zip(cfg.Ns, results)):
        if isinstance(res, Exception):
            failures.append(f"N={N}: {type(res).__name__}: {res}")
            continue
        h[j], ratios[j], shifted[:, j] = res

    domain = cfg.mesh_spec(cfg.Ns[0]).resolved_domain
    exact_shifted = None
    if domain.kind == "rectangle":
        exact_shifted = cfg.materials.c ** 2 * exact_rectangle(domain.a, domain.b, k).lambdas
    st = cfg.stabilization
    meta = {
        "family": cfg.family,
        "domain": str(domain),
        "stabilization": st.kind,
        "sigma": st.sigma_rule if st.sigma_rule != CONSTANT else f"{st.sigma:g}",
        "rho": f"{cfg.materials.rho:g}",
        "c": cfg.materials.c,
    }
    return _build_table(cfg.Ns, h, ratios, shifted, cfg.normalization, cfg.materials.c,
                        exact_shifted, meta, failures)


# --------------------------------------------------------------------------- sigma sweeps

CLEAN = "clean"
DEGRADED = "degraded"
SPURIOUS = "spurious"
MISSING = "missing"

DEGRADED_RTOL = 1e-2
EXPECTED_ORDER = (1.8, 2.2)


@dataclass(frozen=True)
class SpuriousReport:
    sigma: float
    status: str
    window: tuple  # (0, upper) in lambda - 1
    computed_count: int
    exact_count: int
    degraded_modes: tuple = ()


@dataclass(frozen=True)
class SweepResult:
    sigmas: tuple
    tables: tuple
    reports: tuple


def spurious_check(table: ConvergenceTable, n_check=3, expected_order=EXPECTED_ORDER, sigma=math.nan) -> SpuriousReport:
    """Count computed modes in ``[0, exact_k + margin]`` at the finest level.

    ``margin`` is half the gap from the ``n_check``-th exact eigenvalue to
    the next. A count above (below) the exact count flags spurious
    (missing) modes. With the right count, a mode whose finest value misses
    the exact one by more than 1% relative, or whose fitted order leaves
    ``expected_order``, is reported as degraded.
    """
    if table.exact_shifted is None:
        raise ConfigError("spurious detection needs an exact reference spectrum")
    exact = np.asarray(table.exact_shifted)
    if len(exact) <= n_check:
        raise ConfigError(f"need more than {n_check} exact modes for the window margin")
    ok = np.flatnonzero(~np.isnan(table.shifted).any(axis=0))
    if len(ok) == 0:
        return SpuriousReport(sigma, MISSING, (0.0, math.nan), 0, n_check)
    finest = table.shifted[:, ok[-1]]
    upper = exact[n_check - 1] + 0.5 * (exact[n_check] - exact[n_check - 1])
    exact_count = int(np.sum(exact <= upper))
    count = int(np.sum((finest >= -1e-8 * max(1.0, upper)) & (finest <= upper)))
    if count > exact_count:
        status = SPURIOUS
    elif count < exact_count:
        status = MISSING
    else:
        bad = []
        for i in range(n_check):
            rel = abs(finest[i] - exact[i]) / exact[i]
            fit = table.rows[i].fit
            order_bad = fit is None or not (expected_order[0] <= fit.order <= expected_order[1])
            if rel > DEGRADED_RTOL or order_bad:
                bad.append(i + 1)
        status = DEGRADED if bad else CLEAN
        return SpuriousReport(sigma, status, (0.0, float(upper)), count, exact_count, tuple(bad))
    return SpuriousReport(sigma, status, (0.0, float(upper)), count, exact_count)


def sweep_sigma(base: StudyConfig, sigmas, n_check=3) -> SweepResult:
    """Repeat ``base`` for constant ``sigma`` values and screen each spectrum.

    ``base.n_modes`` should exceed ``n_check`` so that intruders above the
    checked modes but inside the window can be seen.
    """
    sigmas = tuple(float(s) for s in sigmas)
    if not sigmas:
        raise ConfigError("empty sigma list")
    for s in sigmas:
        if not s >= MIN_SIGMA:
            raise ConfigError(f"sigma = {s:g} below {MIN_SIGMA:g}: the stabilization is needed for rank")
    tables, reports = [], []
    for s in sigmas:
        st = StabilizationKind(base.stabilization.kind, CONSTANT, s)
        t = run_study(replace(base, stabilization=st))
        tables.append(t)
        reports.append(spurious_check(t, n_check, sigma=s))
    return SweepResult(sigmas, tuple(tables), tuple(reports))


def sweep_to_text(result: SweepResult, n_rows=3) -> str:
    """sigma blocks of ``n_rows`` modes each with a shared ratio row."""
    t0 = result.tables[0]
    header = ["sigma", t0.normalization] + [f"N = {n}" for n in t0.Ns] + ["Order", "Extrap."]
    rows = [header]
    for s, t, rep in zip(result.sigmas, result.tables, result.reports):
        for r in t.rows[:n_rows]:
            rows.append([f"{s:g}" if r.index == 1 else "", f"{t.normalization}_{r.index}"]
                        + [_fmt_value(x) for x in r.values]
                        + [_fmt_order(r.fit), _fmt_value(r.fit.extrapolated if r.fit else None)])
        rows.append(["", f"[{rep.status}]"])
    rows.append(["Ratio", ""] + [_fmt_ratio(x) for x in t0.ratios])
    return _align(rows, title=_title(dict(t0.metadata, sigma="sweep"), any(t.partial for t in result.tables)))


def sweep_to_csv(result: SweepResult, n_rows=3) -> str:
    t0 = result.tables[0]
    buf = io.StringIO()
    buf.write(",".join(["sigma", "mode"] + [f"N={n}" for n in t0.Ns] + ["order", "extrapolated", "exact", "status"]) + "\n")
    for s, t, rep in zip(result.sigmas, result.tables, result.reports):
        for r in t.rows[:n_rows]:
            buf.write(",".join([f"{s:g}", f"{t.normalization}_{r.index}"] + [_fmt_value(x) for x in r.values]
                               + [_fmt_order(r.fit), _fmt_value(r.fit.extrapolated if r.fit else None),
                                  _fmt_value(r.exact), rep.status]) + "\n")
    buf.write(",".join(["", "ratio"] + [_fmt_ratio(x) for x in t0.ratios] + ["", "", "", ""]) + "\n")
    return buf.getvalue()


# --------------------------------------------------------------------------- fields


def displacement_field(mesh, system, spectrum, mode: int) -> np.ndarray:
    """Per-cell constant displacement ``grad(Pi p_h) / (rho omega**2)``.

    ``mode`` indexes ``spectrum`` from 0, where 0 is the constant mode.

    Raises
    ------
    FieldError
        If the mode's frequency vanishes (the constant mode).
    """
    if not 0 <= mode < len(spectrum.lambdas):
        raise FieldError(f"mode {mode} not in spectrum of {len(spectrum.lambdas)} pairs")
    shifted = spectrum.lambdas - 1.0
    scale = max(1.0, float(np.max(np.abs(shifted))))
    om2 = float(shifted[mode])
    if om2 <= 1e-8 * scale:
        raise FieldError(f"mode {mode} has omega ~ 0; displacement undefined")
    _, grads = cell_projections(mesh, spectrum.vectors[:, mode])
    return grads / (system.params.rho * om2)


def frequencies(spectrum, normalization=NU, c=1.0) -> np.ndarray:
    """Spectrum frequencies in a table normalization."""
    if normalization == OMEGA_OVER_C:
        return recover_frequencies(spectrum, "omega") / c
    return recover_frequencies(spectrum, normalization)
