"""Exact density evolution for log cumulative production and its volatility.

One step of the process maps x_{t+1} = log(1 + exp(g + a + x_t)) with a drawn
from the noise density. The density therefore evolves by a convolution with
the noise followed by a nonlinear coordinate warp:

    rho_{t+1}(x) = (rho_a * rho_t)(log(e^x - 1) - g) / (1 - e^{-x}),  x > 0.

The engine realises this map conservatively on cell-centred grids: the
convolved density's CDF is evaluated at the warped cell edges, so each output
cell receives exactly the mass the continuous map sends into it. Pointwise,
the stored values agree with the formula above to O(h^2) wherever the density
is smooth, while the integrable blow-up at x -> 0 (present for heavy-tailed
noise) is captured as finite first-cell mass instead of being lost.

The same machinery with g -> -g and mirrored noise evolves the reversed
variable y = log(Z_t / (Z_t - Z_{t-1})) whose density converges to a genuine
fixed point for g > 0; the one-step growth increment dz then follows from

    rho_dz(x) = rho_y(-log(1 - e^{-x})) / (e^x - 1),  x > 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analytic import sigma_y_fixed_point, var_dz_saddle, var_logZ_saddle, ybar
from .errors import ConvergenceError, DomainError, MassDefectError
from .noise import NoiseModel
from .pdfgrid import GriddedPdf, GridSpec, cell_grid, conv_mass_arrays

__all__ = [
    "EvolutionConfig",
    "StepRecord",
    "EvolutionTrace",
    "VolatilityReport",
    "init_first_step",
    "warp_step",
    "evolve_z",
    "evolve_y",
    "volatility_pdf",
    "steady_state_volatility",
    "default_z_grid",
    "default_y_grid",
    "default_y_config",
]

# Per-step budget for unexplained mass loss; conservative cell transport keeps
# the actual defect at roundoff level, so exceeding this means broken inputs.
MAX_STEP_DEFECT = 1e-3

# Extra kernel halfwidth beyond the grid span, so that mass clipped on the
# kernel's left lands provably inside the first output cell (e^{-margin} << h).
_KERNEL_MARGIN = 25.0

_REPORT_PROBS = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class EvolutionConfig:
    """Inputs of one evolution run.

    ``grid`` is the node grid of the evolving density; its cells must tile
    [0, upper] exactly (build it with ``cell_grid`` or the default_* helpers).
    """

    g: float
    noise: NoiseModel
    grid: GridSpec
    horizon: int
    convergence_tol: float = 1e-8
    tail_tol: float = 1e-8

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.convergence_tol > 0.0:
            raise ValueError("convergence_tol must be positive")
        if not self.tail_tol > 0.0:
            raise ValueError("tail_tol must be positive")


@dataclass(frozen=True)
class StepDiag:
    mass_defect: float
    new_truncation: float
    captured_mass: float


@dataclass(frozen=True)
class StepRecord:
    """Density and summary statistics of one time step."""

    t: int
    pdf: GriddedPdf
    mean: float
    variance: float
    quantiles: dict
    truncated_mass: float
    mass_defect: float
    new_truncation: float
    l1_prev: float | None
    l1_centered_prev: float | None


@dataclass(frozen=True)
class EvolutionTrace:
    config: EvolutionConfig
    steps: list
    converged_at: int | None

    def density(self, t: int) -> GriddedPdf:
        """Density at time step t (1-indexed)."""
        if not 1 <= t <= len(self.steps):
            raise ValueError(f"step {t} not in trace (1..{len(self.steps)})")
        return self.steps[t - 1].pdf

    def final(self) -> StepRecord:
        return self.steps[-1]

    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.steps])

    def variances(self) -> np.ndarray:
        return np.array([s.variance for s in self.steps])

    def step_rows(self) -> list:
        """Per-step diagnostics as plain dicts (JSON-ready)."""
        rows = []
        for rec in self.steps:
            row = {
                "t": rec.t,
                "mean": rec.mean,
                "variance": rec.variance,
                "truncated_mass": rec.truncated_mass,
                "mass_defect": rec.mass_defect,
                "l1_prev": rec.l1_prev,
                "l1_centered_prev": rec.l1_centered_prev,
            }
            row.update(rec.quantiles)
            rows.append(row)
        return rows

    def write_dir(self, out_dir, prefix: str = "rho_z") -> list:
        """Write one CSV per step plus a trace.json manifest; returns filenames."""
        import json
        import os

        from .pdfgrid import atomic_write_text

        os.makedirs(out_dir, exist_ok=True)
        rows = self.step_rows()
        names = []
        for rec, row in zip(self.steps, rows):
            name = f"{prefix}_t{rec.t:04d}.csv"
            rec.pdf.to_csv(os.path.join(out_dir, name))
            row["file"] = name
            names.append(name)
        manifest = {
            "g": self.config.g,
            "noise": self.config.noise.label(),
            "grid": {"x_min": self.config.grid.x_min, "x_max": self.config.grid.x_max,
                     "n_points": self.config.grid.n_points},
            "horizon": self.config.horizon,
            "convergence_tol": self.config.convergence_tol,
            "converged_at": self.converged_at,
            "steps": rows,
        }
        atomic_write_text(os.path.join(out_dir, "trace.json"),
                          json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return names + ["trace.json"]


# ----------------------------------------------------------------------
# warp maps (cell-edge coordinates)
# ----------------------------------------------------------------------


def _growth_edges(edges: np.ndarray, g: float) -> np.ndarray:
    """u = log(e^b - 1) - g at the cell edges; -inf at b = 0."""
    with np.errstate(divide="ignore"):
        return edges + np.log1p(-np.exp(-edges)) - g


def _reciprocal_edges(edges: np.ndarray) -> np.ndarray:
    """v = -log(1 - e^{-b}) at the cell edges; +inf at b = 0 (involution)."""
    with np.errstate(divide="ignore"):
        return -np.log1p(-np.exp(-edges))


def _validated_edges(grid: GridSpec) -> np.ndarray:
    """Cell edges of a grid whose domain must start exactly at 0."""
    edges = grid.cell_edges()
    if abs(edges[0]) > 1e-9 * grid.h:
        raise DomainError(
            "evolution grids must tile [0, upper]; build them with cell_grid()"
        )
    edges[0] = 0.0
    return edges


def _node_cdf(x0: float, h: float, masses: np.ndarray):
    """Linear-interpolation CDF of per-node masses (half of each node's own
    mass counts as below the node), returned as (eval function, total)."""
    nodes = x0 + h * np.arange(masses.size)
    cum = np.cumsum(masses) - 0.5 * masses
    total = float(masses.sum())

    def at(u):
        return np.interp(u, nodes, cum, left=0.0, right=total)

    return at, total


def _check_normalized(p: GriddedPdf) -> None:
    if abs(p.integral() - 1.0) > 1e-6:
        raise ValueError("input density must be normalised (integral within 1e-6 of 1)")


def _assemble(grid: GridSpec, cells: np.ndarray, prev_trunc: float,
              new_trunc: float) -> tuple[GriddedPdf, StepDiag]:
    captured = float(cells.sum())
    defect = abs(1.0 - captured - new_trunc)
    if defect > MAX_STEP_DEFECT:
        raise MassDefectError(
            f"mass defect {defect:.3e} exceeds the per-step budget {MAX_STEP_DEFECT:g}; "
            "the grid is under-resolved or the input density is inconsistent"
        )
    if not captured > 0.0:
        raise MassDefectError("no probability mass fell inside the grid domain")
    values = cells / grid.node_weights() / captured
    total_trunc = 1.0 - (1.0 - prev_trunc) * (1.0 - new_trunc)
    return GriddedPdf(grid, values, min(total_trunc, 1.0 - 1e-15)), StepDiag(
        mass_defect=defect, new_truncation=new_trunc, captured_mass=captured
    )


# ----------------------------------------------------------------------
# single steps
# ----------------------------------------------------------------------


def _first_step(noise: NoiseModel, g: float, grid: GridSpec) -> tuple[GriddedPdf, StepDiag]:
    edges = _validated_edges(grid)
    warped = _growth_edges(edges, g)
    cdf = noise.cdf_at(warped)
    cells = np.maximum(np.diff(cdf), 0.0)
    new_trunc = float(1.0 - cdf[-1])
    return _assemble(grid, cells, 0.0, new_trunc)


def init_first_step(noise: NoiseModel, g: float, grid: GridSpec) -> GriddedPdf:
    """Exact density after one step from the deterministic start (x_0 = 0).

    The point mass at 0 is never discretised: cell masses come directly from
    the noise CDF evaluated at the warped cell edges.
    """
    pdf, _ = _first_step(noise, g, grid)
    return pdf


def _growth_step(p: GriddedPdf, noise: NoiseModel, g: float,
                 tail_tol: float) -> tuple[GriddedPdf, StepDiag]:
    grid = p.grid
    h = grid.h
    edges = _validated_edges(grid)
    _check_normalized(p)

    span = float(edges[-1])
    kern = noise.cell_masses(h, tail_tol=tail_tol, max_halfwidth=span + _KERNEL_MARGIN)
    conv = conv_mass_arrays(p.node_masses(), kern.masses, method="fft")
    cdf_at, total_c = _node_cdf(grid.x_min - kern.halfcells * h, h, conv)

    warped = _growth_edges(edges, g)
    cw = cdf_at(warped)
    cells = np.maximum(np.diff(cw), 0.0)
    new_trunc = kern.clip_right + max(total_c - float(cw[-1]), 0.0)
    if kern.capped:
        # Heavy-tail window: jumps past the capped left edge overshoot the
        # whole domain and collapse onto x ~ 0+, so (thanks to the kernel
        # margin) their mass belongs in the first cell to sub-cell accuracy.
        cells[0] += kern.clip_left
    else:
        # Light tails: the clip is below tail_tol and its destination is not
        # resolved; count it as truncated rather than misplace it.
        new_trunc += kern.clip_left
    return _assemble(grid, cells, p.truncated_mass, new_trunc)


def warp_step(p: GriddedPdf, noise: NoiseModel, g: float,
              tail_tol: float = 1e-8) -> GriddedPdf:
    """One evolution step: convolve with the noise, then warp coordinates.

    The input must be normalised on a grid tiling [0, upper]. The output is
    renormalised; newly clipped mass is folded into ``truncated_mass``.
    """
    pdf, _ = _growth_step(p, noise, g, tail_tol)
    return pdf


def volatility_pdf(p_y: GriddedPdf, grid: GridSpec | None = None) -> GriddedPdf:
    """Density of the growth increment dz from the reversed variable's density.

    Applies rho_dz(x) = rho_y(-log(1 - e^{-x})) / (e^x - 1) conservatively:
    the map is an involution exchanging x -> 0+ with the reversed variable's
    far tail, so the first output cell holds that tail's full (integrable)
    mass. When no grid is given one is sized from the input's moments.
    """
    _check_normalized(p_y)
    if grid is None:
        grid = _default_dz_grid(p_y)
    edges = _validated_edges(grid)
    cdf_at, total = _node_cdf(p_y.grid.x_min, p_y.grid.h, p_y.node_masses())
    v = _reciprocal_edges(edges)
    cv = np.where(np.isinf(v), total, cdf_at(v))
    cells = np.maximum(cv[:-1] - cv[1:], 0.0)  # v decreases with x
    new_trunc = float(cv[-1])  # reversed-variable mass mapping beyond the top edge
    pdf, _ = _assemble(grid, cells, p_y.truncated_mass, new_trunc)
    return pdf


def _default_dz_grid(p_y: GriddedPdf) -> GridSpec:
    mean_y = p_y.mean()
    if not mean_y > 0.0:
        raise DomainError("reversed-variable density must have positive mean")
    center = float(-math.log1p(-math.exp(-mean_y)))
    width = max((math.exp(center) - 1.0) * p_y.std(), p_y.grid.h)
    upper = center + 30.0 * width
    # The map swaps dz -> infinity with the reversed variable's lower range,
    # so the domain must reach the image of y's low quantile: find the lowest
    # cell edge below which y carries essentially no mass.
    edges, cum = p_y.edge_cdf()
    idx = int(np.searchsorted(cum, 1e-11 * cum[-1]))
    y_lo = float(edges[min(idx, edges.size - 1)])
    with np.errstate(divide="ignore"):
        upper = max(upper, float(-np.log1p(-np.exp(-max(y_lo, 1e-26)))))
    # Integrable spike at 0 maps from y's far upper tail; give its own
    # exponential dz-tail room when that tail carries weight.
    d0 = float(p_y.values[0])
    if d0 > 1e-12:
        upper = max(upper, math.log(d0 / 1e-14))
    upper = min(upper, 60.0)
    h = min(width / 80.0, 0.002)
    n = int(np.clip(math.ceil(upper / h), 64, 1 << 20))
    return cell_grid(upper, n)


# ----------------------------------------------------------------------
# full runs
# ----------------------------------------------------------------------


def _centered_l1(prev: GriddedPdf, prev_mean: float, cur: GriddedPdf,
                 cur_mean: float) -> float:
    pts = cur.grid.points()
    axis = pts - 0.5 * (pts[0] + pts[-1])
    a = prev.interp_at(axis + prev_mean)
    b = cur.interp_at(axis + cur_mean)
    return float(np.trapezoid(np.abs(a - b), axis))


def _record(t, pdf, diag, l1, l1c) -> StepRecord:
    qs = pdf.quantiles(_REPORT_PROBS)
    return StepRecord(
        t=t,
        pdf=pdf,
        mean=pdf.mean(),
        variance=pdf.variance(),
        quantiles={f"q{int(100 * p):02d}": float(q) for p, q in zip(_REPORT_PROBS, qs)},
        truncated_mass=pdf.truncated_mass,
        mass_defect=diag.mass_defect,
        new_truncation=diag.new_truncation,
        l1_prev=l1,
        l1_centered_prev=l1c,
    )


def _evolve(config: EvolutionConfig, raw_convergence: bool) -> EvolutionTrace:
    pdf, diag = _first_step(config.noise, config.g, config.grid)
    steps = [_record(1, pdf, diag, None, None)]
    converged_at = None
    for t in range(2, config.horizon + 1):
        nxt, diag = _growth_step(pdf, config.noise, config.g, config.tail_tol)
        l1 = pdf.distance(nxt, "L1")
        l1c = _centered_l1(pdf, steps[-1].mean, nxt, nxt.mean())
        steps.append(_record(t, nxt, diag, l1, l1c))
        pdf = nxt
        gap = l1 if raw_convergence else l1c
        if gap < config.convergence_tol:
            converged_at = t
            break
    return EvolutionTrace(config=config, steps=steps, converged_at=converged_at)


def evolve_z(config: EvolutionConfig) -> EvolutionTrace:
    """Evolve the density of log cumulative production up to the horizon.

    The raw density never stops translating (its mean grows by about g per
    step), so steady state is declared on the mean-centred L1 distance
    between successive densities.
    """
    return _evolve(config, raw_convergence=False)


def evolve_y(config: EvolutionConfig) -> EvolutionTrace:
    """Evolve the reversed variable y = log(Z_t / (Z_t - Z_{t-1})).

    Identical machinery to ``evolve_z`` with the drift negated and the noise
    mirrored; for g > 0 the densities reach a genuine fixed point, detected
    on the raw L1 distance.
    """
    inner = replace(config, g=-config.g, noise=config.noise.mirror())
    trace = _evolve(inner, raw_convergence=True)
    return EvolutionTrace(config=config, steps=trace.steps, converged_at=trace.converged_at)


# ----------------------------------------------------------------------
# steady-state volatility
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class VolatilityReport:
    """Steady-state summary of the growth-increment distribution."""

    g: float
    noise_label: str
    converged_at: int | None
    steps_run: int
    variance: float
    std: float
    iqr: float
    width90: float
    quantiles: dict
    sigma_a_sq: float | None
    narrow_variance: float | None
    ratio_to_narrow: float | None
    truncated_mass: float
    variance_reliable: bool
    per_step: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "noise": self.noise_label,
            "converged_at": self.converged_at,
            "steps_run": self.steps_run,
            "variance": self.variance,
            "std": self.std,
            "iqr": self.iqr,
            "width90": self.width90,
            "quantiles": self.quantiles,
            "sigma_a_sq": self.sigma_a_sq,
            "narrow_variance": self.narrow_variance,
            "ratio_to_narrow": self.ratio_to_narrow,
            "truncated_mass": self.truncated_mass,
            "variance_reliable": self.variance_reliable,
            "per_step": self.per_step,
        }


def _dz_stats(dz: GriddedPdf) -> dict:
    qs = dz.quantiles(_REPORT_PROBS)
    return {
        "variance": dz.variance(),
        "iqr": float(qs[3] - qs[1]),
        "width90": float(qs[4] - qs[0]),
        "quantiles": {f"q{int(100 * p):02d}": float(q) for p, q in zip(_REPORT_PROBS, qs)},
        "truncated_mass": dz.truncated_mass,
    }


def steady_state_volatility(config: EvolutionConfig, per_step: bool = False) -> VolatilityReport:
    """Run the reversed recursion to its fixed point and report the volatility.

    Requires g > 0 (otherwise the reversed recursion has no fixed point).
    Raises ``ConvergenceError`` when the horizon is exhausted first.
    """
    if not config.g > 0.0:
        raise DomainError("steady_state_volatility requires g > 0")
    trace = evolve_y(config)
    if trace.converged_at is None:
        raise ConvergenceError(
            f"no fixed point within horizon={config.horizon} at "
            f"tol={config.convergence_tol:g}"
        )
    dz = volatility_pdf(trace.final().pdf)
    stats = _dz_stats(dz)

    sigma_sq = config.noise.variance()
    finite_sigma = math.isfinite(sigma_sq)
    narrow = var_dz_saddle(config.g, math.sqrt(sigma_sq)) if finite_sigma else None
    ratio = stats["variance"] / narrow if narrow else None

    steps = []
    if per_step:
        for rec in trace.steps:
            row = {"t": rec.t, "l1_prev": rec.l1_prev}
            row.update(_dz_stats(volatility_pdf(rec.pdf)))
            steps.append(row)

    return VolatilityReport(
        g=config.g,
        noise_label=config.noise.label(),
        converged_at=trace.converged_at,
        steps_run=len(trace.steps),
        variance=stats["variance"],
        std=math.sqrt(max(stats["variance"], 0.0)),
        iqr=stats["iqr"],
        width90=stats["width90"],
        quantiles=stats["quantiles"],
        sigma_a_sq=sigma_sq if finite_sigma else None,
        narrow_variance=narrow,
        ratio_to_narrow=ratio,
        truncated_mass=stats["truncated_mass"],
        variance_reliable=finite_sigma and stats["truncated_mass"] < 1e-3,
        per_step=steps,
    )


# ----------------------------------------------------------------------
# default grids
# ----------------------------------------------------------------------


def _grid_from(upper: float, h_target: float, n_points: int | None,
               n_cap: int = 1 << 21) -> GridSpec:
    if n_points is None:
        n_points = int(np.clip(math.ceil(upper / h_target), 64, n_cap))
    return cell_grid(upper, n_points)


def default_z_grid(g: float, noise: NoiseModel, t_max: int,
                   n_points: int | None = None) -> GridSpec:
    """Grid sized to hold the log-production density out to t_max."""
    mean_top = ybar(-g, t_max)  # log sum of the drift factors
    if noise.kind == "lorentzian":
        upper = mean_top + 12.0 * noise.gamma + 25.0 * noise.gamma * t_max
        h = min(0.005, noise.gamma / 40.0)
    else:
        sig = math.sqrt(max(noise.variance(), 1e-30))
        if abs(g) > 1e-9:
            spread = math.sqrt(max(var_logZ_saddle(g, sig, t_max), 0.0) + sig * sig)
        else:
            spread = sig * math.sqrt(t_max + 1.0)
        upper = mean_top + 12.0 * spread + 6.0 * sig + 1.0
        # earliest step is the narrowest: width ~ sigma * e^g/(1+e^g)
        narrow = sig / (1.0 + math.exp(-g))
        h = min(0.005, max(narrow / 30.0, upper / float(1 << 21)))
    return _grid_from(upper, h, n_points)


def default_y_grid(g: float, noise: NoiseModel, n_points: int | None = None) -> GridSpec:
    """Grid sized to hold the reversed variable out to its fixed point (g > 0)."""
    if not g > 0.0:
        raise DomainError("default_y_grid requires g > 0")
    center = ybar(g, math.inf)
    if noise.kind == "lorentzian":
        upper = center + 12.0 * noise.gamma + 60.0 * noise.gamma / g
        h = min(0.005, noise.gamma / 40.0)
    else:
        sig = math.sqrt(max(noise.variance(), 1e-30))
        width = sigma_y_fixed_point(g, sig)
        # stationary exponential upper tail with rate 2g/sigma^2
        tail = 9.5 * sig * sig / g
        upper = center + 12.0 * width + tail + 6.0 * sig + 0.5
        h = min(0.005, max(width / 80.0, upper / float(1 << 21)))
    return _grid_from(upper, h, n_points)


def default_y_config(g: float, noise: NoiseModel, tol: float = 1e-9,
                     horizon: int = 4000, n_points: int | None = None,
                     tail_tol: float = 1e-8) -> EvolutionConfig:
    """Ready-to-run configuration for the reversed recursion."""
    return EvolutionConfig(
        g=g,
        noise=noise,
        grid=default_y_grid(g, noise, n_points),
        horizon=horizon,
        convergence_tol=tol,
        tail_tol=tail_tol,
    )
