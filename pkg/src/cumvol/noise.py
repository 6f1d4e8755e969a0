"""Noise models for the production process.

Each period's log-production increment is an i.i.d. draw from a
one-dimensional density. Three families are supported:

* ``gaussian`` -- mean zero, standard deviation ``sigma``;
* ``lorentzian`` -- Cauchy density with half-width-at-half-maximum ``gamma``
  (no finite moments; downstream code must track truncation explicitly);
* ``tabulated`` -- (x, density) samples on a strictly increasing grid,
  linearly interpolated inside the support, zero outside, renormalised to
  unit trapezoidal mass at construction.

``mirror`` reflects a model through zero. The reversed recursion that
produces the volatility distribution runs on the mirrored density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special

__all__ = [
    "NoiseModel",
    "KernelCells",
    "make_noise",
    "gaussian",
    "lorentzian",
    "tabulated",
    "parse_noise_spec",
    "load_tabulated_csv",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)
_KINDS = ("gaussian", "lorentzian", "tabulated")


@dataclass(frozen=True)
class KernelCells:
    """A noise density reduced to cell masses on offsets j*step.

    ``masses[j + halfcells]`` is the exact probability of the cell
    ``[(j - 1/2)*step, (j + 1/2)*step]``. ``clip_left``/``clip_right`` hold
    the mass beyond the covered window on each side, so that
    ``masses.sum() + clip_left + clip_right == 1`` up to roundoff.
    """

    masses: np.ndarray
    halfcells: int
    step: float
    clip_left: float
    clip_right: float
    capped: bool = False

    def offsets(self) -> np.ndarray:
        return self.step * np.arange(-self.halfcells, self.halfcells + 1)


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


@dataclass(frozen=True)
class NoiseModel:
    """Immutable description of the per-step noise distribution."""

    kind: str
    sigma: float = 0.0
    gamma: float = 0.0
    xs: np.ndarray | None = None
    ys: np.ndarray | None = None
    mirrored: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma > 0.0:
            raise ValueError("gaussian noise requires sigma > 0")
        if self.kind == "lorentzian" and not self.gamma > 0.0:
            raise ValueError("lorentzian noise requires gamma > 0")
        if self.kind == "tabulated":
            xs = np.ascontiguousarray(self.xs, dtype=float)
            ys = np.ascontiguousarray(self.ys, dtype=float)
            if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
                raise ValueError("tabulated noise needs >= 2 (x, density) points")
            if not np.all(np.diff(xs) > 0):
                raise ValueError("tabulated noise x values must be strictly increasing")
            if np.any(ys < 0):
                raise ValueError("tabulated noise densities must be non-negative")
            mass = np.trapezoid(ys, xs)
            if not mass > 0.0:
                raise ValueError("tabulated noise must have positive total mass")
            object.__setattr__(self, "xs", xs)
            object.__setattr__(self, "ys", ys / mass)
            self.xs.setflags(write=False)
            self.ys.setflags(write=False)

    # ------------------------------------------------------------------
    # density / distribution function
    # ------------------------------------------------------------------

    def pdf_at(self, x):
        """Density at x (vectorised; zero outside a tabulated support)."""
        arr, scalar = _as_array(x)
        if self.kind == "gaussian":
            out = np.exp(-0.5 * (arr / self.sigma) ** 2) / (self.sigma * _SQRT2PI)
        elif self.kind == "lorentzian":
            out = self.gamma / (math.pi * (arr * arr + self.gamma * self.gamma))
        else:
            out = np.interp(arr, self.xs, self.ys, left=0.0, right=0.0)
        return float(out) if scalar else out

    def cdf_at(self, x):
        """Distribution function at x; exact integral of ``pdf_at``."""
        arr, scalar = _as_array(x)
        if self.kind == "gaussian":
            out = special.ndtr(arr / self.sigma)
        elif self.kind == "lorentzian":
            out = 0.5 + np.arctan(arr / self.gamma) / math.pi
        else:
            out = self._tabulated_cdf(arr)
        return float(out) if scalar else out

    def _tabulated_cdf(self, arr: np.ndarray) -> np.ndarray:
        # Piecewise-quadratic: exact integral of the linearly interpolated density.
        xs, ys = self.xs, self.ys
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))))
        xc = np.clip(arr, xs[0], xs[-1])
        i = np.clip(np.searchsorted(xs, xc, side="right") - 1, 0, xs.size - 2)
        t = xc - xs[i]
        slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
        out = cum[i] + ys[i] * t + 0.5 * slope * t * t
        out = np.where(arr < xs[0], 0.0, out)
        out = np.where(arr > xs[-1], cum[-1], out)
        return np.clip(out, 0.0, 1.0)

    # ------------------------------------------------------------------
    # transformations
    # ------------------------------------------------------------------

    def mirror(self) -> "NoiseModel":
        """Model whose density at x equals this model's density at -x."""
        if self.kind == "tabulated":
            return NoiseModel(
                kind="tabulated",
                xs=-self.xs[::-1],
                ys=self.ys[::-1],
                mirrored=not self.mirrored,
            )
        # gaussian / lorentzian are even around zero; only the flag flips
        return replace(self, mirrored=not self.mirrored)

    # ------------------------------------------------------------------
    # sampling
    # ------------------------------------------------------------------

    def sample(self, count: int, seed: int) -> np.ndarray:
        """``count`` i.i.d. draws, deterministic for a fixed seed."""
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(seed)
        return self.sample_with(rng, (count,))

    def sample_with(self, rng: np.random.Generator, shape) -> np.ndarray:
        """Draws using a caller-owned generator (shared by the Monte Carlo engine)."""
        if self.kind == "gaussian":
            return self.sigma * rng.standard_normal(shape)
        if self.kind == "lorentzian":
            u = rng.random(shape)
            return self.gamma * np.tan(math.pi * (u - 0.5))
        # tabulated: invert the exact CDF of the interpolated density, so the
        # sampling distribution is identical to pdf_at even for coarse tables
        # (within a table cell the CDF is quadratic, not linear)
        xs, ys = self.xs, self.ys
        widths = np.diff(xs)
        cum = np.concatenate(([0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * widths)))
        cum /= cum[-1]
        u = rng.random(shape)
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, xs.size - 2)
        d = np.maximum(u - cum[i], 0.0)
        y0 = ys[i]
        slope = (ys[i + 1] - ys[i]) / widths[i]
        disc = np.sqrt(np.maximum(y0 * y0 + 2.0 * slope * d, 0.0))
        denom = y0 + disc
        t = np.where(denom > 0.0, 2.0 * d / np.where(denom > 0.0, denom, 1.0), 0.0)
        return xs[i] + np.minimum(t, widths[i])

    # ------------------------------------------------------------------
    # summary statistics
    # ------------------------------------------------------------------

    def mean(self) -> float:
        """Mean of the density (nan for lorentzian, which has none)."""
        if self.kind == "gaussian":
            return 0.0
        if self.kind == "lorentzian":
            return math.nan
        return float(np.trapezoid(self.xs * self.ys, self.xs))

    def variance(self) -> float:
        """Variance of the density (inf for lorentzian)."""
        if self.kind == "gaussian":
            return self.sigma * self.sigma
        if self.kind == "lorentzian":
            return math.inf
        m = self.mean()
        return float(np.trapezoid((self.xs - m) ** 2 * self.ys, self.xs))

    def scale(self) -> float:
        """Characteristic width used for grid sizing heuristics."""
        if self.kind == "gaussian":
            return self.sigma
        if self.kind == "lorentzian":
            return self.gamma
        return float(max(abs(self.xs[0]), abs(self.xs[-1])))

    def label(self) -> str:
        if self.kind == "gaussian":
            return f"gaussian(sigma={self.sigma:g})"
        if self.kind == "lorentzian":
            return f"lorentzian(gamma={self.gamma:g})"
        return f"tabulated({self.xs.size} pts on [{self.xs[0]:g}, {self.xs[-1]:g}])"

    # ------------------------------------------------------------------
    # discretisation
    # ------------------------------------------------------------------

    def tail_halfwidth(self, tail_tol: float) -> float:
        """Halfwidth containing all but ``tail_tol`` of the mass."""
        if self.kind == "gaussian":
            return self.sigma * float(special.ndtri(1.0 - 0.5 * tail_tol))
        if self.kind == "lorentzian":
            return self.gamma / math.tan(0.5 * math.pi * tail_tol)
        return self.scale()

    def cell_masses(self, step: float, tail_tol: float = 1e-8,
                    max_halfwidth: float | None = None) -> KernelCells:
        """Exact cell masses of the density on a grid of spacing ``step``.

        The window halfwidth is the smaller of the tail-tolerance width and
        ``max_halfwidth``; whatever mass falls outside is reported in the
        clip fields rather than silently dropped. Masses come from CDF
        differences, so arbitrarily narrow densities (the deterministic
        sigma -> 0 limit) land in the correct single cell.
        """
        if not step > 0.0:
            raise ValueError("step must be positive")
        natural = self.tail_halfwidth(tail_tol)
        halfwidth = natural
        capped = False
        if max_halfwidth is not None and max_halfwidth < natural:
            halfwidth = max_halfwidth
            capped = True
        m = max(1, int(math.ceil(halfwidth / step - 0.5)))
        edges = step * (np.arange(-m, m + 2) - 0.5)
        cdf = self.cdf_at(edges)
        masses = np.maximum(np.diff(cdf), 0.0)
        return KernelCells(
            masses=masses,
            halfcells=m,
            step=step,
            clip_left=float(cdf[0]),
            clip_right=float(1.0 - cdf[-1]),
            capped=capped,
        )


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------


def gaussian(sigma: float) -> NoiseModel:
    return NoiseModel(kind="gaussian", sigma=float(sigma))


def lorentzian(gamma: float) -> NoiseModel:
    return NoiseModel(kind="lorentzian", gamma=float(gamma))


def tabulated(points) -> NoiseModel:
    """Tabulated model from an iterable of (x, density) pairs."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("tabulated points must be (x, density) pairs")
    return NoiseModel(kind="tabulated", xs=pts[:, 0], ys=pts[:, 1])


def make_noise(kind: str, *, sigma_a: float | None = None, gamma: float | None = None,
               points=None) -> NoiseModel:
    """Factory over the three supported kinds."""
    if kind == "gaussian":
        if sigma_a is None:
            raise ValueError("gaussian noise requires sigma_a")
        return gaussian(sigma_a)
    if kind == "lorentzian":
        if gamma is None:
            raise ValueError("lorentzian noise requires gamma")
        return lorentzian(gamma)
    if kind == "tabulated":
        if points is None:
            raise ValueError("tabulated noise requires points")
        return tabulated(points)
    raise ValueError(f"unknown noise kind {kind!r}")


def load_tabulated_csv(path) -> NoiseModel:
    """Load a tabulated model from a two-column CSV (x, density).

    Header row optional; comma separated; UTF-8.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 2:
                raise ValueError(f"{path}: line {lineno}: expected two columns")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}: line {lineno}: could not parse numbers")
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two data rows")
    return tabulated(rows)


def parse_noise_spec(text: str) -> NoiseModel:
    """Parse CLI-style specs: gaussian:sigma=S | lorentzian:gamma=G | table:PATH."""
    head, sep, rest = text.partition(":")
    if not sep:
        raise ValueError(f"noise spec {text!r} needs form kind:params")
    if head == "gaussian":
        key, eq, val = rest.partition("=")
        if key != "sigma" or not eq:
            raise ValueError(f"gaussian spec must look like gaussian:sigma=S, got {text!r}")
        return gaussian(float(val))
    if head == "lorentzian":
        key, eq, val = rest.partition("=")
        if key != "gamma" or not eq:
            raise ValueError(f"lorentzian spec must look like lorentzian:gamma=G, got {text!r}")
        return lorentzian(float(val))
    if head == "table":
        p = Path(rest)
        if not p.exists():
            raise ValueError(f"noise table {rest!r} does not exist")
        return load_tabulated_csv(p)
    raise ValueError(f"unknown noise kind {head!r} in spec {text!r}")
