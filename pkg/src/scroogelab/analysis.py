"""Curve fitting and finite-size scaling helpers.

The function API (``fit_exp_decay`` and friends) returns :class:`FitResult`
records.  :class:`ExpDecayFit`, :class:`PowerLawFit` and
:class:`ShiftedPowerFit` wrap the same routines as scikit-learn regressors
so they compose with ``get_params``/``set_params`` tooling.
All fitters sort their input first, so the point order never changes the
result.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InputError, NumericalError

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class FitResult:
    """Fitted parameters with one-sigma errors.

    Attributes
    ----------
    model : str
        Model label, e.g. ``"exp2"`` for ``y = A 2^{-alpha x}``.
    params, errors : dict
        Parameter values and standard errors (same keys).
    residual : float
        Residual sum of squares in the space the fit was done in.
    x_range : tuple
        ``(min, max)`` of the abscissa actually used.
    n_points : int
    converged : bool
    info : dict
        Model-specific extras.
    """

    model: str
    params: dict
    errors: dict
    residual: float
    x_range: tuple
    n_points: int
    converged: bool = True
    info: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def error(self, name: str) -> float:
        return self.errors[name]

    def within(self, name: str, truth: float, nsigma: float = 2.0) -> bool:
        return abs(self.params[name] - truth) <= nsigma * self.errors[name]


def _sorted_xy(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InputError(f"x and y differ in length ({x.size} vs {y.size})")
    order = np.lexsort((y, x))
    return x[order], y[order]


def _positive(x, y, what: str):
    bad = ~(y > 0) | ~np.isfinite(y)
    if np.any(bad):
        warnings.warn(f"{what}: dropping {int(bad.sum())} nonpositive or non-finite values", RuntimeWarning, stacklevel=3)
    return x[~bad], y[~bad]


def _linear_fit(x: np.ndarray, y: np.ndarray):
    """Ordinary least squares ``y = b0 + b1 x``; returns coefficients, errors, RSS."""
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    rss = float(r @ r)
    dof = x.size - 2
    if dof > 0:
        cov = rss / dof * np.linalg.inv(X.T @ X)
        err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    else:
        err = np.full(2, np.inf)
    return coef, err, rss


def fit_exp_decay(x, y, x_range: tuple | None = None) -> FitResult:
    """Fit ``y = A 2^{-alpha x}`` by least squares on ``log2 y``.

    Parameters
    ----------
    x, y : array_like
        Abscissa (typically ``N_B``) and positive data.  Nonpositive ``y``
        are dropped with a warning.
    x_range : tuple, optional
        Inclusive ``(lo, hi)`` window.

    Returns
    -------
    FitResult
        ``params`` holds ``alpha`` and ``log2_A``.
    """
    x, y = _sorted_xy(x, y)
    x, y = _positive(x, y, "fit_exp_decay")
    if x_range is not None:
        m = (x >= x_range[0]) & (x <= x_range[1])
        x, y = x[m], y[m]
    if x.size < 3:
        raise InputError("fit_exp_decay needs at least 3 positive points")
    coef, err, rss = _linear_fit(x, np.log2(y))
    return FitResult(
        "exp2",
        {"alpha": float(-coef[1]), "log2_A": float(coef[0])},
        {"alpha": float(err[1]), "log2_A": float(err[0])},
        rss,
        (float(x[0]), float(x[-1])),
        int(x.size),
    )


def fit_power_law(h, y, h_range: tuple | None = None) -> FitResult:
    """Fit ``y = A h^{-alpha}`` by least squares in log-log space.

    ``h_range`` restricts the fit to ``lo <= h <= hi``.
    """
    h, y = _sorted_xy(h, y)
    h, y = _positive(h, y, "fit_power_law")
    keep = h > 0
    h, y = h[keep], y[keep]
    if h_range is not None:
        m = (h >= h_range[0]) & (h <= h_range[1])
        h, y = h[m], y[m]
    if h.size < 3:
        raise InputError("fit_power_law needs at least 3 positive points")
    coef, err, rss = _linear_fit(np.log(h), np.log(y))
    return FitResult(
        "power",
        {"alpha": float(-coef[1]), "log_A": float(coef[0])},
        {"alpha": float(err[1]), "log_A": float(err[0])},
        rss,
        (float(h[0]), float(h[-1])),
        int(h.size),
    )


def _shifted(N, a, gamma, c):
    return a * np.power(N, gamma) + c


def _fixed_gamma(N: np.ndarray, y: np.ndarray, gamma: float):
    coef, err, rss = _linear_fit(np.power(N, gamma), y)
    return coef[1], coef[0], err[1], err[0], rss


def fit_shifted_power(
    N,
    y,
    gamma: float | None = None,
    gamma_grid: Sequence[float] | None = None,
) -> FitResult:
    """Fit ``y = a N^gamma + c`` and report the asymptote ``c``.

    With ``gamma`` given the model is linear in ``(a, c)``.  Otherwise a
    grid scan over ``gamma`` seeds ``scipy.optimize.curve_fit``; if the
    optimizer fails or ends worse than the best grid point, the grid
    result is returned with ``converged=False``.

    Returns
    -------
    FitResult
        ``params`` has ``a``, ``gamma`` and ``c``; ``info["fixed_gamma"]``
        is set when ``gamma`` was held fixed.
    """
    N, y = _sorted_xy(N, y)
    if np.any(N <= 0):
        raise InputError("fit_shifted_power needs positive N")
    if N.size < 4:
        raise InputError("fit_shifted_power needs at least 4 points")
    rng_x = (float(N[0]), float(N[-1]))
    if gamma is not None:
        a, c, ea, ec, rss = _fixed_gamma(N, y, float(gamma))
        return FitResult(
            "shifted_power",
            {"a": float(a), "gamma": float(gamma), "c": float(c)},
            {"a": float(ea), "gamma": 0.0, "c": float(ec)},
            rss,
            rng_x,
            int(N.size),
            info={"fixed_gamma": True},
        )
    grid = np.linspace(-4.0, -0.1, 40) if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    scans = [(_fixed_gamma(N, y, g)[4], g) for g in grid]
    rss0, g0 = min(scans)
    a0, c0, *_ = _fixed_gamma(N, y, g0)
    ok = True
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(_shifted, N, y, p0=(a0, g0, c0), maxfev=20000)
        r = y - _shifted(N, *popt)
        rss = float(r @ r)
        perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
        if not np.all(np.isfinite(popt)) or rss > rss0 * (1 + 1e-9) + 1e-30:
            raise RuntimeError("optimizer ended above grid optimum")
    except (RuntimeError, ValueError):
        ok = False
        popt = np.array([a0, g0, c0])
        _, _, ea, ec, rss = _fixed_gamma(N, y, g0)
        perr = np.array([ea, np.inf, ec])
    if not np.all(np.isfinite(perr)):
        perr = np.where(np.isfinite(perr), perr, np.inf)
    return FitResult(
        "shifted_power",
        {"a": float(popt[0]), "gamma": float(popt[1]), "c": float(popt[2])},
        {"a": float(perr[0]), "gamma": float(perr[1]), "c": float(perr[2])},
        rss,
        rng_x,
        int(N.size),
        converged=ok,
        info={"fixed_gamma": False, "grid_gamma": float(g0)},
    )


def compare_gamma(N, y, gamma_fixed: float) -> dict:
    """Shifted-power fits with ``gamma`` free and fixed on the same data."""
    return {"free": fit_shifted_power(N, y), "fixed": fit_shifted_power(N, y, gamma=gamma_fixed)}


# --------------------------------------------------------------------------
# minima, saturation, monotonicity


def locate_minimum(x, y) -> tuple[float, float]:
    """Vertex of the parabola through the lowest sample and its two neighbours.

    Falls back to the lowest sample when it sits at the edge of the grid
    or the three points are not convex.
    """
    x, y = _sorted_xy(x, y)
    if x.size == 0:
        raise InputError("locate_minimum needs data")
    i = int(np.argmin(y))
    if i == 0 or i == x.size - 1:
        return float(x[i]), float(y[i])
    xs, ys = x[i - 1 : i + 2], y[i - 1 : i + 2]
    a, b, c = np.polyfit(xs - xs[1], ys, 2)
    if a <= 0:
        return float(x[i]), float(y[i])
    t = -b / (2 * a)
    return float(xs[1] + t), float(c - b * b / (4 * a))


def monotone_within(y, err=None, decreasing: bool = True, nsigma: float = 2.0, strict: bool = False) -> bool:
    """Whether consecutive steps respect the order up to ``nsigma`` noise.

    ``strict`` demands each step to move in the stated direction with no
    noise allowance.
    """
    y = np.asarray(y, dtype=float)
    e = np.zeros_like(y) if err is None else np.asarray(err, dtype=float)
    step = np.diff(y) if decreasing else -np.diff(y)
    if strict:
        return bool(np.all(step < 0))
    tol = nsigma * np.sqrt(e[1:] ** 2 + e[:-1] ** 2)
    return bool(np.all(step <= tol))


@dataclass(frozen=True)
class Saturation:
    """Saturation onset and plateau level."""

    onset: float
    plateau: float
    plateau_err: float
    method: str


def saturation_onset(x, y, err=None, method: str = "plateau", nsigma: float = 2.0, tail_fraction: float = 1 / 3) -> Saturation:
    """Locate where a decaying curve reaches its plateau.

    Parameters
    ----------
    x, y : array_like
        Curve samples; sorted internally.
    err : array_like, optional
        Standard errors of ``y``.
    method : {"plateau", "hinge"}
        ``"plateau"``: the plateau is the mean of the last ``tail_fraction``
        of points and the onset is the first ``x`` from which every later
        point lies within ``nsigma`` combined errors of it.  ``"hinge"``:
        least-squares fit of ``y = p + s * min(x - x0, 0)`` scanned over
        ``x0`` on the sample grid.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.zeros_like(y) if err is None else np.asarray(err, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y, e = x[order], y[order], e[order]
    if x.size < 3:
        raise InputError("saturation_onset needs at least 3 points")
    ntail = max(2, int(round(tail_fraction * x.size)))
    tail_y, tail_e = y[-ntail:], e[-ntail:]
    if method == "plateau":
        plateau = float(tail_y.mean())
        p_err = float(max(tail_y.std(ddof=1) / np.sqrt(ntail), np.sqrt(np.sum(tail_e**2)) / ntail))
        tol = np.maximum(nsigma * np.sqrt(e**2 + p_err**2), 1e-12 * max(abs(plateau), 1e-300))
        inside = np.abs(y - plateau) <= tol
        onset_idx = x.size - 1
        for i in range(x.size - 1, -1, -1):
            if not inside[i]:
                break
            onset_idx = i
        return Saturation(float(x[onset_idx]), plateau, p_err, method)
    if method == "hinge":
        best = None
        for x0 in x[1:-1]:
            X = np.column_stack([np.ones_like(x), np.minimum(x - x0, 0.0)])
            coef, *_ = np.linalg.lstsq(X, y, rcond=None)
            rss = float(np.sum((y - X @ coef) ** 2))
            if best is None or rss < best[0]:
                best = (rss, x0, coef[0])
        tail_err = float(tail_y.std(ddof=1) / np.sqrt(ntail))
        return Saturation(float(best[1]), float(best[2]), tail_err, method)
    raise InputError(f"unknown saturation method {method!r}")


# --------------------------------------------------------------------------
# scaling collapse


@dataclass(frozen=True)
class Curve:
    """One finite-size curve ``y(h)`` at system size ``N``."""

    N: float
    h: np.ndarray
    y: np.ndarray


def _as_curves(curves) -> list[Curve]:
    out = []
    for c in curves:
        if isinstance(c, Curve):
            out.append(c)
        else:
            N, h, y = c
            out.append(Curve(float(N), np.asarray(h, dtype=float), np.asarray(y, dtype=float)))
    return out


def _per_curve(val, n: int, what: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(0.0 if val is None else val, dtype=float), (n,)) if np.ndim(val) == 0 else np.asarray(val, dtype=float)
    if arr.shape != (n,):
        raise InputError(f"{what} needs one value per curve")
    return arr


def rescale_curves(curves, nu: float, h0=None, y0=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """``((h - h0) N^{1/nu}, y - y0)`` per curve, sorted in the new abscissa."""
    cs = _as_curves(curves)
    h0s = _per_curve(h0, len(cs), "h0")
    y0s = _per_curve(y0, len(cs), "y0")
    out = []
    for c, a, b in zip(cs, h0s, y0s):
        xs = (c.h - a) * c.N ** (1.0 / nu)
        o = np.argsort(xs, kind="stable")
        out.append((xs[o], c.y[o] - b))
    return out


def scaling_collapse(curves, nu: float, h0=None, y0=None, n_grid: int = 64) -> float:
    """Collapse quality: mean squared spread of linearly interpolated curves.

    Parameters
    ----------
    curves : sequence
        ``(N, h, y)`` triples or :class:`Curve` objects; at least two.
    nu : float
        Trial exponent; abscissae become ``(h - h0) N^{1/nu}``.
    h0, y0 : float or sequence, optional
        Shared or per-curve shifts of abscissa and ordinate.
    n_grid : int
        Number of evaluation points spanning the common window.

    Returns
    -------
    float
        Mean over the window of the across-curve variance.  Zero for a
        perfect collapse.
    """
    resc = rescale_curves(curves, nu, h0, y0)
    if len(resc) < 2:
        raise InputError("scaling_collapse needs at least two curves")
    lo = max(x[0] for x, _ in resc)
    hi = min(x[-1] for x, _ in resc)
    if not hi > lo:
        raise InputError("rescaled curves have no common window")
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([np.interp(grid, x, y) for x, y in resc])
    q = float(np.mean(np.var(vals, axis=0)))
    if not np.isfinite(q):
        raise NumericalError("collapse quality is not finite")
    return q


def best_nu(curves, nus: Sequence[float], h0=None, y0=None) -> tuple[float, dict]:
    """Scan ``nus`` and return the best exponent with all qualities."""
    qs = {float(nu): scaling_collapse(curves, nu, h0, y0) for nu in nus}
    return min(qs, key=qs.get), qs


def curves_from_rows(rows, x: str, size: str, transform: str = "none") -> list:
    """Group summary rows into ``(N, x[], y[])`` curves."""
    by: dict = {}
    for r in rows:
        by.setdefault(float(r[size]), []).append((float(r[x]), float(r["value"])))
    curves = []
    for N in sorted(by):
        pts = sorted(by[N])
        xs = np.array([p[0] for p in pts])
        ys = np.array([p[1] for p in pts])
        if transform == "log2_per_size":
            ys = np.log2(ys) / N
        curves.append((N, xs, ys))
    return curves


def collapse_report(curves, nus, shift: str = "none", window=(0.7, 1.3), h0: float = 0.0) -> dict:
    """Dip locations (if ``shift='minimum'``) and collapse quality per ``nu``."""
    lo, hi = window
    cut = []
    mins = []
    for N, xs, ys in curves:
        m = (xs >= lo - 1e-12) & (xs <= hi + 1e-12)
        cut.append((N, xs[m], ys[m]))
        if shift == "minimum":
            mins.append(locate_minimum(xs[m], ys[m]))
    if shift == "minimum":
        h0s = [a for a, _ in mins]
        y0s = [b for _, b in mins]
    else:
        h0s, y0s = h0, None
    quality = {str(nu): scaling_collapse(cut, nu, h0s, y0s) for nu in nus}
    out = {"quality": quality, "sizes": [c[0] for c in curves]}
    if shift == "minimum":
        out["h0"] = h0s
        out["y0"] = y0s
        if len(curves) >= 4:
            f = fit_shifted_power([c[0] for c in curves], h0s)
            out["h_c"] = f["c"]
            out["h_c_err"] = f.error("c")
    return out


# --------------------------------------------------------------------------
# scikit-learn wrappers


def _column(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise InputError("expected a single feature column")
        X = X[:, 0]
    return X.ravel()


class ExpDecayFit(RegressorMixin, BaseEstimator):
    """``y = A 2^{-alpha x}`` as a regressor; ``alpha_`` after :meth:`fit`."""

    def __init__(self, x_range=None):
        self.x_range = x_range

    def fit(self, X, y):
        self.result_ = fit_exp_decay(_column(X), y, self.x_range)
        self.alpha_ = self.result_["alpha"]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        x = _column(X)
        return 2.0 ** (self.result_["log2_A"] - self.alpha_ * x)


class PowerLawFit(RegressorMixin, BaseEstimator):
    """``y = A h^{-alpha}`` as a regressor."""

    def __init__(self, h_range=None):
        self.h_range = h_range

    def fit(self, X, y):
        self.result_ = fit_power_law(_column(X), y, self.h_range)
        self.alpha_ = self.result_["alpha"]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        return np.exp(self.result_["log_A"]) * _column(X) ** (-self.alpha_)


class ShiftedPowerFit(RegressorMixin, BaseEstimator):
    """``y = a N^gamma + c`` as a regressor; ``asymptote_`` is ``c``."""

    def __init__(self, gamma=None):
        self.gamma = gamma

    def fit(self, X, y):
        self.result_ = fit_shifted_power(_column(X), y, self.gamma)
        self.asymptote_ = self.result_["c"]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        p = self.result_.params
        return _shifted(_column(X), p["a"], p["gamma"], p["c"])
