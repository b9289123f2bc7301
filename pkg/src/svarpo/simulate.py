"""Synthetic SVAR(2) benchmark settings and trajectory simulation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import (NoiseSpec, SVARModel, TimeSeriesSample, as_lag_stack,
                    companion_matrix, spectral_radius, topological_order)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SettingSpec:
    p: int
    s_A: float
    A_bounds: tuple
    s_B1: float
    s_B2: float
    B_bounds: tuple
    noise: str = "gaussian"
    sigma_range: tuple | None = (0.8, 2.0)
    df: float | None = None
    target_rho_B: float = 0.5
    max_redraws: int = 100
    permute: bool = True

    def __post_init__(self):
        for lo, hi in (self.A_bounds, self.B_bounds):
            if not 0 < lo < hi:
                raise ValueError("signal bounds need 0 < lower < upper")
        for s in (self.s_A, self.s_B1, self.s_B2):
            if not 0 <= s < 1:
                raise ValueError("densities must lie in [0, 1)")
        if self.p < 1:
            raise ValueError("p must be positive")

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return SettingSpec(**d)

    def to_dict(self):
        return asdict(self)


_SPARSE = dict(s_A=0.05, A_bounds=(0.25, 0.9))
_DENSE = dict(s_A=0.10, A_bounds=(0.25, 0.7))
_LAGS = dict(s_B1=0.05, s_B2=0.02, B_bounds=(1.0, 3.0))
_GAUSS = dict(noise="gaussian", sigma_range=(0.8, 2.0))
_LAPLACE = dict(noise="laplace", sigma_range=None)
_T4 = dict(noise="student_t", sigma_range=None, df=4.0)

SETTINGS = {
    "S1": SettingSpec(p=100, **_SPARSE, **_LAGS, **_GAUSS),
    "S2": SettingSpec(p=100, **_DENSE, **_LAGS, **_GAUSS),
    "S3": SettingSpec(p=100, **_SPARSE, **_LAGS, **_LAPLACE),
    "S4": SettingSpec(p=100, **_DENSE, **_LAGS, **_LAPLACE),
    "S5": SettingSpec(p=100, **_SPARSE, **_LAGS, **_T4),
    "S6": SettingSpec(p=100, **_DENSE, **_LAGS, **_T4),
}


def builtin_setting(setting_id):
    try:
        return SETTINGS[setting_id.upper()]
    except KeyError:
        raise ValueError(f"unknown setting {setting_id!r}; choose from {sorted(SETTINGS)}") from None


def _signed_uniform(rng, mask, lo, hi):
    vals = rng.uniform(lo, hi, mask.shape) * rng.choice([-1.0, 1.0], mask.shape)
    return np.where(mask, vals, 0.0)


def _lag_radius(blocks, c):
    p = blocks[0].shape[0]
    return spectral_radius(companion_matrix(np.zeros((p, p)), [c * b for b in blocks]))


def scale_lags(blocks, target, tol=1e-6):
    """Common scalar ``c`` making the lag-only companion radius equal ``target``.

    Bisection on ``c``; the radius is continuous in ``c`` and zero at ``c = 0``.
    """
    if _lag_radius(blocks, 1.0) == 0.0:
        return 1.0
    hi = 1.0
    while _lag_radius(blocks, hi) < target:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        r = _lag_radius(blocks, mid)
        if abs(r - target) <= tol:
            return mid
        if r < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def draw_structural(rng, p, density, bounds, permute=True):
    """Strictly lower-triangular random DAG, optionally relabelled by a random permutation."""
    mask = np.tril(rng.random((p, p)) < density, k=-1)
    A = _signed_uniform(rng, mask, *bounds)
    if permute:
        perm = rng.permutation(p)
        A = A[np.ix_(perm, perm)]
    return A


def generate_parameters(spec, rng_seed):
    """Draw ``(model, noise, info)`` for a setting, redrawing until the process is stable."""
    rng = np.random.default_rng(rng_seed)
    p = spec.p
    for attempt in range(1, spec.max_redraws + 1):
        B1 = _signed_uniform(rng, rng.random((p, p)) < spec.s_B1, *spec.B_bounds)
        B2 = _signed_uniform(rng, rng.random((p, p)) < spec.s_B2, *spec.B_bounds)
        c = scale_lags([B1, B2], spec.target_rho_B)
        B1, B2 = c * B1, c * B2
        A = draw_structural(rng, p, spec.s_A, spec.A_bounds, spec.permute)
        rho = spectral_radius(companion_matrix(A, [B1, B2]))
        if rho < 1.0:
            break
    else:
        raise GenerationError(
            f"no stable draw in {spec.max_redraws} attempts; reduce the signal bounds")
    if spec.noise == "gaussian":
        raw = np.sort(rng.uniform(*spec.sigma_range, p))
        sigmas = np.empty(p)
        sigmas[topological_order(A)] = raw
    else:
        sigmas = np.ones(p)
    noise = NoiseSpec(spec.noise, sigmas, df=spec.df)
    model = SVARModel(A, [B1, B2])
    off = p * (p - 1)
    info = {
        "rho": rho,
        "rho_lags": _lag_radius([B1, B2], 1.0),
        "attempts": attempt,
        "density_A": float(np.count_nonzero(A)) / off if off else 0.0,
        "density_B1": float(np.count_nonzero(B1)) / p ** 2,
        "density_B2": float(np.count_nonzero(B2)) / p ** 2,
    }
    return model, noise, info


def simulate(A, B, noise, n, burn_in=500, rng_seed=None):
    """Run ``x_t = (I - A)^{-1} (sum_j B_j x_{t-j} + eps_t)`` from a zero start."""
    model = A if isinstance(A, SVARModel) else SVARModel(A, as_lag_stack(B))
    if spectral_radius(model.companion()) >= 1.0:
        raise ValueError("unstable parameters: companion spectral radius >= 1")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(rng_seed)
    p, d = model.p, model.d
    Phi = model.reduced_form()
    inv = np.linalg.inv(np.eye(p) - model.A)
    total = burn_in + n
    eps = noise.sample(rng, total) if noise is not None else np.zeros((total, p))
    u = eps @ inv.T
    X = np.zeros((total + d, p))
    for t in range(d, total + d):
        x = u[t - d].copy()
        for k in range(d):
            x += Phi[k] @ X[t - 1 - k]
        X[t] = x
    return TimeSeriesSample(X[d + burn_in:])
