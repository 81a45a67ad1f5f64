"""Space-time test functions with closed-form derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .lattice import Grid
from .lattice import check_region
from .lattice import periodic_offsets
from .norms import CUTOFF


def _f(u: np.ndarray) -> np.ndarray:
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, np.exp(-1.0 / safe), 0.0)


def _df(u: np.ndarray) -> np.ndarray:
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, np.exp(-1.0 / safe) / safe**2, 0.0)


def smooth_step(u) -> tuple[np.ndarray, np.ndarray]:
    """Return (Theta(u), Theta'(u)); Theta is C^inf, 0 for u <= 0 and 1 for u >= 1."""
    u = np.asarray(u, dtype=float)
    a, b = _f(u), _f(1.0 - u)
    da, db = _df(u), -_df(1.0 - u)
    total = a + b
    return a / total, (da * total - a * (da + db)) / total**2


def bump_derivatives(
    grid: Grid, center, radius: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (psi, grad psi, lap psi) for psi = exp(1 - 1/(1 - s^2)), s = |x - c| / radius."""
    offsets = periodic_offsets(grid, center)
    r = np.sqrt(sum(d**2 for d in offsets))
    s = r / radius
    inside = s < 1.0
    u = np.where(inside, 1.0 - s**2, 1.0)
    psi = np.where(inside, np.exp(1.0 - 1.0 / u), 0.0)
    # psi'(s) / s and psi''(s) in the scaled variable.
    d1_over_s = psi * (-2.0 / u**2)
    d2 = psi * ((2.0 * s / u**2) ** 2 - 2.0 / u**2 - 8.0 * s**2 / u**3)
    gradient = np.stack(
        [np.broadcast_to(d1_over_s * d / radius**2, grid.shape) for d in offsets]
    )
    laplacian = (d2 + 2.0 * d1_over_s) / radius**2
    return np.broadcast_to(psi, grid.shape), gradient, np.broadcast_to(laplacian, grid.shape)


@dataclass(frozen=True)
class TestFunction:
    """phi(x, t) = theta(t) * spatial(x), nonnegative and compactly supported.

    ``kind="bump"`` uses the C^inf bump of radius ``radius`` around ``center``;
    ``kind="localized"`` uses Phi(x - center)^2 chi_R(x)^2. The time factor rises
    over [a, a + sigma]; unless ``rise_only`` it also falls over [b - sigma, b].
    """

    __test__ = False

    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 2.0
    kind: str = "bump"
    R: float | None = None
    a: float = 0.0
    b: float = 1.0
    sigma: float = 0.5
    rise_only: bool = False
    name: str = "tf"

    def __post_init__(self) -> None:
        """Validate the parameters."""
        if self.kind not in ("bump", "localized"):
            raise ValidationError(f"unknown test function kind {self.kind!r}")
        if self.kind == "localized" and (self.R is None or self.R <= 0):
            raise ValidationError("localized test functions need R > 0")
        if self.sigma <= 0 or (not self.rise_only and self.b - self.a < 2 * self.sigma - 1e-12):
            raise ValidationError("time window too short for its ramps")

    @property
    def support_radius(self) -> float:
        """Return the radius of the spatial support around center."""
        return self.radius if self.kind == "bump" else CUTOFF.outer

    def space(self, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (value, gradient, laplacian) of the spatial factor."""
        check_region(grid, self.center, self.support_radius)
        if self.kind == "bump":
            return bump_derivatives(grid, self.center, self.radius)
        phi, grad_phi, lap_phi = CUTOFF.derivatives(grid, self.center)
        Phi_R, grad_Phi_R, lap_Phi_R = CUTOFF.derivatives(grid, scale=self.R)
        chi, grad_chi, lap_chi = 1.0 - Phi_R, -grad_Phi_R, -lap_Phi_R
        a = phi * chi
        grad_a = chi * grad_phi + phi * grad_chi
        lap_a = chi * lap_phi + phi * lap_chi + 2.0 * np.sum(grad_phi * grad_chi, axis=0)
        value = a**2
        gradient = 2.0 * a * grad_a
        laplacian = 2.0 * a * lap_a + 2.0 * np.sum(grad_a**2, axis=0)
        return value, gradient, laplacian

    def time(self, times) -> tuple[np.ndarray, np.ndarray]:
        """Return (theta, theta') at the given times."""
        times = np.asarray(times, dtype=float)
        rise, d_rise = smooth_step((times - self.a) / self.sigma)
        if self.rise_only:
            return rise, d_rise / self.sigma
        fall, d_fall = smooth_step((self.b - times) / self.sigma)
        return rise * fall, (d_rise * fall - rise * d_fall) / self.sigma


def window_test_functions(
    t_start: float,
    t_end: float,
    centers=((0.0, 0.0, 0.0),),
    radius: float = 2.0,
) -> list[TestFunction]:
    """Return bump test functions whose time factor peaks mid-window."""
    sigma = 0.5 * (t_end - t_start)
    return [
        TestFunction(
            center=tuple(float(c) for c in center),
            radius=radius,
            a=t_start,
            b=t_end,
            sigma=sigma,
            name=f"bump{n}",
        )
        for n, center in enumerate(centers)
    ]
