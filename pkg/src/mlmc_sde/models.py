"""SDE test models with closed-form flows for splitting schemes.

Each model exposes the Ito drift, the diffusion columns sigma^j, their
pairwise Jacobian products (d sigma^j) sigma^m, the Stratonovich-corrected
drift sigma^0 and exact flows of the drift / diffusion vector fields.
States are arrays of shape (..., n), so a batch of Monte Carlo samples is
just a leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NegativeSqrtArgument(ValueError):
    """A square root was requested on a negative variance state.

    Raised by the Heston flows, where a negative variance signals a
    corrupted state (unreachable while xi >= 0).
    """


@dataclass(frozen=True)
class Payoff:
    """Terminal payoff f(X_T), selected by label.

    ``heston-call`` is the at-the-money call on S = exp(u) with strike 1,
    discounted at `rate` over `maturity`.  The other labels act on the
    first state coordinate only.
    """

    label: str
    rate: float = 0.0
    maturity: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(x)[..., 0]
        if self.label == "cos-u":
            return np.cos(u)
        if self.label == "u-squared":
            return u * u
        if self.label == "u-plus":
            return np.maximum(u, 0.0)
        if self.label == "heston-call":
            disc = np.exp(-self.rate * self.maturity)
            return disc * np.maximum(np.exp(u) - 1.0, 0.0)
        raise ValueError(f"unknown payoff label {self.label!r}")


PAYOFF_LABELS = ("cos-u", "u-squared", "u-plus", "heston-call")


class SdeModel:
    """Common interface: coefficients, Jacobian products and exact flows.

    Concrete models define every method with closed forms; there is no
    numerical ODE fallback, because an approximate flow silently changes
    the weak order of the splitting scheme built on top of it.
    """

    n: int
    d: int

    def initial_state(self, m: int) -> np.ndarray:
        raise NotImplementedError

    def drift(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diffusion(self, j: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_product(self, j: int, m: int, x: np.ndarray) -> np.ndarray:
        """(d sigma^j) sigma^m at x, the directional derivative of sigma^j along sigma^m."""
        raise NotImplementedError

    def stratonovich_drift(self, x: np.ndarray) -> np.ndarray:
        """sigma^0 = b - 1/2 sum_j (d sigma^j) sigma^j."""
        raise NotImplementedError

    def drift_flow(self, x: np.ndarray, t: float) -> np.ndarray:
        """Exact solution of dx/dt = sigma^0(x) after time t."""
        raise NotImplementedError

    def diffusion_flow(self, j: int, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Exact solution of dx/dw = sigma^j(x) after (per-sample) time w."""
        raise NotImplementedError


@dataclass(frozen=True)
class ClarkCameronModel(SdeModel):
    """dU = S dW^1, dS = mu dt + dW^2."""

    mu: float = 1.0
    u0: float = 0.0
    s0: float = 0.0

    n = 2
    d = 2

    def initial_state(self, m):
        return np.tile(np.array([self.u0, self.s0], dtype=float), (m, 1))

    def drift(self, x):
        u = x[..., 0]
        return np.stack([np.zeros_like(u), np.full_like(u, self.mu)], axis=-1)

    def diffusion(self, j, x):
        u, s = x[..., 0], x[..., 1]
        if j == 1:
            return np.stack([s, np.zeros_like(s)], axis=-1)
        if j == 2:
            return np.stack([np.zeros_like(u), np.ones_like(u)], axis=-1)
        raise ValueError(f"diffusion index {j} out of range")

    def jacobian_product(self, j, m, x):
        u = x[..., 0]
        if (j, m) == (1, 2):
            return np.stack([np.ones_like(u), np.zeros_like(u)], axis=-1)
        return np.zeros_like(x)

    def stratonovich_drift(self, x):
        # sigma^1, sigma^2 have vanishing self-corrections here
        return self.drift(x)

    def drift_flow(self, x, t):
        u, s = x[..., 0], x[..., 1]
        return np.stack([u, s + self.mu * t], axis=-1)

    def diffusion_flow(self, j, x, w):
        u, s = x[..., 0], x[..., 1]
        if j == 1:
            return np.stack([u + s * w, s], axis=-1)
        if j == 2:
            return np.stack([u, s + w], axis=-1)
        raise ValueError(f"diffusion index {j} out of range")


@dataclass(frozen=True)
class HestonModel(SdeModel):
    """dU = (r - V/2) dt + sqrt(V) dW^1, dV = kappa (theta - V) dt + sigma sqrt(V) dW^2.

    The state is (log-price, variance).  Construction requires the
    non-attainability condition 2 kappa theta >= sigma^2 and
    xi = theta - sigma^2 / (4 kappa) >= 0, which keeps the variance of the
    splitting scheme positive.  ``negative_variance`` controls how the
    explicit Milstein-type scheme treats a negative variance coordinate:
    "error" propagates NaN so the sample is counted as aborted, "reflect"
    substitutes sqrt(max(v, 0)).
    """

    rate: float = 0.05
    kappa: float = 0.5
    theta: float = 0.9
    sigma: float = 0.05
    u0: float = 0.0
    v0: float = 1.0
    negative_variance: str = "error"

    n = 2
    d = 2

    def __post_init__(self):
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if 2.0 * self.kappa * self.theta < self.sigma**2:
            raise ValueError("need 2 kappa theta >= sigma^2 (zero boundary attainable)")
        if self.xi < 0.0:
            raise ValueError("need xi = theta - sigma^2/(4 kappa) >= 0")
        if self.v0 <= 0.0:
            raise ValueError("v0 must be positive")
        if self.negative_variance not in ("error", "reflect"):
            raise ValueError("negative_variance must be 'error' or 'reflect'")

    @property
    def xi(self) -> float:
        return self.theta - self.sigma**2 / (4.0 * self.kappa)

    def initial_state(self, m):
        return np.tile(np.array([self.u0, self.v0], dtype=float), (m, 1))

    def _vol(self, v):
        # scheme-coefficient square root under the negative-variance policy
        if self.negative_variance == "reflect":
            return np.sqrt(np.maximum(v, 0.0))
        with np.errstate(invalid="ignore"):
            return np.sqrt(v)

    def _flow_sqrt(self, v):
        if np.any(v < 0.0):
            raise NegativeSqrtArgument("negative variance reached a flow square root")
        return np.sqrt(v)

    def drift(self, x):
        u, v = x[..., 0], x[..., 1]
        return np.stack([self.rate - 0.5 * v, self.kappa * (self.theta - v)], axis=-1)

    def diffusion(self, j, x):
        v = x[..., 1]
        vol = self._vol(v)
        if j == 1:
            return np.stack([vol, np.zeros_like(vol)], axis=-1)
        if j == 2:
            return np.stack([np.zeros_like(vol), self.sigma * vol], axis=-1)
        raise ValueError(f"diffusion index {j} out of range")

    def jacobian_product(self, j, m, x):
        v = x[..., 1]
        zero = np.zeros_like(v)
        if (j, m) == (1, 2):
            return np.stack([np.full_like(v, 0.5 * self.sigma), zero], axis=-1)
        if (j, m) == (2, 2):
            return np.stack([zero, np.full_like(v, 0.5 * self.sigma**2)], axis=-1)
        return np.zeros_like(x)

    def stratonovich_drift(self, x):
        u, v = x[..., 0], x[..., 1]
        return np.stack(
            [self.rate - 0.5 * v, self.kappa * (self.theta - v) - 0.25 * self.sigma**2],
            axis=-1,
        )

    def drift_flow(self, x, t):
        u, v = x[..., 0], x[..., 1]
        decay = np.exp(-self.kappa * t)
        xi = self.xi
        # v*decay + xi*(1-decay) passes v through exactly at t = 0
        v_new = v * decay + xi * (1.0 - decay)
        u_new = u + (self.rate - 0.5 * xi) * t + (v - xi) * (decay - 1.0) / (2.0 * self.kappa)
        return np.stack([u_new, v_new], axis=-1)

    def diffusion_flow(self, j, x, w):
        u, v = x[..., 0], x[..., 1]
        if j == 1:
            return np.stack([u + self._flow_sqrt(v) * w, v], axis=-1)
        if j == 2:
            # the squared form keeps the variance nonnegative bit for bit;
            # zero increments pass v through exactly
            root = self._flow_sqrt(v) + 0.5 * self.sigma * w
            return np.stack([u, np.where(w == 0.0, v, root * root)], axis=-1)
        raise ValueError(f"diffusion index {j} out of range")


def build_model(name: str, **kwargs) -> SdeModel:
    """Construct a model by CLI name."""
    if name == "clark-cameron":
        return ClarkCameronModel(
            mu=kwargs.get("mu", 1.0),
            u0=kwargs.get("u0", 0.0),
            s0=kwargs.get("s0", 0.0),
        )
    if name == "heston":
        return HestonModel(
            rate=kwargs.get("rate", 0.05),
            kappa=kwargs.get("kappa", 0.5),
            theta=kwargs.get("theta", 0.9),
            sigma=kwargs.get("sigma", 0.05),
            u0=kwargs.get("u0", 0.0),
            v0=kwargs.get("v0", 1.0),
            negative_variance=kwargs.get("negative_variance", "error"),
        )
    raise ValueError(f"unknown model {name!r}")
