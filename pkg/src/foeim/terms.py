"""Pointwise nonlinear terms of the model problems and their derivatives.

Each term evaluates g(u, mu) and its analytic partial derivatives with
respect to u and to each parameter component.  The diffusion fluxes also
depend on one component of the field gradient; their ``needs_gradient``
flag is set and the gradient-slot derivative (the conductivity itself) is
exposed for the online Newton chain rule.
"""

from __future__ import annotations

import numpy as np

__all__ = ["NonlinearTerm", "EllipticTerm", "GaussianTerm", "DiffusionFluxTerm",
           "get_term", "nonlinear_eval"]


class NonlinearTerm:
    """Base interface: value, d/du, d/dmu at arbitrary point sets."""

    id: str
    needs_gradient = False

    def value(self, u, mu, gx=None, gy=None):
        raise NotImplementedError

    def du(self, u, mu, gx=None, gy=None):
        raise NotImplementedError

    def dmu(self, u, mu, gx=None, gy=None):
        """Tuple of derivatives w.r.t. (mu1, mu2), each shaped like u."""
        raise NotImplementedError


class EllipticTerm(NonlinearTerm):
    """g(u, mu) = exp(sin(mu2 u)); the reaction term of the elliptic problem."""

    id = "elliptic-g"

    def value(self, u, mu, gx=None, gy=None):
        return np.exp(np.sin(mu[1] * u))

    def du(self, u, mu, gx=None, gy=None):
        return mu[1] * np.cos(mu[1] * u) * self.value(u, mu)

    def dmu(self, u, mu, gx=None, gy=None):
        d2 = u * np.cos(mu[1] * u) * self.value(u, mu)
        return np.zeros_like(np.asarray(u, dtype=float)), d2


class GaussianTerm(NonlinearTerm):
    """g(u, mu) = exp(-0.01 u^2); parameter enters only through u."""

    id = "gaussian-g"

    def value(self, u, mu, gx=None, gy=None):
        return np.exp(-0.01 * np.square(u))

    def du(self, u, mu, gx=None, gy=None):
        return -0.02 * u * self.value(u, mu)

    def dmu(self, u, mu, gx=None, gy=None):
        z = np.zeros_like(np.asarray(u, dtype=float))
        return z, z.copy()


class DiffusionFluxTerm(NonlinearTerm):
    """Flux component kappa(u, mu) du/dx_c with kappa = exp(-(u - mu2)^2)."""

    needs_gradient = True

    def __init__(self, component: int):
        if component not in (0, 1):
            raise ValueError("component must be 0 (x1) or 1 (x2)")
        self.component = component
        self.id = "diffusion-g" if component == 0 else "diffusion-h"

    @staticmethod
    def kappa(u, mu):
        return np.exp(-np.square(u - mu[1]))

    @staticmethod
    def kappa_du(u, mu):
        return -2.0 * (u - mu[1]) * np.exp(-np.square(u - mu[1]))

    @staticmethod
    def kappa_dmu2(u, mu):
        return 2.0 * (u - mu[1]) * np.exp(-np.square(u - mu[1]))

    def _grad(self, gx, gy):
        if gx is None or gy is None:
            raise ValueError(f"{self.id} requires field gradients")
        return gx if self.component == 0 else gy

    def value(self, u, mu, gx=None, gy=None):
        return self.kappa(u, mu) * self._grad(gx, gy)

    def du(self, u, mu, gx=None, gy=None):
        return self.kappa_du(u, mu) * self._grad(gx, gy)

    def dgrad(self, u, mu):
        """Derivative w.r.t. the consumed gradient component (= kappa)."""
        return self.kappa(u, mu)

    def dmu(self, u, mu, gx=None, gy=None):
        g = self._grad(gx, gy)
        return np.zeros_like(g), self.kappa_dmu2(u, mu) * g


_TERMS = {
    "elliptic-g": EllipticTerm,
    "gaussian-g": GaussianTerm,
    "diffusion-g": lambda: DiffusionFluxTerm(0),
    "diffusion-h": lambda: DiffusionFluxTerm(1),
}


def get_term(term_id: str) -> NonlinearTerm:
    try:
        return _TERMS[term_id]()
    except KeyError:
        raise ValueError(f"unknown nonlinear term {term_id!r}") from None


def nonlinear_eval(term: NonlinearTerm, u, mu, gx=None, gy=None):
    """Evaluate (g, dg/du, dg/dmu) pointwise at the supplied values."""
    if term.needs_gradient and (gx is None or gy is None):
        raise ValueError(f"{term.id} requires gradients")
    return term.value(u, mu, gx, gy), term.du(u, mu, gx, gy), term.dmu(u, mu, gx, gy)
