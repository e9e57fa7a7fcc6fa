"""Manufactured solutions, forcing terms and scenario presets.

The manufactured fields are smooth trigonometric profiles on the unit
square with homogeneous Neumann data for the scalars, no-slip solenoidal
velocity, and zero-mean potential and pressure for every t.  Their
forcing terms are hand-derived closed forms; an independent
finite-difference oracle (see :mod:`pnpdg.oracle`) checks them.

Presets bundle the published parameter sets of the verification runs:
two convergence configurations, a decaying-swirl conservation test, and
the charged-reservoir ion-spreading scenario on [0,1] x [0,2].
"""

from dataclasses import asdict, dataclass, field
from math import pi

import numpy as np

from .forms import FormParams
from .mesh import BoundaryTag

TWO_PI = 2.0 * pi


class ManufacturedSolution:
    """Closed-form exact fields with every derivative the forcings need."""

    def _e(self, t):
        return np.exp(-t)

    # potential -------------------------------------------------------
    def phi(self, x, y, t):
        return self._e(t) * (np.cos(pi * x) * np.cos(pi * y)
                             - np.cos(TWO_PI * x) * np.cos(TWO_PI * y) / 4.0) / (2.0 * pi**2)

    def grad_phi(self, x, y, t):
        e = self._e(t)
        gx = e * (-np.sin(pi * x) * np.cos(pi * y) / (2.0 * pi)
                  + np.sin(TWO_PI * x) * np.cos(TWO_PI * y) / (4.0 * pi))
        gy = e * (-np.cos(pi * x) * np.sin(pi * y) / (2.0 * pi)
                  + np.cos(TWO_PI * x) * np.sin(TWO_PI * y) / (4.0 * pi))
        return np.stack([gx, gy], axis=-1)

    def lap_phi(self, x, y, t):
        return self._e(t) * (-np.cos(pi * x) * np.cos(pi * y)
                             + np.cos(TWO_PI * x) * np.cos(TWO_PI * y))

    # concentrations ----------------------------------------------------
    def c1(self, x, y, t):
        return self._e(t) * (np.cos(pi * x) * np.cos(pi * y) + 1.0) / 2.0

    def grad_c1(self, x, y, t):
        e = self._e(t)
        return np.stack([-0.5 * pi * e * np.sin(pi * x) * np.cos(pi * y),
                         -0.5 * pi * e * np.cos(pi * x) * np.sin(pi * y)], axis=-1)

    def lap_c1(self, x, y, t):
        return -pi**2 * self._e(t) * np.cos(pi * x) * np.cos(pi * y)

    def c2(self, x, y, t):
        return self._e(t) * (np.cos(TWO_PI * x) * np.cos(TWO_PI * y) + 1.0) / 2.0

    def grad_c2(self, x, y, t):
        e = self._e(t)
        return np.stack([-pi * e * np.sin(TWO_PI * x) * np.cos(TWO_PI * y),
                         -pi * e * np.cos(TWO_PI * x) * np.sin(TWO_PI * y)], axis=-1)

    def lap_c2(self, x, y, t):
        return -4.0 * pi**2 * self._e(t) * np.cos(TWO_PI * x) * np.cos(TWO_PI * y)

    # velocity and pressure ---------------------------------------------
    def u(self, x, y, t):
        e = self._e(t)
        u1 = e * np.sin(TWO_PI * y) * (1.0 - np.cos(TWO_PI * x))
        u2 = -e * np.sin(TWO_PI * x) * (1.0 - np.cos(TWO_PI * y))
        return np.stack([u1, u2], axis=-1)

    def grad_u(self, x, y, t):
        """Jacobian [component, direction], shape (..., 2, 2)."""
        e = self._e(t)
        u1x = TWO_PI * e * np.sin(TWO_PI * x) * np.sin(TWO_PI * y)
        u1y = TWO_PI * e * np.cos(TWO_PI * y) * (1.0 - np.cos(TWO_PI * x))
        u2x = -TWO_PI * e * np.cos(TWO_PI * x) * (1.0 - np.cos(TWO_PI * y))
        u2y = -TWO_PI * e * np.sin(TWO_PI * x) * np.sin(TWO_PI * y)
        out = np.empty(np.shape(u1x) + (2, 2))
        out[..., 0, 0], out[..., 0, 1] = u1x, u1y
        out[..., 1, 0], out[..., 1, 1] = u2x, u2y
        return out

    def lap_u(self, x, y, t):
        e = self._e(t)
        l1 = 4.0 * pi**2 * e * (np.cos(TWO_PI * x) * np.sin(TWO_PI * y)
                                - np.sin(TWO_PI * y) * (1.0 - np.cos(TWO_PI * x)))
        l2 = 4.0 * pi**2 * e * (np.sin(TWO_PI * x) * (1.0 - np.cos(TWO_PI * y))
                                - np.sin(TWO_PI * x) * np.cos(TWO_PI * y))
        return np.stack([l1, l2], axis=-1)

    def p(self, x, y, t):
        return self._e(t) * (np.cos(TWO_PI * x) + np.sin(TWO_PI * y))

    def grad_p(self, x, y, t):
        e = self._e(t)
        return np.stack([-TWO_PI * e * np.sin(TWO_PI * x),
                         TWO_PI * e * np.cos(TWO_PI * y)], axis=-1)

    def div_u(self, x, y, t):
        g = self.grad_u(x, y, t)
        return g[..., 0, 0] + g[..., 1, 1]


class ManufacturedForcing:
    """Forcing terms that make the exact fields solve the coupled system."""

    def __init__(self, params, exact=None):
        self.params = params
        self.exact = exact or ManufacturedSolution()

    def f_phi(self, x, y, t):
        ex = self.exact
        return (-self.params.mu * ex.lap_phi(x, y, t)
                - (ex.c1(x, y, t) - ex.c2(x, y, t)))

    def _f_c(self, x, y, t, c, grad_c, lap_c, beta, kappa):
        ex = self.exact
        gp = ex.grad_phi(x, y, t)
        gc = grad_c(x, y, t)
        uv = ex.u(x, y, t)
        cv = c(x, y, t)
        drift = np.sum(gc * gp, axis=-1) + cv * ex.lap_phi(x, y, t)
        return (-cv - kappa * lap_c(x, y, t)
                + np.sum(uv * gc, axis=-1) - beta * drift)

    def f_c1(self, x, y, t):
        ex = self.exact
        return self._f_c(x, y, t, ex.c1, ex.grad_c1, ex.lap_c1,
                         self.params.beta1, self.params.kappa1)

    def f_c2(self, x, y, t):
        ex = self.exact
        return self._f_c(x, y, t, ex.c2, ex.grad_c2, ex.lap_c2,
                         self.params.beta2, self.params.kappa2)

    def f_u(self, x, y, t):
        ex = self.exact
        uv = ex.u(x, y, t)
        gu = ex.grad_u(x, y, t)
        conv = np.einsum("...d,...cd->...c", uv, gu)
        charge = (ex.c1(x, y, t) - ex.c2(x, y, t))[..., None]
        return (-uv - self.params.nu * ex.lap_u(x, y, t) + conv
                + ex.grad_p(x, y, t) + charge * ex.grad_phi(x, y, t))


@dataclass(frozen=True)
class ScenarioPreset:
    """Fully populated run configuration for one published scenario."""

    name: str
    lx: float
    ly: float
    nx: int
    ny: int
    degree: int
    sigma_e: float
    params: FormParams
    dt: float
    t_final: float
    bc_mode: str = "homogeneous"           # or "reservoir"
    dirichlet: dict = field(default_factory=dict)   # tag name -> g
    flux: dict = field(default_factory=dict)        # tag name -> sigma_s
    output_cadence: int = 25
    with_sources: bool = False

    def to_dict(self):
        d = asdict(self)
        d["params"] = asdict(self.params)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["params"] = FormParams(**d["params"])
        return cls(**d)


def _gaussian_blob(center, radius, mass):
    cx, cy = center

    def f(x, y):
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return mass / (2.0 * pi * radius**2) * np.exp(-r2 / (2.0 * radius**2))

    return f


RESERVOIR_RADIUS = 0.25
RESERVOIR_MASS = 3.0
RESERVOIR_CENTERS = {"c1": (0.375, 0.5), "c2": (0.625, 1.5)}


def preset(name):
    """Named scenario presets; raises ValueError on unknown names."""
    unit = FormParams(sigma_e=10.0)
    if name == "mms-k1":
        return ScenarioPreset(
            name, 1.0, 1.0, 16, 16, 1, 10.0, FormParams(sigma_e=10.0),
            dt=0.1 / 16**2, t_final=0.1, with_sources=True)
    if name == "mms-k2":
        return ScenarioPreset(
            name, 1.0, 1.0, 8, 8, 2, 40.0, FormParams(sigma_e=40.0),
            dt=0.1 / 8**3, t_final=0.1, with_sources=True)
    if name == "decay":
        return ScenarioPreset(
            name, 1.0, 1.0, 64, 64, 2, 40.0, FormParams(sigma_e=40.0),
            dt=0.001, t_final=0.5)
    if name == "reservoir":
        return ScenarioPreset(
            name, 1.0, 2.0, 64, 128, 2, 40.0,
            FormParams(sigma_e=40.0, mu=0.01, nu=0.08, kappa1=0.5, kappa2=0.5,
                       beta1=0.01, beta2=-0.01),
            dt=0.01, t_final=10.0, bc_mode="reservoir",
            dirichlet={BoundaryTag.TOP.value: 0.0},
            flux={BoundaryTag.BOTTOM.value: 1.0})
    raise ValueError(f"unknown preset {name!r}")


PRESET_NAMES = ("mms-k1", "mms-k2", "decay", "reservoir")


def initial_fields(name):
    """Pointwise initial data callables of a preset.

    Returns dict with keys c1, c2, u, p mapping (x, y) arrays to values.
    """
    if name in ("mms-k1", "mms-k2"):
        ex = ManufacturedSolution()
        return {
            "c1": lambda x, y: ex.c1(x, y, 0.0),
            "c2": lambda x, y: ex.c2(x, y, 0.0),
            "u": lambda x, y: ex.u(x, y, 0.0),
            "p": lambda x, y: ex.p(x, y, 0.0),
        }
    if name == "decay":
        return {
            "c1": lambda x, y: np.cos(TWO_PI * x) + 1.0,
            "c2": lambda x, y: np.cos(TWO_PI * y) + 1.0,
            "u": lambda x, y: np.stack(
                [10.0 * np.sin(TWO_PI * x) * np.cos(TWO_PI * y),
                 -10.0 * np.sin(TWO_PI * y) * np.cos(TWO_PI * x)], axis=-1),
            "p": lambda x, y: np.zeros_like(x),
        }
    if name == "reservoir":
        g1 = _gaussian_blob(RESERVOIR_CENTERS["c1"], RESERVOIR_RADIUS, RESERVOIR_MASS)
        g2 = _gaussian_blob(RESERVOIR_CENTERS["c2"], RESERVOIR_RADIUS, RESERVOIR_MASS)
        return {
            "c1": g1,
            "c2": g2,
            "u": lambda x, y: np.zeros(np.shape(x) + (2,)),
            "p": lambda x, y: np.zeros_like(x),
        }
    raise ValueError(f"unknown preset {name!r}")
