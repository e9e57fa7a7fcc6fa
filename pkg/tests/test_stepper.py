"""Sub-step contracts and the composition of one full time step."""

import numpy as np
import pytest

from pnpdg import forms
from pnpdg.forms import FormParams
from pnpdg.linalg import SolverFailure, SolverOptions
from pnpdg.mesh import build_rect_mesh
from pnpdg.mms import ManufacturedForcing, initial_fields
from pnpdg.space import FieldVector, integrate_field, project_field
from pnpdg.stepper import (Discretization, SchemeConfig, Stepper, SystemState,
                           initial_state, shift_field, stokes_projection)


def small_setup(n=8, k=1, sigma=10.0, dt=1e-3, sources=None, **kw):
    mesh = build_rect_mesh(1.0, 1.0, n, n)
    disc = Discretization(mesh, k, sigma)
    params = FormParams(sigma_e=sigma)
    cfg = SchemeConfig(dt=dt, t_final=10 * dt, params=params, sources=sources,
                       **kw)
    return disc, cfg, Stepper(disc, cfg)


def zero_init():
    zs = lambda x, y: np.zeros_like(x)
    zv = lambda x, y: np.zeros(np.shape(x) + (2,))
    return {"c1": zs, "c2": zs, "u": zv, "p": zs}


class TestPotentialStep:
    def test_equal_charges_zero_potential(self):
        disc, cfg, st = small_setup()
        init = zero_init()
        f = lambda x, y: np.cos(2 * np.pi * x) + 1.0
        init["c1"] = f
        init["c2"] = f
        state = initial_state(disc, cfg, init, stepper=st)
        phi = st.step_potential(state)
        assert np.abs(phi.coef).max() < 1e-11

    def test_doubling_mu_halves_potential(self):
        init = zero_init()
        init["c1"] = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y) + 1.0
        disc, cfg, st = small_setup()
        state = initial_state(disc, cfg, init, stepper=st)
        phi1 = st.step_potential(state)

        mesh = disc.mesh
        params2 = FormParams(sigma_e=10.0, mu=2.0)
        cfg2 = SchemeConfig(dt=cfg.dt, t_final=cfg.t_final, params=params2)
        st2 = Stepper(disc, cfg2)
        state2 = initial_state(disc, cfg2, init, stepper=st2)
        phi2 = st2.step_potential(state2)
        np.testing.assert_allclose(phi2.coef, 0.5 * phi1.coef, atol=1e-11)

    def test_zero_mean(self):
        init = zero_init()
        init["c1"] = lambda x, y: np.cos(np.pi * y) + 1.0
        disc, cfg, st = small_setup()
        state = initial_state(disc, cfg, init, stepper=st)
        phi = st.step_potential(state)
        assert abs(integrate_field(phi)) < 1e-12


class TestConcentrationStep:
    def test_rest_state_preserved(self):
        disc, cfg, st = small_setup()
        state = initial_state(disc, cfg, zero_init(), stepper=st)
        phi = st.step_potential(state)
        c1, c2 = st.step_concentrations(state, phi)
        assert np.abs(c1.coef).max() < 1e-12
        assert np.abs(c2.coef).max() < 1e-12

    def test_mass_conserved_each_step(self):
        disc, cfg, st = small_setup(n=8, k=2, sigma=40.0)
        state = initial_state(disc, cfg, initial_fields("decay"), stepper=st)
        area = disc.area
        for _ in range(5):
            state = st.advance(state)
            assert abs(integrate_field(state.c1t)) <= 1e-11 * state.m0 * area
            assert abs(integrate_field(state.c2t)) <= 1e-11 * state.m0 * area


class TestVelocitySteps:
    def test_zero_state_fixed_point(self):
        disc, cfg, st = small_setup()
        state = initial_state(disc, cfg, zero_init(), stepper=st)
        new = st.advance(state)
        for field in ("phi", "c1t", "c2t", "u_hat", "u", "p"):
            assert np.abs(getattr(new, field).coef).max() < 1e-12

    def test_single_step_dissipativity(self):
        """No forcing, no charge: the intermediate velocity cannot gain
        kinetic energy over one implicit step."""
        disc, cfg, st = small_setup(n=8, k=1)
        init = zero_init()
        init["u"] = initial_fields("decay")["u"]
        state = initial_state(disc, cfg, init, stepper=st)
        phi = st.step_potential(state)
        u_hat = st.step_intermediate_velocity(state, phi)
        m = disc.mass_velocity
        assert u_hat.coef @ (m * u_hat.coef) <= state.u.coef @ (m * state.u.coef)

    def test_pressure_unchanged_for_divfree_intermediate(self):
        """A discretely divergence-free intermediate velocity produces a
        zero pressure increment."""
        disc, cfg, st = small_setup(n=4, k=2, sigma=40.0)
        load = lambda x, y: np.column_stack([np.sin(np.pi * y), x * 0.0])
        u_df, _ = stokes_projection(disc, 1.0, load)
        assert np.abs(disc.d @ u_df.coef).max() < 1e-9
        p_old = project_field(disc.pressure, lambda x, y: x - 0.5)
        p_new = st.step_pressure(u_df, p_old)
        np.testing.assert_allclose(p_new.coef, p_old.coef, atol=1e-8)

    def test_velocity_correction_identity_when_pressure_static(self):
        disc, cfg, st = small_setup(n=4)
        rng = np.random.default_rng(8)
        u_hat = FieldVector(disc.velocity, rng.standard_normal(disc.velocity.ndof))
        p = FieldVector(disc.pressure, rng.standard_normal(disc.pressure.ndof))
        u_new = st.step_velocity_correction(u_hat, p, p)
        np.testing.assert_array_equal(u_new.coef, u_hat.coef)

    def test_pressure_increment_scales_with_inverse_dt(self):
        disc, cfg1, st1 = small_setup(n=4, dt=1e-3)
        _, cfg2, st2 = small_setup(n=4, dt=5e-4)
        st2.disc = disc
        rng = np.random.default_rng(4)
        u_hat = FieldVector(disc.velocity, rng.standard_normal(disc.velocity.ndof))
        p0 = disc.pressure.new_field()
        dp1 = st1.step_pressure(u_hat, p0).coef
        dp2 = Stepper(disc, cfg2).step_pressure(u_hat, p0).coef
        np.testing.assert_allclose(dp2, 2.0 * dp1, rtol=1e-9)

    def test_projection_reduces_divergence(self):
        disc, cfg, st = small_setup(n=8, k=2, sigma=40.0)
        init = zero_init()
        init["u"] = initial_fields("decay")["u"]
        state = initial_state(disc, cfg, init, stepper=st)
        phi = st.step_potential(state)
        u_hat = st.step_intermediate_velocity(state, phi)
        p_new = st.step_pressure(u_hat, state.p)
        u_new = st.step_velocity_correction(u_hat, p_new, state.p)
        div_hat = np.linalg.norm(disc.d @ u_hat.coef)
        div_new = np.linalg.norm(disc.d @ u_new.coef)
        assert div_new < div_hat


class TestAdvance:
    def test_wiring_of_time_levels(self):
        """Each assembled operator must consume the documented time level:
        the advecting velocity, drift coefficient, force charge and
        pressure are lagged; the drift and force potentials are fresh."""
        params = FormParams(sigma_e=10.0)
        sources = ManufacturedForcing(params)
        disc, cfg, st = small_setup(n=4, sources=sources)
        state = initial_state(disc, cfg, initial_fields("mms-k1"), stepper=st)
        log = []
        new = st.advance(state, log=log)
        entries = {(a, b): c for a, b, c in log}
        assert entries[("potential", "charge_c1")] == id(state.c1t)
        assert entries[("potential", "charge_c2")] == id(state.c2t)
        assert entries[("concentration", "advector")] == id(state.u)
        assert entries[("concentration", "drift_coeff_c1")] == id(state.c1t)
        assert entries[("concentration", "drift_coeff_c2")] == id(state.c2t)
        assert entries[("momentum", "advector")] == id(state.u)
        assert entries[("momentum", "pressure")] == id(state.p)
        assert entries[("momentum", "force_charge_c1")] == id(state.c1t)
        assert entries[("momentum", "force_charge_c2")] == id(state.c2t)
        # fresh potential: same object passed to drift and force terms,
        # and it is the potential stored on the new state
        assert entries[("concentration", "drift_potential_c1")] == id(new.phi)
        assert entries[("momentum", "force_potential")] == id(new.phi)
        assert entries[("pressure", "intermediate_velocity")] == id(new.u_hat)

    def test_atomic_failure_leaves_state_intact(self):
        """A failing sub-step aborts the whole step; the caller's state is
        untouched (late failure injected into the pressure solve)."""
        disc, cfg, st = small_setup(n=4)
        init = zero_init()
        init["c1"] = lambda x, y: np.cos(np.pi * x) + 1.0
        init["u"] = initial_fields("decay")["u"]
        state = initial_state(disc, cfg, init, stepper=st)
        snapshot = {f: getattr(state, f).coef.copy()
                    for f in ("phi", "c1t", "c2t", "u", "p")}

        def broken(rhs):
            raise SolverFailure("injected failure")

        st.pressure_solver.solve = broken
        with pytest.raises(SolverFailure):
            st.advance(state)
        for f, before in snapshot.items():
            np.testing.assert_array_equal(getattr(state, f).coef, before)

    def test_shift_field_round_trip(self):
        disc, cfg, st = small_setup(n=4)
        c = project_field(disc.scalar, lambda x, y: x + 0.3)
        back = shift_field(shift_field(c, -0.7), 0.7)
        np.testing.assert_allclose(back.coef, c.coef, atol=1e-14)

    def test_config_validation(self):
        params = FormParams(sigma_e=10.0)
        with pytest.raises(Exception):
            SchemeConfig(dt=-1.0, t_final=1.0, params=params)
        with pytest.raises(Exception):
            SchemeConfig(dt=0.1, t_final=0.01, params=params)
        with pytest.raises(Exception):
            SchemeConfig(dt=0.1, t_final=1.0, params=params, bc_mode="weird")
