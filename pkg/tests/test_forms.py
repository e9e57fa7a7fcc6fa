"""Assembled operators against the dense oracle plus structural laws."""

import numpy as np
import pytest
import scipy.linalg as sla

from pnpdg import forms, oracle
from pnpdg.forms import FormParams, FormsError
from pnpdg.mesh import BoundaryTag, build_rect_mesh
from pnpdg.space import BrokenSpace, FieldVector, project_field


@pytest.fixture(scope="module")
def two_tri():
    return build_rect_mesh(1.0, 1.0, 1, 1)


def spaces(mesh, k):
    return (BrokenSpace(mesh, k), BrokenSpace(mesh, k, ncomp=2),
            BrokenSpace(mesh, k - 1))


def entrywise_close(got, want, tol=1e-12):
    scale = max(1.0, np.abs(want).max())
    return np.abs(got - want).max() / scale <= tol


class TestOracleEquivalence:
    """Entrywise agreement with the independent dense-quadrature forms."""

    @pytest.mark.parametrize("k,sigma", [(1, 10.0), (2, 40.0)])
    def test_diffusion_forms(self, two_tri, k, sigma):
        X, V, _ = spaces(two_tri, k)
        assert entrywise_close(forms.assemble_a1(two_tri, X, sigma).mat.toarray(),
                               oracle.oracle_a1(two_tri, X, sigma))
        assert entrywise_close(forms.assemble_a2(two_tri, V, sigma).mat.toarray(),
                               oracle.oracle_a2(two_tri, V, sigma))

    @pytest.mark.parametrize("k", [1, 2])
    def test_coupling_form(self, two_tri, k):
        _, V, M = spaces(two_tri, k)
        got = forms.assemble_d(two_tri, V, M).mat.toarray()
        assert entrywise_close(got, oracle.oracle_d(two_tri, V, M))
        assert entrywise_close(got, oracle.oracle_d_form2(two_tri, V, M))

    @pytest.mark.parametrize("k", [1, 2])
    def test_convection_forms(self, two_tri, k):
        X, V, _ = spaces(two_tri, k)
        for wf in (project_field(V, lambda x, y: np.column_stack(
                       [np.ones_like(x), np.zeros_like(x)])),
                   project_field(V, lambda x, y: np.column_stack(
                       [x - y ** 2, np.sin(x + 2 * y)]))):
            assert entrywise_close(
                forms.assemble_n1(two_tri, wf, X).mat.toarray(),
                oracle.oracle_n1(two_tri, wf, X))
            assert entrywise_close(
                forms.assemble_n2(two_tri, wf, V).mat.toarray(),
                oracle.oracle_n2(two_tri, wf, V))

    @pytest.mark.parametrize("k", [1, 2])
    def test_drift_and_force(self, two_tri, k):
        X, V, _ = spaces(two_tri, k)
        c = project_field(X, lambda x, y: x + 0.5 * y)
        assert entrywise_close(
            forms.assemble_g(two_tri, c, 0.7, X).mat.toarray(),
            oracle.oracle_g(two_tri, c, 0.7, X))
        d = project_field(X, lambda x, y: x - y)
        phi = project_field(X, lambda x, y: 2.0 * x + y)
        assert entrywise_close(forms.assemble_t_rhs(two_tri, d, phi, V),
                               oracle.oracle_t_rhs(two_tri, d, phi, V))


class TestStructure:
    @pytest.mark.parametrize("k,sigma", [(1, 10.0), (2, 40.0)])
    def test_a1_symmetric_annihilates_constants(self, k, sigma):
        mesh = build_rect_mesh(1.0, 1.0, 3, 3)
        X = BrokenSpace(mesh, k)
        A = forms.assemble_a1(mesh, X, sigma).mat
        assert np.abs((A - A.T).data).max() < 1e-13 if (A - A.T).nnz else True
        ones = X.constant_field(1.0)
        assert np.abs(A @ ones.coef).max() < 1e-12

    @pytest.mark.parametrize("k,sigma", [(1, 10.0), (2, 40.0)])
    def test_a2_symmetric_no_constant_kernel(self, k, sigma):
        mesh = build_rect_mesh(1.0, 1.0, 3, 3)
        V = BrokenSpace(mesh, k, ncomp=2)
        A = forms.assemble_a2(mesh, V, sigma).mat
        asym = (A - A.T)
        assert np.abs(asym.data).max() < 1e-13 if asym.nnz else True
        v = project_field(V, lambda x, y: np.column_stack(
            [np.ones_like(x), 0.5 * np.ones_like(x)]))
        assert v.coef @ (A @ v.coef) > 0.1

    @pytest.mark.parametrize("k", [1, 2])
    def test_skewness_random_advection(self, k):
        mesh = build_rect_mesh(1.0, 1.0, 3, 3)
        X, V = BrokenSpace(mesh, k), BrokenSpace(mesh, k, ncomp=2)
        rng = np.random.default_rng(42)
        # fully discontinuous advecting field with nonzero wall flux
        w = FieldVector(V, rng.standard_normal(V.ndof))
        N1 = forms.assemble_n1(mesh, w, X).mat
        N2 = forms.assemble_n2(mesh, w, V).mat
        norm1 = sla.norm(N1.toarray(), 2)
        norm2 = sla.norm(N2.toarray(), 2)
        for _ in range(5):
            psi = rng.standard_normal(X.ndof)
            assert abs(psi @ (N1 @ psi)) <= 1e-12 * norm1 * psi @ psi
            v = rng.standard_normal(V.ndof)
            assert abs(v @ (N2 @ v)) <= 1e-12 * norm2 * v @ v
        assert np.abs((N1 + N1.T).data).max() <= 1e-12 * norm1

    @pytest.mark.parametrize("k", [1, 2])
    def test_zero_advection_zero_operator(self, k):
        mesh = build_rect_mesh(1.0, 1.0, 2, 2)
        X, V = BrokenSpace(mesh, k), BrokenSpace(mesh, k, ncomp=2)
        w = V.new_field()
        assert forms.assemble_n1(mesh, w, X).mat.nnz == 0 or \
            np.abs(forms.assemble_n1(mesh, w, X).mat.data).max() < 1e-15
        assert forms.assemble_n2(mesh, w, V).mat.nnz == 0 or \
            np.abs(forms.assemble_n2(mesh, w, V).mat.data).max() < 1e-15

    def test_coupling_on_divfree_continuous_field(self):
        """For a continuous divergence-free polynomial both interior
        contributions vanish; what survives is exactly the boundary flux
        functional, which vanishes for constant pressures."""
        mesh = build_rect_mesh(1.0, 1.0, 4, 4)
        V, M = BrokenSpace(mesh, 2, ncomp=2), BrokenSpace(mesh, 1)
        D = forms.assemble_d(mesh, V, M).mat
        v = project_field(V, lambda x, y: np.column_stack([y, x]))
        q_const = M.constant_field(1.0)
        assert abs(q_const.coef @ (D @ v.coef)) < 1e-12
        # arbitrary q: D(v, q) = -sum over boundary of int q (v.n)
        rng = np.random.default_rng(3)
        q = FieldVector(M, rng.standard_normal(M.ndof))
        ea = mesh.edge_arrays()
        etab = M.edge_tab(6)
        qb = q.values_at(etab.values[ea.b_cls], elements=ea.b_elem)
        pts = (ea.b_va[:, None, :] + etab.rule.points[None, :, None]
               * (ea.b_vb - ea.b_va)[:, None, :])
        vn = (pts[..., 1] * ea.b_normals[:, None, 0]
              + pts[..., 0] * ea.b_normals[:, None, 1])
        boundary = -np.einsum("e,q,eq,eq->", ea.b_lengths, etab.rule.weights,
                              qb, vn)
        assert abs(q.coef @ (D @ v.coef) - boundary) < 1e-12

    def test_drift_zero_coefficient(self):
        mesh = build_rect_mesh(1.0, 1.0, 2, 2)
        X = BrokenSpace(mesh, 1)
        G = forms.assemble_g(mesh, X.new_field(), 0.0, X).mat
        assert np.abs(G.data).max() < 1e-15 if G.nnz else True

    def test_drift_constant_coefficient_continuous_args(self):
        mesh = build_rect_mesh(1.0, 1.0, 4, 4)
        X = BrokenSpace(mesh, 1)
        G = forms.assemble_g(mesh, X.new_field(), 1.0, X).mat
        psi = project_field(X, lambda x, y: 2.0 * x - y)
        zeta = project_field(X, lambda x, y: x + 3.0 * y)
        # int grad(2x - y) . grad(x + 3y) = (2)(1) + (-1)(3) = -1
        assert abs(zeta.coef @ (G @ psi.coef) - (-1.0)) < 1e-12

    def test_force_rhs_trivial_cases(self):
        mesh = build_rect_mesh(1.0, 1.0, 2, 2)
        X, V = BrokenSpace(mesh, 1), BrokenSpace(mesh, 1, ncomp=2)
        phi = project_field(X, lambda x, y: x * 0 + 3.0)
        d = project_field(X, lambda x, y: x - y)
        assert np.abs(forms.assemble_t_rhs(mesh, X.new_field(), phi, V)).max() \
            < 1e-15
        assert np.abs(forms.assemble_t_rhs(mesh, d, phi, V)).max() < 1e-13

    def test_sparsity_linear_in_elements(self):
        counts = []
        for n in (4, 8, 16):
            mesh = build_rect_mesh(1.0, 1.0, n, n)
            X = BrokenSpace(mesh, 1)
            A = forms.assemble_a1(mesh, X, 10.0).mat
            counts.append(A.nnz / mesh.n_elements)
        assert max(counts) / min(counts) < 1.2

    def test_form_params_validation(self):
        with pytest.raises(FormsError):
            FormParams(sigma_e=-1.0)
        with pytest.raises(FormsError):
            FormParams(sigma_e=10.0, kappa1=0.0)


class TestSpectralBounds:
    @pytest.mark.parametrize("sigma", [10.0, 40.0])
    @pytest.mark.parametrize("k", [1, 2])
    def test_coercivity_scan(self, k, sigma):
        """Minimum Rayleigh quotient of the diffusion forms over the
        energy norm stays positive on h = 1/4 and 1/8, and the
        continuity constant stays bounded."""
        for n in (4, 8):
            mesh = build_rect_mesh(1.0, 1.0, n, n)
            X = BrokenSpace(mesh, k)
            V = BrokenSpace(mesh, k, ncomp=2)
            E1 = forms.energy_gram(X, sigma).mat.toarray()
            A1 = forms.assemble_a1(mesh, X, sigma).mat.toarray()
            mvec = X.integral_vector()
            Q, _ = np.linalg.qr(np.column_stack(
                [mvec, np.eye(X.ndof)[:, :X.ndof - 1]]))
            Z = Q[:, 1:]
            w1 = sla.eigvalsh(Z.T @ A1 @ Z, Z.T @ E1 @ Z)
            assert w1.min() > 0.05
            assert w1.max() < 10.0
            E2 = forms.energy_gram(V, sigma).mat.toarray()
            A2 = forms.assemble_a2(mesh, V, sigma).mat.toarray()
            w2 = sla.eigvalsh(A2, E2)
            assert w2.min() > 0.05
            assert w2.max() < 10.0

    def test_inf_sup_constant_no_decay(self):
        """Smallest nonzero singular value of the scaled coupling
        operator stays bounded below under refinement."""
        betas = []
        for n in (2, 4, 8):
            mesh = build_rect_mesh(1.0, 1.0, n, n)
            V = BrokenSpace(mesh, 1, ncomp=2)
            M = BrokenSpace(mesh, 0)
            D = forms.assemble_d(mesh, V, M).mat.toarray()
            E = forms.energy_gram(V, 10.0).mat.toarray()
            S = D @ np.linalg.solve(E, D.T)
            mp_isqrt = np.diag(1.0 / np.sqrt(M.mass_diagonal()))
            w = np.sort(np.linalg.eigvalsh(mp_isqrt @ S @ mp_isqrt))
            betas.append(np.sqrt(max(w[1], 0.0)))  # skip constant mode
        assert min(betas) > 0.3
        assert betas[-1] > 0.9 * betas[0] or betas[-1] > 0.3


class TestMixedBoundary:
    def test_insulated_reduction(self):
        mesh = build_rect_mesh(1.0, 2.0, 4, 8)
        X = BrokenSpace(mesh, 1)
        op, load = forms.assemble_a1_mixed_bc(mesh, X, 10.0, {}, {})
        plain = forms.assemble_a1(mesh, X, 10.0)
        assert abs(op.mat - plain.mat).max() == 0.0
        assert np.abs(load).max() == 0.0

    def test_overlapping_tags_rejected(self):
        mesh = build_rect_mesh(1.0, 1.0, 2, 2)
        X = BrokenSpace(mesh, 1)
        with pytest.raises(FormsError):
            forms.assemble_a1_mixed_bc(mesh, X, 10.0,
                                       {BoundaryTag.TOP: 0.0},
                                       {BoundaryTag.TOP: 1.0})

    @pytest.mark.parametrize("k", [1, 2])
    def test_linear_solution_recovered(self, k):
        """Dirichlet top, constant-flux bottom, insulated sides: the
        linear steady profile lies in the space and must be recovered to
        solver accuracy (a manufactured mixed-boundary check)."""
        from pnpdg.diagnostics import l2_error
        from pnpdg.linalg import PrefactoredSolver

        mu, sigma_s, ly = 0.01, 1.0, 2.0
        mesh = build_rect_mesh(1.0, ly, 8, 16)
        X = BrokenSpace(mesh, k)
        op, load = forms.assemble_a1_mixed_bc(
            mesh, X, 40.0, {BoundaryTag.TOP: 0.0},
            {BoundaryTag.BOTTOM: sigma_s}, mu=mu)
        phi, _ = PrefactoredSolver(mu * op.mat).solve(load)
        err = l2_error(FieldVector(X, phi),
                       lambda x, y: (sigma_s / mu) * (ly - y))
        assert err < 1e-9

    def test_flux_balance(self):
        """Total flux through the grounded wall balances the injected
        surface flux."""
        from pnpdg.linalg import PrefactoredSolver

        mu, sigma_s, ly = 0.01, 1.0, 2.0
        mesh = build_rect_mesh(1.0, ly, 8, 16)
        X = BrokenSpace(mesh, 2)
        op, load = forms.assemble_a1_mixed_bc(
            mesh, X, 40.0, {BoundaryTag.TOP: 0.0},
            {BoundaryTag.BOTTOM: sigma_s}, mu=mu)
        sol, _ = PrefactoredSolver(mu * op.mat).solve(load)
        fv = FieldVector(X, sol)
        ea = mesh.edge_arrays()
        deg = 6
        etab = X.edge_tab(deg)
        grads = np.einsum("edr,eiqr->eiqd", mesh.inv_jac_t[ea.b_elem],
                          etab.ref_grads[ea.b_cls])
        gn = np.einsum("ei,eiqd,ed->eq", fv.by_element()[ea.b_elem][:, 0, :],
                       grads, ea.b_normals)
        tags = np.array([t.value for t in ea.b_tags])
        w = etab.rule.weights
        top = tags == "top"
        flux_top = mu * np.einsum("e,q,eq->", ea.b_lengths[top], w, gn[top])
        flux_bottom = sigma_s * np.sum(ea.b_lengths[tags == "bottom"])
        assert abs(flux_top + flux_bottom) < 1e-8

    def test_mms_refinement_with_dirichlet(self):
        """Nonpolynomial manufactured solution with a grounded top wall
        converges at order k+1."""
        from pnpdg.diagnostics import l2_error
        from pnpdg.forms import assemble_load
        from pnpdg.linalg import PrefactoredSolver

        mu, ly, k = 0.5, 1.0, 1
        # phi* = cos(pi x) cos(pi y / 2): zero flux at sides and bottom,
        # zero value at the top
        exact = lambda x, y: np.cos(np.pi * x) * np.cos(0.5 * np.pi * y)
        f = lambda x, y: mu * (np.pi ** 2 + 0.25 * np.pi ** 2) * exact(x, y)
        errs, hs = [], []
        for n in (4, 8, 16, 32):
            mesh = build_rect_mesh(1.0, ly, n, n)
            X = BrokenSpace(mesh, k)
            op, load = forms.assemble_a1_mixed_bc(
                mesh, X, 10.0, {BoundaryTag.TOP: 0.0}, {}, mu=mu)
            rhs = assemble_load(X, f) + load
            sol, _ = PrefactoredSolver(mu * op.mat).solve(rhs)
            errs.append(l2_error(FieldVector(X, sol), exact))
            hs.append(1.0 / n)
        slopes = np.diff(np.log(errs)) / np.diff(np.log(hs))
        assert slopes[-1] > 1.8
