"""Grid construction, discrete complex Hessian, and density primitives.

Expected Hessians are derived independently with sympy (symbolic
differentiation of the defining formula H_{jk} = d^2 u / dz_j dzbar_k in
real coordinates) so the stencil code is checked against an oracle rather
than against itself.
"""

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from cmasolve.grids import (
    Ball,
    Box,
    DensityField,
    Grid,
    GridError,
    ScalarField,
    build_grid,
    complex_hessian,
    hessian_determinant,
    integrate,
    ma_density,
    read_field_bin,
    read_field_csv,
    unit_box,
    write_field_bin,
    write_field_csv,
)

COEFF = st.floats(min_value=-2.0, max_value=2.0, allow_nan=False, width=32)


def symbolic_hessian(u_expr, n, syms):
    """Oracle: H_{jk} via real partial derivatives of u.

    d/dz_j = (d/dx_j - i d/dy_j)/2 and d/dzbar_k = (d/dx_k + i d/dy_k)/2,
    so H_{jk} = ((u_xjxk + u_yjyk) + i (u_xjyk - u_yjxk))/4.
    """
    H = sp.zeros(n, n)
    for j in range(n):
        for k in range(n):
            xj, yj = syms[2 * j], syms[2 * j + 1]
            xk, yk = syms[2 * k], syms[2 * k + 1]
            H[j, k] = (sp.diff(u_expr, xj, xk) + sp.diff(u_expr, yj, yk)
                       + sp.I * (sp.diff(u_expr, xj, yk)
                                 - sp.diff(u_expr, yj, xk))) / 4
    return H


class TestGridConstruction:
    def test_default_box_resolution_5(self):
        g = build_grid(unit_box(1), 5)
        assert g.num_nodes == 25
        assert int(g.interior_mask().sum()) == 9
        assert g.spacing == (0.25, 0.25)

    def test_node_count_4d(self):
        g = build_grid(unit_box(2), 17)
        assert g.num_nodes == 83521
        assert g.interior_shape == (15, 15, 15, 15)

    def test_degenerate_box_rejected(self):
        with pytest.raises(GridError, match="degenerate box"):
            Box(lo=(0.0, 0.0), hi=(0.0, 1.0))

    def test_thin_resolution_rejected(self):
        with pytest.raises(GridError, match="too thin"):
            build_grid(unit_box(1), 4)

    def test_ball_domain_rejected(self):
        with pytest.raises(GridError, match="radial"):
            build_grid(Ball(radius=1.0), 9)

    def test_spacing_exact(self):
        g = build_grid(Box(lo=(-1.0, 0.0), hi=(1.0, 3.0)), (9, 7))
        assert g.spacing == (0.25, 0.5)
        assert g.axes[0][0] == -1.0 and g.axes[0][-1] == 1.0

    def test_field_shape_and_finiteness_enforced(self):
        g = build_grid(unit_box(1), 5)
        with pytest.raises(GridError):
            ScalarField(g, np.zeros((5, 4)))
        bad = np.zeros((5, 5))
        bad[2, 2] = np.nan
        with pytest.raises(GridError, match="non-finite"):
            ScalarField(g, bad)
        with pytest.raises(GridError, match="nonnegative"):
            DensityField(g, np.full(g.interior_shape, -1.0))


class TestComplexHessian:
    def test_squared_norm_gives_identity(self):
        g = build_grid(unit_box(2), 7)
        u = ScalarField.from_function(g, lambda p: (p ** 2).sum(axis=-1))
        H = complex_hessian(u).values
        eye = np.broadcast_to(np.eye(2), H.shape)
        assert np.abs(H - eye).max() <= 1e-12

    def test_pluriharmonic_re_z1_squared(self):
        # Re(z1^2) = x1^2 - y1^2 has identically zero complex Hessian.
        g = build_grid(unit_box(2), 7)
        u = ScalarField.from_function(g, lambda p: p[..., 0] ** 2 - p[..., 1] ** 2)
        H = complex_hessian(u).values
        assert np.abs(H).max() <= 1e-10

    def test_pluriharmonic_cross_terms(self):
        # Re(z1 z2) and Im(z1^2) are also annihilated.
        g = build_grid(unit_box(2), 7)
        for fn in (lambda p: p[..., 0] * p[..., 2] - p[..., 1] * p[..., 3],
                   lambda p: 2 * p[..., 0] * p[..., 1]):
            H = complex_hessian(ScalarField.from_function(g, fn)).values
            assert np.abs(H).max() <= 1e-10

    def test_product_of_squared_moduli_against_sympy(self):
        # u = |z1|^2 |z2|^2: quartic, but separable with degree <= 2 per
        # variable, so the stencils are still exact.
        syms = sp.symbols("x1 y1 x2 y2", real=True)
        x1, y1, x2, y2 = syms
        u_expr = (x1 ** 2 + y1 ** 2) * (x2 ** 2 + y2 ** 2)
        H_oracle = symbolic_hessian(u_expr, 2, syms)
        fns = {
            (j, k): sp.lambdify(syms, H_oracle[j, k], "numpy")
            for j in range(2) for k in range(2)
        }
        g = build_grid(unit_box(2), 7)
        pts = g.points()[g.interior]
        u = ScalarField.from_function(
            g, lambda p: (p[..., 0] ** 2 + p[..., 1] ** 2)
            * (p[..., 2] ** 2 + p[..., 3] ** 2))
        H = complex_hessian(u).values
        for (j, k), fn in fns.items():
            expected = np.asarray(fn(pts[..., 0], pts[..., 1],
                                     pts[..., 2], pts[..., 3]),
                                  dtype=np.complex128)
            expected = np.broadcast_to(expected, H[..., j, k].shape)
            assert np.abs(H[..., j, k] - expected).max() <= 1e-12
        # and the determinant degenerates: det H = 0 identically
        det = hessian_determinant(complex_hessian(u))
        assert np.abs(det).max() <= 1e-12

    @settings(max_examples=15, deadline=None)
    @given(st.lists(COEFF, min_size=10, max_size=10))
    def test_quadratic_exactness_against_sympy(self, coeffs):
        syms = sp.symbols("x1 y1 x2 y2", real=True)
        mons = [syms[a] * syms[b] for a in range(4) for b in range(a, 4)]
        u_expr = sum(c * m for c, m in zip(coeffs, mons))
        H_oracle = symbolic_hessian(u_expr, 2, syms)

        g = build_grid(unit_box(2), 5)
        pts = g.points()
        mon_vals = [pts[..., a] * pts[..., b]
                    for a in range(4) for b in range(a, 4)]
        vals = sum(c * m for c, m in zip(coeffs, mon_vals))
        H = complex_hessian(ScalarField(g, np.asarray(vals))).values
        scale = max(1.0, max(abs(c) for c in coeffs))
        for j in range(2):
            for k in range(2):
                expected = complex(H_oracle[j, k])
                assert np.abs(H[..., j, k] - expected).max() <= 1e-12 * scale

    def test_hermitian_mirror_bit_exact(self):
        g = build_grid(unit_box(2), 6)
        rng = np.random.default_rng(7)
        u = ScalarField(g, rng.standard_normal(g.shape))
        H = complex_hessian(u).values
        assert np.array_equal(H, np.conj(np.swapaxes(H, -1, -2)))


class TestMaDensity:
    def test_constant_density_n2(self):
        g = build_grid(unit_box(2), 7)
        u = ScalarField.from_function(g, lambda p: (p ** 2).sum(axis=-1) - 1.0)
        dens, defect = ma_density(u)
        assert np.abs(dens.values - 32.0).max() <= 1e-10
        assert defect <= 1e-12

    def test_constant_density_n1(self):
        g = build_grid(unit_box(1), 9)
        u = ScalarField.from_function(g, lambda p: (p ** 2).sum(axis=-1))
        dens, defect = ma_density(u)
        assert np.abs(dens.values - 4.0).max() <= 1e-12
        assert defect <= 1e-12

    def test_degenerate_product_density_zero(self):
        g = build_grid(unit_box(2), 7)
        u = ScalarField.from_function(
            g, lambda p: (p[..., 0] ** 2 + p[..., 1] ** 2)
            * (p[..., 2] ** 2 + p[..., 3] ** 2))
        dens, defect = ma_density(u)
        assert np.abs(dens.values).max() <= 1e-12
        assert defect <= 1e-12

    def test_n1_reduction_matches_five_point_laplacian(self):
        g = build_grid(unit_box(1), 11)
        rng = np.random.default_rng(3)
        base = rng.standard_normal(g.shape)
        # make it discretely subharmonic by adding a big multiple of |z|^2
        pts = g.points()
        vals = 50.0 * (pts ** 2).sum(axis=-1) + 0.05 * base
        u = ScalarField(g, vals)
        h = g.spacing[0]
        lap = ((vals[2:, 1:-1] - 2 * vals[1:-1, 1:-1] + vals[:-2, 1:-1])
               + (vals[1:-1, 2:] - 2 * vals[1:-1, 1:-1] + vals[1:-1, :-2])) / h ** 2
        dens, _ = ma_density(u)
        assert np.abs(dens.values - lap).max() <= 1e-9

    def test_psh_defect_reported(self):
        g = build_grid(unit_box(1), 9)
        u = ScalarField.from_function(g, lambda p: -(p ** 2).sum(axis=-1))
        dens, defect = ma_density(u)
        assert np.abs(dens.values).max() == 0.0  # clamped
        assert defect == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("n,levels", [(1, (9, 17, 33)), (2, (7, 13, 25))])
    def test_consistency_order_h2(self, n, levels):
        # u = exp(x1) + |z|^2 against its analytic density.
        errors = []
        for res in levels:
            g = build_grid(unit_box(n), res)
            pts = g.points()
            u = ScalarField(g, np.exp(pts[..., 0]) + (pts ** 2).sum(axis=-1))
            dens, _ = ma_density(u)
            x1 = pts[g.interior][..., 0]
            if n == 1:
                exact = np.exp(x1) + 4.0
            else:
                exact = 32.0 * (1.0 + np.exp(x1) / 4.0)
            errors.append(np.abs(dens.values - exact).max())
        rates = [np.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)]
        assert all(1.7 <= r <= 2.3 for r in rates), rates


class TestIntegrateAndDumps:
    def test_integrate_constant(self):
        g = build_grid(unit_box(2), 9)
        val = integrate(DensityField.constant(g, 32.0))
        expected = 32.0 * (7 ** 4) * g.cell_volume
        assert val == pytest.approx(expected, rel=1e-13)
        # refines toward the continuum value 32 * vol(box)
        g2 = build_grid(unit_box(2), 17)
        val2 = integrate(DensityField.constant(g2, 32.0))
        assert abs(val2 - 32.0) < abs(val - 32.0)

    def test_integrate_deterministic(self):
        g = build_grid(unit_box(1), 33)
        rng = np.random.default_rng(11)
        d = DensityField(g, rng.random(g.interior_shape))
        assert integrate(d) == integrate(d)

    def test_csv_round_trip_bit_identical(self, tmp_path):
        g = build_grid(unit_box(1), 7)
        rng = np.random.default_rng(5)
        u = ScalarField(g, rng.standard_normal(g.shape))
        path = tmp_path / "u.csv"
        write_field_csv(u, path)
        back = read_field_csv(path)
        assert back.grid == g
        assert np.array_equal(back.values, u.values)

    def test_csv_header_names(self, tmp_path):
        g = build_grid(unit_box(2), 5)
        u = ScalarField(g, np.zeros(g.shape))
        path = tmp_path / "u.csv"
        write_field_csv(u, path)
        header = path.read_text().splitlines()[0]
        assert header == "x1,y1,x2,y2,value,interior"

    def test_bin_round_trip_bit_identical(self, tmp_path):
        g = build_grid(unit_box(2), 5)
        rng = np.random.default_rng(9)
        u = ScalarField(g, rng.standard_normal(g.shape))
        path = tmp_path / "u.bin"
        write_field_bin(u, path)
        back = read_field_bin(path)
        assert back.grid == g
        assert np.array_equal(back.values, u.values)
