import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import weakkam as wk
from weakkam.action_barrier import barrier_step
from weakkam.errors import EmptyAubryError

from conftest import make_problem, maupertuis_barrier, pendulum_potential, two_well_potential


def brute_force_h(kernel, steps):
    """Exhaustive enumeration of all stencil paths of the given length."""
    n = kernel.num_nodes
    best = np.full((n, n), np.inf)
    offs = range(kernel.num_offsets)
    for start in range(n):
        for seq in itertools.product(offs, repeat=steps):
            node = start
            total = 0.0
            for k in seq:
                total = total + kernel.costs[k, node]
                node = int(kernel.head_index[k, node])
            best[start, node] = min(best[start, node], total)
    return best


class TestKernel:
    def test_free_self_edges_cost_zero(self, free32):
        k = free32.kernel0
        zero = k.stencil.zero_index
        np.testing.assert_array_equal(k.costs[zero], 0.0)
        np.testing.assert_array_equal(k.head_index[zero], np.arange(32))

    def test_pendulum_self_edge_at_well(self, pendulum16):
        k = wk.build_kernel(pendulum16.grid, pendulum16.spec, pendulum16.stencil, c=1.0)
        zero = k.stencil.zero_index
        assert k.costs[zero, 0] == 0.0

    def test_pendulum_costs_nonnegative_at_max_v(self, pendulum16):
        k = wk.build_kernel(pendulum16.grid, pendulum16.spec, pendulum16.stencil, c=1.0)
        assert k.costs.min() >= 0.0

    def test_self_loops_on_diagonal(self, pendulum16):
        dense = pendulum16.kernel.dense()
        assert np.isfinite(np.diag(dense)).all()

    def test_costs_by_head_consistent(self, pendulum16):
        k = pendulum16.kernel
        by_head = k.costs_by_head()
        for kk in range(k.num_offsets):
            np.testing.assert_array_equal(by_head[kk], k.costs[kk][k.pred_index[kk]])


class TestMinPlus:
    def test_power_one_is_kernel(self, pendulum16):
        h1 = wk.minplus_power(pendulum16.kernel, 1)
        np.testing.assert_array_equal(h1.values, pendulum16.kernel.dense())

    def test_two_step_free_particle_example(self):
        # n=4 grid, K=1, tau=1, c=0: two steps from 0 to 0.5 cost 2 * (0.25^2)/2
        grid = wk.build_grid(1, [4])
        spec = wk.mechanical(wk.zero_potential(), dim=1).with_v_search(2.0)
        stencil = wk.make_stencil(grid, 1.0, 0.25, k=1)
        kernel = wk.build_kernel(grid, spec, stencil, c=0.0)
        h2 = wk.minplus_power(kernel, 2)
        assert h2.values[0, 2] == pytest.approx(0.0625, abs=1e-15)
        oracle = brute_force_h(kernel, 2)
        np.testing.assert_array_equal(h2.values, oracle)

    def test_power_matches_brute_force(self, pendulum8):
        k = pendulum8.kernel
        for steps in (1, 2, 3, 4, 5, 6):
            got = wk.minplus_power(k, steps).values
            oracle = brute_force_h(k, steps)
            finite = np.isfinite(oracle)
            np.testing.assert_array_equal(np.isfinite(got), finite)
            assert np.max(np.abs(got[finite] - oracle[finite])) <= 1e-12

    def test_repeated_squaring_matches_product(self, pendulum16):
        k = pendulum16.kernel
        p2 = wk.minplus_power(k, 2).values
        p4 = wk.minplus_power(k, 4).values
        p6 = wk.minplus_power(k, 6).values
        np.testing.assert_array_equal(p6, wk.minplus_product(p2, p4))

    def test_subadditive_in_horizon(self, pendulum16):
        k = pendulum16.kernel
        h1 = wk.minplus_power(k, 1).values
        h2 = wk.minplus_power(k, 2).values
        bound = wk.minplus_product(h1, h1)
        assert (h2 <= bound + 1e-12).all()

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_product_associative_on_random_matrices(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (rng.uniform(0, 2, (5, 5)) for _ in range(3))
        left = wk.minplus_product(wk.minplus_product(a, b), c)
        right = wk.minplus_product(a, wk.minplus_product(b, c))
        np.testing.assert_allclose(left, right, atol=1e-12)


class TestPeierls:
    def test_free_particle_floor(self, free32):
        h = wk.peierls_barrier(free32.kernel0)
        assert h.stable
        # transit cost floor: one node per step at the slowest nonzero speed
        q = free32.grid.spacing[0] / free32.tau
        dist = np.abs(free32.grid.wrap_displacement(
            free32.grid.coordinates[:, 0][None, :], free32.grid.coordinates[:, 0][:, None]
        ))
        floor = dist * free32.grid.spacing[0] / (2 * free32.tau)
        np.testing.assert_allclose(h.values, floor, atol=1e-12)
        assert np.abs(h.diagonal()).max() == 0.0

    def test_pendulum_diagonal_zero_at_well(self, pendulum200_barrier):
        assert pendulum200_barrier.values[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert pendulum200_barrier.stable

    def test_pendulum_matches_maupertuis(self, pendulum200, pendulum200_barrier):
        oracle = maupertuis_barrier(pendulum200.spec.potential, 1.0, 0.0, 0.5)
        got = pendulum200_barrier.values[0, 100]
        assert abs(got - oracle) / oracle <= 0.05

    def test_diagonal_nonnegative(self, pendulum200_barrier):
        assert pendulum200_barrier.diagonal().min() >= -1e-9

    def test_triangle_inequality_exhaustive_small(self, pendulum16):
        h = wk.peierls_barrier(pendulum16.kernel).values
        lhs = h[:, None, :]                      # h(y, x)
        rhs = h[:, :, None] + h[None, :, :]      # h(y, z) + h(z, x)
        assert (lhs <= rhs + 1e-9).all()

    def test_mixed_inequality_finite_horizon(self, pendulum16):
        h = wk.peierls_barrier(pendulum16.kernel).values
        for steps in (1, 3):
            ht = wk.minplus_power(pendulum16.kernel, steps).values
            assert (h[:, None, :] <= h[:, :, None] + ht[None, :, :] + 1e-9).all()

    def test_one_step_fixed_point_rows(self, pendulum16):
        barrier = wk.peierls_barrier(pendulum16.kernel)
        stepped = barrier_step(pendulum16.kernel, barrier.values)
        assert np.abs(stepped - barrier.values).max() <= max(barrier.residual, 1e-9)

    def test_unstable_when_shift_is_off(self, pendulum16):
        bad = wk.build_kernel(pendulum16.grid, pendulum16.spec, pendulum16.stencil, c=0.9)
        h = wk.peierls_barrier(bad, tol=1e-9)
        assert not h.stable
        assert h.residual > 1e-3

    def test_rows_subset_matches_full(self, pendulum16):
        full = wk.peierls_barrier(pendulum16.kernel)
        rows = wk.peierls_barrier(pendulum16.kernel, rows=np.array([0, 5]))
        np.testing.assert_array_equal(rows.values[0], full.values[0])
        np.testing.assert_array_equal(rows.values[1], full.values[5])
        np.testing.assert_array_equal(rows.row(5), full.values[5])

    def test_thread_count_does_not_change_values(self, pendulum16):
        h1 = wk.peierls_barrier(pendulum16.kernel, threads=1)
        h4 = wk.peierls_barrier(pendulum16.kernel, threads=4)
        np.testing.assert_array_equal(h1.values, h4.values)


class TestAubry:
    def test_pendulum_single_well(self, pendulum200_barrier):
        assert wk.aubry_set(pendulum200_barrier, 1e-7).tolist() == [0]

    def test_free_particle_everything(self, free32):
        h = wk.peierls_barrier(free32.kernel0)
        assert wk.aubry_set(h, 1e-9).tolist() == list(range(32))

    def test_two_wells(self):
        p = make_problem(16, two_well_potential())
        h = wk.peierls_barrier(p.kernel)
        assert wk.aubry_set(h, 1e-7).tolist() == [0, 8]

    def test_empty_is_an_error(self, pendulum16):
        bad = wk.build_kernel(pendulum16.grid, pendulum16.spec, pendulum16.stencil, c=1.5)
        h = wk.peierls_barrier(bad)
        with pytest.raises(EmptyAubryError):
            wk.aubry_set(h, 1e-12)


class TestMatherClasses:
    def test_pendulum_singleton(self, pendulum200_barrier):
        aubry = wk.aubry_set(pendulum200_barrier, 1e-7)
        assert wk.mather_classes(pendulum200_barrier, aubry, 1e-7) == [[0]]

    def test_two_wells_two_classes(self):
        p = make_problem(16, two_well_potential())
        h = wk.peierls_barrier(p.kernel)
        aubry = wk.aubry_set(h, 1e-7)
        assert wk.mather_classes(h, aubry, 1e-7) == [[0], [8]]

    def test_free_particle_single_class(self, free32):
        # discretely delta_M(x, y) = d(x, y) * h / tau, the velocity-quantization
        # floor; neighbor links close the whole torus into one class once eps
        # clears the single-cell value h^2/tau
        h = wk.peierls_barrier(free32.kernel0)
        aubry = wk.aubry_set(h, 1e-9)
        eps = 2.0 * free32.grid.spacing[0] ** 2 / free32.tau
        classes = wk.mather_classes(h, aubry, eps)
        assert len(classes) == 1 and len(classes[0]) == 32

    def test_delta_symmetric_and_triangle(self):
        p = make_problem(16, two_well_potential())
        report = wk.aubry_report(wk.peierls_barrier(p.kernel), 1e-7)
        np.testing.assert_array_equal(report.delta, report.delta.T)
        assert report.delta.min() >= -1e-9


class TestVerifySubsolution:
    def test_constant_is_subsolution(self, pendulum16):
        u = wk.GridFunction(pendulum16.grid, np.full(16, 3.7))
        assert wk.verify_subsolution(u, pendulum16.kernel) <= 0.0

    def test_barrier_row_is_subsolution(self, pendulum200, pendulum200_barrier):
        v = wk.verify_subsolution(pendulum200_barrier.values[0], pendulum200.kernel)
        assert v <= 1e-9

    def test_doubled_row_violates(self, pendulum200, pendulum200_barrier):
        v = wk.verify_subsolution(2.0 * pendulum200_barrier.values[0], pendulum200.kernel)
        assert v > 0.0


class TestEquivariance:
    def test_translation_shifts_everything(self):
        # shifting the potential by s nodes shifts barriers and Aubry sets
        n, shift = 16, 5
        base = make_problem(n, pendulum_potential())

        def shifted_potential(x):
            return pendulum_potential()(np.asarray(x) - shift / n)

        moved = make_problem(n, shifted_potential)
        hb = wk.peierls_barrier(base.kernel).values
        hm = wk.peierls_barrier(moved.kernel).values
        perm = (np.arange(n) - shift) % n
        np.testing.assert_allclose(hm, hb[np.ix_(perm, perm)], atol=1e-12)
        assert wk.aubry_set(wk.peierls_barrier(moved.kernel), 1e-7).tolist() == [shift]


class TestBarrierIO:
    def test_binary_round_trip(self, pendulum16, tmp_path):
        from weakkam import io

        h = wk.peierls_barrier(pendulum16.kernel)
        io.write_barrier(h, tmp_path / "barrier")
        back = io.read_barrier(tmp_path / "barrier")
        np.testing.assert_array_equal(back.values, h.values)
        assert back.window == h.window
        assert back.tau == h.tau and back.c == h.c

    def test_csv_dump(self, pendulum16, tmp_path):
        from weakkam import io

        h = wk.peierls_barrier(pendulum16.kernel)
        io.barrier_to_csv(h, tmp_path / "barrier.csv")
        rows = (tmp_path / "barrier.csv").read_text().strip().split("\n")
        assert rows[0] == "row_node,col_node,value"
        assert len(rows) == 1 + 16 * 16
        y, x, val = rows[1 + 16 * 3 + 7].split(",")
        assert (int(y), int(x)) == (3, 7)
        assert float(val) == h.values[3, 7]
