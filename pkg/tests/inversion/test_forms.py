"""Tests for the boundary forms."""

import numpy as np
import pytest

from core.exceptions import InvariantError
from inversion.forms import (
    FormData,
    asymmetry,
    build_form_data,
    connecting_form,
    kinetic_form,
    minus_part,
    oracle_errors,
    plus_part,
    potential_form,
    time_primitive,
)
from wavesim.traces import BoundaryTrace, ControlBasis, OracleData, TraceSet, generate_all_traces


class TestTimePrimitive:
    def test_constant_integrates_to_ramp(self):
        primitive = time_primitive(np.full((11, 2), 3.0), 0.1)
        np.testing.assert_allclose(primitive[:, 0], 3.0 * 0.1 * np.arange(11))
        assert primitive[0, 1] == 0.0

    def test_linear_exact(self):
        t = np.linspace(0, 1, 21)
        np.testing.assert_allclose(time_primitive(t, 0.05), 0.5 * t ** 2, atol=1e-3)


class TestParts:
    def test_plus_and_minus_fold(self):
        u = np.arange(5, dtype=float)
        np.testing.assert_allclose(plus_part(u, T=1.0, dt=0.5), [2.0, 2.0, 2.0])
        np.testing.assert_allclose(minus_part(u, T=1.0, dt=0.5), [-2.0, -1.0, 0.0])

    def test_parts_recover_trace(self):
        u = np.random.default_rng(3).standard_normal((9, 4))
        plus = plus_part(u, T=0.4, dt=0.1)
        minus = minus_part(u, T=0.4, dt=0.1)
        np.testing.assert_allclose(plus + minus, u[:5])
        np.testing.assert_allclose(plus - minus, u[::-1][:5])

    def test_even_sample_count_rejected(self):
        with pytest.raises(InvariantError, match='symmetric about T'):
            plus_part(np.zeros(6), T=0.25, dt=0.1)

    def test_horizon_must_be_midpoint(self):
        with pytest.raises(InvariantError, match='symmetric about T'):
            minus_part(np.zeros(7), T=1.0, dt=0.1)

    def test_raw_samples_need_dt(self):
        with pytest.raises(ValueError, match='dt is required'):
            plus_part(np.zeros(5), T=1.0)

    def test_accepts_boundary_trace(self, shift_traces, small_basis):
        trace = shift_traces[small_basis.index(1, 0)]
        assert plus_part(trace, small_basis.T).shape == (small_basis.steps_per_horizon + 1, small_basis.n_b)


class TestMidpointForms:
    """The midpoint rule reproduces the interior terminal products."""

    def test_matches_interior_grams(self, midpoint_forms, shift_traces):
        oracle = shift_traces.oracle
        errors = oracle_errors(midpoint_forms, oracle.mass_gram, oracle.stiffness_gram, oracle.kinetic_gram)
        assert set(errors) == {'C', 'P', 'kinetic'}
        assert max(errors.values()) <= 1e-8

    def test_symmetric_and_valid(self, midpoint_forms):
        midpoint_forms.validate()
        assert max(midpoint_forms.asymmetry.values()) <= 1e-8

    def test_terminal_values(self, midpoint_forms, shift_traces, small_basis):
        assert midpoint_forms.B.shape == (small_basis.size, small_basis.n_b)
        np.testing.assert_array_equal(midpoint_forms.B, shift_traces.terminal_values())

    def test_metadata(self, midpoint_forms, small_basis):
        assert midpoint_forms.size == small_basis.size
        assert midpoint_forms.T == pytest.approx(small_basis.T)
        assert midpoint_forms.quadrature == 'midpoint'

    def test_general_path_agrees(self, small_basis, shift_traces, midpoint_forms):
        general = build_form_data(small_basis, shift_traces, quadrature='midpoint', structured=False)
        for name in ('C', 'P', 'kinetic'):
            a, b = getattr(general, name), getattr(midpoint_forms, name)
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-10 * np.abs(b).max())

    def test_direct_traces_agree(self, small_basis, direct_traces, midpoint_forms):
        direct = build_form_data(small_basis, direct_traces, quadrature='midpoint')
        np.testing.assert_allclose(direct.C, midpoint_forms.C, rtol=0, atol=1e-10 * np.abs(midpoint_forms.C).max())

    def test_single_entries(self, small_basis, shift_traces):
        gram = shift_traces.oracle
        i, j = small_basis.index(2, 1), small_basis.index(1, 4)
        scale_c = np.abs(gram.mass_gram).max()
        scale_p = np.abs(gram.stiffness_gram).max()
        scale_k = np.abs(gram.kinetic_gram).max()
        assert abs(connecting_form(small_basis, shift_traces, i, j, 'midpoint') - gram.mass_gram[i, j]) <= 1e-8 * scale_c
        assert abs(potential_form(small_basis, shift_traces, i, j, 'midpoint') - gram.stiffness_gram[i, j]) <= 1e-8 * scale_p
        assert abs(kinetic_form(small_basis, shift_traces, i, i, 'midpoint') - gram.kinetic_gram[i, i]) <= 1e-8 * scale_k


class TestTrapezoidForms:
    def test_default_rule(self, small_basis, shift_traces):
        forms = build_form_data(small_basis, shift_traces)
        forms.validate()
        assert forms.quadrature == 'trapezoid'
        assert np.all(np.isfinite(forms.C)) and np.all(np.isfinite(forms.P))

    def test_unknown_quadrature(self, small_basis, shift_traces):
        with pytest.raises(ValueError, match='unknown quadrature'):
            build_form_data(small_basis, shift_traces, quadrature='simpson')


class TestBuildChecks:
    def test_structured_needs_base_traces(self, small_basis, direct_traces):
        with pytest.raises(InvariantError, match='base traces'):
            build_form_data(small_basis, direct_traces, structured=True)

    def test_missing_trace_rejected(self, small_basis, shift_traces):
        partial = TraceSet(
            basis=small_basis,
            traces=shift_traces.traces[:-1],
            mode='shift',
            base=shift_traces.base,
            ring_mass=shift_traces.ring_mass,
        )
        with pytest.raises(InvariantError, match='missing trace'):
            build_form_data(small_basis, partial)


class TestFormData:
    def test_asymmetry(self):
        assert asymmetry(np.zeros((2, 2))) == 0.0
        assert asymmetry(np.eye(3)) == 0.0
        assert asymmetry(np.array([[0.0, 1.0], [0.0, 0.0]])) == pytest.approx(np.sqrt(2.0))

    def test_validate_rejects_asymmetric(self, midpoint_forms):
        c = midpoint_forms.C.copy()
        c[0, 1] += 1.0
        broken = FormData(C=c, P=midpoint_forms.P, B=midpoint_forms.B, n_b=midpoint_forms.n_b,
                          n_t=midpoint_forms.n_t, T=midpoint_forms.T, dt_solver=midpoint_forms.dt_solver)
        with pytest.raises(InvariantError, match='C is symmetric'):
            broken.validate()

    def test_validate_checks_terminal_shape(self, midpoint_forms):
        broken = FormData(C=midpoint_forms.C, P=midpoint_forms.P, B=midpoint_forms.B[:, :3], n_b=midpoint_forms.n_b,
                          n_t=midpoint_forms.n_t, T=midpoint_forms.T, dt_solver=midpoint_forms.dt_solver)
        with pytest.raises(InvariantError, match='terminal values'):
            broken.validate()


class TestBilinearity:
    """Doubling one control amplitude scales its row by 2 and its diagonal entry by 4."""

    @pytest.fixture(scope='class')
    def doubled(self, small_mesh, bumpy_density, small_basis):
        weights = np.ones(small_basis.size)
        weights[7] = 2.0
        basis = ControlBasis(small_basis.wavelet, small_basis.offset, small_basis.n_t, small_basis.n_b,
                             small_basis.substeps, weights=weights)
        return basis, generate_all_traces(small_mesh, bumpy_density, basis)

    @pytest.mark.parametrize('structured', [True, False])
    def test_row_and_diagonal(self, doubled, midpoint_forms, structured):
        basis, traces = doubled
        forms = build_form_data(basis, traces, quadrature='midpoint', structured=structured)
        others = np.arange(basis.size) != 7
        for name in ('C', 'P', 'kinetic'):
            base, scaled = getattr(midpoint_forms, name), getattr(forms, name)
            atol = 1e-10 * np.abs(base).max()
            np.testing.assert_allclose(scaled[7, others], 2.0 * base[7, others], rtol=1e-9, atol=atol)
            assert scaled[7, 7] == pytest.approx(4.0 * base[7, 7], rel=1e-9, abs=atol)
            np.testing.assert_allclose(scaled[np.ix_(others, others)], base[np.ix_(others, others)], rtol=1e-9, atol=atol)


class TestBoundaryOnly:
    def test_interior_states_do_not_enter(self, small_basis, shift_traces, midpoint_forms):
        rng = np.random.default_rng(9)
        n_nodes, n = shift_traces.oracle.u_terminal.shape
        garbage = OracleData.from_states(
            rng.standard_normal((n_nodes, n)),
            rng.standard_normal((n_nodes, n)),
            np.eye(n_nodes),
            np.eye(n_nodes),
        )
        corrupted = TraceSet(
            basis=small_basis,
            traces=[
                BoundaryTrace(t.control, t.dt, t.base, t.shift, t.scale,
                              terminal=(rng.standard_normal(n_nodes), rng.standard_normal(n_nodes)))
                for t in shift_traces.traces
            ],
            mode=shift_traces.mode,
            base=shift_traces.base,
            oracle=garbage,
            ring_mass=shift_traces.ring_mass,
        )
        for structured in (True, False):
            forms = build_form_data(small_basis, corrupted, quadrature='midpoint', structured=structured)
            reference = build_form_data(small_basis, shift_traces, quadrature='midpoint', structured=structured)
            for name in ('C', 'P', 'kinetic', 'B'):
                np.testing.assert_array_equal(getattr(forms, name), getattr(reference, name))
