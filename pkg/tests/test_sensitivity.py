import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdip import (ControlWaveform, DipoleMatrix, ResonantSegment,
                  SampledSegment, SchemaError, StepPolicy, dp_dmu, du_dmu,
                  fd_oracle, population)

from conftest import random_dipole, random_spec


def _mixed_control(rng, horizon=20.0):
    amps = rng.uniform(-0.3, 0.3, size=6)
    return ControlWaveform(horizon, (
        SampledSegment(0.0, 0.5, amps),
        ResonantSegment(4.0, horizon - 5.0, rng.uniform(0.02, 0.15),
                        rng.uniform(0.3, 1.0)),
    ))


class TestAgainstFiniteDifferences:
    def test_ladder_matches_fd(self, ladder3):
        spec, dipole = ladder3
        rng = np.random.default_rng(7)
        wf = _mixed_control(rng)
        sens = dp_dmu(spec, dipole, wf)
        for pair in dipole.support:
            fd = fd_oracle(spec, dipole, wf, pair)
            assert sens[pair] == pytest.approx(fd, abs=5e-9)

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=15)
    def test_random_systems_match_fd(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(2, 5))
        spec = random_spec(rng, dim)
        dipole = random_dipole(rng, dim)
        wf = _mixed_control(rng, horizon=12.0)
        sens = dp_dmu(spec, dipole, wf)
        for pair in dipole.support:
            fd = fd_oracle(spec, dipole, wf, pair)
            scale = max(1.0, abs(fd))
            assert abs(sens[pair] - fd) / scale < 1e-6

    def test_fd_error_shrinks_with_step(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(11))
        exact = dp_dmu(spec, dipole, wf)[(1, 2)]
        errs = [abs(fd_oracle(spec, dipole, wf, (1, 2), h=h) - exact)
                for h in (1e-3, 1e-4, 1e-5)]
        # O(h^2) truncation dominates until roundoff takes over
        assert errs[0] > errs[1]
        assert errs[2] < errs[0]

    def test_fd_oracle_guards(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(0))
        with pytest.raises(SchemaError):
            fd_oracle(spec, dipole, wf, (1, 2), h=0.0)
        with pytest.warns(UserWarning):
            fd_oracle(spec, dipole, wf, (1, 2), h=1e-10)


class TestStructure:
    def test_values_align_with_support(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(3))
        sens = dp_dmu(spec, dipole, wf)
        assert sens.pairs == dipole.support
        assert sens.values.shape == (len(dipole.support),)
        for i, pair in enumerate(sens.pairs):
            assert sens[pair] == sens.values[i]
        with pytest.raises(KeyError):
            sens[(1, 3)]

    def test_population_field_matches_direct_propagation(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(4))
        sens = dp_dmu(spec, dipole, wf)
        assert sens.population == pytest.approx(population(spec, dipole, wf),
                                                abs=1e-13)

    def test_explicit_pairs_subset(self, full3):
        spec, dipole = full3
        wf = _mixed_control(np.random.default_rng(5))
        sens = dp_dmu(spec, dipole, wf, pairs=[(1, 3)])
        assert sens.pairs == ((1, 3),)
        full = dp_dmu(spec, dipole, wf)
        assert sens[(1, 3)] == pytest.approx(full[(1, 3)], abs=1e-13)

    def test_bad_pair_rejected(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(6))
        with pytest.raises(SchemaError):
            dp_dmu(spec, dipole, wf, pairs=[(1, 9)])

    def test_stronger_dipole_weaker_field_cancels(self, ladder3):
        # the dynamics only sees field * (dipole scale / energy scale), so
        # doubling the physical dipole while halving the drive changes nothing
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(10))
        doubled = DipoleMatrix.from_normalized(dipole.matrix, 2 * dipole.scale)
        halved_segs = []
        for seg in wf.segments:
            if isinstance(seg, SampledSegment):
                halved_segs.append(
                    SampledSegment(seg.start, seg.dt, seg.amplitudes / 2))
            else:
                halved_segs.append(
                    ResonantSegment(seg.start, seg.duration,
                                    seg.amplitude / 2, seg.frequency))
        halved = ControlWaveform(wf.horizon, tuple(halved_segs))
        base = dp_dmu(spec, dipole, wf)
        traded = dp_dmu(spec, doubled, halved)
        np.testing.assert_allclose(traded.values, base.values, atol=1e-14)
        assert traded.population == pytest.approx(base.population, abs=1e-14)


class TestBreakpoints:
    def test_chaining_matches_single_pass(self, ladder3):
        spec, dipole = ladder3
        wf = ControlWaveform(20.0, (
            SampledSegment(0.0, 0.5, np.array([0.2, -0.1, 0.3])),
            ResonantSegment(4.0, 12.0, 0.08, 0.6),
        ))
        direct = dp_dmu(spec, dipole, wf)
        # segment edges are always on the lattice
        split = dp_dmu(spec, dipole, wf, breakpoints=[1.5, 4.0, 16.0])
        np.testing.assert_allclose(split.values, direct.values, atol=1e-12)
        assert split.population == pytest.approx(direct.population, abs=1e-13)

    def test_breakpoints_outside_horizon_rejected(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(8))
        with pytest.raises(SchemaError):
            dp_dmu(spec, dipole, wf, breakpoints=[-1.0])
        with pytest.raises(SchemaError):
            dp_dmu(spec, dipole, wf, breakpoints=[wf.horizon + 1.0])


class TestPropagatorDerivative:
    def test_du_dmu_matches_fd_on_propagator(self, ladder3):
        spec, dipole = ladder3
        wf = _mixed_control(np.random.default_rng(9), horizon=10.0)
        pair = (2, 3)
        du = du_dmu(spec, dipole, wf, pair)
        h = 1e-6
        from qdip import propagator
        ms = []
        for sign in (+1.0, -1.0):
            vals = dipole.support_values()
            idx = dipole.support.index(pair)
            vals = np.array(vals)
            vals[idx] += sign * h
            ms.append(propagator(spec, dipole.with_support_entries(vals), wf).matrix)
        fd = (ms[0] - ms[1]) / (2 * h)
        np.testing.assert_allclose(du, fd, atol=1e-7)
