import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdip import (ControlWaveform, ResonantSegment, SampledSegment,
                  SchemaError, empty_waveform, load_control, save_control,
                  waveform_from_dict, waveform_to_dict)


class TestSegments:
    def test_sampled_field_is_zero_order_hold(self):
        seg = SampledSegment(1.0, 0.5, np.array([0.2, -0.4, 0.6]))
        assert seg.end == pytest.approx(2.5)
        taus = np.array([0.9, 1.0, 1.2, 1.5, 2.4, 2.5, 3.0])
        np.testing.assert_allclose(seg.field(taus),
                                   [0.0, 0.2, 0.2, -0.4, 0.6, 0.0, 0.0])

    def test_sampled_rejects_bad_input(self):
        with pytest.raises(SchemaError):
            SampledSegment(0.0, 0.0, np.array([1.0]))
        with pytest.raises(SchemaError):
            SampledSegment(0.0, 0.1, np.array([]))
        with pytest.raises(SchemaError):
            SampledSegment(0.0, 0.1, np.array([np.nan]))

    def test_resonant_phase_anchored_at_start(self):
        seg = ResonantSegment(start=3.0, duration=10.0, amplitude=0.5,
                              frequency=2.0)
        # cos starts at its crest at the segment start, not at tau=0
        assert seg.field(3.0) == pytest.approx(0.5)
        assert seg.field(3.0 + np.pi / 2) == pytest.approx(-0.5)
        assert seg.field(2.9) == 0.0
        assert seg.field(13.0) == 0.0

    def test_resonant_rejects_bad_input(self):
        with pytest.raises(SchemaError):
            ResonantSegment(0.0, -1.0, 0.1, 1.0)
        with pytest.raises(SchemaError):
            ResonantSegment(0.0, np.inf, 0.1, 1.0)


class TestControlWaveform:
    def test_field_sums_segments_and_gaps_are_zero(self):
        wf = ControlWaveform(10.0, (
            SampledSegment(0.0, 0.5, np.array([0.3, 0.3])),
            ResonantSegment(2.0, 4.0, 0.1, 5.0),
        ))
        assert wf.field(0.25) == pytest.approx(0.3)
        assert wf.field(1.5) == 0.0
        assert wf.field(2.0) == pytest.approx(0.1)
        assert wf.field(7.0) == 0.0
        assert wf.max_amplitude() == pytest.approx(0.3)

    def test_overlapping_segments_rejected(self):
        with pytest.raises(SchemaError):
            ControlWaveform(10.0, (
                SampledSegment(0.0, 1.0, np.array([0.1, 0.1])),
                SampledSegment(1.5, 1.0, np.array([0.1])),
            ))

    def test_segment_past_horizon_rejected(self):
        with pytest.raises(SchemaError):
            ControlWaveform(1.0, (SampledSegment(0.0, 1.0, np.array([0.1, 0.1])),))

    def test_unknown_segment_type_rejected(self):
        with pytest.raises(SchemaError):
            ControlWaveform(1.0, ("not a segment",))

    def test_padded_to_extends_but_never_shrinks(self):
        wf = ControlWaveform(5.0, (ResonantSegment(0.0, 5.0, 0.1, 1.0),))
        longer = wf.padded_to(8.0)
        assert longer.horizon == pytest.approx(8.0)
        assert longer.segments == wf.segments
        assert longer.field(6.0) == 0.0
        with pytest.raises(SchemaError):
            wf.padded_to(3.0)

    def test_empty_waveform(self):
        wf = empty_waveform(4.0)
        assert wf.field(2.0) == 0.0
        assert wf.max_amplitude() == 0.0
        assert wf.segments == ()


class TestWaveformIO:
    def _sample(self):
        return ControlWaveform(12.0, (
            SampledSegment(0.0, 0.25, np.array([0.1, -0.2, 0.15])),
            ResonantSegment(1.0, 10.0, 0.04, 0.6),
        ))

    def test_dict_round_trip(self):
        wf = self._sample()
        back = waveform_from_dict(waveform_to_dict(wf))
        assert back.horizon == wf.horizon
        assert len(back.segments) == len(wf.segments)
        taus = np.linspace(0.0, 12.0, 500)
        np.testing.assert_allclose(back.field(taus), wf.field(taus))

    def test_file_round_trip(self, tmp_path):
        wf = self._sample()
        path = tmp_path / "control.json"
        save_control(path, wf)
        back = load_control(path)
        taus = np.linspace(0.0, 12.0, 500)
        np.testing.assert_allclose(back.field(taus), wf.field(taus))

    def test_unknown_kind_rejected(self):
        data = waveform_to_dict(self._sample())
        data["segments"][0]["kind"] = "wavelet"
        with pytest.raises(SchemaError):
            waveform_from_dict(data)

    def test_missing_keys_rejected(self):
        with pytest.raises(SchemaError):
            waveform_from_dict({"horizon": 1.0})
        with pytest.raises(SchemaError):
            waveform_from_dict({"segments": []})
        data = waveform_to_dict(self._sample())
        del data["segments"][1]["frequency"]
        with pytest.raises(SchemaError):
            waveform_from_dict(data)

    @given(st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=20),
           st.floats(0.01, 1.0), st.floats(0.0, 3.0))
    def test_sampled_round_trip_preserves_field(self, amps, dt, start):
        seg = SampledSegment(start, dt, np.array(amps))
        wf = ControlWaveform(seg.end + 1.0, (seg,))
        back = waveform_from_dict(waveform_to_dict(wf))
        taus = np.linspace(0.0, wf.horizon, 200)
        np.testing.assert_allclose(back.field(taus), wf.field(taus))
