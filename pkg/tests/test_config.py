import pytest

from hapticsteer import agents, config
from hapticsteer.config import (ParseError, PRESET_NAMES, driver_alone_config,
                                output_paths, parse_config, preset_config,
                                preset_text, serialize_config)
from hapticsteer.harness import ValidationError


class TestDefaults:
    def test_empty_document_gives_benchmark_defaults(self):
        cfg = parse_config("")
        assert cfg.plant.j_sw == 1e-2
        assert cfg.plant.j_h == 1e-3
        assert cfg.plant.k_t == 1000.0
        assert cfg.plant.ratio == 1.0
        assert cfg.plant.alpha_ba == -1.0
        assert cfg.ocp.np_horizon == 10
        assert cfg.ocp.nc_horizon == 10
        assert cfg.ts == 0.01
        assert cfg.solver.i_max == 12
        assert cfg.solver.delta0 == 0.05
        assert cfg.beta_autopilot == 0.1
        assert cfg.beta_active_safety == 1.0
        assert cfg.duration == 15.0
        assert len(cfg.schedule) == 1
        seg = cfg.schedule[0]
        assert seg.z_h_target == (0.5, 1.0)
        assert seg.cooperation == agents.COOPERATIVE
        assert seg.authority == agents.AUTOPILOT

    def test_intent_defaults(self):
        cfg = parse_config("")
        assert (cfg.intent.t1, cfg.intent.t2, cfg.intent.t3) == (1.0, 5.0, 2.0)
        assert cfg.intent.w_amp == 1.0


class TestOverrides:
    def test_file_key(self):
        cfg = parse_config("[plant]\nk_t = 500\n")
        assert cfg.plant.k_t == 500.0
        default = parse_config("")
        assert cfg.plant.j_sw == default.plant.j_sw

    def test_dotted_override_wins(self):
        cfg = parse_config("[plant]\nk_t = 500\n", overrides=["plant.k_t=750"])
        assert cfg.plant.k_t == 750.0

    def test_override_unknown_key_rejected(self):
        with pytest.raises(ParseError):
            parse_config("", overrides=["plant.mass=1"])

    def test_override_without_dot_rejected(self):
        with pytest.raises(ParseError):
            parse_config("", overrides=["duration=2"])

    def test_override_without_equals_rejected(self):
        with pytest.raises(ParseError):
            parse_config("", overrides=["scenario.duration"])


class TestErrors:
    def test_unknown_section(self):
        with pytest.raises(ParseError):
            parse_config("[vehicle]\nmass = 1\n")

    def test_unknown_key(self):
        with pytest.raises(ParseError):
            parse_config("[plant]\nspring = 1\n")

    def test_bad_float(self):
        with pytest.raises(ParseError):
            parse_config("[plant]\nk_t = soft\n")

    def test_bad_bool(self):
        with pytest.raises(ParseError):
            parse_config("[scenario]\nadaptive = maybe\n")

    def test_syntax_error_reported(self):
        with pytest.raises(ParseError):
            parse_config("plant]\nk_t = 1\n")

    def test_invariant_violation_is_validation_error(self):
        with pytest.raises(ValidationError):
            parse_config("[ocp]\nnp_horizon = 0\n")

    def test_negative_inertia_is_validation_error(self):
        with pytest.raises(ValidationError):
            parse_config("[plant]\nj_sw = -1\n")

    def test_segment_arity(self):
        with pytest.raises(ParseError):
            parse_config("[scenario]\nsegment1 = 0.0, 0.5, cooperative\n")

    def test_segment_bad_mode(self):
        with pytest.raises(ValidationError):
            parse_config("[scenario]\nsegment1 = 0.0, 0.5, 1.0, rival, autopilot\n")

    def test_half_specified_fixed_gains(self):
        with pytest.raises(ValidationError):
            parse_config("[scenario]\nz_a_fixed_b = 0.1\n")


class TestSegments:
    def test_segments_sorted_by_index(self):
        text = ("[scenario]\n"
                "segment2 = 5.0, 0.5, 1.0, uncooperative, autopilot\n"
                "segment1 = 0.0, 0.1, 0.1, cooperative, active_safety\n")
        cfg = parse_config(text)
        assert cfg.schedule[0].t_start == 0.0
        assert cfg.schedule[1].t_start == 5.0

    def test_auto_authority_allowed(self):
        cfg = parse_config("[scenario]\nsegment1 = 0.0, 0.5, 1.0, cooperative, auto\n")
        assert cfg.schedule[0].authority == "auto"


class TestRoundTrip:
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_preset_file_matches_builder(self, name):
        assert parse_config(preset_text(name)) == preset_config(name)

    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_serialize_parse_identity(self, name):
        cfg = preset_config(name)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_round_trip_with_fixed_gains(self):
        cfg = parse_config("[scenario]\nz_a_fixed_b = 0.2\nz_a_fixed_k = 0.4\n"
                           "adaptive = false\n")
        assert parse_config(serialize_config(cfg)) == cfg


class TestPresets:
    def test_names(self):
        assert PRESET_NAMES == ("fig4_uncoop_autopilot", "fig5_uncoop_active",
                                "fig6_coop_autopilot", "fig7_coop_active",
                                "fig8_combined")

    def test_fig4(self):
        cfg = preset_config("fig4_uncoop_autopilot")
        seg = cfg.schedule[0]
        assert seg.z_h_target == (0.5, 1.0)
        assert seg.cooperation == agents.UNCOOPERATIVE
        assert seg.authority == agents.AUTOPILOT
        assert cfg.adaptive

    def test_fig5(self):
        seg = preset_config("fig5_uncoop_active").schedule[0]
        assert seg.z_h_target == (0.1, 0.1)
        assert seg.authority == agents.ACTIVE_SAFETY

    def test_fig8_schedule(self):
        cfg = preset_config("fig8_combined")
        assert cfg.duration == 60.0
        assert [s.t_start for s in cfg.schedule] == [0.0, 15.0, 30.0, 45.0]
        assert [s.cooperation for s in cfg.schedule] == [
            agents.COOPERATIVE, agents.UNCOOPERATIVE, agents.UNCOOPERATIVE,
            agents.COOPERATIVE]
        assert [s.authority for s in cfg.schedule] == [
            agents.ACTIVE_SAFETY, agents.AUTOPILOT, agents.ACTIVE_SAFETY,
            agents.AUTOPILOT]

    def test_unknown_preset(self):
        with pytest.raises(ParseError):
            preset_config("fig9_hyperdrive")
        with pytest.raises(ParseError):
            preset_text("fig9_hyperdrive")


class TestOutputSection:
    def test_paths_surfaced(self):
        out = output_paths("[output]\ncsv = trace.csv\nmetrics = m.txt\n")
        assert out == {"csv": "trace.csv", "metrics": "m.txt"}

    def test_empty_by_default(self):
        assert output_paths("") == {}


class TestDriverAlone:
    def test_shape(self):
        cfg = driver_alone_config(0.3, 0.5)
        assert not cfg.adaptive
        assert cfg.z_a_fixed == (0.1, 0.1)
        assert cfg.automation_intent_scale == 0.0
        assert cfg.schedule[0].z_h_target == (0.3, 0.5)
        assert cfg.duration == 15.0
