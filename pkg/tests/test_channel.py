import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmsense.channel import (
    MODULATION_TABLE,
    TABLE1_RANGES,
    Carrier,
    ChannelModel,
    Locality,
    Modulation,
    SwarmGeometry,
    Transducer,
    builtin_channels,
    classify_range,
    get_channel,
    load_channel_overrides,
    local_comm_radius,
    max_range,
    modulation_range,
    parse_band,
    path_loss,
    received_intensity,
)
from swarmsense.errors import ConfigError, UnknownChannel, UnknownCombination

# Reference ranges in meters, as tabulated for the eight channels.
REFERENCE_RANGES = {
    "sonar-30kHz": 300.0,
    "radio-100kHz": 100.0,
    "radio-1MHz": 25.0,
    "radio-100MHz": 2.5,
    "ir-unmodulated": 0.25,
    "ir-pcm": 0.5,
    "blue": 1.2,
    "efield-2.5kHz": 1.0,
}


def test_eight_channels_in_table_order():
    assert list(builtin_channels()) == list(REFERENCE_RANGES)
    assert TABLE1_RANGES == REFERENCE_RANGES


@pytest.mark.parametrize("name, rng", sorted(REFERENCE_RANGES.items()))
def test_max_range_exact(name, rng):
    ch = get_channel(name)
    assert max_range(ch) == rng
    assert ch.max_range == rng


def test_path_loss_and_intensity():
    sonar = get_channel("sonar-30kHz")
    assert path_loss(sonar, 100.0) == pytest.approx(30.0)
    assert received_intensity(sonar, sonar.link_budget, 300.0) == pytest.approx(0.0, abs=1e-12)
    blue = get_channel("blue")
    assert received_intensity(blue, 1.2, 1.3) < 0
    with pytest.raises(ValueError):
        path_loss(blue, -1.0)


@given(st.sampled_from(sorted(REFERENCE_RANGES)), st.floats(0, 500), st.floats(0, 500))
def test_intensity_monotone_in_distance(name, d1, d2):
    ch = get_channel(name)
    lo, hi = sorted((d1, d2))
    assert received_intensity(ch, 10.0, lo) >= received_intensity(ch, 10.0, hi)


def test_propagation_speed():
    assert get_channel("sonar-30kHz").propagation_speed == 1500.0
    assert math.isinf(get_channel("blue").propagation_speed)
    assert get_channel("sonar-30kHz").carrier is Carrier.SONAR


def test_only_unmodulated_ir_is_analog():
    assert [n for n, c in builtin_channels().items() if c.analog] == ["ir-unmodulated"]


def test_unknown_channel():
    with pytest.raises(UnknownChannel):
        get_channel("xray")


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel("bad", "optical", 1.0, "nm", 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ChannelModel("bad", "optical", 1.0, "nm", 1.0, -1.0, 0.1)


@pytest.mark.parametrize(
    "text, value, unit",
    [("30 kHz", 30e3, "Hz"), ("100MHz", 100e6, "Hz"), ("460 nm", 460.0, "nm"), ("2.5 kHz", 2500.0, "Hz")],
)
def test_parse_band(text, value, unit):
    v, u = parse_band(text)
    assert v == pytest.approx(value)
    assert u == unit


def test_parse_band_rejects_garbage():
    with pytest.raises(ValueError):
        parse_band("loud")


def test_overrides_merge_and_validate(tmp_path):
    p = tmp_path / "ch.toml"
    p.write_text(
        '[[channel]]\nname = "green"\ncarrier = "optical"\nfrequency = "520 nm"\n'
        "attenuation_db_per_m = 2.0\nrange_m = 0.8\n"
    )
    chans = load_channel_overrides(p)
    assert len(chans) == 9
    assert chans["green"].max_range == pytest.approx(0.8)
    bad = tmp_path / "bad.toml"
    bad.write_text('[[channel]]\nname = "x"\ncolour = "red"\n')
    with pytest.raises(ConfigError) as exc:
        load_channel_overrides(bad)
    assert any("colour" in p for p in exc.value.problems)
    assert any("range_m: missing" in p for p in exc.value.problems)


# oracle values computed at 30 significant digits with mpmath
@pytest.mark.parametrize(
    "volume, count, expected",
    [(5.0, 20, 0.39079632089838601476), (2.0, 50, 0.21215688358941104877), (4.18879, 1, 0.99999998370361653285)],
)
def test_local_comm_radius(volume, count, expected):
    assert local_comm_radius(volume, count) == pytest.approx(expected, rel=1e-14)


def test_local_comm_radius_rejects_bad_input():
    with pytest.raises(ValueError):
        local_comm_radius(0.0, 5)
    with pytest.raises(ValueError):
        local_comm_radius(1.0, 0)


@given(st.floats(1e-3, 1e3), st.integers(1, 10_000))
def test_comm_radius_fills_volume(volume, count):
    g = SwarmGeometry(volume, count)
    assert g.comm_volume * count == pytest.approx(volume, rel=1e-12)


@given(st.floats(1e-3, 1e3), st.integers(1, 1000))
def test_comm_radius_decreases_with_count(volume, count):
    assert local_comm_radius(volume, count + 1) < local_comm_radius(volume, count)


@pytest.mark.parametrize(
    "radius, label",
    [(0.39, Locality.INTERMEDIATE), (0.5, Locality.LOCAL), (1.2, Locality.LOCAL), (2.0, Locality.INTERMEDIATE), (3.0, Locality.GLOBAL), (300.0, Locality.GLOBAL)],
)
def test_classify_range(radius, label):
    assert classify_range(radius) is label


def test_modulation_table_verbatim():
    assert len(MODULATION_TABLE) == 8
    assert modulation_range("QAM", "blue-LED").comm_range_cm == 120.0
    assert modulation_range(Modulation.QAM, Transducer.BLUE_LED).sensing_band_cm == (7.0, 12.0)
    assert modulation_range("direct", "infrared").comm_range_cm is None
    assert modulation_range("TV-remote", "blue-LED").sensing_band_cm == (3.0, 8.0)
    with pytest.raises(UnknownCombination):
        modulation_range("FSK", "infrared")


def test_blue_qam_entry_matches_blue_channel_range():
    assert modulation_range("QAM", "blue-LED").comm_range_cm / 100 == get_channel("blue").max_range
