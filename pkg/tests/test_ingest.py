import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitkit.errors import InsufficientDataError, ParameterError, ParseError, ValidationError
from gaitkit.ingest import (Recording, UniformSignal, design_lowpass, lowpass_fir, parse_recording,
                            resample_uniform, welch_psd, write_recording)

HEADER = "#gaitkit-rec v1 subject=s1 session=a\n"


def _amplitude(x, f, rate):
    t = np.arange(len(x)) / rate
    basis = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
    return np.hypot(*coef)


def _stream(t, fn):
    t = np.asarray(t, dtype=float)
    vals = fn(t)
    return np.column_stack([t, vals, 2 * vals, -vals])


# -- parsing --------------------------------------------------------------------

def test_parse_minimal():
    rec = parse_recording(HEADER + "A,0.000,0.1,0.2,9.8\nG,0.001,0.01,0.02,0.03\n")
    assert rec.accel.shape == (1, 4) and rec.gyro.shape == (1, 4)
    assert rec.subject_id == "s1" and rec.session_id == "a"
    np.testing.assert_array_equal(rec.accel[0], [0.0, 0.1, 0.2, 9.8])
    assert rec.gyro[0, 0] == pytest.approx(0.001)


def test_parse_normalises_time_origin():
    rec = parse_recording(HEADER + "G,5.000000,0,0,0\nA,5.002000,0,0,1\n")
    assert rec.gyro[0, 0] == 0.0
    assert rec.accel[0, 0] == pytest.approx(0.002)


def test_parse_malformed_field_names_line():
    # the header is line 1, so the first sample is line 2
    with pytest.raises(ParseError) as exc:
        parse_recording(HEADER + "A,0.002,x,0,0\n")
    assert exc.value.line == 2
    assert "line 2" in str(exc.value)


@pytest.mark.parametrize("body,line", [
    ("A,0.0,1,2\n", 2),
    ("A,0.0,1,2,3\nX,0.1,1,2,3\n", 3),
    ("A,0.0,1,2,3\nG,0.1,1,nan,3\n", 3),
])
def test_parse_errors(body, line):
    with pytest.raises(ParseError) as exc:
        parse_recording(HEADER + body)
    assert exc.value.line == line


@pytest.mark.parametrize("header", ["", "#gaitkit-rec v2 subject=a session=b", "#gaitkit-rec v1 subject=a",
                                    "gaitkit-rec v1 subject=a session=b"])
def test_parse_bad_header(header):
    with pytest.raises(ParseError) as exc:
        parse_recording(header + "\nA,0.0,1,2,3\n")
    assert exc.value.line == 1


def test_parse_non_monotone():
    with pytest.raises(ValidationError, match="strictly increasing"):
        parse_recording(HEADER + "A,0.010,0,0,1\nA,0.005,0,0,1\nG,0.0,0,0,0\n")


def test_parse_needs_both_streams():
    with pytest.raises(ValidationError):
        parse_recording(HEADER + "A,0.0,0,0,1\n")


def test_recording_rate_bounds():
    t = np.arange(100) / 20.0   # 20 Hz
    with pytest.raises(ValidationError, match="sample rate"):
        Recording("a", "b", _stream(t, np.sin), _stream(t, np.sin))


def test_round_trip_synth_walk(walk):
    _, rec, _ = walk
    text = write_recording(rec)
    back = parse_recording(text)
    assert back == rec
    assert write_recording(back) == text


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False, width=64), min_size=4, max_size=4),
       st.floats(1e-6, 10.0))
def test_round_trip_arbitrary_values(vals, dt):
    t = np.array([0.0, dt])
    dt_ok = np.diff(np.round(t, 6)) > 0
    if not dt_ok.all():
        return
    a = np.column_stack([np.round(t, 6), [vals[0]] * 2, [vals[1]] * 2, [vals[2]] * 2])
    g = np.column_stack([np.round(t, 6), [vals[3]] * 2, [0.0] * 2, [-vals[3]] * 2])
    try:
        rec = Recording("p", "q", a, g)
    except ValidationError:
        return   # rate outside the plausible band
    assert parse_recording(write_recording(rec)) == rec


# -- resampling -----------------------------------------------------------------

def test_resample_uniform_identity():
    t = np.arange(400) / 200.0
    s = _stream(t, lambda x: np.sin(3 * x) + x ** 2)
    u = resample_uniform(s, 200.0)
    np.testing.assert_allclose(u.data, s[:, 1:].T, atol=1e-9)


def test_resample_linear_ramp(rng):
    t = np.cumsum(rng.uniform(0.004, 0.009, 300))
    s = _stream(t, lambda x: 3.0 * x - 1.0)
    u = resample_uniform(s, 200.0)
    np.testing.assert_allclose(u.data[0], 3.0 * u.times - 1.0, atol=1e-9)


def test_resample_jittered_sine(rng):
    dt = 1 / 150.0
    t = np.arange(0, 5, dt) + rng.uniform(-0.2, 0.2, int(np.ceil(5 / dt))) * dt
    t = np.sort(t)
    s = _stream(t, lambda x: np.sin(2 * np.pi * 3 * x))
    u = resample_uniform(s, 200.0)
    err = np.abs(u.data[0] - np.sin(2 * np.pi * 3 * u.times))
    assert err.max() < 1e-3
    assert u.rate_hz == 200.0
    np.testing.assert_allclose(np.diff(u.times), 1 / 200.0)


@pytest.mark.parametrize("coef", [(1.0, 0, 0, 0), (0.5, -2.0, 0, 0), (0, 1.0, -3.0, 0), (0.2, 0.1, -0.4, 0.7)])
def test_resample_exact_on_cubics(coef, rng):
    t = np.sort(rng.uniform(0, 2, 200))
    poly = np.polynomial.Polynomial(coef)
    u = resample_uniform(_stream(t, poly), 200.0)
    assert np.max(np.abs(u.data[0] - poly(u.times))) < 1e-9


def test_resample_too_short():
    with pytest.raises(InsufficientDataError):
        resample_uniform(_stream([0, 0.01, 0.02], np.sin), 200.0)


def test_resample_passes_through_knots(rng):
    t = np.cumsum(rng.uniform(0.002, 0.01, 50))
    s = _stream(t, np.cos)
    u = resample_uniform(s, 200.0)
    from scipy.interpolate import CubicSpline
    np.testing.assert_allclose(CubicSpline(t, s[:, 1])(t), s[:, 1], atol=1e-12)
    assert u.t0 == t[0]


# -- filtering ------------------------------------------------------------------

def _sig(x, rate=200.0):
    x = np.atleast_2d(x)
    return UniformSignal(rate, np.vstack([x, x, x])[:3])


def test_fir_dc_gain():
    out = lowpass_fir(_sig(np.full(1000, 7.25)))
    np.testing.assert_allclose(out.data, 7.25, atol=1e-12)


def test_fir_passband():
    t = np.arange(4000) / 200.0
    out = lowpass_fir(_sig(np.sin(2 * np.pi * 5 * t)))
    amp = _amplitude(out.data[0, 200:-200], 5, 200.0)
    assert abs(20 * np.log10(amp)) < 0.1


def test_fir_stopband():
    t = np.arange(4000) / 200.0
    out = lowpass_fir(_sig(np.sin(2 * np.pi * 80 * t)))
    amp = _amplitude(out.data[0, 200:-200], 80, 200.0)
    assert 20 * np.log10(amp) <= -40


def test_fir_design_stopband_response():
    from scipy.signal import freqz
    taps = design_lowpass(40.0, 200.0)
    assert len(taps) == 101
    w, h = freqz(taps, worN=4096, fs=200.0)
    assert np.max(np.abs(h[w >= 50.0])) <= 10 ** (-40 / 20)


def test_fir_zero_phase():
    t = np.arange(2000) / 200.0
    x = np.sin(2 * np.pi * 2 * t)
    out = lowpass_fir(_sig(x))
    np.testing.assert_allclose(out.data[0, 300:-300], x[300:-300], atol=2e-3)
    # zero phase: the output peaks where the input does
    assert np.argmax(out.data[0, :100]) == np.argmax(x[:100])


def test_fir_cutoff_above_nyquist():
    with pytest.raises(ParameterError):
        lowpass_fir(_sig(np.zeros(500)), cutoff_hz=100.0)


def test_fir_linear(rng):
    u, v = rng.standard_normal((2, 3, 800))
    a, b = 1.7, -0.3
    f = lambda x: lowpass_fir(UniformSignal(200.0, x)).data  # noqa: E731
    np.testing.assert_allclose(f(a * u + b * v), a * f(u) + b * f(v), atol=1e-9)


# -- spectra --------------------------------------------------------------------

def test_welch_tone_peak():
    t = np.arange(2000) / 200.0
    psd = welch_psd(_sig(np.sin(2 * np.pi * 5 * t)))
    assert psd.freqs_hz[np.argmax(psd.power_db[0])] == pytest.approx(5.0)
    assert psd.freqs_hz[0] == 0 and psd.freqs_hz[-1] == 100.0
    assert np.all(np.diff(psd.freqs_hz) > 0)


def test_welch_white_noise_flat(rng):
    x = rng.standard_normal((3, 60 * 200))
    psd = welch_psd(UniformSignal(200.0, x))
    band = (psd.freqs_hz >= 1) & (psd.freqs_hz <= 90)
    p = psd.power_db[:, band]
    level = 10 * np.log10(2 / 200.0)   # one-sided density of unit-variance noise
    assert np.all(np.abs(p - level) <= 3.0)


def test_welch_parseval(rng):
    x = rng.standard_normal((3, 30 * 200)) * np.array([[1.0], [2.0], [0.5]])
    psd = welch_psd(UniformSignal(200.0, x))
    df = psd.freqs_hz[1] - psd.freqs_hz[0]
    total = psd.linear().sum(axis=1) * df
    np.testing.assert_allclose(total, x.var(axis=1), rtol=0.1)


def test_welch_synth_walk_power_below_40hz(walk):
    # the gait itself is band limited; white sensor noise is not, so it is switched off here
    from gaitkit.ingest import align_streams
    from gaitkit.synth import generate_walk
    rec, _ = generate_walk(walk[0], 40.0, session_seed=1, noise_std=0.0)
    accel, _ = align_streams(rec)
    x = accel.data - accel.data.mean(axis=1, keepdims=True)
    psd = welch_psd(UniformSignal(accel.rate_hz, x))
    lin = psd.linear().sum(axis=0)
    assert lin[psd.freqs_hz < 40].sum() / lin.sum() >= 0.99


def test_welch_too_short():
    with pytest.raises(InsufficientDataError):
        welch_psd(_sig(np.zeros(100)))
