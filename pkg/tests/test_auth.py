import numpy as np
import pytest

from gaitkit.auth import (authenticate_cycles, authenticate_recording, check_cnn, dumps_profile, enroll,
                          loads_profile)
from gaitkit.cnn import extract_features, init_model
from gaitkit.errors import FormatError, InsufficientDataError, ValidationError
from gaitkit.osvm import score_features
from gaitkit.pipeline import PipelineConfig
from gaitkit.sprt import ACCEPT_H0, ACCEPT_H1
from gaitkit.synth import generate_subject, generate_walk

CFG = PipelineConfig(pca_components=8)


@pytest.fixture(scope="module")
def bank(cycle_sets):
    return [c for v in cycle_sets[0].values() for c in v]


@pytest.fixture(scope="module")
def profile(cycle_sets, small_cnn, bank):
    return enroll(cycle_sets[1][200], small_cnn, bank, CFG)


def test_enroll_too_few(cycle_sets, small_cnn, bank):
    with pytest.raises(InsufficientDataError):
        enroll(cycle_sets[1][200][:9], small_cnn, bank, CFG)
    with pytest.raises(InsufficientDataError):
        enroll(cycle_sets[1][200][:35], small_cnn, bank, CFG)
    with pytest.raises(InsufficientDataError):
        enroll(cycle_sets[1][200], small_cnn, bank[:20], CFG)


def test_profile_contents(profile, small_cnn):
    assert profile.subject == "s200"
    assert profile.osvm.pca is not None and profile.osvm.pca.S == 8
    assert profile.p1.mu > profile.p0.mu
    assert profile.sprt.A < 0 < profile.sprt.B
    check_cnn(small_cnn, profile)


def test_features_separate_unseen_subjects(cycle_sets, small_cnn):
    feats = [extract_features(v[:40], small_cnn) for v in cycle_sets[1].values()]
    intra = np.mean([np.mean(np.linalg.norm(f[:, None] - f[None], axis=-1)) for f in feats])
    inter = np.mean([np.mean(np.linalg.norm(a[:, None] - b[None], axis=-1))
                     for i, a in enumerate(feats) for b in feats[i + 1:]])
    assert intra < inter


def test_authenticate_genuine_and_impostor(profile, small_cnn):
    prof = generate_subject(200)
    rec, _ = generate_walk(prof, 30.0, session_seed=50)
    res, scores = authenticate_recording(rec, small_cnn, profile)
    assert res.decision == ACCEPT_H1 and res.n_used <= profile.sprt.max_cycles
    assert len(res.trace) == res.n_used
    rec, _ = generate_walk(generate_subject(202), 30.0, session_seed=50)
    res, _ = authenticate_recording(rec, small_cnn, profile)
    assert res.decision == ACCEPT_H0


def test_authenticate_errors(profile, small_cnn):
    with pytest.raises(InsufficientDataError):
        authenticate_cycles([], small_cnn, profile)
    rec, _ = generate_walk(generate_subject(200), 5.0)
    short = type(rec)(rec.subject_id, rec.session_id, rec.accel[rec.accel[:, 0] < 2.0],
                      rec.gyro[rec.gyro[:, 0] < 2.0])
    with pytest.raises(InsufficientDataError):
        authenticate_recording(short, small_cnn, profile)


def test_wrong_cnn(profile, small_cnn):
    other = init_model(small_cnn.arch, seed=99, class_names=small_cnn.class_names)
    with pytest.raises(ValidationError):
        check_cnn(other, profile)


def test_profile_round_trip(profile, cycle_sets, small_cnn):
    text = dumps_profile(profile)
    assert text.startswith("#gaitkit-auth v1 subject=s200")
    back = loads_profile(text)
    assert back == profile and dumps_profile(back) == text
    f = extract_features(cycle_sets[1][201][:20], small_cnn)
    np.testing.assert_array_equal(score_features(back.osvm, f), score_features(profile.osvm, f))


def test_kde_profile_round_trip(cycle_sets, small_cnn, bank):
    p = enroll(cycle_sets[1][201], small_cnn, bank, CFG.replace(score_family="kde"))
    assert p.p1.family == "kde"
    text = dumps_profile(p)
    assert loads_profile(text) == p and dumps_profile(loads_profile(text)) == text


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("#gaitkit-auth v1", "#gaitkit-auth v0", 1),
    lambda t: t.replace(" subject=s200", "", 1),
    lambda t: "\n".join(l for l in t.splitlines() if not l.startswith("sprt ")) + "\n",
    lambda t: t.replace("family=gaussian", "family=cauchy", 1),
    lambda t: t.replace("pipeline ", "pipeline bogus=1 ", 1),
])
def test_profile_loader_rejects(profile, mutate):
    with pytest.raises(FormatError):
        loads_profile(mutate(dumps_profile(profile)))
