import numpy as np
import pytest

from gaitkit.ingest import align_streams, lowpass_fir
from gaitkit.synth import generate_subject, generate_walk


@pytest.fixture(scope="session")
def walk():
    """One 40 s synthetic walk (identity rotation) and its ground truth."""
    prof = generate_subject(3)
    rec, gt = generate_walk(prof, 40.0, session_seed=1)
    return prof, rec, gt


@pytest.fixture(scope="session")
def uniform_walk(walk):
    _, rec, _ = walk
    accel, gyro = align_streams(rec)
    return lowpass_fir(accel), lowpass_fir(gyro)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _cycles_for(seed, walks, duration):
    from gaitkit.pipeline import PipelineConfig, preprocess_recording
    from gaitkit.synth import random_rotation
    prof = generate_subject(seed)
    out = []
    for w in range(walks):
        rot = random_rotation(np.random.default_rng([seed, w]))
        rec, _ = generate_walk(prof, duration, rotation=rot, session_seed=w)
        out.extend(preprocess_recording(rec, PipelineConfig()).cycles)
    return out


@pytest.fixture(scope="session")
def cycle_sets():
    """Preprocessed synthetic cycles: CNN-training subjects and unseen subjects."""
    train = {s: _cycles_for(s, 2, 60.0) for s in range(100, 105)}
    unseen = {s: _cycles_for(s, 2, 60.0) for s in range(200, 203)}
    return train, unseen


@pytest.fixture(scope="session")
def small_cnn(cycle_sets):
    """A quickly trained, reduced-width network over the five training subjects."""
    from gaitkit.cnn import CnnArchitecture, TrainConfig, split_dataset, train
    cycles = [c for v in cycle_sets[0].values() for c in v]
    tr, va, _, names = split_dataset(cycles, n_train=40, n_test=20, val_fraction=0.2, seed=0)
    arch = CnnArchitecture(8, 200, q1=4, q2=8, features=12, classes=len(names))
    return train(tr, va, arch, TrainConfig(max_epochs=15, seed=0), names)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, printed in the run summary."""
    def report(label, ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
