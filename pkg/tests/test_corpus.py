import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import naive_dft
from spkcount import corpus
from spkcount.corpus import (
    ClassLabel,
    CorpusError,
    DatasetConfig,
    DatasetManifest,
    build_dataset,
    build_split,
    energy_vad,
    label_segment,
    mix_sources,
    relabel,
    render_entry,
    sir_gains,
    synth_noise,
    synth_voice,
)
from spkcount.dsp import AudioSegment, samples_for_frames, write_wav


def test_class_label_values():
    assert [int(c) for c in ClassLabel] == [0, 1, 2, 3]


# ------------------------------------------------------------------ mixing


def test_single_source_unchanged(rng):
    x = rng.uniform(-0.5, 0.5, 500)
    np.testing.assert_array_equal(mix_sources([x], []).samples, x)


def test_equal_power_0db_gain_is_one(rng):
    a = rng.standard_normal(1000)
    b = rng.permutation(a)  # same power
    assert sir_gains([a, b], [0.0]) == pytest.approx([1.0, 1.0], rel=1e-12)


def test_equal_power_5db_gain_and_measured_ratio(rng):
    a = rng.standard_normal(4000) * 0.1
    b = rng.permutation(a)
    g = sir_gains([a, b], [5.0])
    assert g[1] == pytest.approx(10 ** (-5 / 20), rel=1e-12)
    assert g[1] == pytest.approx(0.5623, abs=1e-4)
    measured = 10 * math.log10(np.sum(a**2) / np.sum((g[1] * b) ** 2))
    assert measured == pytest.approx(5.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 3), st.integers(0, 2**31))
def test_sir_contract_holds(n_src, seed):
    r = np.random.default_rng(seed)
    srcs = [r.standard_normal(800) * r.uniform(0.01, 1) for _ in range(n_src)]
    sir = r.uniform(0, 5, n_src - 1)
    g = sir_gains(srcs, sir)
    for i in range(1, n_src):
        measured = 10 * math.log10(np.mean(srcs[0] ** 2) / np.mean((g[i] * srcs[i]) ** 2))
        assert abs(measured - sir[i - 1]) < 1e-6


def test_mix_peak_normalised_only_when_clipping(rng):
    a = np.full(100, 0.9)
    b = np.full(100, 0.9)
    out = mix_sources([a, b], [0.0]).samples
    assert np.max(np.abs(out)) == pytest.approx(1.0)
    quiet = mix_sources([a * 0.1, b * 0.1], [0.0]).samples
    np.testing.assert_allclose(quiet, 0.18)


@pytest.mark.parametrize("srcs,sir", [
    ([np.ones(10), np.ones(11)], [0.0]),
    ([np.ones(10), np.zeros(10)], [0.0]),
    ([np.zeros(10), np.ones(10)], [0.0]),
    ([np.ones(10), np.ones(10)], []),
    ([], []),
])
def test_mix_errors(srcs, sir):
    with pytest.raises(CorpusError):
        mix_sources(srcs, sir)


# ---------------------------------------------------------------- activity


def test_vad_silence_all_inactive():
    assert not energy_vad(np.zeros(3440)).any()


def test_vad_constant_tone_all_active():
    t = np.arange(3440) / 16000
    assert energy_vad(np.sin(2 * np.pi * 500 * t)).all()


def test_vad_half_tone_against_loop_oracle():
    n = 3440
    t = np.arange(n) / 16000
    x = np.where(np.arange(n) < n // 2, np.sin(2 * np.pi * 500 * t), 0.0)
    mask = energy_vad(x)
    # brute-force frame energies
    energies = []
    i = 0
    while i + 400 <= n:
        energies.append(sum(float(v) * float(v) for v in x[i : i + 400]))
        i += 160
    thr = max(energies) * 10 ** (-30 / 10)
    np.testing.assert_array_equal(mask, [e > thr for e in energies])
    for k in range(len(mask)):
        lo, hi = k * 160, k * 160 + 400
        if hi <= n // 2:
            assert mask[k], "frame fully inside the tone must be active"
        if lo >= n // 2:
            assert not mask[k], "frame fully inside the silence must be inactive"


def test_vad_requires_negative_threshold():
    with pytest.raises(ValueError):
        energy_vad(np.ones(400), rel_threshold_db=0.0)


def test_vad_short_input_empty_mask():
    assert energy_vad(np.ones(100)).shape == (0,)


def test_label_all_inactive():
    assert label_segment([np.zeros(20, bool)] * 3, 5) is ClassLabel.NON_SPEECH


def test_label_counts_sufficient_sources():
    on, off = np.ones(20, bool), np.zeros(20, bool)
    assert label_segment([on, off, on], 5) is ClassLabel.TWO_SPEAKERS


def test_label_threshold_boundary():
    on = np.ones(20, bool)
    short = np.zeros(20, bool)
    short[:4] = True
    assert label_segment([on, short, on], 5) is ClassLabel.TWO_SPEAKERS
    short[4] = True
    assert label_segment([on, short, on], 5) is ClassLabel.THREE_SPEAKERS


@given(st.lists(st.lists(st.booleans(), min_size=10, max_size=10), min_size=0, max_size=4),
       st.integers(1, 10), st.randoms())
def test_label_permutation_invariant(masks, k, random):
    shuffled = masks[:]
    random.shuffle(shuffled)
    assert label_segment(masks, k) == label_segment(shuffled, k)


# ---------------------------------------------------------------- synthesis


def test_voice_deterministic():
    a = synth_voice(150.0, 40, seed=7).samples
    b = synth_voice(150.0, 40, seed=7).samples
    assert a.tobytes() == b.tobytes()


def test_voice_f0_peak():
    x = synth_voice(120.0, 100, seed=3).samples
    energies = [np.sum(x[i : i + 512] ** 2) for i in range(0, len(x) - 512, 160)]
    start = int(np.argmax(energies)) * 160
    mag = np.abs(naive_dft(x[start : start + 512], 512))
    peak = int(np.argmax(mag[1:])) + 1
    assert abs(peak - 120 * 512 / 16000) <= 2


def test_voice_seeds_decorrelated():
    a = synth_voice(150.0, 60, seed=1).samples
    b = synth_voice(150.0, 60, seed=2).samples
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.5


def test_voice_has_gaps_and_bounded():
    x = synth_voice(200.0, 300, seed=11).samples
    assert len(x) == samples_for_frames(300)
    assert np.max(np.abs(x)) <= 0.5 + 1e-12
    assert not energy_vad(x).all()


def test_voice_f0_range():
    with pytest.raises(ValueError):
        synth_voice(50.0, 20, 0)


def test_noise_peak():
    x = synth_noise(20, seed=0).samples
    assert np.max(np.abs(x)) == pytest.approx(1.0)


# ------------------------------------------------------------------ dataset


MINI = DatasetConfig(train_per_class=3, cv_per_class=2, test_per_class=2, seed=5)


@pytest.fixture(scope="module")
def mini():
    return build_dataset(MINI)


def test_default_counts_match_table():
    cfg = DatasetConfig()
    assert [cfg.per_class(s) for s in ("train", "cv", "test")] == [5000, 500, 500]


def test_scaled_counts():
    cfg = DatasetConfig().scaled(0.01)
    assert [cfg.per_class(s) for s in ("train", "cv", "test")] == [50, 5, 5]


def test_balanced(mini):
    assert mini["train"].counts == {0: 3, 1: 3, 2: 3, 3: 3}
    assert mini["test"].counts == {0: 2, 1: 2, 2: 2, 3: 2}


def test_deterministic(mini):
    again = build_dataset(MINI)
    for s in mini:
        assert again[s].checksum() == mini[s].checksum()


def test_labels_rederivable(mini):
    for m in mini.values():
        for e in m:
            if e.label == 0:
                assert e.mix.sources == ()
                assert e.noise is not None
            else:
                assert relabel(e, MINI) == e.label
                assert len(e.mix.sir_db) == len(e.mix.sources) - 1
                assert all(0 <= s <= 5 for s in e.mix.sir_db)


def test_rendered_length_and_range(mini):
    for e in mini["train"]:
        mix, _ = render_entry(e)
        assert len(mix) == samples_for_frames(20)
        assert np.max(np.abs(mix.samples)) <= 1.0


def test_manifest_round_trip(tmp_path, mini):
    p = tmp_path / "train.jsonl"
    mini["train"].save(p)
    back = DatasetManifest.load(p)
    assert back.entries == mini["train"].entries
    assert back.checksum() == mini["train"].checksum()


def test_malformed_manifest(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "x"}\n')
    with pytest.raises(CorpusError):
        DatasetManifest.load(p)


def test_unobtainable_class_with_too_few_files(tmp_path):
    t = np.arange(16000) / 16000
    for i in range(2):
        write_wav(tmp_path / f"s{i}.wav", AudioSegment(0.3 * np.sin(2 * np.pi * (200 + 50 * i) * t)))
    cfg = DatasetConfig(train_per_class=1, cv_per_class=1, test_per_class=1, source_dir=str(tmp_path))
    with pytest.raises(CorpusError, match="3 distinct sources"):
        build_split(cfg, "train")
    ok = build_split(DatasetConfig(train_per_class=2, classes=(0, 1, 2), source_dir=str(tmp_path)), "train")
    assert ok.counts == {0: 2, 1: 2, 2: 2, 3: 0}


def test_bad_classes():
    with pytest.raises(ValueError):
        DatasetConfig(classes=(0, 4))


def test_featurize_shape(mini):
    x = corpus.featurize_manifest(mini["cv"])
    assert x.shape == (8, 20, 40)
