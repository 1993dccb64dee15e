import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from timeliner.errors import DataError, EmptyFileError, NonFiniteValueError, RaggedRowError
from timeliner.ingest import (
    ClipSeries,
    Corpus,
    RegionChannelMap,
    concatenate_corpus,
    concatenate_with_null,
    load_corpus,
    load_descriptor_csv,
    map_global_to_clip,
    select_region_channels,
)
from timeliner.synth import CHANNELS
from timeliner.timeline import Region


def write(tmp_path, text, name="c.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_small_file(tmp_path):
    p = write(tmp_path, "eyeBlink,eyeSquint,eyeWide\n0.1,0.2,0.3\n0.4,0.5,0.6\n0,0,1\n")
    c = load_descriptor_csv(p, 30)
    assert c.data.shape == (3, 3)
    assert c.channel_names == ("eyeBlink", "eyeSquint", "eyeWide")
    assert c.clip_id == "c"


def test_nan_cell_names_row_and_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,nan\n")
    with pytest.raises(NonFiniteValueError, match="row 2, column b"):
        load_descriptor_csv(p, 30)


@pytest.mark.parametrize(
    "text,err",
    [("", EmptyFileError), ("a,b\n", EmptyFileError), ("a,b\n1,2\n3\n", RaggedRowError), ("a,b\n1,x\n", DataError)],
)
def test_distinct_errors(tmp_path, text, err):
    with pytest.raises(err):
        load_descriptor_csv(write(tmp_path, text), 30)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_descriptor_csv(tmp_path / "nope.csv", 30)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=8),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)))
def test_csv_round_trip_exact(tmp_path_factory, data):
    names = tuple(f"ch{i}" for i in range(data.shape[1]))
    c = ClipSeries("x", 30, names, data)
    p = tmp_path_factory.mktemp("rt") / "x.csv"
    c.to_csv(p)
    back = load_descriptor_csv(p, 30)
    assert np.array_equal(back.data, c.data)
    assert back.channel_names == names


def test_loading_is_deterministic(tmp_path):
    p = write(tmp_path, "a,b\n0.1,0.2\n0.3,0.4\n")
    assert np.array_equal(load_descriptor_csv(p, 30).data, load_descriptor_csv(p, 30).data)


def clip(T=5, seed=0):
    return ClipSeries("c", 30, CHANNELS, np.random.default_rng(seed).random((T, len(CHANNELS))))


def test_default_channels_follow_left_side_lists():
    m = RegionChannelMap()
    assert m[Region.BROW] == ("browDown_L", "browInnerUp", "browOuterUp_L")
    assert m[Region.MOUTH] == ("mouthSmile_L", "mouthStretch_L", "mouthFrown_L")
    c = clip()
    for r in (Region.BROW, Region.EYE, Region.MOUTH):
        assert select_region_channels(c, r).shape == (5, 3)
    brow = select_region_channels(c, Region.BROW)
    assert np.array_equal(brow[:, 0], c.data[:, CHANNELS.index("browDown_L")])


def test_unknown_channel_errors():
    m = RegionChannelMap({Region.BROW: ("browDown_L", "nope")})
    with pytest.raises(DataError):
        select_region_channels(clip(), Region.BROW, m)
    with pytest.raises(DataError):
        m.check(CHANNELS)


def test_channel_map_checks_empty_and_overlap():
    with pytest.raises(DataError):
        RegionChannelMap({Region.BROW: ()}).check(CHANNELS)
    with pytest.raises(DataError):
        RegionChannelMap({Region.BROW: ("eyeSquint_L",), Region.EYE: ("eyeSquint_L",)}).check(CHANNELS)


def test_clip_rejects_inf():
    with pytest.raises(NonFiniteValueError):
        ClipSeries("c", 30, ("a",), np.array([[np.inf]]))


def test_concatenate_layout():
    s = concatenate_with_null([np.zeros((50, 3)), np.ones((60, 3))], 100, -1.0)
    assert s.num_rows == 210
    assert np.flatnonzero(s.null_mask).tolist() == list(range(50, 150))
    assert np.all(s.data[s.null_mask] == -1.0)


def test_single_clip_unchanged():
    x = np.random.default_rng(0).random((7, 2))
    s = concatenate_with_null([x])
    assert np.array_equal(s.data, x)
    assert not s.null_mask.any()


def test_width_mismatch():
    with pytest.raises(DataError):
        concatenate_with_null([np.zeros((3, 2)), np.zeros((3, 3))])


def test_map_global_examples():
    s = concatenate_with_null([np.zeros((50, 1)), np.zeros((60, 1))], 100, clip_ids=["clip0", "clip1"])
    assert map_global_to_clip(s, 0) == ("clip0", 0)
    assert map_global_to_clip(s, 60) is None
    assert map_global_to_clip(s, 151) == ("clip1", 1)
    with pytest.raises(IndexError):
        map_global_to_clip(s, 210)


@given(st.lists(st.integers(1, 20), min_size=1, max_size=5), st.integers(0, 7))
def test_every_clip_frame_recovered_once(lengths, null_len):
    s = concatenate_with_null([np.zeros((n, 1)) for n in lengths], null_len)
    seen = [map_global_to_clip(s, g) for g in range(s.num_rows)]
    real = [x for x in seen if x is not None]
    expected = [(f"clip{i}", f) for i, n in enumerate(lengths) for f in range(n)]
    assert real == expected
    assert seen.count(None) == null_len * (len(lengths) - 1)
    for i in range(len(lengths)):
        assert s.clip_rows(i).stop - s.clip_rows(i).start == lengths[i]


def test_corpus_save_load(tmp_path):
    rng = np.random.default_rng(3)
    clips = [ClipSeries(f"k{i}", 25, CHANNELS, rng.random((10 + i, len(CHANNELS)))) for i in range(3)]
    corpus = Corpus(clips, provenance={"source": "test"})
    back = load_corpus(corpus.save(tmp_path))
    assert [c.clip_id for c in back.clips] == ["k0", "k1", "k2"]
    assert back.fps == 25
    assert all(np.array_equal(a.data, b.data) for a, b in zip(clips, back.clips))
    assert back.provenance == {"source": "test"}
    s = concatenate_corpus(back, ("gaze_x",))
    assert s.data.shape == (33 + 200, 1)


def test_corpus_rejects_mixed_fps():
    a = ClipSeries("a", 30, ("x",), [[0.0]])
    b = ClipSeries("b", 25, ("x",), [[0.0]])
    with pytest.raises(DataError):
        Corpus([a, b])


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError, match="manifest"):
        load_corpus(tmp_path / "manifest.json")
