import warnings

import numpy as np
import pytest

from phqfusion.adapters import EDAIC_FEATURE_SETS, adapt_external, read_feature_csv
from phqfusion.errors import DataError

PARTICIPANTS = {"300": ("train", 4), "301": ("dev", 12), "302": ("test", 20)}


def write_frames(path, rows, width, rng, extra_header=""):
    path.parent.mkdir(parents=True, exist_ok=True)
    header = extra_header + ",".join(f"f{i}" for i in range(width))
    body = []
    for n in range(rows):
        prefix = f"{n * 0.01:.2f}," if extra_header else ""
        body.append(prefix + ",".join(f"{v:.6f}" for v in rng.normal(size=width)))
    path.write_text(header + "\n" + "\n".join(body) + "\n")


@pytest.fixture
def edaic_root(tmp_path, rng):
    root = tmp_path / "edaic"
    (root / "labels").mkdir(parents=True)
    audio_suffix, video_suffix = EDAIC_FEATURE_SETS["egemaps"]
    for split in ("train", "dev", "test"):
        rows = [f"{pid},{score}" for pid, (s, score) in PARTICIPANTS.items() if s == split]
        (root / "labels" / f"{split}_split.csv").write_text("Participant_ID,PHQ_Score\n" + "\n".join(rows) + "\n")
    for pid in PARTICIPANTS:
        base = root / f"{pid}_P"
        base.mkdir()
        (base / f"{pid}_Transcript.csv").write_text(
            "Start_Time,End_Time,Text,Confidence\n0.0,1.0,i have not been sleeping,0.9\n1.0,2.0,mostly tired,0.8\n")
        write_frames(base / "features" / f"{pid}_{audio_suffix}.csv", 6, 4, rng, extra_header="frameTime,")
        write_frames(base / "features" / f"{pid}_{video_suffix}.csv", 5, 3, rng, extra_header="timestamp,")
    return root


@pytest.fixture
def cmdc_root(tmp_path, rng):
    root = tmp_path / "cmdc"
    root.mkdir()
    lines = ["participant_id,split,score"] + [f"p{i},{s},{sc}" for i, (s, sc) in enumerate(PARTICIPANTS.values())]
    (root / "labels.csv").write_text("\n".join(lines) + "\n")
    for i in range(3):
        base = root / f"p{i}"
        base.mkdir()
        (base / "transcript.txt").write_text("i feel low\nnot much energy\n")
        write_frames(base / "audio.csv", 4, 3, rng)
        write_frames(base / "video.csv", 4, 2, rng)
    return root


def load_quietly(layout, root, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return adapt_external(layout, root, **kw)


def test_edaic_fixture_converts_to_three_samples(edaic_root):
    corpus = load_quietly("edaic", edaic_root)
    assert len(corpus) == 3
    s = corpus.by_id()["301"]
    assert (s.split, s.score, s.instrument) == ("dev", 12, "phq8")
    assert s.transcript.splitlines() == ["i have not been sleeping", "mostly tired"]
    assert s.audio.shape == (6, 4) and s.video.shape == (5, 3)


def test_edaic_warns_on_partial_release(edaic_root):
    with pytest.warns(UserWarning, match="163"):
        adapt_external("edaic", edaic_root)


def test_edaic_score_out_of_range(edaic_root):
    (edaic_root / "labels" / "train_split.csv").write_text("Participant_ID,PHQ_Score\n300,25\n")
    with pytest.raises(DataError, match="outside phq8"):
        load_quietly("edaic", edaic_root)


def test_edaic_fractional_score_rejected(edaic_root):
    (edaic_root / "labels" / "train_split.csv").write_text("Participant_ID,PHQ_Score\n300,4.5\n")
    with pytest.raises(DataError, match="whole number"):
        load_quietly("edaic", edaic_root)


def test_edaic_missing_files_are_all_listed(edaic_root):
    audio_suffix, video_suffix = EDAIC_FEATURE_SETS["egemaps"]
    (edaic_root / "300_P" / "features" / f"300_{audio_suffix}.csv").unlink()
    (edaic_root / "302_P" / "302_Transcript.csv").unlink()
    with pytest.raises(DataError, match="missing files") as info:
        load_quietly("edaic", edaic_root)
    assert f"300_{audio_suffix}.csv" in str(info.value)
    assert "302_Transcript.csv" in str(info.value)


def test_edaic_unknown_participant(edaic_root):
    (edaic_root / "labels" / "test_split.csv").write_text("Participant_ID,PHQ_Score\n302,20\n999,3\n")
    with pytest.raises(DataError, match="unknown participants.*999"):
        load_quietly("edaic", edaic_root)


def test_edaic_feature_set_selector(edaic_root, rng):
    with pytest.raises(DataError, match="missing files"):
        load_quietly("edaic", edaic_root, feature_set="mfcc")
    audio_suffix, _ = EDAIC_FEATURE_SETS["mfcc"]
    for pid in PARTICIPANTS:
        write_frames(edaic_root / f"{pid}_P" / "features" / f"{pid}_{audio_suffix}.csv", 7, 13, rng)
    corpus = load_quietly("edaic", edaic_root, feature_set="mfcc")
    assert corpus.manifest.d_a == 13
    with pytest.raises(DataError, match="unknown E-DAIC feature set"):
        load_quietly("edaic", edaic_root, feature_set="nope")


def test_cmdc_fixture_converts(cmdc_root):
    corpus = adapt_external("cmdc", cmdc_root)
    assert len(corpus) == 3
    assert corpus.manifest.instrument == "phq9"
    assert {s.split for s in corpus.samples} == {"train", "dev", "test"}


def test_cmdc_allows_phq9_top_score(cmdc_root):
    (cmdc_root / "labels.csv").write_text("participant_id,split,score\np0,train,27\np1,dev,1\np2,test,2\n")
    assert adapt_external("cmdc", cmdc_root).by_id()["p0"].score == 27


def test_cmdc_unknown_split(cmdc_root):
    (cmdc_root / "labels.csv").write_text("participant_id,split,score\np0,holdout,3\n")
    with pytest.raises(DataError, match="unknown split"):
        adapt_external("cmdc", cmdc_root)


def test_unknown_layout(tmp_path):
    with pytest.raises(DataError, match="unknown external layout"):
        adapt_external("daic", tmp_path)


def test_missing_root(tmp_path):
    with pytest.raises(DataError, match="not found"):
        adapt_external("cmdc", tmp_path / "absent")


def test_feature_csv_drops_metadata_and_text_columns(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("frame,name,confidence,a,b\n1,x,0.9,1.5,2.5\n2,x,0.8,3.0,4.0\n")
    assert np.array_equal(read_feature_csv(path), np.array([[1.5, 2.5], [3.0, 4.0]]))


def test_feature_csv_without_frames(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b\n")
    with pytest.raises(DataError):
        read_feature_csv(path)
