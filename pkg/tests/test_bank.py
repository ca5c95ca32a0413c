import json

import pytest

from restoragent.bank import Chunk, Insight, InsightBank, chunk_insight
from restoragent.core import RestorationTask
from restoragent.errors import InvalidParam, StorageError


def make_insight(i=1, **kw):
    defaults = dict(
        insight_id=i,
        degradation_info="dense haze over the scene",
        tool_id="dcp_dehaze",
        subjective_eval="haze removed, colors recovered",
        verdict=1,
        task=RestorationTask.Dehaze,
        timestamp=1700000000.0,
        objective_delta=0.42,
    )
    defaults.update(kw)
    return Insight(**defaults)


def test_append_to_empty_bank(tmp_path):
    bank = InsightBank(tmp_path / "b.jsonl")
    assert bank.append_insight(make_insight(1)) == 1
    assert len(bank) == 1


def test_append_monotone_ids(tmp_path):
    bank = InsightBank(tmp_path / "b.jsonl")
    for i in range(1, 6):
        assert bank.append_insight(make_insight(i, tool_id=f"t{i}")) == i
    assert [ins.insight_id for ins in bank.insights] == [1, 2, 3, 4, 5]


def test_wrong_id_rejected(tmp_path):
    bank = InsightBank(tmp_path / "b.jsonl")
    with pytest.raises(InvalidParam):
        bank.append_insight(make_insight(7))


def test_reload_round_trip(tmp_path):
    path = tmp_path / "b.jsonl"
    bank = InsightBank(path)
    original = make_insight(1)
    bank.append_insight(original)
    bank.record(
        degradation_info="noise",
        tool_id="bilateral_denoise",
        subjective_eval="",
        verdict=0,
        task=RestorationTask.Denoise,
        timestamp=1.5,
        objective_delta=-0.1,
    )
    reloaded = InsightBank(path)
    assert len(reloaded) == 2
    assert reloaded.insights[0] == original
    assert reloaded.insights[1] == bank.insights[1]


def test_corrupt_line_raises(tmp_path):
    path = tmp_path / "b.jsonl"
    path.write_text('{"not": "an insight"}\n')
    with pytest.raises(StorageError):
        InsightBank(path)


def test_verdict_validated():
    with pytest.raises(InvalidParam):
        make_insight(1, verdict=2)


def test_filter_by_task_empty():
    bank = InsightBank()
    assert bank.filter_by_task(RestorationTask.Dehaze) == []


def test_filter_by_task_ordering(tmp_path):
    bank = InsightBank(tmp_path / "b.jsonl")
    tasks = [
        RestorationTask.Dehaze,
        RestorationTask.Denoise,
        RestorationTask.Dehaze,
        RestorationTask.Denoise,
        RestorationTask.Dehaze,
    ]
    for i, task in enumerate(tasks, 1):
        bank.append_insight(make_insight(i, task=task))
    dehaze = bank.filter_by_task(RestorationTask.Dehaze)
    assert [ins.insight_id for ins in dehaze] == [1, 3, 5]
    assert bank.filter_by_task(RestorationTask.Derain) == []


def test_chunk_small_insight_single_chunk():
    ins = make_insight(1)
    chunks = chunk_insight(ins, max_chunk_chars=512, overlap_chars=0)
    assert len(chunks) == 1
    assert chunks[0].text == ins.canonical_text()
    assert chunks[0].chunk_id == (1, 0)


def test_chunk_boundary_rule_oracle():
    # canonical text of exactly 1000 chars built from ten-char sentences
    sentence = "aaaaaaaaa."  # 10 chars ending in a boundary
    prefix = "DEGRADATION: "
    body_len = 1000 - len(prefix) - len("\nTOOL: t\nEVAL: e\nVERDICT: 1")
    n_sentences = body_len // 10
    filler = sentence * n_sentences + "x" * (body_len - n_sentences * 10)
    ins = make_insight(1, degradation_info=filler, tool_id="t", subjective_eval="e")
    text = ins.canonical_text()
    assert len(text) == 1000
    chunks = chunk_insight(ins, max_chunk_chars=512, overlap_chars=0)
    assert len(chunks) == 2
    # split lands just after the last boundary char at or before 512
    split = max(i for i in range(512) if text[i] in ".!?\n") + 1
    assert chunks[0].text == text[:split]
    assert chunks[1].text == text[split:]


def test_chunk_empty_eval():
    ins = make_insight(1, subjective_eval="")
    chunks = chunk_insight(ins)
    assert len(chunks) == 1
    assert "EVAL: \n" in chunks[0].text + "\n"


def test_chunk_overlap_reconstruction():
    ins = make_insight(1, degradation_info="sentence one. " * 80)
    max_chars, overlap = 128, 32
    chunks = chunk_insight(ins, max_chunk_chars=max_chars, overlap_chars=overlap)
    assert len(chunks) >= 2
    assert all(len(c.text) <= max_chars for c in chunks)
    # dropping each chunk's leading overlap reconstructs the canonical text
    rebuilt = chunks[0].text
    for c in chunks[1:]:
        rebuilt += c.text[overlap:]
    assert rebuilt == ins.canonical_text()


def test_chunk_param_validation():
    ins = make_insight(1)
    with pytest.raises(InvalidParam):
        chunk_insight(ins, max_chunk_chars=32)
    with pytest.raises(InvalidParam):
        chunk_insight(ins, max_chunk_chars=128, overlap_chars=128)


def test_chunking_deterministic_and_total():
    for length in (10, 100, 600, 2000):
        ins = make_insight(1, degradation_info="x" * length)
        a = chunk_insight(ins, max_chunk_chars=256, overlap_chars=16)
        b = chunk_insight(ins, max_chunk_chars=256, overlap_chars=16)
        assert a == b
        assert len(a) >= 1
        assert all(len(c.text) <= 256 for c in a)


def test_jsonl_is_one_object_per_line(tmp_path):
    path = tmp_path / "b.jsonl"
    bank = InsightBank(path)
    bank.append_insight(make_insight(1))
    lines = path.read_text().strip().split("\n")
    assert len(lines) == 1
    obj = json.loads(lines[0])
    assert obj["insight_id"] == 1 and obj["task"] == int(RestorationTask.Dehaze)
