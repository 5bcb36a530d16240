import json
from collections import Counter

import pytest

from corpus import ParallelCorpus
from errors import CapacityError, CorpusError, ManifestError
from pipeline import (
    ScheduleSpec,
    assemble_multisource,
    build_schedule,
    build_synth_mix1,
    build_synth_mix2,
    build_synth_mono,
    load_manifest,
    parse_manifest,
    run_manifest,
    write_dataset,
)
from translators import FunctionTranslator


def _upper():
    return FunctionTranslator(str.upper, name="upper")


def _reverse():
    return FunctionTranslator(lambda s: " ".join(reversed(s.split())), name="reverse")


# Синтетика
# =====================

def test_synth_mono_pairs(toy_mono):
    synth = build_synth_mono(toy_mono, _upper(), "hat", "mono_eng")
    assert len(synth) == len(toy_mono)
    assert synth.corpus.source_lang == "hat" and synth.corpus.target_lang == "eng"
    assert synth.corpus.sources == [t.upper() for t in toy_mono.texts]
    assert synth.corpus.targets == toy_mono.texts
    assert synth.provenance == "synth_mono"
    assert synth.lineage["source"] == "mono_eng"
    assert synth.lineage["translators"][0]["name"] == "upper"


def test_synth_mix1_pairs(toy_bitext):
    synth = build_synth_mix1(toy_bitext, _upper(), "hat")
    assert synth.corpus.sources == [s.upper() for s in toy_bitext.sources]
    assert synth.corpus.targets == toy_bitext.targets
    assert synth.corpus.source_lang == "hat"
    assert synth.provenance == "synth_mix1"


def test_synth_mix2_composes_translators(toy_mono):
    synth = build_synth_mix2(toy_mono, _reverse(), _upper(), "fra", "hat")
    expected = [" ".join(reversed(t.split())).upper() for t in toy_mono.texts]
    assert synth.corpus.sources == expected
    assert synth.corpus.targets == toy_mono.texts
    assert synth.lineage["pivot"] == "fra"
    assert [t["name"] for t in synth.lineage["translators"]] == ["reverse", "upper"]


# Расписание
# =====================

def _synths(toy_bitext, toy_mono):
    return {
        "synth_mono": build_synth_mono(toy_mono, _upper(), "fra").corpus,
        "synth_mix1": build_synth_mix1(toy_bitext, _reverse(), "fra").corpus,
        "synth_mix2": build_synth_mix2(toy_mono, _reverse(), _upper(), "deu", "fra").corpus,
    }


def _pair_counter(training):
    return Counter((s.text, t.text) for s, t in training.corpus.pairs)


def test_schedule_names_and_sizes(toy_bitext, toy_mono):
    spec = ScheduleSpec("auth", (2, 4, 6), (1, 2, 3))
    sets = build_schedule(spec, toy_bitext, _synths(toy_bitext, toy_mono), seed=5)
    assert len(sets) == 30

    names = [s.name for s in sets[:10]]
    assert names == [
        "auth2",
        "auth2_mono1", "auth2_mono2", "auth2_mono3",
        "auth2_mono3_mix11", "auth2_mono3_mix12", "auth2_mono3_mix13",
        "auth2_mono3_mix13_mix21", "auth2_mono3_mix13_mix22", "auth2_mono3_mix13_mix23",
    ]

    by_name = {s.name: s for s in sets}
    for start in (2, 4, 6):
        assert len(by_name[f"auth{start}"]) == start
        for inc in (1, 2, 3):
            assert len(by_name[f"auth{start}_mono{inc}"]) == start + inc
            assert len(by_name[f"auth{start}_mono3_mix1{inc}"]) == start + 3 + inc
            assert len(by_name[f"auth{start}_mono3_mix13_mix2{inc}"]) == start + 6 + inc


def test_schedule_stages_are_nested(toy_bitext, toy_mono):
    spec = ScheduleSpec("auth", (2, 4, 6), (1, 2, 3))
    sets = build_schedule(spec, toy_bitext, _synths(toy_bitext, toy_mono), seed=5)

    for block in (sets[0:10], sets[10:20], sets[20:30]):
        for prev, cur in zip(block, block[1:]):
            assert not (_pair_counter(prev) - _pair_counter(cur)), f"{prev.name} not in {cur.name}"

    # authentic-срезы вложены между стартами
    assert not (_pair_counter(sets[0]) - _pair_counter(sets[10]))
    assert not (_pair_counter(sets[10]) - _pair_counter(sets[20]))


def test_schedule_provenance(toy_bitext, toy_mono):
    spec = ScheduleSpec("auth", (2,), (1,))
    sets = build_schedule(spec, toy_bitext, _synths(toy_bitext, toy_mono))
    last = sets[-1]
    assert last.provenance_counts() == {"authentic": 2, "synth_mono": 1, "synth_mix1": 1, "synth_mix2": 1}
    assert last.corpus.provenance == "transformed"
    assert sets[0].corpus.provenance == "authentic"


def test_schedule_without_synth(toy_bitext):
    sets = build_schedule(ScheduleSpec("auth", (3, 5), (1, 2)), toy_bitext, {})
    assert [s.name for s in sets] == ["auth3", "auth5"]


def test_schedule_capacity_names_stage(toy_bitext, toy_mono):
    spec = ScheduleSpec("auth", (2,), (1, 50))
    with pytest.raises(CapacityError, match="stage auth2_mono50"):
        build_schedule(spec, toy_bitext, _synths(toy_bitext, toy_mono))


# Multi-source
# =====================

def test_multisource_tags_sources():
    a = ParallelCorpus.from_texts("hat", "eng", ["kay la"], ["the house"])
    b = ParallelCorpus.from_texts("fra", "eng", ["la maison"], ["the house"], provenance="synth_mix1")
    result = assemble_multisource([a, b])

    assert result.sources == ["<hat> kay la", "<fra> la maison"]
    assert result.targets == ["the house", "the house"]
    assert result.source_lang == "hat+fra"
    assert result.provenance == "transformed"


def test_multisource_untagged_keeps_provenance():
    a = ParallelCorpus.from_texts("hat", "eng", ["kay"], ["house"])
    b = ParallelCorpus.from_texts("hat", "eng", ["liv"], ["book"])
    result = assemble_multisource([a, b], tag_sources=False)
    assert result.sources == ["kay", "liv"]
    assert result.source_lang == "hat"
    assert result.provenance == "authentic"


def test_multisource_target_mismatch():
    a = ParallelCorpus.from_texts("hat", "eng", ["kay"], ["house"])
    b = ParallelCorpus.from_texts("hat", "fra", ["kay"], ["maison"])
    with pytest.raises(CorpusError, match="part 2"):
        assemble_multisource([a, b])
    with pytest.raises(CorpusError):
        assemble_multisource([])


# Запись
# =====================

def test_write_dataset_same_languages(tmp_path):
    corpus = ParallelCorpus.from_texts("hat", "hat", ["a"], ["b"])
    record = write_dataset("para", [("authentic", corpus)], tmp_path, seed=0, shuffle=False)
    assert record.source_path.name == "para.src.hat"
    assert record.target_path.name == "para.tgt.hat"
    assert record.to_dict()["lines"] == 1


# Манифест
# =====================

MANIFEST = """
manifest_version = 1
seed = 11
output_dir = "out"
write_synth = true

[corpora.auth]
source = "auth.hat"
target = "auth.eng"
source_lang = "hat"
target_lang = "eng"
genre = "news"

[corpora.fra_eng]
tsv = "fra_eng.tsv"
source_lang = "fra"
target_lang = "eng"

[corpora.mono_eng]
path = "mono.eng"
lang = "eng"

[translators.bt]
kind = "identity"
from = "eng"
to = "hat"

[translators.pivot]
kind = "identity"
from = "eng"
to = "fra"

[translators.fr2ht]
kind = "rules"
rules = "fra_hat"

[synth.synth_mono]
mono = "mono_eng"
translator = "bt"

[synth.synth_mix1]
bitext = "fra_eng"
translator = "fr2ht"

[synth.synth_mix2]
mono = "mono_eng"
translators = ["pivot", "fr2ht"]

[schedule]
authentic = "auth"
starts = [2, 4]
increments = [1, 2]

[multisource.multi]
parts = ["fra_eng", "synth_mono"]
"""


@pytest.fixture
def manifest_path(tmp_path):
    (tmp_path / "auth.hat").write_text("".join(f"kay {i}\n" for i in range(8)), encoding="utf-8")
    (tmp_path / "auth.eng").write_text("".join(f"house {i}\n" for i in range(8)), encoding="utf-8")
    (tmp_path / "fra_eng.tsv").write_text(
        "".join(f"maison {i}\thouse {i}\n" for i in range(5)), encoding="utf-8"
    )
    (tmp_path / "mono.eng").write_text("".join(f"the water number {i}\n" for i in range(5)), encoding="utf-8")
    path = tmp_path / "pipeline.toml"
    path.write_text(MANIFEST, encoding="utf-8")
    return path


def test_load_manifest(manifest_path):
    manifest = load_manifest(manifest_path)
    assert manifest.seed == 11
    assert manifest.output_dir == manifest_path.parent / "out"
    assert manifest.corpora["auth"].genre == "news"
    assert manifest.corpora["fra_eng"].kind == "tsv"
    assert manifest.synth["synth_mix2"].translators == ("pivot", "fr2ht")
    assert manifest.schedule.increments == (1, 2)
    assert manifest.multisource["multi"].tag_sources is True


def test_run_manifest(manifest_path):
    records = run_manifest(load_manifest(manifest_path))
    by_name = {r.name: r for r in records}

    # 3 synth + 2 старта по 7 стадий + multi-source
    assert len(records) == 18
    assert by_name["synth_mix1"].source_path.read_text(encoding="utf-8").splitlines()[0] == "mèzon 0"
    assert by_name["auth4_mono2_mix12_mix22"].lines == 10

    record = by_name["auth2_mono1"]
    assert record.source_path.name == "auth2_mono1.hat"
    meta = json.loads(record.meta_path.read_text(encoding="utf-8"))
    assert meta["lines"] == 3
    assert meta["provenance"] == {"authentic": 2, "synth_mono": 1}
    assert meta["components"] == [
        {"kind": "authentic", "lines": 2, "genre": "news"},
        {"kind": "synth_mono", "lines": 1, "genre": ""},
    ]
    assert list(meta["lineage"]) == ["synth_mono"]
    assert meta["seed"] == 11
    assert meta["manifest_version"] == 1

    multi = by_name["multi"]
    assert multi.source_path.name == "multi.fra+hat"
    sources = multi.source_path.read_text(encoding="utf-8").splitlines()
    assert sources[0] == "<fra> maison 0"
    assert sources[5] == "<hat> the water number 0"


def test_run_manifest_is_reproducible(manifest_path, tmp_path):
    manifest = load_manifest(manifest_path)
    first = run_manifest(manifest, tmp_path / "a")
    second = run_manifest(manifest, tmp_path / "b")

    for a, b in zip(first, second):
        for pa, pb in ((a.source_path, b.source_path), (a.target_path, b.target_path), (a.meta_path, b.meta_path)):
            assert pa.read_bytes() == pb.read_bytes()


def test_shuffle_keeps_alignment(manifest_path):
    text = manifest_path.read_text(encoding="utf-8").replace("write_synth = true", "shuffle = true")
    manifest_path.write_text(text, encoding="utf-8")
    records = run_manifest(load_manifest(manifest_path))

    record = next(r for r in records if r.name == "auth4")
    sources = record.source_path.read_text(encoding="utf-8").splitlines()
    targets = record.target_path.read_text(encoding="utf-8").splitlines()
    assert [s.replace("kay", "house") for s in sources] == targets


def _base():
    return {
        "manifest_version": 1,
        "corpora": {
            "auth": {"source": "a.hat", "target": "a.eng", "source_lang": "hat", "target_lang": "eng"},
            "mono": {"path": "m.eng", "lang": "eng"},
        },
        "translators": {"bt": {"kind": "identity"}},
    }


@pytest.mark.parametrize("patch, match", [
    (lambda d: d.pop("manifest_version"), "missing key 'manifest_version'"),
    (lambda d: d.update(manifest_version=2), "unsupported manifest_version 2"),
    (lambda d: d["translators"].update(x={"kind": "neural"}), "unknown kind 'neural'"),
    (lambda d: d["translators"].update(x={"kind": "http"}), "missing key 'url'"),
    (lambda d: d["corpora"].update(x={"genre": "news"}), "needs source/target, tsv or path"),
    (lambda d: d.update(synth={"synth_mono": {"mono": "mono", "translator": "nope"}}), "unknown translator 'nope'"),
    (lambda d: d.update(synth={"synth_mono": {"mono": "auth", "translator": "bt"}}), "is bitext, expected mono"),
    (lambda d: d.update(synth={"synth_mix2": {"mono": "mono", "translators": ["bt"]}}), "exactly two"),
    (lambda d: d.update(synth={"synth_mix3": {}}), "unknown construction"),
    (lambda d: d.update(schedule={"authentic": "mono", "starts": [1], "increments": [1]}), "declared bitext"),
    (lambda d: d.update(schedule={"authentic": "auth", "starts": [4, 2], "increments": [1]}), "non-decreasing"),
    (lambda d: d.update(schedule={"authentic": "auth", "starts": [1], "increments": [-1]}), "non-negative"),
    (lambda d: d.update(multisource={"m": {"parts": ["synth_mono"]}}), "part 'synth_mono'"),
])
def test_manifest_errors(patch, match):
    data = _base()
    patch(data)
    with pytest.raises(ManifestError, match=match):
        parse_manifest(data)


def test_manifest_errors_carry_path(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("manifest_version = 2\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="bad.toml"):
        load_manifest(path)

    path.write_text("manifest_version = \n", encoding="utf-8")
    with pytest.raises(ManifestError, match="bad.toml"):
        load_manifest(path)
