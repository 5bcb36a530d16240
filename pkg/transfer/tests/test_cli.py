import json
import time

import pytest

import config
from cli import main
from corpus import load_bitext, validate_corpus
from phonvec import embed_word, load_cognates
from translit import g2p, load_shipped


GOLDEN_DIR = config.BASE_DIR / "tests" / "golden"


def _write(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


def test_translit_apply_golden(tmp_path):
    out = tmp_path / "ht.txt"
    code = main(["translit", "apply", "--rules", "fra_hat", "--in", str(GOLDEN_DIR / "fr.txt"), "--out", str(out)])

    assert code == 0
    assert out.read_text(encoding="utf-8") == (GOLDEN_DIR / "ht.txt").read_text(encoding="utf-8")

    record = json.loads((tmp_path / "ht.txt.run.json").read_text(encoding="utf-8"))
    assert record["subcommand"] == "translit apply"
    assert record["config"]["rules"] == "fra_hat"
    assert list(record["outputs"]) == [str(out)]
    assert len(record["outputs"][str(out)]) == 64


def test_g2p_prints_pairs(capsys):
    assert main(["g2p", "--rules", "fra_ipa", "--word", "unité", "--word", "matin"]) == 0
    captured = capsys.readouterr()

    rules = load_shipped("fra_ipa")
    assert captured.out.splitlines() == [f"unité\t{g2p(rules, 'unité')}", f"matin\t{g2p(rules, 'matin')}"]
    # без выходных файлов запись о запуске уходит в stderr
    assert json.loads(captured.err.strip().splitlines()[-1])["subcommand"] == "g2p"


def _run_record(out):
    return json.loads(out.with_name(out.name + ".run.json").read_text(encoding="utf-8"))


def test_syntax_reorder_to_file(tmp_path):
    trees = _write(tmp_path / "trees.txt", ["(NP (D le) (N livre))", "(NP (D ce) (N matin))"])
    out = tmp_path / "ht.txt"
    code = main([
        "syntax", "reorder", "--rules", str(config.FRA_HAT_SYNTAX), "--lexicon", str(config.FRA_HAT_LEXICON),
        "--in", str(trees), "--out", str(out),
    ])

    assert code == 0
    assert out.read_text(encoding="utf-8") == "liv la\nmaten sa\n"
    record = _run_record(out)
    assert record["subcommand"] == "syntax reorder"
    assert set(record["inputs"]) == {str(config.FRA_HAT_SYNTAX), str(config.FRA_HAT_LEXICON), str(trees)}


def test_phon_embed_lines(tmp_path, feature_table):
    out = tmp_path / "emb.tsv"
    assert main(["phon", "embed", "--word", "kafe", "--word", "kay!", "--out", str(out)]) == 0

    rows = [line.split("\t") for line in out.read_text(encoding="utf-8").splitlines()]
    assert [(word, residue) for word, _, residue in rows] == [("kafe", ""), ("kay!", "!")]
    for word, vector, _ in rows:
        values = [int(v) for v in vector.split()]
        assert len(values) == feature_table.dim
        assert values == embed_word(feature_table, word).vector.tolist()
    assert _run_record(out)["subcommand"] == "phon embed"


def test_phon_neighbors_cognates(tmp_path):
    pairs = load_cognates()
    queries = _write(tmp_path / "fr.txt", [fra for fra, _ in pairs])
    pool = _write(tmp_path / "ht.txt", [hat for _, hat in pairs])
    out = tmp_path / "neighbors.tsv"
    code = main([
        "phon", "neighbors", "--queries", str(queries), "--query-rules", "fra_ipa",
        "--pool", str(pool), "--pool-rules", "hat_ipa", "-k", "1", "--out", str(out),
    ])

    assert code == 0
    rows = [line.split("\t") for line in out.read_text(encoding="utf-8").splitlines()]
    assert [(q, rank, n) for q, rank, n, _ in rows] == [(fra, "1", hat) for fra, hat in pairs]
    assert all(float(score) >= 0.0 for *_, score in rows)
    assert str(out) in _run_record(out)["outputs"]


def test_phon_export_matrix_and_report(tmp_path):
    vocab = _write(tmp_path / "vocab.txt", ["unité matin", "ok!"])
    out = tmp_path / "emb.txt"
    code = main(["phon", "export", "--vocab", str(vocab), "--rules", "fra_ipa", "--dim", "22", "--out", str(out)])

    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "3 22"
    assert [line.split()[0] for line in lines[1:]] == ["unité", "matin", "ok!"]
    assert all(len(line.split()) == 23 for line in lines[1:])

    report = tmp_path / "emb.txt.residue.tsv"
    (entry,) = report.read_text(encoding="utf-8").splitlines()
    assert entry.startswith("ok!\t")
    assert set(_run_record(out)["outputs"]) == {str(out), str(report)}


def test_phon_export_dim_too_small_exits_2(tmp_path):
    vocab = _write(tmp_path / "vocab.txt", ["kafe"])
    assert main(["phon", "export", "--vocab", str(vocab), "--dim", "5", "--out", str(tmp_path / "e.txt")]) == 2


def test_eval_bootstrap_to_file(tmp_path):
    refs = ["li pa tap panse desann lakay li", "mwen renmen manje diri ak pwa", "timoun yo ap jwe nan lakou a"]
    ref = _write(tmp_path / "ref.txt", refs)
    hyp_a = _write(tmp_path / "a.txt", refs)
    hyp_b = _write(tmp_path / "b.txt", ["li pa tap panse", "mwen renmen diri", "timoun yo jwe"])
    out = tmp_path / "boot.json"
    code = main([
        "eval", "bootstrap", "--hyp-a", str(hyp_a), "--hyp-b", str(hyp_b), "--ref", str(ref),
        "--iterations", "50", "--seed", "42", "--out", str(out),
    ])

    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["test"] == "paired_bootstrap_bleu"
    assert report["p_value"] == 0.0
    assert report["a_better"] == 50
    assert report["params"]["iterations"] == 50
    record = _run_record(out)
    assert record["seed"] == 42
    assert record["config"]["iterations"] == 50


def test_eval_bleu_identical(tmp_path, capsys):
    lines = ["liv la sou tab la", "mwen renmen manje diri"]
    hyp = _write(tmp_path / "hyp.txt", lines)
    ref = _write(tmp_path / "ref.txt", lines)

    assert main(["eval", "bleu", "--hyp", str(hyp), "--ref", str(ref)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["metric"] == "bleu"
    assert report["score"] == pytest.approx(100.0)


def test_eval_chrf_to_file(tmp_path):
    hyp = _write(tmp_path / "hyp.txt", ["kay la"])
    ref = _write(tmp_path / "ref.txt", ["kay li"])
    out = tmp_path / "chrf.json"

    assert main(["eval", "chrf", "--hyp", str(hyp), "--ref", str(ref), "--sentences", "--out", str(out)]) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert len(report["sentence_scores"]) == 1
    assert (tmp_path / "chrf.json.run.json").exists()


def test_eval_wilcoxon_from_scores(tmp_path, capsys):
    a = _write(tmp_path / "a.txt", [str(x + 0.5) for x in range(1, 21)])
    b = _write(tmp_path / "b.txt", [str(x * 0.9) for x in range(1, 21)])

    assert main(["eval", "wilcoxon", "--scores-a", str(a), "--scores-b", str(b)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["p_value"] < 0.05


def test_cs_apply_with_stats(tmp_path, capsys):
    src = _write(tmp_path / "en.txt", ["The water, my child."])
    out = tmp_path / "jam.txt"
    code = main([
        "cs", "apply", "--lexicon", str(config.ENG_JAM_LEXICON), "--in", str(src),
        "--strip-punct", "--out", str(out), "--stats",
    ])

    assert code == 0
    assert out.read_text(encoding="utf-8") == "Di wata, mi pikni.\n"
    stats = json.loads(capsys.readouterr().out.strip())
    assert stats["tokens_replaced"] == 4


def test_corpus_sample_is_prefix(tmp_path):
    src = _write(tmp_path / "mono.txt", [f"sentence {i}" for i in range(30)])
    small, large = tmp_path / "small.txt", tmp_path / "large.txt"

    assert main(["corpus", "sample", "--in", str(src), "-n", "5", "--out", str(small), "--seed", "9"]) == 0
    assert main(["corpus", "sample", "--in", str(src), "-n", "12", "--out", str(large), "--seed", "9"]) == 0
    assert large.read_text(encoding="utf-8").splitlines()[:5] == small.read_text(encoding="utf-8").splitlines()


def test_pipeline_build(tmp_path):
    _write(tmp_path / "a.hat", [f"kay {i}" for i in range(4)])
    _write(tmp_path / "a.eng", [f"house {i}" for i in range(4)])
    _write(tmp_path / "m.eng", [f"water {i}" for i in range(3)])
    manifest = tmp_path / "m.toml"
    manifest.write_text(
        "manifest_version = 1\n"
        "[corpora.auth]\nsource = \"a.hat\"\ntarget = \"a.eng\"\nsource_lang = \"hat\"\ntarget_lang = \"eng\"\n"
        "[corpora.mono]\npath = \"m.eng\"\nlang = \"eng\"\n"
        "[translators.bt]\nkind = \"identity\"\n"
        "[synth.synth_mono]\nmono = \"mono\"\ntranslator = \"bt\"\n"
        "[schedule]\nauthentic = \"auth\"\nstarts = [2]\nincrements = [1, 3]\n",
        encoding="utf-8",
    )
    out_dir = tmp_path / "datasets"

    assert main(["pipeline", "build", "--manifest", str(manifest), "--out-dir", str(out_dir)]) == 0
    assert (out_dir / "auth2_mono3.hat").read_text(encoding="utf-8").count("\n") == 5
    record = json.loads((out_dir / "pipeline.run.json").read_text(encoding="utf-8"))
    assert str(out_dir / "auth2.meta.json") in record["outputs"]


SMOKE_MANIFEST = """
manifest_version = 1
seed = 3
output_dir = "datasets"
write_synth = true

[corpora.auth]
source = "auth.hat"
target = "auth.eng"
source_lang = "hat"
target_lang = "eng"

[corpora.fra_eng]
tsv = "fra_eng.tsv"
source_lang = "fra"
target_lang = "eng"

[corpora.mono]
path = "mono.eng"
lang = "eng"

[translators.bt]
kind = "rules"
rules = "fra_hat"
from = "eng"
to = "hat"

[translators.pivot]
kind = "rules"
rules = "eng_ipa"
from = "eng"
to = "fra"

[translators.fr2ht]
kind = "rules"
rules = "fra_hat"

[synth.synth_mono]
mono = "mono"
translator = "bt"

[synth.synth_mix1]
bitext = "fra_eng"
translator = "fr2ht"

[synth.synth_mix2]
mono = "mono"
translators = ["pivot", "fr2ht"]

[schedule]
authentic = "auth"
starts = [100, 200, 300]
increments = [50, 100, 150]
"""


def test_pipeline_build_rules_smoke(tmp_path):
    size = 500
    _write(tmp_path / "auth.hat", [f"kay {i} la bèl anpil" for i in range(size)])
    _write(tmp_path / "auth.eng", [f"house {i} is very nice" for i in range(size)])
    _write(tmp_path / "fra_eng.tsv", [f"la maison {i} est grande\tthe house {i} is big" for i in range(size)])
    _write(tmp_path / "mono.eng", [f"the water {i} is cold this morning" for i in range(size)])
    manifest = tmp_path / "pipeline.toml"
    manifest.write_text(SMOKE_MANIFEST, encoding="utf-8")

    started = time.perf_counter()
    assert main(["pipeline", "build", "--manifest", str(manifest)]) == 0
    assert time.perf_counter() - started < 30

    out_dir = tmp_path / "datasets"
    metas = [json.loads(p.read_text(encoding="utf-8")) for p in sorted(out_dir.glob("*.meta.json"))]
    # 3 synth + 3 старта по 10 стадий
    assert len(metas) == 33

    for meta in metas:
        src, tgt = meta["source_lang"], meta["target_lang"]
        corpus = load_bitext(out_dir / f"{meta['name']}.{src}", out_dir / f"{meta['name']}.{tgt}", src, tgt)
        validate_corpus(corpus)
        assert len(corpus) == meta["lines"]
        assert (src, tgt) == ("hat", "eng")

    by_name = {m["name"]: m for m in metas}
    assert by_name["auth300_mono150_mix1150_mix2150"]["lines"] == 750
    assert by_name["auth100_mono150_mix1150_mix250"]["provenance"] == {
        "authentic": 100, "synth_mono": 150, "synth_mix1": 150, "synth_mix2": 50,
    }
    assert by_name["synth_mix2"]["lineage"]["pivot"] == "fra"
    assert (out_dir / "pipeline.run.json").exists()


def test_data_error_exits_2(tmp_path, capsys):
    src = _write(tmp_path / "bad.txt", ["ok", "", "ok"])
    code = main(["translit", "apply", "--rules", "fra_hat", "--in", str(src)])
    assert code == 2
    assert "empty segment at line 2" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert main(["eval", "cer", "--hyp", str(tmp_path / "none"), "--ref", str(tmp_path / "none")]) == 2


@pytest.mark.parametrize("argv", [
    ["nope"],
    ["eval", "bleu", "--hyp", "h.txt"],
    ["g2p", "--rules", "fra_ipa", "--jobs", "0", "--word", "a"],
    ["eval", "bleu", "--hyp", "h.txt", "--ref", "r.txt", "--smoothing", "floor"],
])
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
