"""
Командная строка тулкита.

    python transfer/cli.py translit apply --rules fra_hat --in fr.txt --out ht.txt
    python transfer/cli.py g2p --rules fra_ipa --word unité
    python transfer/cli.py syntax reorder --rules data/fra_hat.syntax --lexicon data/fra_hat_lexicon.tsv --in trees.txt
    python transfer/cli.py phon neighbors --queries fr.txt --query-rules fra_ipa --pool ht.txt --pool-rules hat_ipa
    python transfer/cli.py cs apply --lexicon data/eng_jam_lexicon.tsv --in en.txt --rate 0.5 --seed 1
    python transfer/cli.py pipeline build --manifest m.toml
    python transfer/cli.py eval bleu --hyp h.txt --ref r.txt

Коды выхода: 0 - успех, 1 - ошибка в аргументах, 2 - ошибка в данных.
"""

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import config
from codeswitch import apply_code_switch_corpus, load_lexicon
from corpus import load_bitext, load_mono, read_lines, sample_slice, save_bitext, save_mono, write_lines
from errors import DataError, MetricInputError, ToolkitError
from metrics import (
    METRICS,
    SMOOTHING_METHODS,
    bleu,
    bootstrap_bleu_significance,
    cer,
    chrfpp,
    load_eval_pairs,
    paired_mean_bootstrap,
    wilcoxon_signed_rank,
)
from phonvec import (
    embed_with_rules,
    export_embedding_matrix,
    load_feature_table,
    nearest_neighbors,
    write_neighbors,
)
from pipeline import load_manifest, run_manifest
from syntree import load_syntax_rules, load_treebank, transform_treebank
from translit import g2p, load_rules, transliterate_corpus


logger = logging.getLogger(__name__)

# (входы, выходы, статистика)
Result = Tuple[List[Path], List[Path], List[dict]]


@dataclass
class RunRecord:
    subcommand: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seed: int = config.DEFAULT_SEED
    version: str = config.__version__
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": self.seed,
            "version": self.version,
            "wall_time": round(self.wall_time, 3),
        }


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# Ввод/вывод
# =====================

def _emit_lines(lines: Sequence[str], out: Optional[str]) -> List[Path]:
    if out is None:
        for line in lines:
            print(line)
        return []
    write_lines(out, lines)
    return [Path(out)]


def _emit_json(obj: dict, out: Optional[str]) -> List[Path]:
    text = json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True)
    if out is None:
        print(text)
        return []
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    return [path]


def _read_scores(path: str) -> List[float]:
    scores = []
    for i, line in enumerate(read_lines(path), start=1):
        try:
            scores.append(float(line))
        except ValueError as e:
            raise MetricInputError(f"{path}: line {i}: not a number: {line!r}") from e
    return scores


def _words(args) -> List[str]:
    words = list(args.word or [])
    if args.input:
        words += [w for line in read_lines(args.input) for w in line.split()]
    if not words:
        raise DataError("no words given, use --word or --in")
    return words


# Подкоманды
# =====================

def cmd_translit_apply(args) -> Result:
    rules = load_rules(args.rules)
    corpus = load_mono(args.input, lang=rules.direction[0])
    result, stats = transliterate_corpus(rules, corpus, jobs=args.jobs)
    outputs = _emit_lines(result.texts, args.out)
    return [Path(args.input)], outputs, [stats.to_dict()]


def cmd_g2p(args) -> Result:
    rules = load_rules(args.rules)
    lines = [f"{w}\t{g2p(rules, w)}" for w in _words(args)]
    inputs = [Path(args.input)] if args.input else []
    return inputs, _emit_lines(lines, args.out), []


def cmd_syntax_reorder(args) -> Result:
    rules = load_syntax_rules(args.rules, args.lexicon)
    trees = load_treebank(args.input)
    corpus, stats = transform_treebank(rules, trees, jobs=args.jobs)
    inputs = [Path(args.rules), Path(args.input)] + ([Path(args.lexicon)] if args.lexicon else [])
    return inputs, _emit_lines(corpus.texts, args.out), [stats.to_dict()]


def cmd_phon_embed(args) -> Result:
    table = load_feature_table(args.table)
    rules = load_rules(args.rules) if args.rules else None
    embeddings = embed_with_rules(table, _words(args), rules)

    lines = [
        f"{e.word}\t{' '.join(str(int(v)) for v in e.vector)}\t{''.join(e.residue)}"
        for e in embeddings
    ]
    residue = sum(1 for e in embeddings if e.residue)
    stats = {"kind": "phon_embed", "words": len(embeddings), "words_with_residue": residue}
    inputs = [Path(args.table)] + ([Path(args.input)] if args.input else [])
    return inputs, _emit_lines(lines, args.out), [stats]


def cmd_phon_neighbors(args) -> Result:
    table = load_feature_table(args.table)
    query_rules = load_rules(args.query_rules) if args.query_rules else None
    pool_rules = load_rules(args.pool_rules) if args.pool_rules else None

    query_words = [w for line in read_lines(args.queries) for w in line.split()]
    pool_words = [w for line in read_lines(args.pool) for w in line.split()]
    queries = embed_with_rules(table, query_words, query_rules)
    pool = embed_with_rules(table, pool_words, pool_rules)

    results = nearest_neighbors(queries, pool, k=args.k, metric=args.metric)
    inputs = [Path(args.table), Path(args.queries), Path(args.pool)]
    if args.out is None:
        for r in results:
            for rank, (word, score) in enumerate(r.ranked, start=1):
                print(f"{r.query}\t{rank}\t{word}\t{score:.6f}")
        return inputs, [], []

    write_neighbors(results, args.out)
    return inputs, [Path(args.out)], []


def cmd_phon_export(args) -> Result:
    table = load_feature_table(args.table)
    rules = load_rules(args.rules) if args.rules else None
    vocab = [w for line in read_lines(args.vocab) for w in line.split()]

    report = Path(args.report) if args.report else Path(args.out + ".residue.tsv")
    matrix = export_embedding_matrix(vocab, rules, table, args.dim, args.out, report)
    stats = {"kind": "phon_export", "rows": int(matrix.shape[0]), "dim": int(matrix.shape[1])}
    return [Path(args.table), Path(args.vocab)], [Path(args.out), report], [stats]


def cmd_cs_apply(args) -> Result:
    lexicon = load_lexicon(args.lexicon)
    corpus = load_mono(args.input, lang=args.lang)
    result, stats = apply_code_switch_corpus(
        lexicon, corpus, rate=args.rate, seed=args.seed, strip_punct=args.strip_punct, jobs=args.jobs
    )
    outputs = _emit_lines(result.texts, args.out)
    return [Path(args.lexicon), Path(args.input)], outputs, [stats.to_dict()]


def cmd_pipeline_build(args) -> Result:
    manifest = load_manifest(args.manifest)
    records = run_manifest(manifest, output_dir=args.out_dir, jobs=args.jobs)

    outputs = [p for r in records for p in (r.source_path, r.target_path, r.meta_path)]
    stats = [{"kind": "dataset", **r.to_dict()} for r in records]
    return [Path(args.manifest)], outputs, stats


def _metric_report(args, func, **params) -> Result:
    pairs = load_eval_pairs(args.hyp, args.ref)
    report = func(pairs, **params)
    outputs = _emit_json(report.to_dict(include_sentences=args.sentences), args.out)
    return [Path(args.hyp)] + [Path(r) for r in args.ref], outputs, []


def cmd_eval_bleu(args) -> Result:
    return _metric_report(args, bleu, max_n=args.max_n, smoothing=args.smoothing, add_k=args.k)


def cmd_eval_cer(args) -> Result:
    return _metric_report(args, cer)


def cmd_eval_chrf(args) -> Result:
    return _metric_report(args, chrfpp, char_n=args.char_order, word_n=args.word_order, beta=args.beta)


def _paired_scores(args) -> Tuple[List[float], List[float], List[Path]]:
    """Оценки из файлов (--scores-a/--scores-b) или по предложениям из гипотез"""
    if args.scores_a and args.scores_b:
        return _read_scores(args.scores_a), _read_scores(args.scores_b), [Path(args.scores_a), Path(args.scores_b)]
    if not (args.hyp_a and args.hyp_b and args.ref):
        raise MetricInputError("give --scores-a/--scores-b or --hyp-a/--hyp-b with --ref")

    metric = METRICS[args.metric]
    a = metric(load_eval_pairs(args.hyp_a, args.ref)).sentence_scores
    b = metric(load_eval_pairs(args.hyp_b, args.ref)).sentence_scores
    return a, b, [Path(args.hyp_a), Path(args.hyp_b)] + [Path(r) for r in args.ref]


def cmd_eval_wilcoxon(args) -> Result:
    a, b, inputs = _paired_scores(args)
    report = wilcoxon_signed_rank(a, b)
    return inputs, _emit_json(report.to_dict(), args.out), []


def cmd_eval_bootstrap(args) -> Result:
    if args.scores_a and args.scores_b:
        a, b, inputs = _paired_scores(args)
        report = paired_mean_bootstrap(a, b, iterations=args.iterations, seed=args.seed)
    else:
        if not (args.hyp_a and args.hyp_b and args.ref):
            raise MetricInputError("give --hyp-a/--hyp-b with --ref or --scores-a/--scores-b")
        pairs_a = load_eval_pairs(args.hyp_a, args.ref)
        pairs_b = load_eval_pairs(args.hyp_b, args.ref)
        report = bootstrap_bleu_significance(
            pairs_a, pairs_b, iterations=args.iterations, doc_size=args.doc_size, seed=args.seed
        )
        inputs = [Path(args.hyp_a), Path(args.hyp_b)] + [Path(r) for r in args.ref]
    return inputs, _emit_json(report.to_dict(), args.out), []


def cmd_corpus_sample(args) -> Result:
    if args.tgt:
        corpus = load_bitext(args.input, args.tgt, args.src_lang, args.tgt_lang)
        sample = sample_slice(corpus, args.n, args.seed)
        save_bitext(sample, args.out, args.out_tgt)
        inputs, outputs = [Path(args.input), Path(args.tgt)], [Path(args.out), Path(args.out_tgt)]
    else:
        corpus = load_mono(args.input, args.src_lang)
        sample = sample_slice(corpus, args.n, args.seed)
        save_mono(sample, args.out)
        inputs, outputs = [Path(args.input)], [Path(args.out)]

    stats = {"kind": "sample", "requested": args.n, "available": len(corpus)}
    return inputs, outputs, [stats]


# Парсер
# =====================

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="seed for every random choice")
    common.add_argument("--jobs", type=int, default=1, help="line-parallel workers")
    common.add_argument("--stats", action="store_true", help="print statistics as JSON lines on stdout")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="transfer", description="Cross-lingual transfer data toolkit")
    parser.add_argument("--version", action="version", version=config.__version__)
    groups = parser.add_subparsers(dest="group", required=True)

    def leaf(subparsers, name, func, help_text, group=""):
        p = subparsers.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func, subcommand=f"{group} {name}".strip())
        return p

    # translit
    translit = groups.add_parser("translit", help="orthographic rewrite rules").add_subparsers(dest="action", required=True)
    p = leaf(translit, "apply", cmd_translit_apply, "apply rewrite rules to a corpus", "translit")
    p.add_argument("--rules", required=True, help="rule file or shipped name (fra_hat, fra_ipa, ...)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")

    # g2p
    p = leaf(groups, "g2p", cmd_g2p, "grapheme to IPA conversion")
    p.add_argument("--rules", required=True)
    p.add_argument("--word", action="append")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")

    # syntax
    syntax = groups.add_parser("syntax", help="tree reordering").add_subparsers(dest="action", required=True)
    p = leaf(syntax, "reorder", cmd_syntax_reorder, "reorder bracketed trees and print their yields", "syntax")
    p.add_argument("--rules", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--in", dest="input", required=True, help="one bracketed tree per line")
    p.add_argument("--out")

    # phon
    phon = groups.add_parser("phon", help="phonological embeddings").add_subparsers(dest="action", required=True)
    p = leaf(phon, "embed", cmd_phon_embed, "feature-sum vectors per word", "phon")
    p.add_argument("--table", default=str(config.PHONE_FEATURES))
    p.add_argument("--rules", help="G2P rules; without them words are read as IPA")
    p.add_argument("--word", action="append")
    p.add_argument("--in", dest="input")
    p.add_argument("--out")

    p = leaf(phon, "neighbors", cmd_phon_neighbors, "nearest pool words for every query", "phon")
    p.add_argument("--table", default=str(config.PHONE_FEATURES))
    p.add_argument("--queries", required=True)
    p.add_argument("--query-rules")
    p.add_argument("--pool", required=True)
    p.add_argument("--pool-rules")
    p.add_argument("-k", type=int, default=config.NEIGHBOR_TOP_K)
    p.add_argument("--metric", choices=["euclidean", "cosine"], default=config.NEIGHBOR_METRIC)
    p.add_argument("--out")

    p = leaf(phon, "export", cmd_phon_export, "embedding matrix in word2vec text format", "phon")
    p.add_argument("--table", default=str(config.PHONE_FEATURES))
    p.add_argument("--vocab", required=True)
    p.add_argument("--rules")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")

    # cs
    cs = groups.add_parser("cs", help="code-switching augmentation").add_subparsers(dest="action", required=True)
    p = leaf(cs, "apply", cmd_cs_apply, "replace lexicon words with their translations", "cs")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--lang", default="")
    p.add_argument("--rate", type=float, default=config.CODESWITCH_RATE)
    p.add_argument("--strip-punct", action="store_true")
    p.add_argument("--out")

    # pipeline
    pipeline = groups.add_parser("pipeline", help="synthetic datasets").add_subparsers(dest="action", required=True)
    p = leaf(pipeline, "build", cmd_pipeline_build, "build every dataset a manifest describes", "pipeline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", help="overrides output_dir from the manifest")

    # eval
    evaluate = groups.add_parser("eval", help="metrics and significance").add_subparsers(dest="action", required=True)
    for name, func in (("bleu", cmd_eval_bleu), ("cer", cmd_eval_cer), ("chrf", cmd_eval_chrf)):
        p = leaf(evaluate, name, func, f"corpus {name}", "eval")
        p.add_argument("--hyp", required=True)
        p.add_argument("--ref", action="append", required=True, help="repeat for several references")
        p.add_argument("--sentences", action="store_true", help="include per-sentence scores")
        p.add_argument("--out")
        if name == "bleu":
            p.add_argument("--max-n", type=int, default=config.BLEU_MAX_N)
            p.add_argument("--smoothing", choices=SMOOTHING_METHODS, default=config.BLEU_SMOOTHING)
            p.add_argument("--k", type=float, default=config.BLEU_ADD_K)
        if name == "chrf":
            p.add_argument("--char-order", type=int, default=config.CHRF_CHAR_ORDER)
            p.add_argument("--word-order", type=int, default=config.CHRF_WORD_ORDER)
            p.add_argument("--beta", type=float, default=config.CHRF_BETA)

    for name, func in (("wilcoxon", cmd_eval_wilcoxon), ("bootstrap", cmd_eval_bootstrap)):
        p = leaf(evaluate, name, func, f"paired {name} test", "eval")
        p.add_argument("--scores-a")
        p.add_argument("--scores-b")
        p.add_argument("--hyp-a")
        p.add_argument("--hyp-b")
        p.add_argument("--ref", action="append")
        p.add_argument("--out")
        if name == "wilcoxon":
            p.add_argument("--metric", choices=sorted(METRICS), default="chrf")
        else:
            p.add_argument("--iterations", type=int, default=config.BOOTSTRAP_ITERATIONS)
            p.add_argument("--doc-size", type=int)

    # corpus
    corpus = groups.add_parser("corpus", help="corpus utilities").add_subparsers(dest="action", required=True)
    p = leaf(corpus, "sample", cmd_corpus_sample, "seeded sample without replacement", "corpus")
    p.add_argument("--in", dest="input", required=True, help="mono file or source side of a bitext")
    p.add_argument("--tgt", help="target side of a bitext")
    p.add_argument("--src-lang", default="src")
    p.add_argument("--tgt-lang", default="tgt")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-tgt")

    return parser


# Запуск
# =====================

def _resolved_config(args) -> dict:
    skip = {"func", "subcommand", "group", "action", "verbose", "stats"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_run_record(record: RunRecord, outputs: List[Path], args) -> None:
    text = json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True)
    if not outputs:
        print(text, file=sys.stderr)
        return

    if args.subcommand == "pipeline build":
        path = outputs[0].parent / "pipeline.run.json"
    else:
        path = Path(str(outputs[0]) + ".run.json")
    path.write_text(text + "\n", encoding="utf-8")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)

    if args.jobs < 1:
        parser.error(f"--jobs must be >= 1, got {args.jobs}")
    if args.subcommand == "corpus sample" and args.tgt and not args.out_tgt:
        parser.error("--tgt needs --out-tgt")

    start_time = time.time()
    try:
        inputs, outputs, stats = args.func(args)
    except (ToolkitError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2

    if args.stats:
        for entry in stats:
            print(json.dumps(entry, ensure_ascii=False, sort_keys=True))

    record = RunRecord(
        subcommand=args.subcommand,
        config=_resolved_config(args),
        inputs={str(p): sha256_file(p) for p in inputs if p.is_file()},
        outputs={str(p): sha256_file(p) for p in outputs if p.is_file()},
        seed=args.seed,
        wall_time=time.time() - start_time,
    )
    _write_run_record(record, outputs, args)
    logger.info(f"{args.subcommand}: готово за {record.wall_time:.2f} сек")
    return 0


if __name__ == "__main__":
    sys.exit(main())
