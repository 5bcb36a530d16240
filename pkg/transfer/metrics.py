"""
Метрики и значимость: BLEU, CER, chrF++, знаково-ранговый тест Уилкоксона,
bootstrap по документам для BLEU и bootstrap разности средних.

BLEU и chrF++ считает sacrebleu (tokenize="none": пробельная токенизация),
Уилкоксон - scipy. CER - своё динамическое программирование.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sacrebleu.metrics import BLEU, CHRF
from scipy import stats

import config
from corpus import SEED_MASK, Sentence, normalize, read_lines
from errors import DomainError, MetricInputError


logger = logging.getLogger(__name__)

SMOOTHING_METHODS = ("none", "add-k")

# Под внешние значения, которые тут не считаются
RESERVED_COLUMNS = ("bleurt", "sbert")


@dataclass(frozen=True)
class EvalPair:
    hypothesis: Sentence
    references: Tuple[Sentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "references", tuple(self.references))
        if not self.references:
            raise MetricInputError("evaluation pair needs at least one reference")

    @classmethod
    def of(cls, hypothesis: str, *references: str) -> "EvalPair":
        return cls(normalize(hypothesis), tuple(normalize(r) for r in references))


@dataclass
class MetricReport:
    metric: str
    score: float
    params: dict = field(default_factory=dict)
    sentence_scores: Optional[List[float]] = None

    def to_dict(self, include_sentences: bool = False) -> dict:
        report = {"metric": self.metric, "score": self.score, "params": dict(self.params)}
        for name in RESERVED_COLUMNS:
            report[name] = None
        if include_sentences and self.sentence_scores is not None:
            report["sentence_scores"] = list(self.sentence_scores)
        return report


@dataclass
class SignificanceReport:
    test: str
    statistic: Optional[float]
    p_value: float
    params: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "params": dict(self.params),
            **self.summary,
        }


def _check_pairs(pairs: Sequence[EvalPair]) -> None:
    if not pairs:
        raise MetricInputError("empty hypothesis set")


def load_eval_pairs(hyp_path: Union[str, Path], ref_paths: Sequence[Union[str, Path]]) -> List[EvalPair]:
    """Гипотезы и одна или несколько ссылок, построчно выровненные"""
    if not ref_paths:
        raise MetricInputError("at least one reference file is required")

    hyps = read_lines(hyp_path)
    refs = [read_lines(p) for p in ref_paths]
    for path, lines in zip(ref_paths, refs):
        if len(lines) != len(hyps):
            raise MetricInputError(
                f"line count mismatch: {hyp_path} has {len(hyps)} lines, {path} has {len(lines)} lines"
            )

    return [EvalPair.of(h, *(r[i] for r in refs)) for i, h in enumerate(hyps)]


# BLEU
# =====================

def _bleu_columns(max_n: int) -> List[str]:
    return (
        [f"correct_{n}" for n in range(1, max_n + 1)]
        + [f"total_{n}" for n in range(1, max_n + 1)]
        + ["sys_len", "ref_len"]
    )


def bleu_statistics(pairs: Sequence[EvalPair], max_n: int = config.BLEU_MAX_N) -> pd.DataFrame:
    """Достаточные статистики BLEU по предложениям: совпавшие/всего n-граммы и длины"""
    scorer = BLEU(tokenize="none", max_ngram_order=max_n, effective_order=False, force=True)

    rows = []
    for pair in pairs:
        result = scorer.corpus_score([pair.hypothesis.text], [[r.text] for r in pair.references])
        rows.append(list(result.counts) + list(result.totals) + [result.sys_len, result.ref_len])

    return pd.DataFrame(rows, columns=_bleu_columns(max_n), dtype=np.int64)


def _bleu_from_totals(totals: np.ndarray, max_n: int, smoothing: str, add_k: float) -> float:
    result = BLEU.compute_bleu(
        correct=[int(x) for x in totals[:max_n]],
        total=[int(x) for x in totals[max_n:2 * max_n]],
        sys_len=int(totals[2 * max_n]),
        ref_len=int(totals[2 * max_n + 1]),
        smooth_method=smoothing,
        smooth_value=add_k if smoothing == "add-k" else None,
        effective_order=False,
        max_ngram_order=max_n,
    )
    return float(result.score)


def _check_bleu_args(max_n: int, smoothing: str) -> None:
    if max_n < 1:
        raise DomainError(f"maxN must be >= 1, got {max_n}")
    if smoothing not in SMOOTHING_METHODS:
        raise DomainError(f"unknown smoothing {smoothing!r}, expected one of {SMOOTHING_METHODS}")


def bleu(
    pairs: Sequence[EvalPair],
    max_n: int = config.BLEU_MAX_N,
    smoothing: str = config.BLEU_SMOOTHING,
    add_k: float = config.BLEU_ADD_K,
) -> MetricReport:
    """Корпусный BLEU: BP на уровне корпуса, геометрическое среднее точностей до max_n, 0..100."""
    _check_pairs(pairs)
    _check_bleu_args(max_n, smoothing)

    sent_stats = bleu_statistics(pairs, max_n).to_numpy()
    score = _bleu_from_totals(sent_stats.sum(axis=0), max_n, smoothing, add_k)
    sentence_scores = [_bleu_from_totals(row, max_n, smoothing, add_k) for row in sent_stats]

    params = {"max_n": max_n, "smoothing": smoothing, "tokenize": "whitespace", "references": _ref_count(pairs)}
    if smoothing == "add-k":
        params["k"] = add_k
    return MetricReport("bleu", score, params, sentence_scores)


def _ref_count(pairs: Sequence[EvalPair]) -> int:
    return max(len(p.references) for p in pairs)


# CER
# =====================

def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            ))
        previous = current
    return previous[-1]


def cer(pairs: Sequence[EvalPair]) -> MetricReport:
    """CER = сумма расстояний Левенштейна / сумма длин ссылок, в процентах. Пробелы считаются."""
    _check_pairs(pairs)

    if any(len(p.references) > 1 for p in pairs):
        logger.warning("CER использует только первую ссылку, остальные игнорируются")

    distances, lengths, sentence_scores = [], [], []
    for i, pair in enumerate(pairs, start=1):
        ref = pair.references[0].text
        if not ref:
            raise MetricInputError(f"empty reference string in pair {i}")
        d = levenshtein(pair.hypothesis.text, ref)
        distances.append(d)
        lengths.append(len(ref))
        sentence_scores.append(100.0 * d / len(ref))

    score = 100.0 * sum(distances) / sum(lengths)
    return MetricReport("cer", score, {"unit": "char", "normalization": "NFC", "spaces": True}, sentence_scores)


# chrF++
# =====================

def chrfpp(
    pairs: Sequence[EvalPair],
    char_n: int = config.CHRF_CHAR_ORDER,
    word_n: int = config.CHRF_WORD_ORDER,
    beta: float = config.CHRF_BETA,
) -> MetricReport:
    _check_pairs(pairs)
    if char_n < 1 or word_n < 0:
        raise DomainError(f"invalid chrF orders: char {char_n}, word {word_n}")

    ref_counts = {len(p.references) for p in pairs}
    if len(ref_counts) != 1:
        raise MetricInputError("chrF++ needs the same number of references for every hypothesis")

    scorer = CHRF(char_order=char_n, word_order=word_n, beta=beta)
    hyps = [p.hypothesis.text for p in pairs]
    ref_streams = [[p.references[k].text for p in pairs] for k in range(ref_counts.pop())]

    score = float(scorer.corpus_score(hyps, ref_streams).score)
    sentence_scores = [
        float(scorer.sentence_score(p.hypothesis.text, [r.text for r in p.references]).score)
        for p in pairs
    ]
    name = "chrf++" if word_n == 2 else "chrf"
    return MetricReport(name, score, {"char_order": char_n, "word_order": word_n, "beta": beta}, sentence_scores)


# Значимость
# =====================

def wilcoxon_signed_rank(scores_a: Sequence[float], scores_b: Sequence[float]) -> SignificanceReport:
    """
    Двусторонний знаково-ранговый тест. Нулевые разности выбрасываются.
    n <= WILCOXON_EXACT_MAX_N без связок - точное распределение, иначе
    нормальная аппроксимация с поправкой на связки и на непрерывность (0.5).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricInputError(f"length mismatch: {a.size} vs {b.size} scores")

    d = a - b
    d = d[d != 0]
    if d.size == 0:
        raise MetricInputError("all differences are zero, the signed-rank test is degenerate")
    if d.size < config.WILCOXON_MIN_N:
        raise MetricInputError(
            f"need at least {config.WILCOXON_MIN_N} non-zero differences, got {d.size}"
        )

    ranks = stats.rankdata(np.abs(d))
    r_plus = float(ranks[d > 0].sum())
    r_minus = float(ranks[d < 0].sum())
    has_ties = np.unique(np.abs(d)).size != d.size

    n = d.size
    if n <= config.WILCOXON_EXACT_MAX_N and not has_ties:
        method = "exact"
        result = stats.wilcoxon(d, zero_method="wilcox", alternative="two-sided", method="exact")
        statistic, p_value = float(result.statistic), float(result.pvalue)
    else:
        method = "normal"
        statistic = min(r_plus, r_minus)
        _, counts = np.unique(ranks, return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (counts ** 3 - counts).sum() / 48.0
        # statistic <= mean, поправка 0.5 к центру
        z = min(0.0, (statistic - mean + 0.5) / math.sqrt(var))
        p_value = float(min(1.0, 2.0 * stats.norm.cdf(z)))

    return SignificanceReport(
        test="wilcoxon_signed_rank",
        statistic=statistic,
        p_value=p_value,
        params={"method": method, "n": int(n), "zero_method": "wilcox"},
        summary={"r_plus": r_plus, "r_minus": r_minus},
    )


def _interval(samples: np.ndarray) -> List[float]:
    return [float(np.percentile(samples, 2.5)), float(np.percentile(samples, 97.5))]


def _bootstrap_summary(
    sampled_a: np.ndarray, sampled_b: np.ndarray, iterations: int
) -> Tuple[float, dict]:
    a_better = int((sampled_a > sampled_b).sum())
    b_better = int((sampled_a < sampled_b).sum())
    ties = iterations - a_better - b_better

    # Связь считается за половину, одинаковые системы дают p = 0.5
    p_value = (b_better + 0.5 * ties) / iterations
    summary = {
        "a_better": a_better,
        "b_better": b_better,
        "ties": ties,
        "indistinguishable": ties == iterations,
        "mean_a": float(sampled_a.mean()),
        "mean_b": float(sampled_b.mean()),
        "std_a": float(sampled_a.std()),
        "std_b": float(sampled_b.std()),
        "ci95_a": _interval(sampled_a),
        "ci95_b": _interval(sampled_b),
    }
    return p_value, summary


def _resample_indices(seed: int, iteration: int, size: int) -> np.ndarray:
    # Свой генератор на итерацию: результат не зависит от порядка итераций
    rng = np.random.default_rng([int(seed) & SEED_MASK, iteration])
    return rng.integers(0, size, size=size)


def bootstrap_bleu_significance(
    pairs_a: Sequence[EvalPair],
    pairs_b: Sequence[EvalPair],
    iterations: int = config.BOOTSTRAP_ITERATIONS,
    doc_size: Optional[int] = None,
    seed: int = config.DEFAULT_SEED,
    max_n: int = config.BLEU_MAX_N,
    smoothing: str = config.BLEU_SMOOTHING,
    add_k: float = config.BLEU_ADD_K,
) -> SignificanceReport:
    """
    Парный bootstrap по документам: предложения режутся на документы по doc_size
    подряд, документы пересэмплируются с возвращением. p = доля пересэмплов,
    где A не лучше B.
    """
    _check_pairs(pairs_a)
    _check_bleu_args(max_n, smoothing)
    if iterations < 1:
        raise DomainError(f"iterations must be >= 1, got {iterations}")
    if len(pairs_a) != len(pairs_b):
        raise MetricInputError(f"systems cover different sets: {len(pairs_a)} vs {len(pairs_b)} pairs")
    for i, (pa, pb) in enumerate(zip(pairs_a, pairs_b), start=1):
        if [r.text for r in pa.references] != [r.text for r in pb.references]:
            raise MetricInputError(f"reference sets differ at pair {i}")

    n = len(pairs_a)
    if doc_size is None:
        doc_size = math.ceil(n / config.BOOTSTRAP_DOCUMENTS)
    if doc_size < 1:
        raise DomainError(f"document size must be >= 1, got {doc_size}")

    starts = np.arange(0, n, doc_size)
    docs_a = np.add.reduceat(bleu_statistics(pairs_a, max_n).to_numpy(), starts, axis=0)
    docs_b = np.add.reduceat(bleu_statistics(pairs_b, max_n).to_numpy(), starts, axis=0)
    n_docs = len(starts)

    sampled_a = np.empty(iterations)
    sampled_b = np.empty(iterations)
    for it in range(iterations):
        idx = _resample_indices(seed, it, n_docs)
        sampled_a[it] = _bleu_from_totals(docs_a[idx].sum(axis=0), max_n, smoothing, add_k)
        sampled_b[it] = _bleu_from_totals(docs_b[idx].sum(axis=0), max_n, smoothing, add_k)

    p_value, summary = _bootstrap_summary(sampled_a, sampled_b, iterations)
    summary["bleu_a"] = _bleu_from_totals(docs_a.sum(axis=0), max_n, smoothing, add_k)
    summary["bleu_b"] = _bleu_from_totals(docs_b.sum(axis=0), max_n, smoothing, add_k)

    logger.info(f"Bootstrap BLEU: {iterations} итераций, {n_docs} документов по {doc_size}, p = {p_value:.4f}")
    return SignificanceReport(
        test="paired_bootstrap_bleu",
        statistic=summary["bleu_a"] - summary["bleu_b"],
        p_value=p_value,
        params={
            "iterations": iterations, "doc_size": doc_size, "documents": n_docs,
            "seed": seed, "max_n": max_n, "smoothing": smoothing,
        },
        summary=summary,
    )


def paired_mean_bootstrap(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    iterations: int = config.BOOTSTRAP_ITERATIONS,
    seed: int = config.DEFAULT_SEED,
) -> SignificanceReport:
    """Bootstrap разности средних по парным оценкам (например, по предложениям)"""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricInputError(f"length mismatch: {a.size} vs {b.size} scores")
    if a.size == 0:
        raise MetricInputError("no scores to compare")
    if iterations < 1:
        raise DomainError(f"iterations must be >= 1, got {iterations}")

    sampled_a = np.empty(iterations)
    sampled_b = np.empty(iterations)
    for it in range(iterations):
        idx = _resample_indices(seed, it, a.size)
        sampled_a[it] = a[idx].mean()
        sampled_b[it] = b[idx].mean()

    p_value, summary = _bootstrap_summary(sampled_a, sampled_b, iterations)
    return SignificanceReport(
        test="paired_mean_bootstrap",
        statistic=float(a.mean() - b.mean()),
        p_value=p_value,
        params={"iterations": iterations, "seed": seed, "n": int(a.size)},
        summary=summary,
    )


METRICS: Dict[str, object] = {"bleu": bleu, "cer": cer, "chrf": chrfpp}
