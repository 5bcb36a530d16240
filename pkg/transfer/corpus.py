"""
Корпуса: моно и параллельные (bitext), нормализация, загрузка/сохранение,
детерминированная выборка.

Форматы: UTF-8, одно предложение на строку, LF. Bitext - два файла с равным
числом строк или один TSV `source<TAB>target` без заголовка.
"""

import logging
import unicodedata
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Sequence, Tuple, TypeVar, Union

import numpy as np

import config
from errors import AlignmentError, CapacityError, CorpusError, DomainError, EmptySegmentError


logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Sentence:
    text: str
    tokens: Tuple[str, ...]

    def __str__(self) -> str:
        return self.text


Pair = Tuple[Sentence, Sentence]


@dataclass(frozen=True)
class MonoCorpus:
    lang: str
    sentences: Tuple[Sentence, ...]
    genre: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    @property
    def items(self) -> Tuple[Sentence, ...]:
        return self.sentences

    def with_items(self, items) -> "MonoCorpus":
        return replace(self, sentences=tuple(items))

    @property
    def texts(self) -> List[str]:
        return [s.text for s in self.sentences]

    @classmethod
    def from_texts(cls, lang: str, texts: Sequence[str], genre: str = "") -> "MonoCorpus":
        return cls(lang=lang, sentences=tuple(_checked(t, i + 1) for i, t in enumerate(texts)), genre=genre)


@dataclass(frozen=True)
class ParallelCorpus:
    source_lang: str
    target_lang: str
    pairs: Tuple[Pair, ...]
    provenance: str = "authentic"
    genre: str = ""

    def __post_init__(self):
        if self.provenance not in config.PROVENANCE_TAGS:
            raise CorpusError(f"unknown provenance tag: {self.provenance!r}")
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[Pair]:
        return iter(self.pairs)

    @property
    def items(self) -> Tuple[Pair, ...]:
        return self.pairs

    def with_items(self, items) -> "ParallelCorpus":
        return replace(self, pairs=tuple(items))

    @property
    def sources(self) -> List[str]:
        return [src.text for src, _ in self.pairs]

    @property
    def targets(self) -> List[str]:
        return [tgt.text for _, tgt in self.pairs]

    @classmethod
    def from_texts(
        cls,
        source_lang: str,
        target_lang: str,
        sources: Sequence[str],
        targets: Sequence[str],
        provenance: str = "authentic",
        genre: str = "",
    ) -> "ParallelCorpus":
        if len(sources) != len(targets):
            raise AlignmentError(
                f"source side has {len(sources)} segments, target side has {len(targets)}"
            )
        pairs = tuple(
            (_checked(s, i + 1), _checked(t, i + 1))
            for i, (s, t) in enumerate(zip(sources, targets))
        )
        return cls(source_lang, target_lang, pairs, provenance=provenance, genre=genre)


Corpus = Union[MonoCorpus, ParallelCorpus]


# Нормализация
# =====================

def normalize(raw: Union[str, bytes]) -> Sentence:
    """NFC + схлопывание пробелов. Регистр не трогаем."""
    if isinstance(raw, (bytes, bytearray)):
        try:
            raw = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorpusError(f"invalid UTF-8 at byte offset {e.start}") from e

    # Сначала выкидываем управляющие символы, иначе NFC может не склеить букву с диакритикой
    text = "".join(ch for ch in raw if ch.isspace() or unicodedata.category(ch) != "Cc")
    text = unicodedata.normalize("NFC", text)
    text = " ".join(text.split())

    return Sentence(text=text, tokens=tuple(text.split(" ")) if text else ())


def _checked(raw: str, line_no: int, path: Union[str, Path, None] = None) -> Sentence:
    sentence = normalize(raw)
    if not sentence.text:
        where = f" in {path}" if path is not None else ""
        raise EmptySegmentError(f"empty segment at line {line_no}{where}")
    return sentence


# Ввод/вывод
# =====================

def read_lines(path: Union[str, Path]) -> List[str]:
    data = Path(path).read_bytes()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorpusError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def write_lines(path: Union[str, Path], lines: Sequence[str]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def load_bitext(path_src, path_tgt, src_lang: str, tgt_lang: str, genre: str = "") -> ParallelCorpus:
    src_lines = read_lines(path_src)
    tgt_lines = read_lines(path_tgt)

    if len(src_lines) != len(tgt_lines):
        raise AlignmentError(
            f"line count mismatch: {path_src} has {len(src_lines)} lines, "
            f"{path_tgt} has {len(tgt_lines)} lines"
        )

    pairs = []
    for i, (s, t) in enumerate(zip(src_lines, tgt_lines), start=1):
        pairs.append((_checked(s, i, path_src), _checked(t, i, path_tgt)))

    logger.info(f"Загружен bitext {src_lang}-{tgt_lang}: {len(pairs):,} пар")
    return ParallelCorpus(src_lang, tgt_lang, tuple(pairs), provenance="authentic", genre=genre)


def save_bitext(corpus: ParallelCorpus, path_src, path_tgt) -> None:
    write_lines(path_src, corpus.sources)
    write_lines(path_tgt, corpus.targets)


def load_tsv_bitext(path, src_lang: str, tgt_lang: str, genre: str = "") -> ParallelCorpus:
    pairs = []
    for i, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            raise CorpusError(f"{path}: line {i}: expected source<TAB>target, got {len(fields)} fields")
        pairs.append((_checked(fields[0], i, path), _checked(fields[1], i, path)))

    logger.info(f"Загружен TSV bitext {src_lang}-{tgt_lang}: {len(pairs):,} пар")
    return ParallelCorpus(src_lang, tgt_lang, tuple(pairs), provenance="authentic", genre=genre)


def save_tsv_bitext(corpus: ParallelCorpus, path) -> None:
    write_lines(path, [f"{s}\t{t}" for s, t in zip(corpus.sources, corpus.targets)])


def load_mono(path, lang: str, genre: str = "") -> MonoCorpus:
    sentences = tuple(_checked(line, i, path) for i, line in enumerate(read_lines(path), start=1))
    logger.info(f"Загружен моно-корпус {lang}: {len(sentences):,} предложений")
    return MonoCorpus(lang=lang, sentences=sentences, genre=genre)


def save_mono(corpus: MonoCorpus, path) -> None:
    write_lines(path, corpus.texts)


# Выборка
# =====================

def shuffled_order(length: int, seed: int) -> np.ndarray:
    """Перестановка индексов, зависит только от (length, seed)"""
    rng = np.random.default_rng(int(seed) & SEED_MASK)
    return rng.permutation(length)


def sample_slice(corpus: Corpus, n: int, seed: int) -> Corpus:
    """
    Детерминированная выборка без возвращения. Seeded shuffle + префикс,
    поэтому sample(n1) всегда префикс sample(n2) при n1 <= n2.
    """
    if n < 0:
        raise DomainError(f"sample size must be non-negative, got {n}")
    if n > len(corpus):
        raise CapacityError(f"requested {n} items but corpus holds only {len(corpus)}")

    order = shuffled_order(len(corpus), seed)[:n]
    items = corpus.items
    return corpus.with_items(items[i] for i in order)


def shuffle_corpus(corpus: Corpus, seed: int) -> Corpus:
    return sample_slice(corpus, len(corpus), seed)


# Утилиты
# =====================

def join_on_target(a: ParallelCorpus, b: ParallelCorpus) -> ParallelCorpus:
    """
    Неявный bitext X-Y из X-TGT и Y-TGT по точному совпадению TGT-стороны.
    Первое вхождение в b выигрывает, порядок a сохраняется.
    """
    if a.target_lang != b.target_lang:
        raise CorpusError(f"target languages differ: {a.target_lang} vs {b.target_lang}")

    by_target: Dict[str, Sentence] = {}
    for src, tgt in b.pairs:
        by_target.setdefault(tgt.text, src)

    pairs = [(src, by_target[tgt.text]) for src, tgt in a.pairs if tgt.text in by_target]
    logger.info(f"Совпало по {a.target_lang}: {len(pairs):,} пар из {len(a):,}")

    return ParallelCorpus(a.source_lang, b.source_lang, tuple(pairs), provenance="authentic")


def match_case(original: str, replacement: str) -> str:
    """Заглавная первая буква оригинала переносится на замену"""
    if original[:1].isupper() and replacement:
        return replacement[0].upper() + replacement[1:]
    return replacement


def validate_corpus(corpus: Corpus) -> None:
    """Перепроверка инвариантов (для готовых датасетов)"""
    if isinstance(corpus, ParallelCorpus):
        if corpus.provenance not in config.PROVENANCE_TAGS:
            raise CorpusError(f"unknown provenance tag: {corpus.provenance!r}")
        sentences = ((i, s) for i, pair in enumerate(corpus.pairs, start=1) for s in pair)
    else:
        sentences = enumerate(corpus.sentences, start=1)

    for i, sentence in sentences:
        if not sentence.text:
            raise EmptySegmentError(f"empty segment at line {i}")
        if normalize(sentence.text) != sentence:
            raise CorpusError(f"segment at line {i} is not normalized: {sentence.text!r}")


def ordered_map(func: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """map по строкам; при jobs > 1 - пул процессов, порядок выхода = порядок входа"""
    if jobs <= 1 or len(items) < 2:
        return [func(x) for x in items]

    chunksize = max(1, len(items) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
