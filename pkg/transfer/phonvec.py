"""
Артикуляторные фонологические векторы.

IPA-строка режется на фоны жадным самым длинным совпадением по таблице
признаков, вектор слова = сумма векторов его фонов (+ -> 1, - -> -1, 0 -> 0).
Порядок фонов не учитывается: анаграммы дают одинаковые векторы.
"""

import csv
import io
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import faiss
import numpy as np
import pandas as pd

import config
from errors import DimensionError, DomainError, FeatureTableError
from translit import RewriteRuleSet, g2p


logger = logging.getLogger(__name__)

CELL_VALUES = {"+": 1, "-": -1, "0": 0}


@dataclass(frozen=True, eq=False)
class PhoneFeatureTable:
    frame: pd.DataFrame  # index = сегмент, столбцы = признаки, int8
    _rows: Dict[str, np.ndarray] = field(default=None, init=False, repr=False)
    _max_len: int = field(default=0, init=False, repr=False)

    def __post_init__(self):
        if self.frame.empty:
            raise FeatureTableError("no entries")
        if not self.frame.index.is_unique:
            dup = self.frame.index[self.frame.index.duplicated()][0]
            raise FeatureTableError(f"duplicate segment {dup!r}")

        values = self.frame.to_numpy(dtype=np.int8)
        object.__setattr__(self, "_rows", {seg: values[i] for i, seg in enumerate(self.frame.index)})
        object.__setattr__(self, "_max_len", max(len(seg) for seg in self.frame.index))

    @classmethod
    def from_rows(cls, feature_names: Sequence[str], rows: Dict[str, Sequence[int]]) -> "PhoneFeatureTable":
        frame = pd.DataFrame.from_dict(
            {unicodedata.normalize("NFC", k): list(v) for k, v in rows.items()},
            orient="index",
            columns=list(feature_names),
        ).astype(np.int8)
        return cls(frame)

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return tuple(self.frame.columns)

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    @property
    def max_segment_length(self) -> int:
        return self._max_len

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, segment: str) -> bool:
        return segment in self._rows

    def vector(self, segment: str) -> np.ndarray:
        return self._rows[segment]


@dataclass(frozen=True)
class PhoneSequence:
    phones: Tuple[str, ...]
    offsets: Tuple[int, ...]
    residue: Tuple[Tuple[int, str], ...] = ()  # (позиция, символ)

    @property
    def unknown_residue(self) -> List[str]:
        return [ch for _, ch in self.residue]

    def reconstruct(self) -> str:
        pieces = sorted(list(zip(self.offsets, self.phones)) + list(self.residue))
        return "".join(p for _, p in pieces)


@dataclass(frozen=True, eq=False)
class WordEmbedding:
    word: str
    vector: np.ndarray
    residue: Tuple[str, ...] = ()
    phone_count: int = 0

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class Neighbors:
    query: str
    ranked: Tuple[Tuple[str, float], ...]


# Таблица признаков
# =====================

def parse_feature_table(text: str, source: str = "<string>") -> PhoneFeatureTable:
    reader = csv.reader(io.StringIO(text))
    header = None
    segments, rows = [], []
    seen: Dict[str, int] = {}

    for row in reader:
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue

        if header is None:
            header = [cell.strip() for cell in row]
            if header[0] != "segment" or len(header) < 2:
                raise FeatureTableError(f"{source}: line {line_no}: header must be segment,f1,...,fF")
            continue

        if len(row) != len(header):
            raise FeatureTableError(
                f"{source}: line {line_no}: ragged row, expected {len(header)} cells, got {len(row)}"
            )

        segment = unicodedata.normalize("NFC", row[0].strip())
        if not segment:
            raise FeatureTableError(f"{source}: line {line_no}: empty segment")
        if segment in seen:
            raise FeatureTableError(
                f"{source}: line {line_no}: duplicate segment {segment!r} (first on line {seen[segment]})"
            )

        values = []
        for name, cell in zip(header[1:], row[1:]):
            cell = cell.strip()
            if cell not in CELL_VALUES:
                raise FeatureTableError(
                    f"{source}: line {line_no}: invalid cell {cell!r} for feature {name!r}"
                )
            values.append(CELL_VALUES[cell])

        seen[segment] = line_no
        segments.append(segment)
        rows.append(values)

    if not rows:
        raise FeatureTableError(f"{source}: no entries")

    frame = pd.DataFrame(rows, index=pd.Index(segments, name="segment"), columns=header[1:], dtype=np.int8)
    return PhoneFeatureTable(frame)


def load_feature_table(path: Union[str, Path] = config.PHONE_FEATURES) -> PhoneFeatureTable:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise FeatureTableError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e

    table = parse_feature_table(text, source=str(path))
    logger.info(f"Таблица признаков {path.name}: {len(table)} сегментов, F={table.dim}")
    return table


# Сегментация и эмбеддинги
# =====================

def segment_phones(table: PhoneFeatureTable, ipa: str) -> PhoneSequence:
    ipa = unicodedata.normalize("NFC", ipa)
    phones, offsets, residue = [], [], []

    i, n = 0, len(ipa)
    while i < n:
        for length in range(min(table.max_segment_length, n - i), 0, -1):
            segment = ipa[i:i + length]
            if segment in table:
                phones.append(segment)
                offsets.append(i)
                i += length
                break
        else:
            residue.append((i, ipa[i]))
            i += 1

    return PhoneSequence(tuple(phones), tuple(offsets), tuple(residue))


def embed_word(table: PhoneFeatureTable, ipa: str, word: Optional[str] = None) -> WordEmbedding:
    sequence = segment_phones(table, ipa)
    vector = np.zeros(table.dim, dtype=np.int64)
    for phone in sequence.phones:
        vector += table.vector(phone)

    return WordEmbedding(
        word=ipa if word is None else word,
        vector=vector,
        residue=tuple(sequence.unknown_residue),
        phone_count=len(sequence.phones),
    )


def embed_words(
    table: PhoneFeatureTable,
    ipa_by_word: Union[Dict[str, str], Iterable[Tuple[str, str]]],
) -> List[WordEmbedding]:
    items = ipa_by_word.items() if isinstance(ipa_by_word, dict) else ipa_by_word
    return [embed_word(table, ipa, word=word) for word, ipa in items]


def embed_with_rules(
    table: PhoneFeatureTable,
    words: Sequence[str],
    rules: Optional[RewriteRuleSet] = None,
) -> List[WordEmbedding]:
    """Слова -> G2P (если даны правила) -> эмбеддинги. Без правил слова считаются уже IPA."""
    return embed_words(table, [(w, g2p(rules, w) if rules is not None else w) for w in words])


# Ближайшие соседи
# =====================

def _stack(embeddings: Sequence[WordEmbedding], dim: int) -> np.ndarray:
    for e in embeddings:
        if e.dim != dim:
            raise DimensionError(f"vector of {e.word!r} has dimension {e.dim}, expected {dim}")
    return np.ascontiguousarray(np.stack([e.vector for e in embeddings]).astype("float32"))


def _check_nonzero(embeddings: Sequence[WordEmbedding]) -> None:
    for e in embeddings:
        if not np.any(e.vector):
            raise DomainError(f"cosine similarity is undefined for the zero vector of {e.word!r}")


def nearest_neighbors(
    queries: Sequence[WordEmbedding],
    pool: Sequence[WordEmbedding],
    k: int = config.NEIGHBOR_TOP_K,
    metric: str = config.NEIGHBOR_METRIC,
) -> List[Neighbors]:
    """
    Для каждого запроса k ближайших из pool. Евклидово расстояние (меньше лучше)
    или косинусная близость (больше лучше). Равенство -> лексикографически по слову.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    if metric not in ("euclidean", "cosine"):
        raise DomainError(f"unknown metric {metric!r}, expected euclidean or cosine")
    if not queries:
        return []
    if not pool:
        return [Neighbors(q.word, ()) for q in queries]

    dim = pool[0].dim
    Q = _stack(queries, dim)
    P = _stack(pool, dim)

    if metric == "cosine":
        _check_nonzero(queries)
        _check_nonzero(pool)
        faiss.normalize_L2(Q)
        faiss.normalize_L2(P)
        index = faiss.IndexFlatIP(dim)
    else:
        index = faiss.IndexFlatL2(dim)

    # Полный перебор пула, затем свой порядок с тай-брейком по слову
    index.add(P)
    scores, ids = index.search(Q, len(pool))

    results = []
    for qi, query in enumerate(queries):
        scored = []
        for score, pi in zip(scores[qi], ids[qi]):
            if pi < 0:
                continue
            if metric == "euclidean":
                value = float(np.sqrt(max(float(score), 0.0)))
                key = (round(value, 6), pool[pi].word)
            else:
                value = float(score)
                key = (-round(value, 6), pool[pi].word)
            scored.append((key, pool[pi].word, value))

        scored.sort(key=lambda x: x[0])
        results.append(Neighbors(query.word, tuple((w, v) for _, w, v in scored[:k])))

    return results


def write_neighbors(results: Sequence[Neighbors], path: Union[str, Path]) -> None:
    rows = [
        {"query": r.query, "rank": rank, "neighbor": word, "score": score}
        for r in results
        for rank, (word, score) in enumerate(r.ranked, start=1)
    ]
    df = pd.DataFrame(rows, columns=["query", "rank", "neighbor", "score"])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(
        path, sep="\t", index=False, header=False, float_format="%.6f",
        quoting=csv.QUOTE_NONE, lineterminator="\n",
    )


def load_cognates(path: Union[str, Path] = config.COGNATES_FRA_HAT) -> List[Tuple[str, str]]:
    df = pd.read_csv(
        path, sep="\t", header=None, names=["hrl", "lrl"], dtype=str,
        keep_default_na=False, quoting=csv.QUOTE_NONE,
    )
    return [
        (unicodedata.normalize("NFC", a), unicodedata.normalize("NFC", b))
        for a, b in zip(df["hrl"], df["lrl"])
    ]


# Экспорт матрицы
# =====================

def embedding_matrix(
    vocab: Sequence[str],
    g2p_rules: Optional[RewriteRuleSet],
    table: PhoneFeatureTable,
    dim: int,
) -> Tuple[np.ndarray, Dict[str, str]]:
    """
    Строка на токен: сумма фонов, масштабированная до max|x| = 1, затем нули до dim.
    Возвращает матрицу и {токен: нераспознанные символы}.
    """
    if dim < table.dim:
        raise DimensionError(f"target dimension {dim} is smaller than feature count {table.dim}")

    matrix = np.zeros((len(vocab), dim), dtype=np.float64)
    residue: Dict[str, str] = {}

    for i, emb in enumerate(embed_with_rules(table, vocab, g2p_rules)):
        if emb.residue:
            residue[emb.word] = "".join(emb.residue)
        peak = np.abs(emb.vector).max()
        if peak > 0:
            matrix[i, :table.dim] = emb.vector / peak

    zero_rows = int((~matrix.any(axis=1)).sum())
    logger.info(f"Матрица {matrix.shape[0]}x{dim}, токенов с остатком: {len(residue)}, нулевых строк: {zero_rows}")
    return matrix, residue


def write_embedding_matrix(vocab: Sequence[str], matrix: np.ndarray, path: Union[str, Path]) -> None:
    """Текстовый формат word2vec: заголовок `N D`, далее `token v1 ... vD`"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for token, row in zip(vocab, matrix):
            f.write(token + " " + " ".join(f"{v:.6f}" for v in row) + "\n")


def write_residue_report(residue: Dict[str, str], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for token, chars in residue.items():
            f.write(f"{token}\t{chars}\n")


def export_embedding_matrix(
    vocab: Sequence[str],
    g2p_rules: Optional[RewriteRuleSet],
    table: PhoneFeatureTable,
    dim: int,
    path: Union[str, Path],
    report_path: Union[str, Path, None] = None,
) -> np.ndarray:
    matrix, residue = embedding_matrix(vocab, g2p_rules, table, dim)
    write_embedding_matrix(vocab, matrix, path)
    write_residue_report(residue, report_path or Path(str(path) + ".residue.tsv"))
    return matrix
