"""
Code-switching по словарю: слова HRL заменяются переводами на LRL,
чтобы аугментационный текст был ближе к орфографии LRL.

Совпадение по целому токену без учёта регистра. "water," со знаком
препинания не совпадает с "water", если не включён strip_punct.
"""

import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from corpus import MonoCorpus, ParallelCorpus, SEED_MASK, Sentence, match_case, ordered_map
from errors import DomainError, LexiconError


logger = logging.getLogger(__name__)

_TRAILING_PUNCT = re.compile(r"^(.*?)([^\w]*)$", re.S)


@dataclass(frozen=True)
class CodeSwitchLexicon:
    entries: Dict[str, str]
    name: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, token: str) -> Optional[str]:
        return self.entries.get(token.casefold())


@dataclass
class CodeSwitchStats:
    seen: int = 0
    matched: int = 0
    replaced: int = 0
    replaced_by_word: Counter = field(default_factory=Counter)

    def merge(self, other: "CodeSwitchStats") -> "CodeSwitchStats":
        self.seen += other.seen
        self.matched += other.matched
        self.replaced += other.replaced
        self.replaced_by_word.update(other.replaced_by_word)
        return self

    def to_dict(self) -> dict:
        return {
            "kind": "codeswitch",
            "tokens_seen": self.seen,
            "tokens_matched": self.matched,
            "tokens_replaced": self.replaced,
            "top_replaced": dict(self.replaced_by_word.most_common(20)),
        }


# Словарь
# =====================

def parse_lexicon(text: str, name: str = "", source: str = "<string>") -> CodeSwitchLexicon:
    entries: Dict[str, str] = {}
    first_line: Dict[str, int] = {}

    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = unicodedata.normalize("NFC", raw.rstrip("\r"))
        if not line.strip() or line.startswith("#"):
            continue

        fields = line.split("\t")
        if len(fields) != 2:
            raise LexiconError(f"{source}: line {line_no}: expected hrl<TAB>lrl, got {len(fields)} fields")

        key, value = fields[0].strip().casefold(), fields[1].strip()
        if not key or not value:
            raise LexiconError(f"{source}: line {line_no}: empty key or value")
        if len(key.split()) != 1 or len(value.split()) != 1:
            raise LexiconError(f"{source}: line {line_no}: entries must be single tokens")

        if key in entries:
            raise LexiconError(
                f"{source}: duplicate key {key!r} on lines {first_line[key]} and {line_no}"
            )
        entries[key] = value
        first_line[key] = line_no

    return CodeSwitchLexicon(entries=entries, name=name)


def load_lexicon(path: Union[str, Path]) -> CodeSwitchLexicon:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise LexiconError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e

    lexicon = parse_lexicon(text, name=path.stem, source=str(path))
    logger.info(f"Словарь {path.name}: {len(lexicon)} статей")
    return lexicon


# Применение
# =====================

def _split_token(token: str, strip_punct: bool) -> Tuple[str, str]:
    if not strip_punct:
        return token, ""
    core, tail = _TRAILING_PUNCT.match(token).groups()
    return core, tail


def _switch_sentence(
    lexicon: CodeSwitchLexicon,
    rate: float,
    seed: int,
    strip_punct: bool,
    item: Tuple[int, Sentence],
) -> Tuple[Sentence, CodeSwitchStats]:
    index, sentence = item
    # Генератор на предложение: параллельный и последовательный прогоны совпадают
    rng = np.random.default_rng([int(seed) & SEED_MASK, index])
    stats = CodeSwitchStats()

    tokens = []
    for token in sentence.tokens:
        stats.seen += 1
        core, tail = _split_token(token, strip_punct)
        replacement = lexicon.get(core) if core else None
        if replacement is None:
            tokens.append(token)
            continue

        stats.matched += 1
        # Одна случайная величина на совпадение, при любом rate
        if rng.random() < rate:
            tokens.append(match_case(core, replacement) + tail)
            stats.replaced += 1
            stats.replaced_by_word[core.casefold()] += 1
        else:
            tokens.append(token)

    return Sentence(text=" ".join(tokens), tokens=tuple(tokens)), stats


def apply_code_switch(
    lexicon: CodeSwitchLexicon,
    sentences: Sequence[Sentence],
    rate: float = config.CODESWITCH_RATE,
    seed: int = config.DEFAULT_SEED,
    strip_punct: bool = False,
    jobs: int = 1,
) -> Tuple[List[Sentence], CodeSwitchStats]:
    if not 0.0 <= rate <= 1.0:
        raise DomainError(f"code-switch rate must be in [0, 1], got {rate}")

    func = partial(_switch_sentence, lexicon, rate, seed, strip_punct)
    results = ordered_map(func, list(enumerate(sentences)), jobs=jobs)

    total = CodeSwitchStats()
    for _, stats in results:
        total.merge(stats)

    logger.info(
        f"Code-switching: токенов {total.seen:,}, совпало {total.matched:,}, заменено {total.replaced:,}"
    )
    return [s for s, _ in results], total


def apply_code_switch_corpus(
    lexicon: CodeSwitchLexicon,
    corpus: Union[MonoCorpus, ParallelCorpus],
    side: str = "source",
    rate: float = config.CODESWITCH_RATE,
    seed: int = config.DEFAULT_SEED,
    strip_punct: bool = False,
    jobs: int = 1,
) -> Tuple[Union[MonoCorpus, ParallelCorpus], CodeSwitchStats]:
    if isinstance(corpus, MonoCorpus):
        sentences, stats = apply_code_switch(lexicon, corpus.sentences, rate, seed, strip_punct, jobs)
        return corpus.with_items(sentences), stats

    if side not in ("source", "target"):
        raise ValueError(f"Unknown side: {side}")

    column = 0 if side == "source" else 1
    sentences, stats = apply_code_switch(
        lexicon, [p[column] for p in corpus.pairs], rate, seed, strip_punct, jobs
    )
    if column == 0:
        pairs = tuple((new, tgt) for new, (_, tgt) in zip(sentences, corpus.pairs))
    else:
        pairs = tuple((src, new) for new, (src, _) in zip(sentences, corpus.pairs))

    result = ParallelCorpus(
        corpus.source_lang, corpus.target_lang, pairs, provenance="transformed", genre=corpus.genre
    )
    return result, stats
