"""
Движок переписывающих правил: орфография HRL -> LRL и G2P (графемы -> IPA).

Семантика: один проход слева направо. На каждой позиции срабатывает правило
с самым длинным совпадением паттерна (при равной длине - первое по файлу),
у которого выполнены контексты. Заменённый текст повторно не матчится.
Контексты проверяются по исходной строке.

Формат файла правил:
    # комментарий
    % direction = fra hat
    ::V:: = a e i o u
    ou -> w / _ ::V::
    e -> 0 / ::C:: _ #
"""

import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import config
from corpus import MonoCorpus, ParallelCorpus, Sentence, match_case, normalize, ordered_map
from errors import RuleParseError, RuleSemanticError


logger = logging.getLogger(__name__)

BOUNDARY = "#"
EMPTY_REPLACEMENT = "0"

_CLASS_LINE = re.compile(r"^::(\w+):: = (.+)$")
_RULE_LINE = re.compile(r"^(\S+) -> (\S+)(?: / (?:(\S+) )?_(?: (\S+))?)?$")
_DIRECTION_LINE = re.compile(r"^% direction = (\S+) (\S+)$")
_ELEMENT = re.compile(r"::(\w+)::|(#)|(.)", re.S)


@dataclass(frozen=True)
class CharClass:
    name: str
    members: Tuple[str, ...]


@dataclass(frozen=True)
class RewriteRule:
    pattern: str
    replacement: str
    left: Optional[str] = None
    right: Optional[str] = None
    index: int = 0
    line: int = 0

    def __str__(self) -> str:
        text = f"{self.pattern} -> {self.replacement or EMPTY_REPLACEMENT}"
        if self.left is not None or self.right is not None:
            left = f"{self.left} " if self.left else ""
            right = f" {self.right}" if self.right else ""
            text += f" / {left}_{right}"
        return text


@dataclass(frozen=True)
class _CompiledRule:
    rule: RewriteRule
    pattern: "re.Pattern"
    left: Optional["re.Pattern"]
    right: Optional["re.Pattern"]
    first_chars: Tuple[str, ...]


@dataclass(frozen=True)
class RewriteRuleSet:
    classes: Dict[str, CharClass]
    rules: Tuple[RewriteRule, ...]
    direction: Tuple[str, str] = ("", "")
    _by_first: Dict[str, Tuple[_CompiledRule, ...]] = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        compiled = [_compile_rule(rule, self.classes) for rule in self.rules]

        # Индекс по первому символу, порядок правил внутри сохраняется
        by_first: Dict[str, List[_CompiledRule]] = {}
        for c in compiled:
            for ch in c.first_chars:
                by_first.setdefault(ch, []).append(c)
        object.__setattr__(self, "_by_first", {k: tuple(v) for k, v in by_first.items()})

    def __len__(self) -> int:
        return len(self.rules)

    @classmethod
    def empty(cls) -> "RewriteRuleSet":
        return cls(classes={}, rules=())

    @property
    def target_script(self) -> str:
        return self.direction[1]


@dataclass
class RewriteStats:
    rules_fired: Counter = field(default_factory=Counter)
    chars_changed: int = 0
    unmapped: Counter = field(default_factory=Counter)

    def merge(self, other: "RewriteStats") -> "RewriteStats":
        self.rules_fired.update(other.rules_fired)
        self.chars_changed += other.chars_changed
        self.unmapped.update(other.unmapped)
        return self

    def to_dict(self) -> dict:
        return {
            "kind": "rewrite",
            "rules_fired": sum(self.rules_fired.values()),
            "rules_fired_by_index": {str(k): v for k, v in sorted(self.rules_fired.items())},
            "chars_changed": self.chars_changed,
            "unmapped_chars": sum(self.unmapped.values()),
            "unmapped_by_char": dict(self.unmapped.most_common()),
        }


# Компиляция
# =====================

def _class_alternation(members: Tuple[str, ...]) -> str:
    # Длинные члены первыми, иначе альтернатива в re возьмёт короткий
    ordered = sorted(members, key=len, reverse=True)
    return "(?:" + "|".join(re.escape(m) for m in ordered) + ")"


def _expr_to_regex(expr: str, classes: Dict[str, CharClass], where: str, side: Optional[str]) -> str:
    parts = []
    for m in _ELEMENT.finditer(expr):
        name, boundary, literal = m.groups()
        if name is not None:
            if name not in classes:
                raise RuleSemanticError(f"{where}: undefined class ::{name}::")
            parts.append(_class_alternation(classes[name].members))
        elif boundary is not None:
            if side is None:
                raise RuleParseError(f"{where}: boundary marker '#' is not allowed in a pattern")
            # Граница слова: начало/конец строки или соседний не-буквенный символ
            parts.append("(?<!\\w)" if side == "left" else "(?!\\w)")
        else:
            parts.append(re.escape(literal))
    return "".join(parts)


def _first_chars(expr: str, classes: Dict[str, CharClass]) -> Tuple[str, ...]:
    m = _ELEMENT.match(expr)
    name, _, literal = m.groups()
    if name is not None:
        return tuple(sorted({member[0] for member in classes[name].members}))
    return (literal,)


def _compile_rule(rule: RewriteRule, classes: Dict[str, CharClass]) -> _CompiledRule:
    where = f"rule {rule.index} (line {rule.line})"
    pattern = re.compile(_expr_to_regex(rule.pattern, classes, where, side=None))

    left = right = None
    if rule.left:
        left = re.compile("(?:" + _expr_to_regex(rule.left, classes, where, side="left") + ")\\Z")
    if rule.right:
        right = re.compile(_expr_to_regex(rule.right, classes, where, side="right"))

    return _CompiledRule(rule, pattern, left, right, _first_chars(rule.pattern, classes))


# Разбор файла
# =====================

def parse_rule_file(text: str, direction: Optional[Tuple[str, str]] = None) -> RewriteRuleSet:
    classes: Dict[str, CharClass] = {}
    rules: List[RewriteRule] = []
    file_direction = None

    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = unicodedata.normalize("NFC", raw.rstrip("\r").rstrip())
        if not line or line.startswith("#"):
            continue

        m = _DIRECTION_LINE.match(line)
        if m:
            file_direction = (m.group(1), m.group(2))
            continue

        m = _CLASS_LINE.match(line)
        if m:
            name, members = m.group(1), tuple(m.group(2).split())
            if name in classes:
                raise RuleParseError(f"line {line_no}: class ::{name}:: defined twice")
            if not members:
                raise RuleParseError(f"line {line_no}: class ::{name}:: has no members")
            classes[name] = CharClass(name, members)
            continue

        if line.startswith("->"):
            raise RuleParseError(f"line {line_no}: empty pattern: {line!r}")

        m = _RULE_LINE.match(line)
        if not m:
            raise RuleParseError(f"line {line_no}: malformed line: {line!r}")

        pattern, replacement, left, right = m.groups()
        has_context = " / " in line
        rules.append(RewriteRule(
            pattern=pattern,
            replacement="" if replacement == EMPTY_REPLACEMENT else replacement,
            left=left if has_context else None,
            right=right if has_context else None,
            index=len(rules) + 1,
            line=line_no,
        ))

    return RewriteRuleSet(
        classes=classes,
        rules=tuple(rules),
        direction=direction or file_direction or ("", ""),
    )


def load_rule_file(path: Union[str, Path]) -> RewriteRuleSet:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise RuleParseError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e

    try:
        rules = parse_rule_file(text)
    except (RuleParseError, RuleSemanticError) as e:
        raise type(e)(f"{path}: {e}") from e

    if rules.direction == ("", ""):
        # fra_hat.rules -> ("fra", "hat")
        parts = path.stem.split("_")
        rules = RewriteRuleSet(rules.classes, rules.rules, direction=(parts[0], parts[-1]))

    logger.info(f"Правила {path.name}: {len(rules.classes)} классов, {len(rules)} правил")
    return rules


# Применение
# =====================

def _fold(text: str) -> str:
    # Посимвольно, чтобы длина не менялась (İ.lower() даёт два символа)
    return "".join(ch.lower() if len(ch.lower()) == 1 else ch for ch in text)


def _capital_starts(text: str) -> set:
    """Позиции первых букв токенов, написанных с заглавной"""
    return {
        i for i, ch in enumerate(text)
        if ch.isupper() and (i == 0 or not text[i - 1].isalnum())
    }


def apply_rules_with_stats(rules: RewriteRuleSet, text: str, keep_case: bool = True) -> Tuple[str, RewriteStats]:
    stats = RewriteStats()
    folded = _fold(text)
    copy_from = text if keep_case else folded
    capitals = _capital_starts(text) if keep_case else set()

    out = []
    # Заглавная ждёт первую букву выхода своего токена (первая могла удалиться)
    pending = False
    i, n = 0, len(folded)
    while i < n:
        best, best_len = None, 0
        for c in rules._by_first.get(folded[i], ()):
            m = c.pattern.match(folded, i)
            if m is None:
                continue
            length = m.end() - i
            if length <= best_len:
                continue
            if c.left is not None and c.left.search(folded, 0, i) is None:
                continue
            if c.right is not None and c.right.match(folded, m.end()) is None:
                continue
            best, best_len = c.rule, length

        if i in capitals:
            pending = True
        elif not folded[i].isalnum():
            pending = False

        if best is None:
            piece = copy_from[i]
            if not piece.isspace():
                stats.unmapped[piece] += 1
            step = 1
        else:
            piece = best.replacement
            stats.rules_fired[best.index] += 1
            if piece != folded[i:i + best_len]:
                stats.chars_changed += best_len
            if keep_case and piece and text[i].isupper():
                piece = match_case(text[i], piece)
            step = best_len

        if pending and piece[:1].isalpha():
            piece = match_case("A", piece)
            pending = False

        out.append(piece)
        i += step

    return "".join(out), stats


def apply_rules(rules: RewriteRuleSet, text: str, keep_case: bool = True) -> str:
    return apply_rules_with_stats(rules, text, keep_case=keep_case)[0]


def g2p(rules: RewriteRuleSet, word: str) -> str:
    """Слово -> строка IPA. Неизвестные символы идут как есть, их отловит phonvec."""
    if rules.target_script and rules.target_script != "ipa":
        logger.debug(f"g2p с правилами направления {rules.direction}, а не *->ipa")
    return apply_rules(rules, word, keep_case=False)


def _transform_sentence(rules: RewriteRuleSet, sentence: Sentence) -> Tuple[Sentence, RewriteStats]:
    out, stats = apply_rules_with_stats(rules, sentence.text)
    result = normalize(out)
    if not result.text:
        # Правила удалили всё предложение - оставляем исходное, иначе сломается выравнивание
        logger.warning(f"Правила удалили предложение целиком, оставляем как есть: {sentence.text!r}")
        return sentence, stats
    return result, stats


def transliterate_sentences(
    rules: RewriteRuleSet, sentences: Tuple[Sentence, ...], jobs: int = 1
) -> Tuple[List[Sentence], RewriteStats]:
    results = ordered_map(partial(_transform_sentence, rules), list(sentences), jobs=jobs)

    total = RewriteStats()
    for _, stats in results:
        total.merge(stats)
    return [s for s, _ in results], total


def transliterate_corpus(
    rules: RewriteRuleSet,
    corpus: Union[MonoCorpus, ParallelCorpus],
    side: str = "source",
    jobs: int = 1,
) -> Tuple[Union[MonoCorpus, ParallelCorpus], RewriteStats]:
    """Применить правила к моно-корпусу или к одной стороне bitext. Выравнивание не меняется."""
    if isinstance(corpus, MonoCorpus):
        sentences, stats = transliterate_sentences(rules, corpus.sentences, jobs=jobs)
        return corpus.with_items(sentences), stats

    if side not in ("source", "target"):
        raise ValueError(f"Unknown side: {side}")

    column = 0 if side == "source" else 1
    sentences, stats = transliterate_sentences(rules, tuple(p[column] for p in corpus.pairs), jobs=jobs)

    if column == 0:
        pairs = tuple((new, tgt) for new, (_, tgt) in zip(sentences, corpus.pairs))
    else:
        pairs = tuple((src, new) for new, (src, _) in zip(sentences, corpus.pairs))

    # Язык преобразованной стороны берём из направления правил
    source_lang, target_lang = corpus.source_lang, corpus.target_lang
    if rules.target_script:
        if column == 0:
            source_lang = rules.target_script
        else:
            target_lang = rules.target_script

    result = ParallelCorpus(
        source_lang,
        target_lang,
        pairs,
        provenance="transformed",
        genre=corpus.genre,
    )
    logger.info(f"Транслитерация: {len(result):,} предложений, сработало правил: {sum(stats.rules_fired.values()):,}")
    return result, stats


def load_shipped(name: str) -> RewriteRuleSet:
    """fra_hat, fra_ipa, hat_ipa, eng_ipa, jam_ipa"""
    if name not in config.SHIPPED_RULES:
        raise RuleParseError(f"unknown rule set {name!r}, expected a .rules path or one of {sorted(config.SHIPPED_RULES)}")
    return load_rule_file(config.SHIPPED_RULES[name])


def load_rules(spec: Union[str, Path]) -> RewriteRuleSet:
    """Путь к файлу правил или имя встроенного набора"""
    if str(spec).endswith(".rules") or Path(spec).exists():
        return load_rule_file(spec)
    return load_shipped(str(spec))
