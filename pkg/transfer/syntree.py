"""
Синтаксический движок: деревья составляющих в скобочной записи (PTB)
и правила перестановки/вставки/замены детей по меткам.

Деревья приходят готовыми, по одному на строку. Сам парсер
(нейросетевой) внешний, здесь его нет.

Формат правил:
    # комментарий
    NP: D=d N=n => n d
    VP#impf: V=v *=rest => "tap" v rest
"""

import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from codeswitch import load_lexicon
from corpus import MonoCorpus, Sentence, match_case, normalize, ordered_map, read_lines
from errors import RuleParseError, TreeParseError


logger = logging.getLogger(__name__)

WILDCARD = "*"
INSERTED_LABEL = "INS"

_BRACKET_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_SYNTAX_LINE = re.compile(r"^(\S+): (.+?) => (.+)$")
_CHILD_ELEMENT = re.compile(r"^([^\s=]+)=(\w+)$")
_TEMPLATE = re.compile(r'^(?:"[^"\s]+"|\w+)(?:\s+(?:"[^"\s]+"|\w+))*$')
_TEMPLATE_ITEM = re.compile(r'"([^"\s]+)"|(\w+)')


@dataclass(frozen=True)
class ParseTree:
    label: str
    children: Tuple["ParseTree", ...] = ()
    terminal: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if bool(self.children) == (self.terminal is not None):
            raise TreeParseError(f"node {self.label!r} must have either children or a terminal")

    @property
    def is_leaf(self) -> bool:
        return self.terminal is not None

    @property
    def base_label(self) -> str:
        return self.label.split("#", 1)[0]

    def __str__(self) -> str:
        return render_bracketed(self)


@dataclass(frozen=True)
class ChildPattern:
    symbol: str
    var: str

    @property
    def is_wildcard(self) -> bool:
        return self.symbol == WILDCARD


@dataclass(frozen=True)
class TemplateItem:
    value: str
    literal: bool = False


@dataclass(frozen=True)
class SyntaxRule:
    parent: str
    children: Tuple[ChildPattern, ...]
    template: Tuple[TemplateItem, ...]
    index: int = 0
    line: int = 0

    def __str__(self) -> str:
        pattern = " ".join(f"{c.symbol}={c.var}" for c in self.children)
        template = " ".join(f'"{t.value}"' if t.literal else t.value for t in self.template)
        return f"{self.parent}: {pattern} => {template}"


@dataclass(frozen=True)
class SyntaxRuleSet:
    rules: Tuple[SyntaxRule, ...] = ()
    lexicon: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def __len__(self) -> int:
        return len(self.rules)


@dataclass
class SyntaxStats:
    rules_fired: Counter = field(default_factory=Counter)
    insertions: int = 0
    lexicon_hits: int = 0

    def merge(self, other: "SyntaxStats") -> "SyntaxStats":
        self.rules_fired.update(other.rules_fired)
        self.insertions += other.insertions
        self.lexicon_hits += other.lexicon_hits
        return self

    def to_dict(self) -> dict:
        return {
            "kind": "syntax",
            "rules_fired": sum(self.rules_fired.values()),
            "rules_fired_by_index": {str(k): v for k, v in sorted(self.rules_fired.items())},
            "insertions": self.insertions,
            "lexicon_hits": self.lexicon_hits,
        }


# Скобочная запись
# =====================

@dataclass
class _Frame:
    offset: int
    label: Optional[str] = None
    items: list = field(default_factory=list)


def _close(frame: _Frame, offset: int, is_root: bool) -> ParseTree:
    if frame.label is None:
        # ( (S ...) ) - безымянная обёртка PTB
        if is_root and len(frame.items) == 1 and isinstance(frame.items[0], ParseTree):
            return frame.items[0]
        if not frame.items:
            raise TreeParseError(f"empty node at offset {frame.offset}")
        raise TreeParseError(f"unlabeled node at offset {frame.offset}")

    if not frame.items:
        raise TreeParseError(f"empty node ({frame.label}) at offset {frame.offset}")

    tokens = [x for x in frame.items if isinstance(x, str)]
    if tokens and len(tokens) != len(frame.items):
        raise TreeParseError(f"node ({frame.label}) at offset {frame.offset} mixes tokens and subtrees")
    if len(tokens) > 1:
        raise TreeParseError(
            f"leaf ({frame.label}) at offset {frame.offset} has {len(tokens)} tokens, expected 1"
        )
    if tokens:
        return ParseTree(frame.label, terminal=tokens[0])
    return ParseTree(frame.label, children=tuple(frame.items))


def parse_bracketed(text: str) -> ParseTree:
    text = unicodedata.normalize("NFC", text)
    stack: List[_Frame] = []
    root = None

    for m in _BRACKET_TOKEN.finditer(text):
        tok, offset = m.group(), m.start()
        if root is not None:
            raise TreeParseError(f"unexpected content after tree at offset {offset}")

        if tok == "(":
            stack.append(_Frame(offset))
        elif tok == ")":
            if not stack:
                raise TreeParseError(f"unbalanced ')' at offset {offset}")
            node = _close(stack.pop(), offset, is_root=not stack)
            if stack:
                stack[-1].items.append(node)
            else:
                root = node
        else:
            if not stack:
                raise TreeParseError(f"token {tok!r} outside brackets at offset {offset}")
            frame = stack[-1]
            if frame.label is None and not frame.items:
                frame.label = tok
            else:
                frame.items.append(tok)

    if stack:
        raise TreeParseError(
            f"unbalanced brackets: {len(stack)} unclosed '(' at end of input (offset {len(text)})"
        )
    if root is None:
        raise TreeParseError("no tree in input")
    return root


def render_bracketed(tree: ParseTree) -> str:
    parts = []
    stack: list = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, str):
            parts.append(node)
        elif node.is_leaf:
            parts.append(f"({node.label} {node.terminal})")
        else:
            parts.append(f"({node.label}")
            stack.append(")")
            for child in reversed(node.children):
                stack.append(child)
                stack.append(" ")
    return "".join(parts)


def tree_yield(tree: ParseTree) -> List[str]:
    tokens = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if node.is_leaf:
            tokens.append(node.terminal)
        else:
            stack.extend(reversed(node.children))
    return tokens


def load_treebank(path: Union[str, Path]) -> List[ParseTree]:
    trees = []
    for i, line in enumerate(read_lines(path), start=1):
        if not line.strip():
            continue
        try:
            trees.append(parse_bracketed(line))
        except TreeParseError as e:
            raise TreeParseError(f"{path}: line {i}: {e}") from e

    logger.info(f"Загружено деревьев: {len(trees):,}")
    return trees


# Правила
# =====================

def _parse_rule_line(line: str, line_no: int, index: int) -> SyntaxRule:
    m = _SYNTAX_LINE.match(line)
    if not m:
        raise RuleParseError(f"line {line_no}: malformed line: {line!r}")
    parent, pattern_text, template_text = m.groups()

    children = []
    seen_vars = set()
    elements = pattern_text.split()
    for pos, element in enumerate(elements):
        em = _CHILD_ELEMENT.match(element)
        if not em:
            raise RuleParseError(f"line {line_no}: bad child element {element!r}")
        child = ChildPattern(symbol=em.group(1), var=em.group(2))
        if child.is_wildcard and pos != len(elements) - 1:
            raise RuleParseError(f"line {line_no}: wildcard {element!r} must be the last child")
        if child.var in seen_vars:
            raise RuleParseError(f"line {line_no}: variable {child.var!r} bound twice")
        seen_vars.add(child.var)
        children.append(child)

    if not _TEMPLATE.match(template_text):
        raise RuleParseError(f"line {line_no}: malformed template: {template_text!r}")

    template = []
    used_vars = set()
    for tm in _TEMPLATE_ITEM.finditer(template_text):
        literal, var = tm.groups()
        if literal is not None:
            template.append(TemplateItem(literal, literal=True))
            continue
        if var not in seen_vars:
            raise RuleParseError(f"line {line_no}: template variable {var!r} is not bound")
        if var in used_vars:
            raise RuleParseError(f"line {line_no}: template variable {var!r} used more than once")
        used_vars.add(var)
        template.append(TemplateItem(var))

    return SyntaxRule(parent, tuple(children), tuple(template), index=index, line=line_no)


def parse_syntax_rules(text: str, lexicon: Optional[Dict[str, str]] = None) -> SyntaxRuleSet:
    rules = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = unicodedata.normalize("NFC", raw.rstrip("\r").strip())
        if not line or line.startswith("#"):
            continue
        rules.append(_parse_rule_line(line, line_no, index=len(rules) + 1))
    return SyntaxRuleSet(rules=tuple(rules), lexicon=dict(lexicon or {}))


def load_syntax_lexicon(path: Union[str, Path]) -> Dict[str, str]:
    """TSV src<TAB>tgt, тот же формат, что у словаря code-switching"""
    return dict(load_lexicon(path).entries)


def load_syntax_rules(path: Union[str, Path], lexicon_path: Union[str, Path, None] = None) -> SyntaxRuleSet:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise RuleParseError(f"{path}: invalid UTF-8 at byte offset {e.start}") from e

    lexicon = load_syntax_lexicon(lexicon_path) if lexicon_path is not None else None
    try:
        rules = parse_syntax_rules(text, lexicon)
    except RuleParseError as e:
        raise RuleParseError(f"{path}: {e}") from e

    logger.info(f"Синтаксические правила {path.name}: {len(rules)} правил, словарь {len(rules.lexicon)}")
    return rules


# Применение
# =====================

def label_matches(symbol: str, label: str) -> bool:
    """NP совпадает с NP и NP#x; NP#x - только с NP#x"""
    if "#" in symbol:
        return symbol == label
    return symbol == label.split("#", 1)[0]


def _bind(rule: SyntaxRule, children: Tuple[ParseTree, ...]) -> Optional[Dict[str, Tuple[ParseTree, ...]]]:
    fixed = [c for c in rule.children if not c.is_wildcard]
    has_rest = len(fixed) != len(rule.children)

    if len(children) < len(fixed) or (not has_rest and len(children) != len(fixed)):
        return None

    bindings = {}
    for pattern, node in zip(fixed, children):
        if not label_matches(pattern.symbol, node.label):
            return None
        bindings[pattern.var] = (node,)
    if has_rest:
        bindings[rule.children[-1].var] = tuple(children[len(fixed):])
    return bindings


def _rewrite(rules: SyntaxRuleSet, node: ParseTree, stats: SyntaxStats) -> Tuple[ParseTree, ...]:
    for rule in rules.rules:
        if not label_matches(rule.parent, node.label):
            continue
        bindings = _bind(rule, node.children)
        if bindings is None:
            continue

        new_children = []
        inserted = 0
        for item in rule.template:
            if item.literal:
                new_children.append(ParseTree(INSERTED_LABEL, terminal=item.value))
                inserted += 1
            else:
                new_children.extend(bindings[item.value])

        if not new_children:
            # Узел без детей недопустим, правило пропускаем
            logger.debug(f"Правило {rule.index} оставило бы {node.label} пустым, пропуск")
            continue

        stats.rules_fired[rule.index] += 1
        stats.insertions += inserted
        return tuple(new_children)

    return node.children


def _transform_leaf(rules: SyntaxRuleSet, node: ParseTree, stats: SyntaxStats) -> ParseTree:
    if node.label == INSERTED_LABEL or not rules.lexicon:
        return node
    replacement = rules.lexicon.get(node.terminal.casefold())
    if replacement is None:
        return node
    stats.lexicon_hits += 1
    return ParseTree(node.label, terminal=match_case(node.terminal, replacement))


def _transform(rules: SyntaxRuleSet, tree: ParseTree, stats: SyntaxStats) -> ParseTree:
    # Сверху вниз без рекурсии: правило в узле, затем его (новые) дети
    results: List[ParseTree] = []
    stack: list = [(tree, False)]
    while stack:
        item, assemble = stack.pop()
        if assemble:
            label, count = item
            children = tuple(results[-count:])
            del results[-count:]
            results.append(ParseTree(label, children=children))
        elif item.is_leaf:
            results.append(_transform_leaf(rules, item, stats))
        else:
            children = _rewrite(rules, item, stats)
            stack.append(((item.label, len(children)), True))
            stack.extend((child, False) for child in reversed(children))
    return results[0]


def apply_tree_rules_with_stats(rules: SyntaxRuleSet, tree: ParseTree) -> Tuple[ParseTree, SyntaxStats]:
    """Один проход сверху вниз: в каждом узле первое подходящее правило, потом дети, словарь на листьях."""
    stats = SyntaxStats()
    return _transform(rules, tree, stats), stats


def apply_tree_rules(rules: SyntaxRuleSet, tree: ParseTree) -> ParseTree:
    return apply_tree_rules_with_stats(rules, tree)[0]


def _flatten(rules: SyntaxRuleSet, tree: ParseTree) -> Tuple[Sentence, SyntaxStats]:
    new_tree, stats = apply_tree_rules_with_stats(rules, tree)
    return normalize(" ".join(tree_yield(new_tree))), stats


def transform_treebank(
    rules: SyntaxRuleSet,
    trees: Sequence[ParseTree],
    lang: str = "",
    jobs: int = 1,
) -> Tuple[MonoCorpus, SyntaxStats]:
    results = ordered_map(partial(_flatten, rules), list(trees), jobs=jobs)

    total = SyntaxStats()
    for _, stats in results:
        total.merge(stats)

    logger.info(f"Синтаксис: {len(results):,} деревьев, сработало правил: {sum(total.rules_fired.values()):,}")
    return MonoCorpus(lang=lang, sentences=tuple(s for s, _ in results)), total
