"""
Переводчики для построения синтетических данных.

Настоящие NMT-системы внешние: сюда они подключаются как команда
(строка на вход, строка на выход) или HTTP-эндпоинт. Для тестов и
псевдо-LRL есть встроенные: identity и движок правил.

HTTP-протокол: POST {"from": lang, "to": lang, "lines": [...]} -> {"lines": [...]}
"""

import logging
import subprocess
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from functools import partial
from typing import Callable, List, Optional, Sequence

import requests

import config
from corpus import Sentence, normalize, ordered_map
from errors import TranslatorProtocolError
from syntree import SyntaxRuleSet, apply_tree_rules, parse_bracketed, tree_yield
from translit import RewriteRuleSet, apply_rules


logger = logging.getLogger(__name__)


class Translator(ABC):
    kind = "abstract"

    def __init__(self, name: str = "", source_lang: str = "", target_lang: str = ""):
        self.name = name or self.kind
        self.source_lang = source_lang
        self.target_lang = target_lang

    @abstractmethod
    def translate(self, lines: Sequence[str], from_lang: str, to_lang: str) -> List[str]:
        """Столько же строк на выходе, в том же порядке"""

    def supports(self, from_lang: str, to_lang: str) -> bool:
        # Пустой язык = любой
        return (not self.source_lang or self.source_lang == from_lang) and (
            not self.target_lang or self.target_lang == to_lang
        )

    def describe(self) -> dict:
        return {"name": self.name, "kind": self.kind, "from": self.source_lang, "to": self.target_lang}


class IdentityTranslator(Translator):
    kind = "identity"

    def translate(self, lines, from_lang, to_lang):
        return list(lines)


class FunctionTranslator(Translator):
    """Обёртка над функцией str -> str (игрушечные переводчики)"""

    kind = "function"

    def __init__(self, func: Callable[[str], str], name: str = "", source_lang: str = "", target_lang: str = ""):
        super().__init__(name, source_lang, target_lang)
        self.func = func

    def translate(self, lines, from_lang, to_lang):
        return [self.func(line) for line in lines]


def _rule_line(rewrite: Optional[RewriteRuleSet], syntax: Optional[SyntaxRuleSet], line: str) -> str:
    if syntax is not None:
        line = " ".join(tree_yield(apply_tree_rules(syntax, parse_bracketed(line))))
    if rewrite is not None:
        line = apply_rules(rewrite, line)
    return line


class RuleTranslator(Translator):
    """
    Движок правил как вырожденный переводчик: сначала синтаксис (строки -
    деревья в скобочной записи), потом орфография.
    """

    kind = "rules"

    def __init__(
        self,
        rewrite: Optional[RewriteRuleSet] = None,
        syntax: Optional[SyntaxRuleSet] = None,
        name: str = "",
        source_lang: str = "",
        target_lang: str = "",
        jobs: int = 1,
    ):
        if rewrite is None and syntax is None:
            raise ValueError("RuleTranslator needs rewrite rules, syntax rules or both")
        if rewrite is not None:
            source_lang = source_lang or rewrite.direction[0]
            target_lang = target_lang or rewrite.direction[1]
        super().__init__(name, source_lang, target_lang)
        self.rewrite = rewrite
        self.syntax = syntax
        self.jobs = jobs

    def translate(self, lines, from_lang, to_lang):
        return ordered_map(partial(_rule_line, self.rewrite, self.syntax), list(lines), jobs=self.jobs)

    def describe(self) -> dict:
        info = super().describe()
        info["rewrite_rules"] = len(self.rewrite) if self.rewrite is not None else 0
        info["syntax_rules"] = len(self.syntax) if self.syntax is not None else 0
        return info


class CommandTranslator(Translator):
    """Внешняя команда: строки в stdin, столько же строк из stdout. {from}/{to} подставляются."""

    kind = "command"

    def __init__(
        self,
        command: Sequence[str],
        name: str = "",
        source_lang: str = "",
        target_lang: str = "",
        timeout: float = config.TRANSLATOR_TIMEOUT,
    ):
        super().__init__(name, source_lang, target_lang)
        self.command = list(command)
        self.timeout = timeout

    def translate(self, lines, from_lang, to_lang):
        if not lines:
            return []

        argv = [arg.replace("{from}", from_lang).replace("{to}", to_lang) for arg in self.command]
        logger.debug(f"Запуск {argv}")
        try:
            proc = subprocess.run(
                argv,
                input="\n".join(lines) + "\n",
                capture_output=True,
                text=True,
                encoding="utf-8",
                timeout=self.timeout,
                check=False,
            )
        except subprocess.TimeoutExpired as e:
            raise TranslatorProtocolError(f"translator {self.name!r} timed out after {self.timeout}s") from e
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-1:] or [""]
            raise TranslatorProtocolError(
                f"translator {self.name!r} exited with status {proc.returncode}: {tail[0]}"
            )

        out = proc.stdout.split("\n")
        if out and out[-1] == "":
            out.pop()
        return out

    def describe(self) -> dict:
        info = super().describe()
        info["command"] = self.command
        return info


class HttpTranslator(Translator):
    kind = "http"

    def __init__(
        self,
        url: str,
        name: str = "",
        source_lang: str = "",
        target_lang: str = "",
        batch_size: int = config.TRANSLATOR_BATCH_SIZE,
        timeout: float = config.TRANSLATOR_TIMEOUT,
        workers: int = config.TRANSLATOR_WORKERS,
        session: Optional[requests.Session] = None,
    ):
        super().__init__(name, source_lang, target_lang)
        self.url = url
        self.batch_size = max(1, batch_size)
        self.timeout = timeout
        self.workers = max(1, workers)
        self.session = session or requests.Session()
        self.session.headers.update({
            "Accept": "application/json",
            "Content-Type": "application/json",
        })

    def _post(self, batch: List[str], from_lang: str, to_lang: str) -> List[str]:
        response = self.session.post(
            self.url,
            json={"from": from_lang, "to": to_lang, "lines": batch},
            timeout=self.timeout,
        )
        response.raise_for_status()

        try:
            data = response.json()
        except ValueError as e:
            raise TranslatorProtocolError(f"translator {self.name!r} returned invalid JSON") from e

        lines = data.get("lines") if isinstance(data, dict) else None
        if not isinstance(lines, list) or not all(isinstance(x, str) for x in lines):
            raise TranslatorProtocolError(f"translator {self.name!r}: response has no 'lines' list of strings")
        if len(lines) != len(batch):
            raise TranslatorProtocolError(
                f"translator {self.name!r} returned {len(lines)} lines for a batch of {len(batch)}"
            )
        return lines

    def translate(self, lines, from_lang, to_lang):
        lines = list(lines)
        if not lines:
            return []

        batches = [lines[i:i + self.batch_size] for i in range(0, len(lines), self.batch_size)]
        post = partial(self._post, from_lang=from_lang, to_lang=to_lang)

        # pool.map сохраняет порядок батчей
        with ThreadPoolExecutor(max_workers=min(self.workers, len(batches))) as pool:
            results = list(pool.map(post, batches))

        logger.info(f"{self.name}: {len(lines):,} строк, {len(batches)} батчей")
        return [line for batch in results for line in batch]

    def describe(self) -> dict:
        info = super().describe()
        info["url"] = self.url
        return info


def run_translator(
    translator: Translator,
    sentences: Sequence[Sentence],
    from_lang: str,
    to_lang: str,
) -> List[Sentence]:
    """Перевод с проверкой протокола: направление, число строк, непустые строки."""
    if not translator.supports(from_lang, to_lang):
        raise TranslatorProtocolError(
            f"translator {translator.name!r} translates {translator.source_lang}->{translator.target_lang}, "
            f"needed {from_lang}->{to_lang}"
        )
    if not sentences:
        return []

    out = translator.translate([s.text for s in sentences], from_lang, to_lang)
    if len(out) != len(sentences):
        raise TranslatorProtocolError(
            f"translator {translator.name!r} returned {len(out)} lines for {len(sentences)} inputs"
        )

    result = []
    for i, line in enumerate(out, start=1):
        sentence = normalize(line)
        if not sentence.text:
            raise TranslatorProtocolError(f"translator {translator.name!r} returned an empty line {i}")
        result.append(sentence)
    return result
