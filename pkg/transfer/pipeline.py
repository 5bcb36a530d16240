"""
Синтетические датасеты (synth_mono, synth_mix1, synth_mix2), расписание
аугментации и multi-source сборка. Всё описывается TOML-манифестом.

    synth_mono: TGT-моно --t--> LRL            пары (t(tgt), tgt)
    synth_mix1: HRL-TGT  --t--> LRL            пары (t(hrl), tgt)
    synth_mix2: TGT-моно --t1--> HRL --t2--> LRL  пары (t2(t1(tgt)), tgt)
"""

import json
import logging
import time

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import config
from corpus import (
    MonoCorpus,
    ParallelCorpus,
    load_bitext,
    load_mono,
    load_tsv_bitext,
    normalize,
    sample_slice,
    save_bitext,
    shuffle_corpus,
    validate_corpus,
)
from errors import CapacityError, CorpusError, ManifestError
from syntree import load_syntax_rules
from translators import (
    CommandTranslator,
    HttpTranslator,
    IdentityTranslator,
    RuleTranslator,
    Translator,
    run_translator,
)
from translit import load_rule_file, load_shipped


logger = logging.getLogger(__name__)

SYNTH_KINDS = ("synth_mono", "synth_mix1", "synth_mix2")
TRANSLATOR_KINDS = ("identity", "rules", "command", "http")


@dataclass(frozen=True)
class SynthBitext:
    corpus: ParallelCorpus
    lineage: dict

    def __len__(self) -> int:
        return len(self.corpus)

    @property
    def provenance(self) -> str:
        return self.corpus.provenance


@dataclass(frozen=True)
class TrainingSet:
    """Датасет расписания: конкатенация компонент (authentic + срезы synth)"""
    name: str
    components: Tuple[Tuple[str, ParallelCorpus], ...]

    def __len__(self) -> int:
        return sum(len(c) for _, c in self.components)

    @property
    def corpus(self) -> ParallelCorpus:
        first = self.components[0][1]
        pairs = tuple(p for _, c in self.components for p in c.pairs)
        tags = {c.provenance for _, c in self.components}
        provenance = tags.pop() if len(tags) == 1 else "transformed"
        return ParallelCorpus(first.source_lang, first.target_lang, pairs, provenance=provenance, genre=first.genre)

    def provenance_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for _, c in self.components:
            counts[c.provenance] = counts.get(c.provenance, 0) + len(c)
        return counts


# Синтетика
# =====================

def build_synth_mono(
    mono: MonoCorpus, translator: Translator, lrl: str, source_name: str = ""
) -> SynthBitext:
    """Back-translation: моно TGT -> LRL, пары (синтетический LRL, настоящий TGT)"""
    translated = run_translator(translator, mono.sentences, mono.lang, lrl)
    pairs = tuple(zip(translated, mono.sentences))
    corpus = ParallelCorpus(lrl, mono.lang, pairs, provenance="synth_mono", genre=mono.genre)

    lineage = {"construction": "synth_mono", "source": source_name, "translators": [translator.describe()]}
    logger.info(f"synth_mono: {len(corpus):,} пар")
    return SynthBitext(corpus, lineage)


def build_synth_mix1(
    hrl_tgt: ParallelCorpus, translator: Translator, lrl: str, source_name: str = ""
) -> SynthBitext:
    """HRL-сторона bitext HRL-TGT переводится в LRL, TGT без изменений"""
    translated = run_translator(translator, [src for src, _ in hrl_tgt.pairs], hrl_tgt.source_lang, lrl)
    pairs = tuple((new, tgt) for new, (_, tgt) in zip(translated, hrl_tgt.pairs))
    corpus = ParallelCorpus(lrl, hrl_tgt.target_lang, pairs, provenance="synth_mix1", genre=hrl_tgt.genre)

    lineage = {"construction": "synth_mix1", "source": source_name, "translators": [translator.describe()]}
    logger.info(f"synth_mix1: {len(corpus):,} пар")
    return SynthBitext(corpus, lineage)


def build_synth_mix2(
    mono: MonoCorpus,
    to_hrl: Translator,
    to_lrl: Translator,
    hrl: str,
    lrl: str,
    source_name: str = "",
) -> SynthBitext:
    """Пивот: TGT -> HRL -> LRL"""
    pivot = run_translator(to_hrl, mono.sentences, mono.lang, hrl)
    translated = run_translator(to_lrl, pivot, hrl, lrl)
    pairs = tuple(zip(translated, mono.sentences))
    corpus = ParallelCorpus(lrl, mono.lang, pairs, provenance="synth_mix2", genre=mono.genre)

    lineage = {
        "construction": "synth_mix2",
        "source": source_name,
        "pivot": hrl,
        "translators": [to_hrl.describe(), to_lrl.describe()],
    }
    logger.info(f"synth_mix2: {len(corpus):,} пар")
    return SynthBitext(corpus, lineage)


# Расписание
# =====================

@dataclass(frozen=True)
class ScheduleSpec:
    authentic: str
    starts: Tuple[int, ...]
    increments: Tuple[int, ...]


def _slice(corpus: ParallelCorpus, n: int, seed: int, stage: str) -> ParallelCorpus:
    try:
        return sample_slice(corpus, n, seed)
    except CapacityError as e:
        raise CapacityError(f"stage {stage}: {e}") from e


def build_schedule(
    schedule: ScheduleSpec,
    authentic: ParallelCorpus,
    synths: Dict[str, ParallelCorpus],
    seed: int = config.DEFAULT_SEED,
) -> List[TrainingSet]:
    """
    На каждый стартовый объём: authentic, затем +synth_mono по инкрементам,
    затем при максимуме synth_mono +synth_mix1, затем при максимуме обоих +synth_mix2.
    Срезы вложенные (seeded shuffle + префикс), каждая стадия - надмножество предыдущей.
    """
    increments = list(schedule.increments)
    top = max(increments) if increments else 0

    sets = []
    for start in schedule.starts:
        base_name = f"auth{start}"
        auth = _slice(authentic, start, seed, base_name)
        sets.append(TrainingSet(base_name, (("authentic", auth),)))

        held: List[Tuple[str, ParallelCorpus]] = [("authentic", auth)]
        prefix = base_name
        for kind, short in zip(SYNTH_KINDS, ("mono", "mix1", "mix2")):
            if kind not in synths or not increments:
                continue
            for inc in increments:
                name = f"{prefix}_{short}{inc}"
                part = _slice(synths[kind], inc, seed, name)
                sets.append(TrainingSet(name, tuple(held) + ((kind, part),)))

            # дальше держим этот вид на максимуме
            held.append((kind, _slice(synths[kind], top, seed, f"{prefix}_{short}{top}")))
            prefix = f"{prefix}_{short}{top}"

    logger.info(f"Расписание: {len(sets)} датасетов")
    return sets


# Multi-source
# =====================

def assemble_multisource(
    parts: Sequence[ParallelCorpus], tag_sources: bool = True, tag_format: str = config.SOURCE_TAG_FORMAT
) -> ParallelCorpus:
    """Конкатенация bitext'ов с общим TGT. Источник помечается токеном <lang>."""
    if not parts:
        raise CorpusError("multi-source assembly needs at least one part")

    target = parts[0].target_lang
    for i, part in enumerate(parts, start=1):
        if part.target_lang != target:
            raise CorpusError(
                f"part {i} ({part.source_lang}-{part.target_lang}) has target {part.target_lang!r}, "
                f"expected {target!r}"
            )

    pairs = []
    for part in parts:
        tag = tag_format.format(lang=part.source_lang)
        for src, tgt in part.pairs:
            pairs.append((normalize(f"{tag} {src.text}") if tag_sources else src, tgt))

    sources = []
    for part in parts:
        if part.source_lang not in sources:
            sources.append(part.source_lang)

    tags = {p.provenance for p in parts}
    provenance = tags.pop() if len(tags) == 1 else "transformed"
    return ParallelCorpus("+".join(sources), target, tuple(pairs), provenance=provenance)


# Манифест
# =====================

@dataclass(frozen=True)
class CorpusSpec:
    name: str
    kind: str  # bitext, tsv, mono
    paths: Tuple[Path, ...]
    source_lang: str
    target_lang: str = ""
    genre: str = ""


@dataclass(frozen=True)
class TranslatorSpec:
    name: str
    kind: str
    source_lang: str
    target_lang: str
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    corpus: str
    translators: Tuple[str, ...]
    lrl: str = ""


@dataclass(frozen=True)
class MultisourceSpec:
    name: str
    parts: Tuple[str, ...]
    tag_sources: bool = True


@dataclass(frozen=True)
class PipelineManifest:
    seed: int
    output_dir: Path
    base_dir: Path
    corpora: Dict[str, CorpusSpec]
    translators: Dict[str, TranslatorSpec]
    synth: Dict[str, SynthSpec] = field(default_factory=dict)
    schedule: Optional[ScheduleSpec] = None
    multisource: Dict[str, MultisourceSpec] = field(default_factory=dict)
    shuffle: bool = False
    write_synth: bool = False
    version: int = config.MANIFEST_VERSION


def _require(table: dict, key: str, where: str, kind=str):
    if key not in table:
        raise ManifestError(f"{where}: missing key {key!r}")
    value = table[key]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ManifestError(f"{where}: {key!r} must be {kind.__name__}")
    return value


def _int_list(table: dict, key: str, where: str) -> Tuple[int, ...]:
    values = _require(table, key, where, list)
    if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in values):
        raise ManifestError(f"{where}: {key!r} must be a list of non-negative integers")
    if list(values) != sorted(values):
        raise ManifestError(f"{where}: {key!r} must be non-decreasing, got {values}")
    return tuple(values)


def _parse_corpus(name: str, table: dict, base: Path) -> CorpusSpec:
    where = f"corpora.{name}"
    genre = table.get("genre", "")
    if "source" in table or "target" in table:
        paths = (base / _require(table, "source", where), base / _require(table, "target", where))
        return CorpusSpec(name, "bitext", paths, _require(table, "source_lang", where),
                          _require(table, "target_lang", where), genre)
    if "tsv" in table:
        return CorpusSpec(name, "tsv", (base / table["tsv"],), _require(table, "source_lang", where),
                          _require(table, "target_lang", where), genre)
    if "path" in table:
        return CorpusSpec(name, "mono", (base / table["path"],), _require(table, "lang", where), "", genre)
    raise ManifestError(f"{where}: needs source/target, tsv or path")


def _parse_translator(name: str, table: dict) -> TranslatorSpec:
    where = f"translators.{name}"
    kind = _require(table, "kind", where)
    if kind not in TRANSLATOR_KINDS:
        raise ManifestError(f"{where}: unknown kind {kind!r}, expected one of {TRANSLATOR_KINDS}")
    if kind == "rules" and "rules" not in table and "syntax" not in table:
        raise ManifestError(f"{where}: rules translator needs 'rules' and/or 'syntax'")
    if kind == "command":
        _require(table, "command", where, list)
    if kind == "http":
        _require(table, "url", where)

    options = {k: v for k, v in table.items() if k not in ("kind", "from", "to")}
    return TranslatorSpec(name, kind, table.get("from", ""), table.get("to", ""), options)


def parse_manifest(data: dict, base_dir: Union[str, Path] = ".") -> PipelineManifest:
    base = Path(base_dir)

    version = _require(data, "manifest_version", "manifest", int)
    if version != config.MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest_version {version}, expected {config.MANIFEST_VERSION}")

    corpora = {n: _parse_corpus(n, t, base) for n, t in data.get("corpora", {}).items()}
    translators = {n: _parse_translator(n, t) for n, t in data.get("translators", {}).items()}

    synth = {}
    for kind, table in data.get("synth", {}).items():
        where = f"synth.{kind}"
        if kind not in SYNTH_KINDS:
            raise ManifestError(f"{where}: unknown construction, expected one of {SYNTH_KINDS}")

        key, expected = ("bitext", ("bitext", "tsv")) if kind == "synth_mix1" else ("mono", ("mono",))
        corpus_name = _require(table, key, where)
        if corpus_name not in corpora:
            raise ManifestError(f"{where}: unknown corpus {corpus_name!r}")
        if corpora[corpus_name].kind not in expected:
            raise ManifestError(f"{where}: corpus {corpus_name!r} is {corpora[corpus_name].kind}, expected {key}")

        if kind == "synth_mix2":
            names = tuple(_require(table, "translators", where, list))
            if len(names) != 2:
                raise ManifestError(f"{where}: synth_mix2 needs exactly two translators (TGT->HRL, HRL->LRL)")
        else:
            names = (_require(table, "translator", where),)
        for t in names:
            if t not in translators:
                raise ManifestError(f"{where}: unknown translator {t!r}")

        synth[kind] = SynthSpec(kind, corpus_name, names, table.get("lrl", ""))

    schedule = None
    if "schedule" in data:
        table = data["schedule"]
        authentic = _require(table, "authentic", "schedule")
        if authentic not in corpora or corpora[authentic].kind == "mono":
            raise ManifestError(f"schedule: authentic corpus {authentic!r} must be a declared bitext")
        schedule = ScheduleSpec(
            authentic,
            _int_list(table, "starts", "schedule"),
            _int_list(table, "increments", "schedule"),
        )

    multisource = {}
    for name, table in data.get("multisource", {}).items():
        parts = tuple(_require(table, "parts", f"multisource.{name}", list))
        for part in parts:
            if part not in synth and (part not in corpora or corpora[part].kind == "mono"):
                raise ManifestError(f"multisource.{name}: part {part!r} is not a declared bitext or synth set")
        multisource[name] = MultisourceSpec(name, parts, bool(table.get("tag_sources", True)))

    return PipelineManifest(
        seed=int(data.get("seed", config.DEFAULT_SEED)),
        output_dir=base / data.get("output_dir", "datasets"),
        base_dir=base,
        corpora=corpora,
        translators=translators,
        synth=synth,
        schedule=schedule,
        multisource=multisource,
        shuffle=bool(data.get("shuffle", False)),
        write_synth=bool(data.get("write_synth", False)),
        version=version,
    )


def load_manifest(path: Union[str, Path]) -> PipelineManifest:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ManifestError(f"{path}: {e}") from e

    try:
        return parse_manifest(data, base_dir=path.parent)
    except ManifestError as e:
        raise ManifestError(f"{path}: {e}") from e


# Запуск
# =====================

def _load_corpus(spec: CorpusSpec) -> Union[MonoCorpus, ParallelCorpus]:
    if spec.kind == "bitext":
        return load_bitext(spec.paths[0], spec.paths[1], spec.source_lang, spec.target_lang, genre=spec.genre)
    if spec.kind == "tsv":
        return load_tsv_bitext(spec.paths[0], spec.source_lang, spec.target_lang, genre=spec.genre)
    return load_mono(spec.paths[0], spec.source_lang, genre=spec.genre)


def _rule_set(value: str, base: Path):
    # Путь к файлу или имя встроенного набора (fra_hat, jam_ipa, ...)
    if value.endswith(".rules"):
        return load_rule_file(base / value)
    return load_shipped(value)


def build_translator(spec: TranslatorSpec, base_dir: Union[str, Path] = ".", jobs: int = 1) -> Translator:
    base = Path(base_dir)
    opts = spec.options
    common = {"name": spec.name, "source_lang": spec.source_lang, "target_lang": spec.target_lang}

    if spec.kind == "identity":
        return IdentityTranslator(**common)
    if spec.kind == "rules":
        rewrite = _rule_set(opts["rules"], base) if "rules" in opts else None
        syntax = None
        if "syntax" in opts:
            lexicon = base / opts["lexicon"] if "lexicon" in opts else None
            syntax = load_syntax_rules(base / opts["syntax"], lexicon)
        return RuleTranslator(rewrite, syntax, jobs=jobs, **common)
    if spec.kind == "command":
        return CommandTranslator(opts["command"], timeout=opts.get("timeout", config.TRANSLATOR_TIMEOUT), **common)
    return HttpTranslator(
        opts["url"],
        batch_size=opts.get("batch_size", config.TRANSLATOR_BATCH_SIZE),
        timeout=opts.get("timeout", config.TRANSLATOR_TIMEOUT),
        workers=opts.get("workers", config.TRANSLATOR_WORKERS),
        **common,
    )


@dataclass(frozen=True)
class DatasetRecord:
    name: str
    source_path: Path
    target_path: Path
    meta_path: Path
    lines: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": str(self.source_path),
            "target": str(self.target_path),
            "meta": str(self.meta_path),
            "lines": self.lines,
        }


def _dataset_paths(out_dir: Path, name: str, src: str, tgt: str) -> Tuple[Path, Path]:
    if src == tgt:
        return out_dir / f"{name}.src.{src}", out_dir / f"{name}.tgt.{tgt}"
    return out_dir / f"{name}.{src}", out_dir / f"{name}.{tgt}"


def write_dataset(
    name: str,
    components: Sequence[Tuple[str, ParallelCorpus]],
    out_dir: Path,
    seed: int,
    shuffle: bool,
    lineage: Optional[dict] = None,
) -> DatasetRecord:
    training = TrainingSet(name, tuple(components))
    corpus = training.corpus
    for _, part in components:
        validate_corpus(part)
    if shuffle:
        corpus = shuffle_corpus(corpus, seed)

    src_path, tgt_path = _dataset_paths(out_dir, name, corpus.source_lang, corpus.target_lang)
    save_bitext(corpus, src_path, tgt_path)

    meta = {
        "name": name,
        "lines": len(corpus),
        "source_lang": corpus.source_lang,
        "target_lang": corpus.target_lang,
        "provenance": training.provenance_counts(),
        "components": [{"kind": kind, "lines": len(part), "genre": part.genre} for kind, part in components],
        "lineage": lineage or {},
        "seed": seed,
        "shuffled": shuffle,
        "manifest_version": config.MANIFEST_VERSION,
        "toolkit_version": config.__version__,
    }
    meta_path = out_dir / f"{name}.meta.json"
    with open(meta_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")

    return DatasetRecord(name, src_path, tgt_path, meta_path, len(corpus))


def run_manifest(
    manifest: PipelineManifest,
    output_dir: Union[str, Path, None] = None,
    jobs: int = 1,
) -> List[DatasetRecord]:
    out_dir = Path(output_dir) if output_dir is not None else manifest.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = manifest.seed

    print("=" * 80)
    print(f"PIPELINE: {len(manifest.corpora)} корпусов, seed={seed}")
    print("=" * 80)
    start_time = time.time()

    corpora = {name: _load_corpus(spec) for name, spec in manifest.corpora.items()}
    translators = {
        name: build_translator(spec, manifest.base_dir, jobs=jobs) for name, spec in manifest.translators.items()
    }

    authentic = corpora[manifest.schedule.authentic] if manifest.schedule else None

    synths: Dict[str, SynthBitext] = {}
    for kind, spec in manifest.synth.items():
        lrl = spec.lrl or (authentic.source_lang if authentic is not None else "")
        if not lrl:
            raise ManifestError(f"synth.{kind}: LRL unknown, set 'lrl' or declare a schedule")

        source = corpora[spec.corpus]
        ts = [translators[t] for t in spec.translators]
        if kind == "synth_mono":
            synths[kind] = build_synth_mono(source, ts[0], lrl, spec.corpus)
        elif kind == "synth_mix1":
            synths[kind] = build_synth_mix1(source, ts[0], lrl, spec.corpus)
        else:
            hrl = ts[0].target_lang or ts[1].source_lang
            if not hrl:
                raise ManifestError(f"synth.{kind}: pivot language unknown, set 'to' on {ts[0].name!r}")
            synths[kind] = build_synth_mix2(source, ts[0], ts[1], hrl, lrl, spec.corpus)
        print(f"   {kind}: {len(synths[kind]):,} пар")

    records = []
    lineage = {kind: s.lineage for kind, s in synths.items()}

    if manifest.write_synth:
        for kind, s in synths.items():
            records.append(write_dataset(kind, [(kind, s.corpus)], out_dir, seed, manifest.shuffle, s.lineage))

    if manifest.schedule is not None:
        sets = build_schedule(manifest.schedule, authentic, {k: s.corpus for k, s in synths.items()}, seed)
        for ts in sets:
            used = {kind: lineage[kind] for kind, _ in ts.components if kind in lineage}
            records.append(write_dataset(ts.name, ts.components, out_dir, seed, manifest.shuffle, used))

    for name, spec in manifest.multisource.items():
        parts = [synths[p].corpus if p in synths else corpora[p] for p in spec.parts]
        assembled = assemble_multisource(parts, tag_sources=spec.tag_sources)
        records.append(write_dataset(
            name, [(assembled.provenance, assembled)], out_dir, seed, manifest.shuffle,
            {"parts": list(spec.parts), "tag_sources": spec.tag_sources},
        ))

    print(f"\nЗаписано датасетов: {len(records)} в {out_dir} за {time.time() - start_time:.1f} сек")
    return records
