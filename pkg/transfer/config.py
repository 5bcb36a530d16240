from pathlib import Path


__version__ = "0.3.0"

# Пути
BASE_DIR = Path(__file__).parent
DATA_DIR = BASE_DIR / "data"

# Правила и таблицы, которые идут вместе с репо
FRA_HAT_RULES = DATA_DIR / "fra_hat.rules"
FRA_IPA_RULES = DATA_DIR / "fra_ipa.rules"
HAT_IPA_RULES = DATA_DIR / "hat_ipa.rules"
ENG_IPA_RULES = DATA_DIR / "eng_ipa.rules"
JAM_IPA_RULES = DATA_DIR / "jam_ipa.rules"

SHIPPED_RULES = {
    "fra_hat": FRA_HAT_RULES,
    "fra_ipa": FRA_IPA_RULES,
    "hat_ipa": HAT_IPA_RULES,
    "eng_ipa": ENG_IPA_RULES,
    "jam_ipa": JAM_IPA_RULES,
}

FRA_HAT_SYNTAX = DATA_DIR / "fra_hat.syntax"
FRA_HAT_LEXICON = DATA_DIR / "fra_hat_lexicon.tsv"

PHONE_FEATURES = DATA_DIR / "phone_features.csv"
COGNATES_FRA_HAT = DATA_DIR / "cognates_fra_hat.tsv"

# Стартовый лексикон, иллюстративный
ENG_JAM_LEXICON = DATA_DIR / "eng_jam_lexicon.tsv"


# Случайность
DEFAULT_SEED = 0  # весь рандом идёт от одного --seed


# Метрики
BLEU_MAX_N = 4
BLEU_SMOOTHING = "none"  # none, add-k
BLEU_ADD_K = 1.0

CHRF_CHAR_ORDER = 6
CHRF_WORD_ORDER = 2  # 2 = chrF++
CHRF_BETA = 2.0

BOOTSTRAP_ITERATIONS = 1000
BOOTSTRAP_DOCUMENTS = 1000  # docSize = ceil(N / 1000)

WILCOXON_MIN_N = 6
WILCOXON_EXACT_MAX_N = 25  # выше - нормальная аппроксимация


# Code-switching
CODESWITCH_RATE = 1.0


# Фонология
NEIGHBOR_METRIC = "euclidean"  # euclidean, cosine
NEIGHBOR_TOP_K = 5


# Pipeline
MANIFEST_VERSION = 1
SOURCE_TAG_FORMAT = "<{lang}>"
TRANSLATOR_BATCH_SIZE = 64
TRANSLATOR_TIMEOUT = 60  # сек, для http и внешних команд
TRANSLATOR_WORKERS = 4


PROVENANCE_TAGS = ("authentic", "synth_mono", "synth_mix1", "synth_mix2", "transformed")
