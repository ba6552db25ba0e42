"""Token counting and normalisation helpers for mixed CJK / Latin text."""

import re
import unicodedata

_CJK = (
    "㐀-䶿"
    "一-鿿"
    "豈-﫿"
    "぀-ヿ"
    "가-힯"
)
_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\s{_CJK}]+")
_CJK_RUN_RE = re.compile(rf"[{_CJK}]+")
_WORD_RE = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    """a an and are as at be by for from has have in is it its of on or our so
    that the this to was we were will with you your i my me just very all
    hk hong kong""".split()
)


def count_tokens(text: str) -> int:
    """Approximate token count: one per CJK character, one per other word."""
    return len(_TOKEN_RE.findall(text))


def truncate_tokens(text: str, budget: int) -> str:
    """Cut ``text`` right after its ``budget``-th token, keeping original spacing."""
    if budget <= 0:
        return ""
    end = None
    for i, m in enumerate(_TOKEN_RE.finditer(text)):
        if i == budget:
            break
        end = m.end()
    else:
        return text.strip()
    return text[:end].strip() if end is not None else ""


def normalize(text: str) -> str:
    return unicodedata.normalize("NFKC", text).casefold()


def content_tokens(text: str) -> set[str]:
    """Lower-cased Latin words (stopwords removed) plus CJK character bigrams."""
    text = normalize(text)
    tokens = {w for w in _WORD_RE.findall(text) if len(w) > 1 and w not in STOPWORDS}
    for run in _CJK_RUN_RE.findall(text):
        if len(run) == 1:
            tokens.add(run)
        tokens.update(run[i:i + 2] for i in range(len(run) - 1))
    return tokens


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)
