"""
Text Metrics Module
Disclosure-complexity measures computed from filing text: Gunning Fog index,
log file size and boilerplate ratio over k-token shingles
"""
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union
import hashlib
import html
import logging
import math
import re

from config import Config
from modules.exceptions import DegenerateDocument

logger = logging.getLogger(__name__)

DEFAULT_ABBREVIATIONS = frozenset({
    'mr', 'mrs', 'ms', 'dr', 'prof', 'inc', 'corp', 'co', 'ltd', 'jr', 'sr', 'st', 'vs',
    'no', 'fig', 'approx', 'dept', 'est', 'jan', 'feb', 'mar', 'apr', 'jun', 'jul', 'aug',
    'sep', 'sept', 'oct', 'nov', 'dec',
})

_TOKEN_RE = re.compile(r"(?P<word>[^\W\d_]+(?:-[^\W\d_]+)*)|(?P<end>[.!?])")
_FOLLOW_RE = re.compile(r"\s+[A-Z]|\s*\Z")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")
_BLOCK_RE = re.compile(r"<(script|style|table)\b.*?</\1\s*>", re.IGNORECASE | re.DOTALL)
_TAG_RE = re.compile(r"<[^>]*>")

HashFunction = Callable[[str], int]


def blake2b_64(window: str) -> int:
    """64-bit hash of a normalized token window"""
    return int.from_bytes(hashlib.blake2b(window.encode('utf-8'), digest_size=8).digest(), 'big')


@dataclass(frozen=True)
class TokenizedText:
    """Case-folded word tokens and sentence-end positions (token counts)"""

    tokens: List[str]
    sentence_ends: List[int]
    skipped_bytes: int = 0

    @property
    def sentence_count(self) -> int:
        return len(self.sentence_ends)


@dataclass(frozen=True)
class DocumentStats:
    """Counts feeding the Fog index and the file-size proxy"""

    word_count: int
    sentence_count: int
    complex_word_count: int
    byte_size: int

    def __post_init__(self):
        if min(self.word_count, self.sentence_count, self.complex_word_count,
               self.byte_size) < 0:
            raise ValueError("document counts must be nonnegative")
        if self.complex_word_count > self.word_count:
            raise ValueError("complex words cannot outnumber words")
        if self.word_count > 0 and self.sentence_count > self.word_count:
            raise ValueError("sentences cannot outnumber words")


@dataclass(frozen=True)
class ShingleSet:
    """Hashes of a document's consecutive k-token windows"""

    document_id: str
    shingles: FrozenSet[int]
    token_count: int = 0
    k: int = Config.SHINGLE_SIZE


def load_abbreviations(path: Union[str, Path]) -> FrozenSet[str]:
    """Abbreviation stop-list, one entry per line, trailing periods optional"""
    with open(path, encoding='utf-8') as f:
        entries = {line.strip().rstrip('.').casefold() for line in f}
    return frozenset(e for e in entries if e and not e.startswith('#'))


def strip_markup(text: str) -> str:
    """Drop script, style and table blocks, then all tags; unescape entities"""
    text = _BLOCK_RE.sub(' ', text)
    text = _TAG_RE.sub(' ', text)
    return html.unescape(text)


def decode_text(raw: Union[bytes, str]) -> Tuple[str, int]:
    """
    Decode filing bytes as UTF-8, replacing undecodable bytes with spaces

    Returns:
        Tuple of (text, number of skipped bytes)
    """
    if isinstance(raw, str):
        return raw, 0
    text = raw.decode('utf-8', errors='replace')
    skipped = text.count('�')
    if skipped:
        text = text.replace('�', ' ')
    return text, skipped


def tokenize(text: Union[bytes, str],
             abbreviations: Iterable[str] = DEFAULT_ABBREVIATIONS) -> TokenizedText:
    """
    Split text into words and sentences

    Words are maximal alphabetic runs joined by inner hyphens, case-folded.
    A sentence ends at '.', '!' or '?' followed by whitespace and an uppercase
    letter, or by the end of the text. A period after a stop-listed
    abbreviation or a single letter does not end a sentence. Words after the
    last terminator form a final sentence.

    Args:
        text: str or raw bytes
        abbreviations: case-folded abbreviations without trailing period

    Returns:
        TokenizedText
    """
    text, skipped = decode_text(text)
    if skipped:
        logger.warning(f"Skipped {skipped} undecodable bytes during tokenization")
    abbreviations = frozenset(abbreviations)

    tokens: List[str] = []
    sentence_ends: List[int] = []
    last_word_end, last_word = -1, ''
    for match in _TOKEN_RE.finditer(text):
        word = match.group('word')
        if word is not None:
            tokens.append(word.casefold())
            last_word_end, last_word = match.end(), tokens[-1]
            continue
        if sentence_ends and sentence_ends[-1] == len(tokens) or not tokens:
            continue
        if not _FOLLOW_RE.match(text, match.end()):
            continue
        if match.group('end') == '.' and last_word_end == match.start() and (
                last_word in abbreviations or len(last_word) == 1):
            continue
        sentence_ends.append(len(tokens))

    if tokens and (not sentence_ends or sentence_ends[-1] < len(tokens)):
        sentence_ends.append(len(tokens))
    return TokenizedText(tokens, sentence_ends, skipped)


def syllable_count(word: str) -> int:
    """
    Vowel-group syllable heuristic

    Counts runs of a, e, i, o, u, y per hyphen-separated part, drops a silent
    trailing 'e' unless the part ends in consonant + 'le', and never returns
    less than one.
    """
    if not word:
        raise ValueError("syllable_count needs a nonempty word")
    total = 0
    for part in word.casefold().split('-'):
        if not part:
            continue
        count = len(_VOWEL_GROUP_RE.findall(part))
        if part.endswith('e'):
            consonant_le = (part.endswith('le') and len(part) > 2
                            and part[-3] not in 'aeiouy')
            if not consonant_le:
                count -= 1
        total += max(count, 1)
    return max(total, 1)


def is_complex_word(word: str) -> bool:
    return syllable_count(word) >= 3


def document_stats(raw: Union[bytes, str], markup: bool = True,
                   abbreviations: Iterable[str] = DEFAULT_ABBREVIATIONS,
                   tokenized: Optional[TokenizedText] = None) -> DocumentStats:
    """
    Word, sentence, complex-word and byte counts of one filing

    The byte size is that of the raw input; only running text feeds the counts.
    """
    byte_size = len(raw) if isinstance(raw, bytes) else len(raw.encode('utf-8'))
    if tokenized is None:
        tokenized = tokenize(running_text(raw, markup), abbreviations)
    complex_words = sum(1 for token in tokenized.tokens if is_complex_word(token))
    return DocumentStats(len(tokenized.tokens), tokenized.sentence_count, complex_words,
                         byte_size)


def running_text(raw: Union[bytes, str], markup: bool = True) -> str:
    text, skipped = decode_text(raw)
    if skipped:
        logger.warning(f"Skipped {skipped} undecodable bytes")
    return strip_markup(text) if markup else text


def fog_index(stats: DocumentStats) -> float:
    """
    Gunning Fog readability index

    Args:
        stats: DocumentStats

    Returns:
        0.4 * (words / sentences + 100 * complex words / words)

    Raises:
        DegenerateDocument: without at least one word and one sentence
    """
    if stats.word_count < 1 or stats.sentence_count < 1:
        raise DegenerateDocument("fog index needs at least one word and one sentence",
                                 {'word_count': stats.word_count,
                                  'sentence_count': stats.sentence_count})
    return 0.4 * (stats.word_count / stats.sentence_count
                  + 100.0 * stats.complex_word_count / stats.word_count)


def log_file_size(byte_size: int) -> float:
    """Natural log of the filing size in kilobytes"""
    if byte_size < 1:
        raise DegenerateDocument("log file size needs a nonempty file",
                                 {'byte_size': byte_size})
    return math.log(byte_size / 1024.0)


def build_shingles(document_id: str, tokens: List[str], k: int = Config.SHINGLE_SIZE,
                   hash_fn: HashFunction = blake2b_64) -> ShingleSet:
    """Hash every window of k consecutive tokens"""
    if k < 1:
        raise ValueError("shingle size must be at least 1")
    windows = (' '.join(tokens[i:i + k]) for i in range(len(tokens) - k + 1))
    return ShingleSet(document_id, frozenset(hash_fn(w) for w in windows), len(tokens), k)


def boilerplate_ratio(doc: ShingleSet, references: Iterable[ShingleSet]) -> float:
    """
    Fraction of a document's shingles found in at least one reference document

    References with the document's own id are ignored.

    Raises:
        DegenerateDocument: if the document has no shingles
    """
    if not doc.shingles:
        raise DegenerateDocument(f"document {doc.document_id} has no shingles",
                                 {'document_id': doc.document_id, 'k': doc.k})
    seen: Set[int] = set()
    for reference in references:
        if reference.document_id != doc.document_id:
            seen |= reference.shingles
    return len(doc.shingles & seen) / len(doc.shingles)


@dataclass
class ShingleIndex:
    """
    Inverted index from shingle hash to the documents containing it

    Built once, then only read.
    """

    postings: Dict[int, Set[str]] = field(default_factory=lambda: defaultdict(set))
    documents: Dict[str, ShingleSet] = field(default_factory=dict)

    @classmethod
    def build(cls, shingle_sets: Iterable[ShingleSet]) -> 'ShingleIndex':
        index = cls()
        for shingle_set in shingle_sets:
            index.documents[shingle_set.document_id] = shingle_set
            for shingle in shingle_set.shingles:
                index.postings[shingle].add(shingle_set.document_id)
        index.postings = dict(index.postings)
        logger.info(f"Shingle index built over {len(index.documents)} documents, "
                    f"{len(index.postings)} distinct shingles")
        return index

    def ratio(self, document_id: str, reference_ids: Iterable[str]) -> float:
        """boilerplate_ratio of an indexed document against a subset of the corpus"""
        doc = self.documents[document_id]
        if not doc.shingles:
            raise DegenerateDocument(f"document {document_id} has no shingles",
                                     {'document_id': document_id, 'k': doc.k})
        references = set(reference_ids) - {document_id}
        shared = sum(1 for s in doc.shingles if not self.postings[s].isdisjoint(references))
        return shared / len(doc.shingles)
