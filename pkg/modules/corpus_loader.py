"""
Corpus Loader Module
Reads a filing manifest, computes text metrics per document and writes the
metrics table
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union
import logging

import numpy as np
import pandas as pd

from config import Config
from modules.exceptions import DataError, DegenerateDocument
from modules.text_metrics import (
    DEFAULT_ABBREVIATIONS,
    HashFunction,
    ShingleIndex,
    ShingleSet,
    blake2b_64,
    build_shingles,
    document_stats,
    fog_index,
    load_abbreviations,
    log_file_size,
    running_text,
    tokenize,
)

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ['document_id', 'firm_id', 'period', 'path']
METRIC_COLUMNS = ['document_id', 'fog_index', 'log_file_size_kb', 'boilerplate_ratio',
                  'word_count', 'sentence_count']
REFERENCE_MODES = ('cross_section', 'own_history')


@dataclass(frozen=True)
class TextMetricsConfig:
    """Options of a text-metrics job"""

    shingle_size: int = Config.SHINGLE_SIZE
    strip_markup: bool = True
    reference_set: str = 'cross_section'
    abbreviations_file: Optional[str] = None

    def __post_init__(self):
        if self.shingle_size < 1:
            raise ValueError("shingle_size must be at least 1")
        if self.reference_set not in REFERENCE_MODES:
            raise ValueError(f"reference_set must be one of {REFERENCE_MODES}")


def read_manifest(path: Union[str, Path],
                  corpus_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """
    Load the document manifest

    Relative document paths are resolved against corpus_dir, by default the
    manifest's directory.

    Raises:
        DataError: if the file is missing or lacks a required column
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}", {'path': str(path)})
    manifest = pd.read_csv(path, dtype={'document_id': str, 'firm_id': str, 'path': str})
    missing = [c for c in MANIFEST_COLUMNS if c not in manifest.columns]
    if missing:
        raise DataError(f"manifest is missing columns {missing}", {'path': str(path)})
    if manifest['document_id'].duplicated().any():
        raise DataError("manifest has duplicate document ids", {'path': str(path)})
    base = Path(corpus_dir) if corpus_dir is not None else path.parent
    manifest['path'] = [str(p if Path(p).is_absolute() else base / p)
                        for p in manifest['path']]
    return manifest


def reference_ids(manifest: pd.DataFrame, mode: str) -> Dict[str, List[str]]:
    """
    Reference documents per document id

    cross_section: every other document filed in the same period.
    own_history: the same firm's documents from earlier periods.
    """
    if mode not in REFERENCE_MODES:
        raise ValueError(f"reference mode must be one of {REFERENCE_MODES}")
    references: Dict[str, List[str]] = {}
    for row in manifest.itertuples(index=False):
        if mode == 'cross_section':
            peers = manifest[(manifest['period'] == row.period)
                             & (manifest['document_id'] != row.document_id)]
        else:
            peers = manifest[(manifest['firm_id'] == row.firm_id)
                             & (manifest['period'] < row.period)]
        references[row.document_id] = peers['document_id'].tolist()
    return references


class CorpusMetrics:
    """
    Computes Fog index, log file size and boilerplate ratio for a filing corpus
    """

    def __init__(self, manifest: pd.DataFrame, cfg: Optional[TextMetricsConfig] = None,
                 hash_fn: HashFunction = blake2b_64):
        """
        Initialize CorpusMetrics

        Args:
            manifest: DataFrame with document_id, firm_id, period, path
            cfg: TextMetricsConfig
            hash_fn: 64-bit shingle hash
        """
        self.manifest = manifest
        self.cfg = cfg or TextMetricsConfig()
        self.hash_fn = hash_fn
        self.abbreviations = DEFAULT_ABBREVIATIONS
        if self.cfg.abbreviations_file:
            self.abbreviations = load_abbreviations(self.cfg.abbreviations_file)
        self.failures: List[str] = []

    def _read(self, document_id: str, path: str) -> Optional[bytes]:
        try:
            return Path(path).read_bytes()
        except OSError as e:
            logger.error(f"Could not read document {document_id} at {path}: {e}")
            self.failures.append(document_id)
            return None

    def compute(self) -> pd.DataFrame:
        """
        Metrics for every readable document in the manifest

        Unreadable documents are skipped; degenerate documents get NaN for the
        affected metric. Both are logged and the job continues.

        Returns:
            DataFrame with METRIC_COLUMNS, in manifest order
        """
        if self.manifest.empty:
            logger.info("Empty manifest: nothing to compute")
            return pd.DataFrame(columns=METRIC_COLUMNS)

        rows: List[Dict] = []
        shingle_sets: List[ShingleSet] = []
        for doc in self.manifest.itertuples(index=False):
            raw = self._read(doc.document_id, doc.path)
            if raw is None:
                continue
            tokenized = tokenize(running_text(raw, self.cfg.strip_markup), self.abbreviations)
            stats = document_stats(raw, tokenized=tokenized)
            row = {'document_id': doc.document_id, 'word_count': stats.word_count,
                   'sentence_count': stats.sentence_count}
            row['fog_index'] = self._guarded(doc.document_id, lambda: fog_index(stats))
            row['log_file_size_kb'] = self._guarded(
                doc.document_id, lambda: log_file_size(stats.byte_size))
            rows.append(row)
            shingle_sets.append(build_shingles(doc.document_id, tokenized.tokens,
                                               self.cfg.shingle_size, self.hash_fn))

        index = ShingleIndex.build(shingle_sets)
        references = reference_ids(self.manifest, self.cfg.reference_set)
        for row in rows:
            doc_id = row['document_id']
            row['boilerplate_ratio'] = self._guarded(
                doc_id, lambda: index.ratio(doc_id, references[doc_id]))

        logger.info(f"Computed metrics for {len(rows)} documents "
                    f"({len(self.failures)} failures)")
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)

    def _guarded(self, document_id: str, metric) -> float:
        try:
            return float(metric())
        except DegenerateDocument as e:
            logger.warning(f"Document {document_id}: {e}")
            if document_id not in self.failures:
                self.failures.append(document_id)
            return np.nan


def compute_corpus_metrics(manifest_path: Union[str, Path],
                           cfg: Optional[TextMetricsConfig] = None,
                           corpus_dir: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """Convenience wrapper: read a manifest and compute its metrics table"""
    return CorpusMetrics(read_manifest(manifest_path, corpus_dir), cfg).compute()


def write_metrics_csv(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, columns=METRIC_COLUMNS, float_format='%.10g')
    logger.info(f"Text metrics written to {path}")
    return path


def write_corpus(documents: Iterable[Dict], directory: Union[str, Path]) -> Path:
    """
    Write documents and their manifest to a directory

    Args:
        documents: dicts with document_id, firm_id, period, text
        directory: output directory

    Returns:
        Path of manifest.csv
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for doc in documents:
        name = f"{doc['document_id']}.txt"
        (directory / name).write_text(doc['text'], encoding='utf-8')
        rows.append({'document_id': doc['document_id'], 'firm_id': doc['firm_id'],
                     'period': doc['period'], 'path': name})
    manifest_path = directory / 'manifest.csv'
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest_path, index=False)
    return manifest_path
