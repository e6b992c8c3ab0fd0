"""
Complete and value-agnostic accuracy of configuration predictors.
"""
import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from tabulate import tabulate

from twoport_fit.circuit.canonical import canonicalize, canonicalize_structure
from twoport_fit.circuit.components import Configuration
from twoport_fit.dataset.records import DatasetRecord
from twoport_fit.exceptions import InvalidInputError
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)

# A predictor maps a dataset record to a configuration; raising counts as a miss
Predictor = Callable[[DatasetRecord], Configuration]

CSV_COLUMNS = ('length', 'complete_acc', 'value_agnostic_acc', 'n')


def _full_identity(config: Configuration) -> tuple:
    return tuple((int(c.alignment), int(c.ctype), c.value_bin) for c in config)


def complete_match(pred: Configuration, gold: Configuration, positional: bool = False) -> bool:
    """
    Same length and same (alignment, type, bin) at every position of the canonical forms.

    Args:
        pred: Predicted configuration.
        gold: Gold configuration.
        positional: Compare the raw sequences without canonicalizing.
    """
    if len(pred) != len(gold) or len(gold) == 0:
        return False
    if not positional:
        pred, gold = canonicalize(pred), canonicalize(gold)
    return _full_identity(pred) == _full_identity(gold)


def value_agnostic_match(pred: Configuration, gold: Configuration, positional: bool = False) -> bool:
    """
    Same (alignment, type) sequence, bins ignored.

    Canonicalization sorts runs by type alone so differing bins cannot
    reorder same-type components.
    """
    if len(pred) != len(gold) or len(gold) == 0:
        return False
    if not positional:
        pred, gold = canonicalize_structure(pred), canonicalize_structure(gold)
    return pred.structure == gold.structure


@dataclass
class LengthRow:
    length: int
    complete: int = 0
    value_agnostic: int = 0
    n: int = 0

    @property
    def complete_acc(self) -> float:
        return self.complete / self.n if self.n else 0.0

    @property
    def value_agnostic_acc(self) -> float:
        return self.value_agnostic / self.n if self.n else 0.0


@dataclass
class EvaluationTable:
    """Per-length accuracies, rows ordered by length."""
    rows: List[LengthRow]
    failures: int = 0

    def as_dict(self) -> Dict[int, Tuple[float, float, int]]:
        return {row.length: (row.complete_acc, row.value_agnostic_acc, row.n) for row in self.rows}

    def total(self) -> LengthRow:
        overall = LengthRow(0)
        for row in self.rows:
            overall.complete += row.complete
            overall.value_agnostic += row.value_agnostic
            overall.n += row.n
        return overall

    def to_csv(self, path: str) -> str:
        ensure_dir(os.path.dirname(path))
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow([row.length, repr(row.complete_acc), repr(row.value_agnostic_acc), row.n])
        return path

    def format(self) -> str:
        """Console table with an overall row."""
        data = [[row.length, f"{row.complete_acc:.4f}", f"{row.value_agnostic_acc:.4f}", row.n] for row in self.rows]
        overall = self.total()
        data.append(['all', f"{overall.complete_acc:.4f}", f"{overall.value_agnostic_acc:.4f}", overall.n])
        return tabulate(data, headers=['Length', 'Complete', 'Value-agnostic', 'Samples'], tablefmt='grid')


def read_table_csv(path: str) -> EvaluationTable:
    with open(path, 'r', newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        rows = []
        for item in reader:
            n = int(item['n'])
            row = LengthRow(int(item['length']), n=n)
            row.complete = round(float(item['complete_acc']) * n)
            row.value_agnostic = round(float(item['value_agnostic_acc']) * n)
            rows.append(row)
    return EvaluationTable(rows)


def _score(predictor: Predictor, record: DatasetRecord, positional: bool) -> Tuple[int, bool, bool, bool]:
    try:
        pred = predictor(record)
    except Exception as e:
        logger.warning(f"Predictor failed on record {record.id}: {e}")
        return record.length, False, False, True
    if pred is None or len(pred) == 0:
        return record.length, False, False, True
    complete = complete_match(pred, record.config, positional)
    agnostic = complete or value_agnostic_match(pred, record.config, positional)
    return record.length, complete, agnostic, False


def evaluate(
    predictor: Predictor,
    test_set: Iterable[DatasetRecord],
    positional: bool = False,
    threads: int = 1
) -> EvaluationTable:
    """
    Per-length accuracy of ``predictor`` over a test set.

    Args:
        predictor: Callable mapping a record to a configuration.
        test_set: Records to score.
        positional: Compare raw sequences instead of canonical forms.
        threads: Workers calling the predictor concurrently.

    Returns:
        One row per length present in the set.
    """
    records: Sequence[DatasetRecord] = list(test_set)
    if not records:
        raise InvalidInputError("Cannot evaluate on an empty test set")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            scores = list(executor.map(lambda r: _score(predictor, r, positional), records))
    else:
        scores = [_score(predictor, r, positional) for r in records]

    rows: Dict[int, LengthRow] = {}
    failures = 0
    for length, complete, agnostic, failed in scores:
        row = rows.setdefault(length, LengthRow(length))
        row.n += 1
        row.complete += int(complete)
        row.value_agnostic += int(agnostic)
        failures += int(failed)

    if failures:
        logger.info(f"{failures} of {len(records)} predictions failed and count as wrong")
    return EvaluationTable([rows[length] for length in sorted(rows)], failures)


def limit_records(records: Iterable[DatasetRecord], limit: Optional[int]) -> List[DatasetRecord]:
    records = list(records)
    return records if limit is None else records[:limit]
