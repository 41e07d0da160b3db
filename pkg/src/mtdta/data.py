"""BindingDB-style TSV ingestion and dataset construction.

Stages: parse the raw table, filter out range-marked and invalid rows,
aggregate duplicate (smiles, protein) pairs by median, binarize activity
at 1 uM, split into train/validation/test thirds, and optionally merge
two splits into a combined "+" dataset.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import random
import statistics
from dataclasses import dataclass
from itertools import combinations
from math import log10

from . import smiles as sm

__all__ = [
    "DataError",
    "DtaRecord",
    "DatasetSplit",
    "CONSTANT_TASKS",
    "TASKS",
    "parse_table",
    "filter_records",
    "aggregate_median",
    "binarize_active",
    "to_pscale",
    "split_three_way",
    "merge_plus",
    "missingness_report",
    "write_partition",
    "read_partition",
    "write_manifest",
    "prepare_dataset",
]

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input table is malformed or a pipeline precondition is violated."""


CONSTANT_TASKS = ("kd", "ki", "ic50", "ec50")
TASKS = ("kd", "ki", "ic50", "ec50", "active", "ph", "qed")

ACTIVE_THRESHOLD_NM = 1000.0  # strict less-than 1 uM

SMILES_COLUMN = "Ligand SMILES"
SEQUENCE_COLUMNS = ("BindingDB Target Chain Sequence", "Target Sequence")
CONSTANT_COLUMNS = {"kd": "Kd (nM)", "ki": "Ki (nM)",
                    "ic50": "IC50 (nM)", "ec50": "EC50 (nM)"}
PH_COLUMN = "pH"
QED_COLUMN = "QED"

PARTITION_COLUMNS = ("smiles", "protein", "kd_nM", "ki_nM", "ic50_nM",
                     "ec50_nM", "ph", "qed", "active")


@dataclass
class DtaRecord:
    """One drug-target pair with optionally-missing task labels."""
    smiles: str
    protein: str
    kd_nM: float | None = None
    ki_nM: float | None = None
    ic50_nM: float | None = None
    ec50_nM: float | None = None
    ph: float | None = None
    qed: float | None = None
    active: int | None = None

    def constant(self, task):
        return getattr(self, task + "_nM")

    def label(self, task):
        """Training label for a task: p-scale for constants, raw otherwise."""
        if task in CONSTANT_TASKS:
            v = self.constant(task)
            return None if v is None else to_pscale(v)
        return getattr(self, task)

    @property
    def pair(self):
        return (self.smiles, self.protein)


@dataclass
class DatasetSplit:
    train: list
    validation: list
    tests: dict                      # partition name -> record list
    seed: int
    provenance: str = ""

    @property
    def test(self):
        out = []
        for part in self.tests.values():
            out.extend(part)
        return out


def parse_table(path):
    """Read a tab-separated BindingDB-style table into raw string records.

    Cells are kept verbatim (range markers like ">10000" survive to the
    filter stage); empty cells become None.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter="\t")
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        cols = {name: i for i, name in enumerate(header)}
        if SMILES_COLUMN not in cols:
            raise DataError(f"missing required column {SMILES_COLUMN!r}")
        seq_col = next((c for c in SEQUENCE_COLUMNS if c in cols), None)
        if seq_col is None:
            raise DataError(
                f"missing target sequence column (one of {SEQUENCE_COLUMNS})")
        for task, name in CONSTANT_COLUMNS.items():
            if name not in cols:
                raise DataError(f"missing required column {name!r}")
        if PH_COLUMN not in cols:
            raise DataError(f"missing required column {PH_COLUMN!r}")

        def cell(row, name):
            i = cols[name]
            v = row[i].strip() if i < len(row) else ""
            return v or None

        raw = []
        for row in reader:
            if not any(c.strip() for c in row):
                continue
            rec = {
                "smiles": cell(row, SMILES_COLUMN),
                "protein": cell(row, seq_col),
                "ph": cell(row, PH_COLUMN),
                "qed": cell(row, QED_COLUMN) if QED_COLUMN in cols else None,
            }
            for task, name in CONSTANT_COLUMNS.items():
                rec[task] = cell(row, name)
            raw.append(rec)
    return raw


def _has_range_marker(cell):
    """Lexical check for >, <, + and interior '-' range markers."""
    if any(c in cell for c in "><+"):
        return True
    for i, c in enumerate(cell):
        if c == "-" and i > 0 and cell[i - 1] not in "eE":
            return True
    return False


def _parse_float(cell):
    try:
        return float(cell)
    except (TypeError, ValueError):
        return None


def filter_records(raw):
    """Drop range-marked, unparsable and invalid rows; return DtaRecords."""
    out = []
    for rec in raw:
        if not rec["smiles"] or not rec["protein"]:
            continue
        if not rec["protein"].startswith("M"):
            continue
        marked = False
        constants = {}
        for task in CONSTANT_TASKS:
            cell = rec[task]
            if cell is None:
                constants[task] = None
                continue
            if _has_range_marker(cell):
                marked = True
                break
            constants[task] = _parse_float(cell)
        if marked:
            continue
        present = [v for v in constants.values() if v is not None]
        if not present or any(v <= 0 for v in present):
            continue
        try:
            sm.parse_smiles(rec["smiles"])
        except sm.MolParseError:
            continue
        qed = _parse_float(rec["qed"])
        if qed is not None and not 0.0 <= qed <= 1.0:
            qed = None
        out.append(DtaRecord(
            smiles=rec["smiles"],
            protein=rec["protein"],
            kd_nM=constants["kd"],
            ki_nM=constants["ki"],
            ic50_nM=constants["ic50"],
            ec50_nM=constants["ec50"],
            ph=_parse_float(rec["ph"]),
            qed=qed,
        ))
    return out


def aggregate_median(records):
    """Collapse duplicate (smiles, protein) pairs, taking per-field medians."""
    groups = {}
    order = []
    for rec in records:
        key = rec.pair
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)

    def med(members, attr):
        vals = [getattr(m, attr) for m in members if getattr(m, attr) is not None]
        return statistics.median(vals) if vals else None

    out = []
    for key in order:
        members = groups[key]
        rec = DtaRecord(
            smiles=key[0], protein=key[1],
            kd_nM=med(members, "kd_nM"), ki_nM=med(members, "ki_nM"),
            ic50_nM=med(members, "ic50_nM"), ec50_nM=med(members, "ec50_nM"),
            ph=med(members, "ph"), qed=med(members, "qed"))
        rec.active = binarize_active(rec)
        out.append(rec)
    return out


def binarize_active(record):
    """1 iff the strongest present constant is strictly below 1 uM."""
    present = [record.constant(t) for t in CONSTANT_TASKS
               if record.constant(t) is not None]
    if not present:
        raise DataError("binarize_active needs at least one binding constant")
    return 1 if min(present) < ACTIVE_THRESHOLD_NM else 0


def to_pscale(value_nM):
    """p-scale label: -log10 of the molar value (1 nM -> 9.0)."""
    if value_nM <= 0:
        raise DataError(f"non-positive concentration {value_nM}")
    return 9.0 - log10(value_nM)


def split_three_way(records, seed, provenance=""):
    """Seeded shuffle, then floor-thirds split with the remainder to test."""
    n = len(records)
    if n < 3:
        raise DataError(f"need at least 3 records to split, got {n}")
    shuffled = list(records)
    random.Random(seed).shuffle(shuffled)
    third = n // 3
    return DatasetSplit(
        train=shuffled[:third],
        validation=shuffled[third:2 * third],
        tests={"test": shuffled[2 * third:]},
        seed=seed,
        provenance=provenance,
    )


def merge_plus(set_a, set_b, name_a="a", name_b="b"):
    """Combine two splits into a "+" dataset.

    Train and validation are unioned (first occurrence wins on pair
    collisions); the test partitions stay separate so evaluation remains
    per-subset.
    """

    def union(part_a, part_b, label):
        seen = {r.pair for r in part_a}
        out = list(part_a)
        for rec in part_b:
            if rec.pair in seen:
                log.warning("pair collision in %s partition: %s", label, rec.pair)
                continue
            seen.add(rec.pair)
            out.append(rec)
        return out

    tests = {}
    for name, split in ((name_a, set_a), (name_b, set_b)):
        for part_name, part in split.tests.items():
            key = name if part_name == "test" else f"{name}.{part_name}"
            tests[key] = part
    return DatasetSplit(
        train=union(set_a.train, set_b.train, "train"),
        validation=union(set_a.validation, set_b.validation, "validation"),
        tests=tests,
        seed=set_a.seed,
        provenance=f"{set_a.provenance}+{set_b.provenance}",
    )


def missingness_report(records):
    """Per-task present counts plus constant-overlap counts."""
    counts = {task: 0 for task in TASKS}
    for rec in records:
        for task in CONSTANT_TASKS:
            if rec.constant(task) is not None:
                counts[task] += 1
        if rec.active is not None:
            counts["active"] += 1
        if rec.ph is not None:
            counts["ph"] += 1
        if rec.qed is not None:
            counts["qed"] += 1

    def overlap(tasks):
        return sum(1 for r in records
                   if all(r.constant(t) is not None for t in tasks))

    pairwise = {f"{a}&{b}": overlap((a, b))
                for a, b in combinations(CONSTANT_TASKS, 2)}
    return {
        "n_records": len(records),
        "present": counts,
        "pairwise_overlap": pairwise,
        "four_way_overlap": overlap(CONSTANT_TASKS),
    }


def _format(v):
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".10g")


def write_partition(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(PARTITION_COLUMNS)
        for r in records:
            writer.writerow([
                r.smiles, r.protein,
                _format(r.kd_nM), _format(r.ki_nM), _format(r.ic50_nM),
                _format(r.ec50_nM), _format(r.ph), _format(r.qed),
                _format(r.active),
            ])


def read_partition(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader)
        if tuple(header) != PARTITION_COLUMNS:
            raise DataError(f"{path}: unexpected partition header {header}")
        for row in reader:
            f = lambda cell: float(cell) if cell else None
            records.append(DtaRecord(
                smiles=row[0], protein=row[1],
                kd_nM=f(row[2]), ki_nM=f(row[3]), ic50_nM=f(row[4]),
                ec50_nM=f(row[5]), ph=f(row[6]), qed=f(row[7]),
                active=int(row[8]) if row[8] else None,
            ))
    return records


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, split, reports):
    manifest = {
        "seed": split.seed,
        "source_digest": split.provenance,
        "label_transform": "pscale (-log10 molar)",
        "counts": {
            "train": len(split.train),
            "validation": len(split.validation),
            **{f"test:{k}": len(v) for k, v in split.tests.items()},
        },
        "missingness": reports,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def prepare_dataset(input_path, output_dir, seed):
    """Full pipeline: parse, filter, aggregate, split, write files."""
    import os

    raw = parse_table(input_path)
    records = aggregate_median(filter_records(raw))
    split = split_three_way(records, seed, provenance=file_digest(input_path))
    os.makedirs(output_dir, exist_ok=True)
    paths = {}
    parts = {"train": split.train, "validation": split.validation}
    parts.update({f"test_{k}" if k != "test" else "test": v
                  for k, v in split.tests.items()})
    for name, part in parts.items():
        path = os.path.join(output_dir, f"{name}.tsv")
        write_partition(path, part)
        paths[name] = path
    reports = {name: missingness_report(part) for name, part in parts.items()}
    write_manifest(os.path.join(output_dir, "manifest.json"), split, reports)
    return split, paths
