"""Run the data pipeline on a small in-memory table.

Covers range-marker filtering, median aggregation, activity
binarization, the p-scale label transform, and the 1/3-1/3-1/3 split.
"""

import tempfile

from mtdta import data

TSV = """\
Ligand SMILES\tBindingDB Target Chain Sequence\tKd (nM)\tKi (nM)\tIC50 (nM)\tEC50 (nM)\tpH\tQED
CCO\tMKTAYIAK\t100\t\t\t\t7.4\t0.52
CCO\tMKTAYIAK\t300\t\t\t\t\t
CCN\tMKTAYIAK\t>10000\t\t\t\t\t
CCC\tMKLVINGK\t\t999\t\t\t\t
CCCC\tMKLVINGK\t\t1000\t\t\t\t
"""

with tempfile.NamedTemporaryFile("w", suffix=".tsv", delete=False) as fh:
    fh.write(TSV)
records = data.parse_table(fh.name)
print(f"parsed rows: {len(records)}")

records = data.filter_records(records)
print(f"after range-marker filtering: {len(records)} "
      "(the '>10000' row is gone)")

records = data.aggregate_median(records)
for r in records:
    r.active = data.binarize_active(r)
    print(f"{r.smiles:5s} {r.protein}  kd={r.kd_nM} ki={r.ki_nM} "
          f"active={r.active}  p-scale label={r.label('kd')}")

# 999 nM is active, 1000 nM is not: the threshold is strict.

split = data.split_three_way(
    [data.DtaRecord(smiles="C", protein=f"M{i}", kd_nM=1.0) for i in range(19796)],
    seed=0)
print(f"\n19796 pairs split -> train {len(split.train)}, "
      f"validation {len(split.validation)}, test {len(split.test)}")
