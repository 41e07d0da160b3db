import numpy as np
import pytest

from mtdta import data
from mtdta.data import DtaRecord

SMILES_POOL = ["CCO", "CCN", "CCC", "CC(=O)O", "c1ccccc1", "CC(C)O",
               "CCOC", "CCCN", "c1ccncc1", "CC(=O)N", "COC", "CCS"]
PROTEIN_POOL = ["MKTAYIAKQR", "MKLVINGKTL", "MASTKQIDEL", "MGSSHHHHHH",
                "MKVLAAGITT", "MTEYKLVVVG"]


def synth_record(rng, full_labels=False):
    """One synthetic but self-consistent record."""
    smiles = SMILES_POOL[int(rng.integers(len(SMILES_POOL)))]
    protein = PROTEIN_POOL[int(rng.integers(len(PROTEIN_POOL)))]
    kd = float(10 ** rng.uniform(0, 4))
    rec = DtaRecord(smiles=smiles, protein=protein, kd_nM=kd)
    if full_labels or rng.random() > 0.5:
        rec.ki_nM = kd * float(rng.uniform(0.5, 2.0))
    if full_labels or rng.random() > 0.5:
        rec.ic50_nM = kd * float(rng.uniform(0.5, 2.0))
    if full_labels or rng.random() > 0.7:
        rec.ec50_nM = kd * float(rng.uniform(0.5, 2.0))
    if full_labels or rng.random() > 0.8:
        rec.ph = float(rng.uniform(5.0, 9.0))
    if full_labels or rng.random() > 0.6:
        rec.qed = float(rng.uniform(0.1, 0.9))
    rec.active = data.binarize_active(rec)
    return rec


@pytest.fixture
def synth_records():
    def make(n, seed=0, full_labels=False):
        rng = np.random.default_rng(seed)
        return [synth_record(rng, full_labels) for _ in range(n)]

    return make
