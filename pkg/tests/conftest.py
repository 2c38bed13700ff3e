from __future__ import annotations

import random

import pytest

from fuzzymt.ann_index import IvfConfig
from fuzzymt.corpus import ParallelCorpus, SegmentPair
from fuzzymt.embedding import EmbeddingProviderConfig

WORDS = [
    "paciente", "dosis", "tableta", "fiebre", "herida", "analisis", "sangre",
    "estudio", "vacuna", "sintomas", "hospital", "cirugia", "receta", "jarabe",
    "control", "presion", "arterial", "cronica", "aguda", "clinica",
]

TARGET_WORDS = [
    "patient", "dose", "tablet", "fever", "wound", "analysis", "blood",
    "study", "vaccine", "symptoms", "hospital", "surgery", "prescription",
    "syrup", "check", "pressure", "arterial", "chronic", "acute", "clinic",
]


def synth_pair(i: int, rng: random.Random) -> SegmentPair:
    n = rng.randint(4, 9)
    idx = [rng.randrange(len(WORDS)) for _ in range(n)]
    source = " ".join(WORDS[j] for j in idx) + f" {i}"
    target = " ".join(TARGET_WORDS[j] for j in idx) + f" {i}"
    return SegmentPair(id=i, source=source, target=target)


def synth_corpus(n: int, seed: int = 0, id_offset: int = 0) -> ParallelCorpus:
    rng = random.Random(seed)
    return ParallelCorpus([synth_pair(i + id_offset, rng) for i in range(n)])


@pytest.fixture
def small_corpus() -> ParallelCorpus:
    return synth_corpus(12, seed=3)


@pytest.fixture
def det_provider() -> EmbeddingProviderConfig:
    return EmbeddingProviderConfig(kind="deterministic-test", dim=64, seed=0)


@pytest.fixture
def small_ivf() -> IvfConfig:
    return IvfConfig(dim=64, nlist=2, nprobe=2, kmeans_iters=8, seed=0)
