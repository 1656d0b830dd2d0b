from datetime import date

import numpy as np
import pytest

from config import MlpSettings, PrefetchSettings
from database.models import UsagePattern
from database.repository_service import RepositoryIndex
from learning.patterns import SessionWindow
from prefetch.scorer import BODY_PARTS, MODALITIES, ScorerBank, ScorerFeatures, train_scorer
from conftest import T0, make_study, query, retrieve


def test_encoding_is_bounded_with_one_hot_blocks(index):
    features = ScorerFeatures(["I01", "I02"])
    study = index.lookup("A1")
    features.observe(study, T0)
    vec = features.encode(study, T0, UsagePattern.MODALITY_REVISING)
    assert vec.shape == (features.dim,)
    assert np.all((vec >= 0) & (vec <= 1))
    # one bit per categorical block plus the patient age
    assert np.count_nonzero(vec[1:]) == 6
    assert vec[1 + BODY_PARTS.index("CHEST")] == 1.0
    assert vec[1 + len(BODY_PARTS) + 1 + MODALITIES.index("CT")] == 1.0


def test_unknown_institution_and_missing_pattern():
    features = ScorerFeatures(["I01"])
    vec = features.encode(make_study("X", institution="ELSEWHERE"), T0, None)
    assert vec[-1] == 1.0 and vec[-2] == 0.0
    pattern_block = vec[-(2 + len(UsagePattern)):-2]
    assert not pattern_block.any()


def test_scores_are_probabilities(index):
    bank = ScorerBank(PrefetchSettings(), ["I01", "I02"], seed=3)
    studies = [index.lookup(u) for u in ("A1", "B2", "D1")]
    scores = bank.score("WS1", studies, T0, UsagePattern.PATIENT_REVISING)
    assert len(scores) == 3
    assert all(0.0 < s < 1.0 for s in scores)
    assert bank.score("WS1", [], T0, None) == []


def test_mean_score_without_scorers_uses_a_default_model(index):
    bank = ScorerBank(PrefetchSettings(), ["I01"], seed=3)
    studies = [index.lookup("A1")]
    first = bank.mean_score(studies, T0)
    assert first == bank.mean_score(studies, T0)
    assert bank.scorers == {}
    assert bank.mean_score([], T0) == []


def test_mean_score_averages_node_scorers(index):
    bank = ScorerBank(PrefetchSettings(), ["I01"], seed=3)
    studies = [index.lookup("A1"), index.lookup("C2")]
    one = bank.score("WS1", studies, T0, None)
    two = bank.score("WS2", studies, T0, None)
    assert bank.mean_score(studies, T0) == pytest.approx([(a + b) / 2 for a, b in zip(one, two)])


def test_observations_label_later_retrieves_of_the_same_node(index):
    bank = ScorerBank(PrefetchSettings(scorer_training_period_days=7), ["I01", "I02"], seed=0)
    session = SessionWindow(query=query(T0, ae="WS1", qid=0, patient_id="P1"), results=("A1", "A2", "A3"))
    day = [
        retrieve(T0 - 50, "A3", ae="WS1"),
        retrieve(T0 + 10, "A1", ae="WS1"),
        retrieve(T0 + 20, "A2", ae="WS2"),
    ]
    train_scorer(bank, [session], [UsagePattern.PATIENT_REVISING], day, index)
    labels = [label for _, label in bank.scorer_for("WS1").pending]
    assert labels == [1.0, 0.0, 0.0]
    assert "WS2" not in bank.scorers


def test_weekly_period_trains_only_on_the_seventh_day(index):
    bank = ScorerBank(PrefetchSettings(scorer_training_period_days=7), ["I01"], seed=0)
    scorer = bank.scorer_for("WS1")
    before = scorer.model
    for day in range(6):
        bank.observe("WS1", index.lookup("A1"), T0 + day * 86400, None, True)
        assert bank.end_of_day() == 0
    assert scorer.model is before
    assert len(scorer.pending) == 6

    assert bank.end_of_day() == 6
    assert scorer.pending == []
    assert scorer.trainings == 1
    assert not scorer.model.parameters_equal(before)


def test_daily_period_trains_every_day(index):
    bank = ScorerBank(PrefetchSettings(), ["I01"], seed=0)
    bank.observe("WS1", index.lookup("B1"), T0, UsagePattern.OTHER, False)
    assert bank.end_of_day() == 1
    assert bank.end_of_day() == 0


def test_save_writes_one_file_per_node(index, tmp_path):
    bank = ScorerBank(PrefetchSettings(), ["I01"], seed=0)
    bank.scorer_for("WS2")
    bank.scorer_for("WS1")
    assert [p.name for p in bank.save(tmp_path)] == ["scorer_WS1.json", "scorer_WS2.json"]


def test_retrieve_at_the_search_time_is_a_positive(index):
    bank = ScorerBank(PrefetchSettings(scorer_training_period_days=7), ["I01", "I02"], seed=0)
    session = SessionWindow(query=query(T0, ae="WS1", qid=0, patient_id="P1"), results=("A1", "A2"))
    train_scorer(bank, [session], [UsagePattern.PATIENT_REVISING], [retrieve(T0, "A1", ae="WS1")], index)
    assert [label for _, label in bank.scorer_for("WS1").pending] == [1.0, 0.0]


def test_two_weeks_of_ct_follow_ups_rank_ct_above_mr():
    repo = RepositoryIndex([
        make_study("CT", modality="CT", study_date=date(2016, 2, 1)),
        make_study("MR", modality="MR", study_date=date(2016, 2, 1)),
        make_study("CT2", patient="P9", modality="CT", study_date=date(2016, 2, 10)),
        make_study("MR2", patient="P9", modality="MR", study_date=date(2016, 2, 10)),
    ])
    settings = PrefetchSettings(mlp=MlpSettings(learning_rate=0.3, epochs=20))
    bank = ScorerBank(settings, repo.institutions(), seed=5)
    for day in range(14):
        start = T0 + day * 86400
        session = SessionWindow(query=query(start, qid=day, patient_id="P1"), results=("CT", "MR"))
        train_scorer(bank, [session], [UsagePattern.PATIENT_REVISING], [retrieve(start + 60, "CT")], repo)
    assert bank.scorer_for("WS1").trainings == 14

    now = T0 + 14 * 86400
    ct, mr = bank.score("WS1", [repo.lookup("CT2"), repo.lookup("MR2")], now, UsagePattern.PATIENT_REVISING)
    assert ct > mr
    repo.close()
