import numpy as np
import pytest

from adasim.adapt import assemble_joint_system
from adasim.core import ClassEmbedding, EmbeddedInstance, OmegaParams, WeightModel
from adasim.errors import NotPositiveDefiniteError, ValidationError
from adasim.zsr import PredictionResult, _results, evaluate, predict, predict_batch, trial_average


@pytest.fixture
def unseen(rng):
    return tuple(ClassEmbedding(label, rng.normal(size=2)) for label in (9, 4, 6))


@pytest.fixture
def model(rng):
    return WeightModel(rng.uniform(-0.3, 0.3, size=(3, 2)), OmegaParams(1.0, 1.0, 0.5, 0.5))


def test_argmax_of_scores():
    classes = tuple(ClassEmbedding(label, [0.0]) for label in (1, 2, 3))
    result = _results([EmbeddedInstance(0, None, [0.0])], classes, np.array([[0.3, 0.9, 0.1]]))[0]
    assert result.predicted == 2
    assert result.scores == {1: 0.3, 2: 0.9, 3: 0.1}


def test_constant_shift_keeps_predictions(rng, model, unseen):
    classes = tuple(sorted(unseen, key=lambda c: c.label))
    instances = [EmbeddedInstance(i, None, rng.normal(size=3)) for i in range(5)]
    scores = rng.normal(size=(5, 3))
    shifted = _results(instances, classes, scores + 17.0)
    assert [r.predicted for r in shifted] == [r.predicted for r in _results(instances, classes, scores)]


def test_single_unseen_class_is_always_predicted(rng, model, unseen):
    for _ in range(5):
        x = EmbeddedInstance(0, None, rng.normal(size=3))
        assert predict(model, unseen[:1], x).predicted == unseen[0].label


def test_zero_weights_tie_to_smallest_label(rng, unit_omega, unseen):
    model = WeightModel(np.zeros((3, 2)), unit_omega)
    result = predict(model, unseen, EmbeddedInstance(0, None, rng.normal(size=3)))
    assert result.predicted == 4
    assert all(score == pytest.approx(0.0, abs=1e-12) for score in result.scores.values())


def test_predicted_class_attains_max(rng, model, unseen):
    for result in predict_batch(model, unseen, [EmbeddedInstance(i, None, rng.normal(size=3)) for i in range(10)]):
        assert result.scores[result.predicted] == max(result.scores.values())
        assert sorted(result.scores) == [4, 6, 9]


def test_predict_is_pure(rng, model, unseen):
    x = EmbeddedInstance(0, None, rng.normal(size=3))
    assert predict(model, unseen, x).scores == predict(model, unseen, x).scores


def test_batch_matches_single(rng, model, unseen):
    instances = [EmbeddedInstance(i, None, rng.normal(size=3)) for i in range(4)]
    system = assemble_joint_system(model.W, model.omega)
    batch = predict_batch(model, unseen, instances, system=system)
    for x, result in zip(instances, batch):
        single = predict(model, unseen, x, system=system)
        assert single.predicted == result.predicted
        for label, score in single.scores.items():
            assert score == pytest.approx(result.scores[label], rel=1e-12, abs=1e-12)


def test_refuses_indefinite_model(rng, unit_omega, unseen):
    model = WeightModel(np.full((3, 2), 2.0), unit_omega)
    x = EmbeddedInstance(0, None, rng.normal(size=3))
    with pytest.raises(NotPositiveDefiniteError):
        predict(model, unseen, x)
    assert predict(model, unseen, x, allow_indefinite=True).predicted in (4, 6, 9)
    assert predict(model, unseen, x, scorer="bilinear").predicted in (4, 6, 9)


def test_bilinear_scorer(rng, model, unseen):
    x = EmbeddedInstance(0, None, rng.normal(size=3))
    result = predict(model, unseen, x, scorer="bilinear")
    for c in unseen:
        assert result.scores[c.label] == pytest.approx(float(x.phi @ model.W @ c.psi))


def test_empty_unseen(model):
    with pytest.raises(ValidationError):
        predict(model, (), EmbeddedInstance(0, None, [0.0, 0.0, 0.0]))


def predictions(pairs):
    return [PredictionResult(i, predicted, {}) for i, (_, predicted) in enumerate(pairs)], {
        i: truth for i, (truth, _) in enumerate(pairs)
    }


class TestEvaluate:
    def test_all_correct(self):
        report = evaluate(*predictions([(1, 1), (2, 2), (2, 2)]))
        assert report.accuracy == 1.0
        assert report.precision == {1: 1.0, 2: 1.0}
        assert report.recall == {1: 1.0, 2: 1.0}
        assert report.macro_precision_std == 0.0

    def test_counting(self):
        report = evaluate(*predictions([(0, 0), (0, 1), (1, 1), (1, 1)]))
        assert report.accuracy == 0.75
        assert report.precision[0] == 1.0
        assert report.recall[0] == 0.5
        assert report.precision[1] == pytest.approx(2 / 3)
        assert report.recall[1] == 1.0
        assert report.support == {0: 2, 1: 2}
        assert report.macro_recall_std == pytest.approx(0.25)

    def test_single_wrong(self):
        assert evaluate(*predictions([(0, 3)])).accuracy == 0.0

    def test_never_predicted_class_is_flagged(self):
        report = evaluate(*predictions([(0, 0), (1, 0)]))
        assert report.precision[1] == 0.0
        assert report.undefined_precision == (1,)

    def test_predicted_class_without_instances(self):
        report = evaluate([PredictionResult(1, 10, {}), PredictionResult(2, 20, {})], {1: 10, 2: 10})
        assert report.precision == {10: 1.0, 20: 0.0}
        assert report.macro_precision == 0.5
        assert report.recall == {10: 0.5, 20: 0.0}
        assert report.undefined_recall == (20,)
        assert report.macro_recall == 0.5
        assert report.support == {10: 2, 20: 0}

    def test_accuracy_is_weighted_recall(self, rng):
        pairs = list(zip(rng.integers(0, 4, size=50).tolist(), rng.integers(0, 4, size=50).tolist()))
        report = evaluate(*predictions(pairs))
        weighted = sum(report.recall[c] * report.support[c] for c in report.recall) / report.n_instances
        assert report.accuracy == pytest.approx(weighted)

    def test_empty(self):
        with pytest.raises(ValidationError):
            evaluate([], {})

    def test_unknown_instance(self):
        with pytest.raises(ValidationError, match="instance 5"):
            evaluate([PredictionResult(5, 0, {})], {0: 0})


class TestTrialAverage:
    def test_two_trials(self):
        reports = [evaluate(*predictions([(0, 0), (1, 0)])), evaluate(*predictions([(0, 0), (1, 1)]))]
        average = trial_average(reports)
        assert average.accuracy == pytest.approx(0.75)
        assert average.accuracy_std == pytest.approx(np.sqrt(0.125))
        assert average.n_trials == 2

    def test_sample_std(self):
        reports = [evaluate(*predictions(pairs)) for pairs in (
            [(0, 0), (0, 1)] * 5,
            [(0, 0)] * 7 + [(0, 1)] * 3,
        )]
        average = trial_average(reports)
        assert average.accuracy == pytest.approx(0.6)
        assert average.accuracy_std == pytest.approx(0.1414, abs=1e-4)

    def test_identical_reports(self):
        report = evaluate(*predictions([(0, 0), (1, 0), (1, 1)]))
        average = trial_average([report, report, report])
        assert average.accuracy == report.accuracy
        assert average.accuracy_std == 0.0
        assert average.macro_recall_std == 0.0

    def test_single_report(self):
        report = evaluate(*predictions([(0, 0), (1, 0)]))
        average = trial_average([report])
        assert average.accuracy == report.accuracy
        assert average.accuracy_std == 0.0

    def test_stray_prediction_in_one_trial(self):
        average = trial_average([evaluate(*predictions([(0, 0), (1, 1)])), evaluate(*predictions([(0, 0), (1, 2)]))])
        assert sorted(average.precision) == [0, 1, 2]
        assert average.precision[1] == 0.5
        assert average.precision[2] == 0.0
        assert average.undefined_recall == (2,)
        assert 2 in average.undefined_precision

    def test_mismatched_classes(self):
        with pytest.raises(ValidationError, match="class sets"):
            trial_average([evaluate(*predictions([(0, 0)])), evaluate(*predictions([(1, 1)]))])
