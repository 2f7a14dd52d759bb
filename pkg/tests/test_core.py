import numpy as np
import pytest

from adasim.core import (
    ClassEmbedding,
    Dataset,
    DomainSpec,
    EmbeddedInstance,
    OmegaParams,
    TrainingState,
    WeightModel,
    as_vector,
    phi_matrix,
)
from adasim.errors import DimensionError, ValidationError


def toy_dataset(**overrides):
    fields = dict(
        classes=(ClassEmbedding(1, [0.0, 1.0]), ClassEmbedding(0, [1.0, 0.0])),
        instances=(EmbeddedInstance(5, 0, [1.0, 2.0, 3.0]), EmbeddedInstance(2, 1, [0.0, 1.0, 0.0])),
        seen={0},
        unseen={1},
    )
    fields.update(overrides)
    return Dataset(**fields)


class TestOmegaParams:
    def test_sums(self):
        omega = OmegaParams(1, 2, 3, 4)
        assert omega.w13 == 4.0
        assert omega.w24 == 6.0

    @pytest.mark.parametrize("values", [(0, 0, 0, 0), (0, 1, 0, 1), (1, 0, 1, 0)])
    def test_rejects_zero_diagonal(self, values):
        with pytest.raises(ValidationError, match="w13"):
            OmegaParams(*values)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError, match="w3"):
            OmegaParams(1, 1, -0.5, 0)

    def test_parse(self):
        assert OmegaParams.parse("1, 2,0.5,0").as_tuple() == (1.0, 2.0, 0.5, 0.0)

    @pytest.mark.parametrize("text", ["1,2,3", "1,a,2,3", ""])
    def test_parse_rejects(self, text):
        with pytest.raises(ValidationError):
            OmegaParams.parse(text)

    def test_from_exponents(self):
        assert OmegaParams.from_exponents([0, 1, -1, 2]).as_tuple() == (1.0, 10.0, 0.1, 100.0)


def test_vectors_are_read_only_copies():
    source = np.array([1.0, 2.0])
    vector = as_vector(source, "v")
    source[0] = 5.0
    assert vector[0] == 1.0
    with pytest.raises(ValueError):
        vector[0] = 3.0


def test_vector_rejects_non_finite():
    with pytest.raises(ValidationError, match="non-finite"):
        ClassEmbedding(0, [1.0, np.nan])


def test_domain_spec():
    assert not DomainSpec().bounded
    assert DomainSpec(gamma_t=1.0).bounded
    with pytest.raises(ValidationError):
        DomainSpec(gamma_s=-1.0)


def test_weight_model_dims():
    model = WeightModel(np.zeros((3, 2)), OmegaParams(1, 1, 0, 0))
    assert (model.d_t, model.d_s) == (3, 2)
    model.check_dims(3, 2)
    with pytest.raises(DimensionError):
        model.check_dims(2, 3)


def test_training_state_rejects_negative_slacks():
    with pytest.raises(ValidationError):
        TrainingState(slacks=[0.5, -0.1])


class TestDataset:
    def test_infers_dims_and_sorts_classes(self):
        data = toy_dataset()
        assert (data.d_s, data.d_t) == (2, 3)
        assert [c.label for c in data.classes] == [0, 1]

    def test_split_views(self):
        data = toy_dataset()
        assert [c.label for c in data.seen_classes()] == [0]
        assert [c.label for c in data.unseen_classes()] == [1]
        assert [x.id for x in data.training_instances()] == [5]
        assert [x.id for x in data.test_instances()] == [2]

    def test_unlabeled_instances_are_test_instances(self):
        data = toy_dataset(instances=(EmbeddedInstance(3, None, [0.0, 0.0, 1.0]),))
        assert [x.id for x in data.test_instances()] == [3]

    def test_overlapping_split(self):
        with pytest.raises(ValidationError, match="both seen and unseen"):
            toy_dataset(seen={0, 1}, unseen={1})

    def test_unknown_split_class(self):
        with pytest.raises(ValidationError, match="unknown classes"):
            toy_dataset(unseen={7})

    def test_unknown_instance_label(self):
        with pytest.raises(ValidationError, match="unknown class 9"):
            toy_dataset(instances=(EmbeddedInstance(1, 9, [0.0, 0.0, 0.0]),))

    def test_duplicate_labels(self):
        with pytest.raises(ValidationError, match="unique"):
            toy_dataset(classes=(ClassEmbedding(0, [1.0, 0.0]), ClassEmbedding(0, [0.0, 1.0])))

    def test_inconsistent_dims(self):
        with pytest.raises(DimensionError):
            toy_dataset(instances=(EmbeddedInstance(1, 0, [0.0, 0.0]), EmbeddedInstance(2, 0, [0.0, 0.0, 0.0])))

    def test_with_split_drops_other_classes(self):
        data = toy_dataset().with_split({0}, set())
        assert [x.id for x in data.instances] == [5]
        assert data.unseen_classes() == ()

    def test_empty_instances_need_d_t(self):
        with pytest.raises(ValidationError, match="d_t"):
            toy_dataset(instances=())
        assert toy_dataset(instances=(), d_t=4).d_t == 4


def test_phi_matrix_empty():
    assert phi_matrix([], 3).shape == (0, 3)
