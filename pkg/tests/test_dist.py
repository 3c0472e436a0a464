import math

import numpy as np
import pytest

from ibonset import (
    ConditionalMatrix,
    DiscreteJoint,
    Marginal,
    ValidationError,
    conditional_from_joint,
    entropy,
    joint_from_conditional,
    load_conditional_csv,
    load_joint_csv,
    marginal,
    mutual_information,
    save_conditional_csv,
    save_joint_csv,
)
from conftest import random_joint, two_cluster_joint

# 1 - (-0.2 log2 0.2 - 0.8 log2 0.8), evaluated by the binary-entropy formula
MI_TWO_CLUSTER_BITS = 0.2780719051126377


def test_joint_from_conditional_diagonal():
    cond = ConditionalMatrix([[1, 0], [0, 1]], [0.5, 0.5])
    joint = joint_from_conditional(cond)
    np.testing.assert_allclose(joint.probs, [[0.5, 0], [0, 0.5]], atol=1e-15)


def test_joint_from_conditional_hand_multiplication():
    cond = ConditionalMatrix([[0.8, 0.2], [0.2, 0.8]], [0.5, 0.5])
    joint = joint_from_conditional(cond)
    np.testing.assert_allclose(joint.probs, [[0.4, 0.1], [0.1, 0.4]], atol=1e-15)


def test_joint_columns_match_label_marginal(rng):
    for _ in range(20):
        n, c = int(rng.integers(2, 9)), int(rng.integers(2, 5))
        rows = rng.dirichlet(np.ones(c), size=n)
        weights = rng.dirichlet(np.ones(n) * 3.0)
        cond = ConditionalMatrix(rows, weights)
        joint = joint_from_conditional(cond)
        np.testing.assert_allclose(
            joint.probs.sum(axis=0), cond.label_marginal().probs, atol=1e-12
        )
        np.testing.assert_allclose(joint.probs.sum(axis=1), cond.weights, atol=1e-12)


def test_mi_product_joint_is_zero():
    joint = DiscreteJoint(np.outer([0.3, 0.7], [0.6, 0.4]))
    assert abs(mutual_information(joint)) < 1e-14


def test_mi_perfect_correlation_one_bit():
    joint = DiscreteJoint([[0.5, 0.0], [0.0, 0.5]])
    assert mutual_information(joint, base="bits") == pytest.approx(1.0, abs=1e-12)


def test_mi_two_cluster_binary_entropy_value():
    joint = two_cluster_joint(0.2)
    assert mutual_information(joint, base="bits") == pytest.approx(
        MI_TWO_CLUSTER_BITS, abs=1e-12
    )
    assert mutual_information(joint, base="nats") == pytest.approx(
        MI_TWO_CLUSTER_BITS * math.log(2.0), abs=1e-12
    )


def test_mi_bounds_on_random_joints(rng):
    for _ in range(50):
        joint = random_joint(rng)
        mi = mutual_information(joint)
        assert mi >= -1e-12
        h_x = entropy(joint.x_marginal())
        h_y = entropy(joint.y_marginal())
        assert mi <= min(h_x, h_y) + 1e-12


def test_mi_permutation_invariance(rng):
    for _ in range(20):
        joint = random_joint(rng)
        px = rng.permutation(joint.shape[0])
        py = rng.permutation(joint.shape[1])
        permuted = DiscreteJoint(joint.probs[px][:, py])
        assert mutual_information(permuted) == pytest.approx(
            mutual_information(joint), abs=1e-12
        )


def test_conditional_joint_round_trip(rng):
    for _ in range(20):
        joint = random_joint(rng)
        back = joint_from_conditional(conditional_from_joint(joint))
        np.testing.assert_allclose(back.probs, joint.probs, rtol=0, atol=1e-12)


def test_conditional_hand_division():
    cond = conditional_from_joint(two_cluster_joint(0.2))
    np.testing.assert_allclose(cond.rows, [[0.8, 0.2], [0.2, 0.8]], atol=1e-15)
    np.testing.assert_allclose(cond.weights, [0.5, 0.5], atol=1e-15)


def test_diagonal_joint_gives_identity_rows():
    cond = conditional_from_joint(DiscreteJoint([[0.5, 0.0], [0.0, 0.5]]))
    np.testing.assert_allclose(cond.rows, np.eye(2), atol=1e-15)


def test_conditional_on_y_axis():
    joint = two_cluster_joint(0.2)
    cond_y = conditional_from_joint(joint, axis="y")
    # p(x|y) of the symmetric table mirrors p(y|x)
    np.testing.assert_allclose(cond_y.rows, [[0.8, 0.2], [0.2, 0.8]], atol=1e-15)


def test_marginal_of_product_joint_recovers_factors():
    joint = DiscreteJoint(np.outer([0.3, 0.7], [0.6, 0.4]))
    np.testing.assert_allclose(marginal(joint, "x").probs, [0.3, 0.7], atol=1e-12)
    np.testing.assert_allclose(marginal(joint, "y").probs, [0.6, 0.4], atol=1e-12)


def test_validation_rejects_bad_mass():
    with pytest.raises(ValidationError):
        DiscreteJoint([[0.5, 0.4]])  # sums to 0.9
    with pytest.raises(ValidationError):
        Marginal([0.5, -0.5, 1.0])
    with pytest.raises(ValidationError):
        ConditionalMatrix([[0.7, 0.2], [0.5, 0.5]])


def test_validation_renormalizes_within_tolerance():
    eps = 1e-10
    joint = DiscreteJoint([[0.25, 0.25], [0.25, 0.25 + eps]])
    assert joint.probs.sum() == pytest.approx(1.0, abs=1e-15)
    cond = ConditionalMatrix([[0.5, 0.5 + eps]], [1.0 - eps])
    assert cond.rows.sum() == pytest.approx(1.0, abs=1e-15)


def test_zero_mass_rows_pruned_with_warning():
    with pytest.warns(UserWarning, match="pruned"):
        joint = DiscreteJoint(
            [[0.5, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.5, 0.0]],
            x_labels=("a", "b", "c"),
            y_labels=("u", "v", "w"),
        )
    assert joint.shape == (2, 2)
    assert joint.x_labels == ("a", "c")
    assert joint.y_labels == ("u", "v")


def test_weights_must_be_positive():
    with pytest.raises(ValidationError):
        ConditionalMatrix([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0])


def test_containers_are_immutable():
    joint = two_cluster_joint(0.2)
    with pytest.raises(ValueError):
        joint.probs[0, 0] = 0.9


def test_conditional_csv_round_trip(tmp_path, rng):
    cond = ConditionalMatrix(
        rng.dirichlet(np.ones(3), size=5), rng.dirichlet(np.ones(5) * 4.0)
    )
    path = tmp_path / "cond.csv"
    save_conditional_csv(cond, path)
    back = load_conditional_csv(path)
    np.testing.assert_allclose(back.rows, cond.rows, rtol=1e-12)
    np.testing.assert_allclose(back.weights, cond.weights, rtol=1e-12)


def test_conditional_csv_without_weight_column(tmp_path):
    path = tmp_path / "cond.csv"
    path.write_text("y0,y1\n0.8,0.2\n0.2,0.8\n")
    cond = load_conditional_csv(path)
    np.testing.assert_allclose(cond.weights, [0.5, 0.5])


def test_conditional_csv_headerless(tmp_path):
    path = tmp_path / "cond.csv"
    path.write_text("0.8,0.2\n0.2,0.8\n")
    cond = load_conditional_csv(path)
    assert cond.num_classes == 2


def test_joint_csv_round_trip(tmp_path, rng):
    joint = random_joint(rng)
    path = tmp_path / "joint.csv"
    save_joint_csv(joint, path)
    back = load_joint_csv(path)
    np.testing.assert_allclose(back.probs, joint.probs, rtol=1e-12)


def test_csv_malformed_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y0,y1\n0.5,oops\n")
    with pytest.raises(ValidationError):
        load_conditional_csv(path)


def test_entropy_helper():
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2.0), abs=1e-14)
    assert entropy([0.5, 0.5], base="bits") == pytest.approx(1.0, abs=1e-14)
    assert entropy([1.0, 0.0]) == pytest.approx(0.0, abs=1e-14)
