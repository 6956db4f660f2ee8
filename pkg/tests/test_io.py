import numpy as np
import pytest

from factorial_alloc.io import (
    SpecError,
    load_pilot,
    load_potential_outcomes,
    load_problem,
    parse_problem,
    parse_treatment,
    pilot_variances,
    pool_variances,
)


@pytest.mark.parametrize("code, K, j", [("8", 3, 8), ("0111", 4, 8), ("011", 3, 4), ("2", 1, 2), ("1", 1, 1), ("10", 2, 3)])
def test_parse_treatment(code, K, j):
    assert parse_treatment(code, K) == j


@pytest.mark.parametrize("code", ["9", "abc", "0"])
def test_parse_treatment_rejects(code):
    with pytest.raises(SpecError):
        parse_treatment(code, 3)


def test_pool_equal_sizes_is_simple_average():
    np.testing.assert_allclose(pool_variances([[0.15], [0.27]], [[12], [12]]), [0.21])


def test_pool_weights_by_degrees_of_freedom():
    np.testing.assert_allclose(pool_variances([[1.0], [4.0]], [[3], [5]]), [(2 * 1 + 4 * 4) / 6])
    with pytest.raises(ValueError):
        pool_variances([[1.0]], [[1]])


def test_pilot_variances_pool(data_dir):
    data = load_pilot(data_dir / "audit_pilot.csv", 3)
    assert len(data.outcomes) == 192
    out = pilot_variances(data, 3, pool=True)["all"]
    np.testing.assert_allclose(out["replicates"]["I"][:3], 20 / 132)
    np.testing.assert_allclose(out["pooled"], (np.array(out["replicates"]["I"]) + out["replicates"]["II"]) / 2)


def test_pilot_single_replicate_passthrough(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("unit_id,treatment,outcome\n1,1,0\n2,1,2\n3,2,1\n4,2,5\n")
    out = pilot_variances(load_pilot(f, 1), 1, pool=True)
    np.testing.assert_allclose(out["all"]["pooled"], [2.0, 8.0])


def test_pilot_per_block(tmp_path):
    f = tmp_path / "p.tsv"
    rows = ["unit_id\tblock\ttreatment\toutcome"]
    for i, (b, t, y) in enumerate([("x", 1, 0), ("x", 1, 1), ("x", 2, 0), ("x", 2, 3), ("y", 1, 2), ("y", 1, 2), ("y", 2, 1), ("y", 2, 2)]):
        rows.append(f"{i}\t{b}\t{t}\t{y}")
    f.write_text("\n".join(rows))
    out = pilot_variances(load_pilot(f, 1), 1)
    np.testing.assert_allclose(out["x"]["pooled"], [0.5, 4.5])
    np.testing.assert_allclose(out["y"]["pooled"], [0.0, 0.5])


def test_load_problem_files(data_dir):
    p = load_problem(data_dir / "education_rbd.yaml")
    assert p.is_block and p.N == 1656 and p.block_names == ("female", "male")
    c = load_problem(data_dir / "education_cost_1222_a.yaml")
    assert c.costs.budget == 4.5e6 and c.N is None


@pytest.mark.parametrize(
    "doc, match",
    [
        ({"design": {"K": 2, "N": 10}, "criterion": "Q", "variances": [1, 1, 1, 1]}, "criterion"),
        ({"design": {"K": 2, "N": 10}, "criterion": "A", "variances": [1, 1, 1]}, "4 values"),
        ({"design": {"K": 2, "N": 10}, "criterion": "A", "variances": [1, 1, 1, -1]}, "variances"),
        ({"design": {"K": 2, "N": 10}, "criterion": "A"}, "variances"),
        ({"design": {"K": 2, "N": 10, "blocks": [{"size": 4}]}, "criterion": "A", "variances": [[1] * 4]}, "both"),
        ({"design": {"K": 1, "blocks": [{"size": 4}]}, "criterion": "A", "variances": [1, 1]}, "matrix"),
        ({"design": {"K": 2}, "criterion": "A", "variances": [1] * 4, "costs": {"per_unit": [1, 1], "budget": 5}}, "per_unit"),
        ({"design": {"K": 2}, "criterion": "A", "variances": [1] * 4, "colour": 1}, "colour"),
    ],
)
def test_schema_errors(doc, match):
    with pytest.raises(SpecError, match=match):
        parse_problem(doc)


def test_potential_outcomes_with_blocks(data_dir):
    po = load_potential_outcomes(data_dir / "random_po.tsv")
    assert po.outcomes.shape == (16, 4)
    np.testing.assert_array_equal(po.block_sizes, [8, 8])


def test_ragged_rows_rejected(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("a,b\n1,2\n3\n")
    with pytest.raises(SpecError, match="line 3"):
        load_potential_outcomes(f)
