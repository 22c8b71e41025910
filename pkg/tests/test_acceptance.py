"""Full-size benchmark behaviour; run with `pytest -m slow`."""
import pytest

from bench_cli import ExperimentConfig, run

from conftest import FAMILIES

pytestmark = pytest.mark.slow


def _run(tmp_path, **fields):
    name = "-".join(str(v) for v in fields.values())
    return run(ExperimentConfig(output=str(tmp_path / name), **fields)).summary


@pytest.mark.parametrize("family", FAMILIES)
def test_two_level_beats_one_level_beats_none(family, tmp_path):
    iterations = {
        level: _run(tmp_path, element=family, h_exponent=6, H_exponent=2, overlap_layers=4,
                    precond=level, max_iters=5000)["iterations"]
        for level in ("none", "one-level", "two-level")
    }
    assert iterations["two-level"] < 0.5 * iterations["one-level"]
    assert iterations["one-level"] < iterations["none"]


@pytest.mark.parametrize("family", FAMILIES)
def test_condition_estimate_is_stable_under_refinement(family, tmp_path):
    rows = [_run(tmp_path, element=family, h_exponent=a, H_exponent=a - 4, overlap_layers=2)
            for a in (5, 6, 7)]
    assert all(row["converged"] for row in rows)
    kappas = [row["kappa_estimate"] for row in rows]
    for coarse, fine in zip(kappas, kappas[1:]):
        assert abs(fine / coarse - 1) <= 0.3
    assert abs(rows[2]["iterations"] - rows[1]["iterations"]) <= 3


@pytest.mark.parametrize("family", FAMILIES)
def test_wider_overlap_does_not_hurt(family, tmp_path):
    kappa = {
        layers: _run(tmp_path, element=family, h_exponent=6, H_exponent=2,
                     overlap_layers=layers)["kappa_estimate"]
        for layers in (2, 4)
    }
    assert kappa[2] >= kappa[4]


def test_full_size_comparison_for_bfs(tmp_path):
    iterations = {
        level: _run(tmp_path, element="bfs", h_exponent=7, H_exponent=3, overlap_layers=4,
                    precond=level, tol=1e-10, max_iters=20000)["iterations"]
        for level in ("none", "one-level", "two-level")
    }
    assert iterations["two-level"] < iterations["one-level"] < iterations["none"]
