import json

import numpy as np
import pytest

from dmtnet.verify import (
    random_recursive_params,
    random_spd,
    run_all,
    suite_activation_spd,
    suite_conv_spd,
    suite_diag_metric,
    suite_recursive_spd,
    suite_toeplitz,
)


def test_random_spd_properties(rng):
    x = random_spd(rng, 6, rank=2, ridge=0.1, max_entry=3.0)
    np.testing.assert_allclose(x, x.T)
    assert np.linalg.eigvalsh(x).min() > 0
    assert np.abs(x).max() == pytest.approx(3.0)


@pytest.mark.parametrize("suite", [suite_conv_spd, suite_activation_spd, suite_recursive_spd, suite_toeplitz,
                                   suite_diag_metric])
def test_suites_pass(suite, rng):
    res = suite(20, rng)
    assert res.passed, res
    assert res.trials == 20 and res.failures == 0


def test_fault_injection_fails(rng):
    res = suite_conv_spd(50, rng, inject_fault=True)
    assert not res.passed
    assert res.failures > 0 and res.worst_margin < 0


def test_recursive_params_shapes(rng):
    p = random_recursive_params(rng, 2, 10, 9)
    assert p.W_fh.shape == (2, 10, 9) and p.W_hr.shape == (2, 9, 9)


def test_zero_trials_is_vacuous():
    with pytest.warns(RuntimeWarning, match="vacuous"):
        rep = run_all(0)
    assert rep.passed and all(s.trials == 0 for s in rep.suites)


def test_run_all_shares_and_report(tmp_path):
    rep = run_all(30, seed=1)
    assert [s.trials for s in rep.suites] == [30, 30, 3, 6, 3]
    assert rep.passed
    assert rep.format_table().splitlines()[-1] == "overall: PASS"
    rep.write_json(tmp_path / "v.json")
    assert json.loads((tmp_path / "v.json").read_text())["passed"] is True


def test_run_all_is_seeded():
    a = run_all(10, seed=3).to_dict()
    b = run_all(10, seed=3).to_dict()
    for x, y in zip(a["suites"], b["suites"]):
        assert x["statistic"] == y["statistic"]
