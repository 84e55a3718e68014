"""Smoke test for the hetero_hawkes_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/hetero_hawkes_py-*.whl
"""

import math
import os
import tempfile

import hetero_hawkes_py as hh


def main():
    data = hh.simulate("linear_cox_basic", seed=7)
    assert data.units == ["i", "j"], data.units
    assert data.trial_count == 200
    assert abs(data.horizon - 5.0) < 1e-12
    assert 30.0 < data.rate("j") < 55.0, data.rate("j")

    again = hh.simulate("linear_cox_basic", seed=7)
    assert again.events("j", 3) == data.events("j", 3)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "spikes.jsonl")
        data.save(path)
        back = hh.load(path)
        assert back.events("i", 0) == data.events("i", 0)

    modified = hh.fit(data, "i", "j")
    k = modified["fit"]["impact_offset"]
    alpha = modified["fit"]["params"][k]
    se = modified["fit"]["std_errors"][k]
    assert abs(alpha - 2.0) < 3 * se, (alpha, se)
    assert 0.005 <= modified["fit"]["sigma_w_selected"] <= 0.5
    assert modified["wald"]["p_value"] < 1e-3

    standard = hh.fit(data, "i", "j", method="standard")
    assert standard["fit"]["params"][k - 1] > alpha + 1.0

    spline = hh.fit(data, "i", "j", method="spline", sigma_w=0.125)
    assert len(spline["fit"]["impact_coeffs"]) == 11
    assert len(spline["curve"]) == 51

    t = hh.theory([0.02, 0.125, 0.3])
    assert abs(t["bias_standard"] - 1.975) < 0.01, t["bias_standard"]
    assert len(t["rows"]) == 3
    assert abs(hh.bias(0.125)) < 0.05

    small = hh.simulate("linear_cox_basic", seed=3, trials=20)
    c = hh.ccg(small, "i", "j", n_mc=50, seed=1)
    assert len(c["lags"]) == len(c["ccg"]) == 101
    assert 0.0 < c["max_stat_p"] <= 1.0

    g = hh.goodness_of_fit(small, "i", "j", sigma_w=0.125)
    assert 0.0 <= g["outcome"]["p_value"] <= 1.0

    rep = hh.experiment("pvalue_uniformity", reps=3, n_mc=20)
    assert set(rep["summary"]) >= {"ks_p_modified", "ks_p_standard", "ks_p_ccg"}

    try:
        hh.fit(data, "i", "nope")
    except ValueError as e:
        assert "nope" in str(e)
    else:
        raise AssertionError("unknown unit accepted")

    custom = hh.Dataset({"a": [[0.1, 0.5], [0.2]], "b": [[0.3], []]}, 1.0)
    assert custom.trial_count == 2 and custom.events("a", 0) == [0.1, 0.5]
    assert not math.isnan(custom.rate("a"))

    print("smoke test passed")


if __name__ == "__main__":
    main()
