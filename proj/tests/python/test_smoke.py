import math

import pytest

import noisefence as nf


def test_sigma_z_sq():
    assert nf.sigma_z_sq(0.01, 1e-3, 1e-3) == pytest.approx(200.0)
    assert nf.sigma_z_sq(1e-3, 0.105, 0.095) == pytest.approx(2.015e-4, rel=1e-3)


def test_qc_ratio_reference_values():
    assert nf.qc_ratio(1.25e-7) == pytest.approx(8.7e6, rel=0.02)
    assert nf.qc_ratio(2.0e-4) == pytest.approx(5.5e3, rel=0.02)
    assert nf.qc_ratio(math.inf) == 1.0


def test_repeated_query_n():
    assert nf.repeated_query_n(1e-6) == 4
    assert nf.repeated_query_n(5e-6) == 182
    assert nf.repeated_query_n(1e-4) is None


def test_snr_and_probability():
    r = nf.snr_nes(0.01, 4e-4 + 2.5e-6, 4e-4 - 2.5e-6)
    assert r["exact_db"] == pytest.approx(-69.0, abs=0.1)
    assert nf.prob_a_negative(0.0, 1e-3, 0.1) == pytest.approx(0.5)
    assert nf.prob_a_negative(1.0, 1e-3, math.sqrt(2e-4), method="gaussian") == pytest.approx(
        0.4718, abs=1e-3
    )


def test_quantization():
    assert nf.quantize([0.30, 0.31], 2) == pytest.approx([1 / 3, 1 / 3])
    assert nf.quantized_z2(0.30, 0.31, 2) == pytest.approx(0.96124, abs=1e-3)
    with pytest.raises(nf.PreconditionError):
        nf.quantized_z2(0.1, 0.5, 2)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        nf.sigma_z_sq(-1.0, 0.1, 0.1)
    with pytest.raises(nf.DomainError):
        nf.prob_a_negative(1.0, 1e-3, 0.1, method="bogus")
    with pytest.raises(nf.ConfigError):
        nf.run_suite("nope")


def test_analyze_rows():
    rows = nf.analyze([0.0, 0.01], ["mnist"])
    assert [r["sigma"] for r in rows] == [0.0, 0.01]
    assert rows[0]["qc_ratio"] == 1.0
    assert rows[1]["repeat_n"] is None
    assert rows[1]["qc_ratio"] == pytest.approx(8.7e6, rel=0.02)


def test_run_suite_report():
    assert "zoo_variance" in nf.suite_names()
    report = nf.run_suite("zoo_variance", seed=3)
    assert report["name"] == "zoo_variance"
    assert report["passed"] is True
    assert set(report["rel_error"]) <= set(report["limits"])
