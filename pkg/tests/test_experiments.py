import json

import pytest

from itocounter import experiments as E
from itocounter.errors import DomainError

SMALL = {
    "dist-check": dict(n=20_000, batch=3000),
    "survival-check": dict(n=50_000, batch=7000),
    "tail-index": dict(n=50_000, batch=7000),
    "divergence": dict(paths=2000, steps=128, replicates=3, batch=300),
    "ito-check": dict(paths=12, steps=1024, batch=5),
    "martingale-check": dict(paths=3000, steps=64, batch=700),
    "gsigma": dict(),
}


def _run(name, workers=1, **extra):
    return E.run(name, E.default_config(name, **{**SMALL[name], **extra}), workers=workers)


def test_default_config_and_unknown_name():
    cfg = E.default_config("ito-check")
    assert cfg.steps == 1 << 14 and cfg.paths == 200
    with pytest.raises(KeyError):
        E.default_config("nope")


def test_validation():
    with pytest.raises(DomainError):
        _run("dist-check", n=-5)
    with pytest.raises(DomainError):
        _run("ito-check", steps=1000)
    with pytest.raises(DomainError):
        _run("survival-check", sigmas=(1.0, -2.0))


def test_derive_root_separates_experiments():
    assert E.derive_root(42, "a") != E.derive_root(42, "b")
    assert E.derive_root(42, "a", 1) != E.derive_root(42, "a", 0)
    assert E.derive_root(42, "a") == E.derive_root(42, "a")


@pytest.mark.parametrize("name", list(SMALL))
def test_report_schema(name):
    r = _run(name)
    d = r.to_dict()
    for key in ("name", "version", "config", "scalars", "series", "checks", "exclusions", "pass",
                "duration_s"):
        assert key in d
    assert d["config"]["seed"] == 42
    json.loads(r.to_json())
    rows = r.csv_rows()
    assert all(len(row) == 4 for row in rows)
    assert {row[0] for row in rows} >= {"meta", "config", "check"}


@pytest.mark.parametrize("name", list(SMALL))
def test_deterministic_across_workers(name):
    a = E.masked(_run(name, workers=1).to_dict())
    b = E.masked(_run(name, workers=4).to_dict())
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_batch_size_does_not_change_results():
    for name in ("martingale-check", "divergence", "survival-check"):
        a = _run(name, batch=700)
        b = _run(name, batch=1999)
        assert (a.scalars, a.series, a.checks) == (b.scalars, b.series, b.checks)


def test_workers_env(monkeypatch):
    monkeypatch.setenv(E.WORKERS_ENV, "3")
    assert E.default_workers() == 3


def test_dist_check_small():
    r = _run("dist-check")
    assert r.checks["D_below_threshold"] and r.checks["identity_control_rejected"]


def test_tail_index_small_sigma_has_finite_mean():
    r = _run("tail-index", sigmas=(0.7,))
    assert r.scalars["sigma0.7_verdict"] == "finite mean"


def test_divergence_reports_exclusions_and_profiles():
    r = _run("divergence")
    assert r.checks["all_retained_paths_finite"]
    assert r.series["profile_checkpoints"][-1] + r.exclusions["escaped_paths"] <= 2000
    assert len(r.series["ratio_per_replicate"]) == 3


def test_ito_check_reports_analytic_control():
    r = _run("ito-check")
    assert r.series["resolutions"] == [256, 512, 1024]
    assert r.scalars["control_gap_to_expected"] < 1e-12


def test_gsigma():
    r = _run("gsigma")
    assert r.passed
    assert r.scalars["G100_at_1"] == pytest.approx(0.0063976, abs=1e-7)


def test_ks_distance_shrinks_with_sample_size():
    d_small = E.run("dist-check", E.default_config("dist-check", n=10_000), workers=1).scalars["D"]
    d_large = E.run("dist-check", E.default_config("dist-check", n=100_000), workers=1).scalars["D"]
    assert 2.0 <= d_small / d_large <= 5.0
