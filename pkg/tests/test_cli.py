import json
import math

import pytest

from mixsde import __version__
from mixsde.cli import SUBCOMMANDS, build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_all_subcommands_registered():
    assert set(SUBCOMMANDS) == {
        "simulate", "integrate", "norms", "check", "compare", "kernel", "price", "bound", "table", "hitting"
    }


@pytest.mark.parametrize("command", sorted(SUBCOMMANDS))
def test_help_lists_every_parameter(command):
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    text = sub.format_help()
    for prm in SUBCOMMANDS[command][1]:
        assert "--" + prm.name.replace("_", "-") in text


def test_simulate_sigma_zero_follows_the_ode(capsys):
    code, out, err = run(capsys, "simulate", "--model", "cir-mixed", "--sigma", "0")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("t,")
    assert len(lines) == 4098
    assert abs(float(lines[-1].split(",")[1]) - math.e) <= 1e-2
    meta = json.loads(err)
    assert meta["command"] == "simulate" and meta["version"] == __version__
    assert meta["config"]["sigma"] == 0.0 and meta["config"]["N"] == 4096


@pytest.mark.parametrize("model", ["linear", "cir-pure", "vasicek"])
def test_simulate_other_models(capsys, model):
    code, out, _ = run(capsys, "simulate", "--model", model, "--N", "64", "--T", "1")
    assert code == 0
    assert len(out.splitlines()) == 66


def test_simulate_custom_model(capsys):
    code, out, _ = run(capsys, "simulate", "--model", "custom", "--target", "custom_models:additive",
                       "--N", "32", "--T", "1")
    assert code == 0
    assert len(out.splitlines()) == 34


def test_integrate_smooth(capsys):
    code, out, _ = run(capsys, "integrate", "--f", "t", "--g", "t2")
    assert code == 0
    res = json.loads(out)
    assert res["value"] == pytest.approx(2 / 3, abs=1e-4)
    assert abs(res["value"]) <= res["bound"]


def test_norms_json(capsys):
    code, out, _ = run(capsys, "norms", "--input", "fbm", "--N", "256")
    assert code == 0
    res = json.loads(out)
    assert {"norm_inf", "seminorm_0", "lambda", "holder_constant"} <= set(res)


@pytest.mark.parametrize(
    "argv,passed",
    [
        (["--kind", "hypotheses", "--model", "linear", "--samples", "200"], True),
        (["--kind", "viability", "--model", "cir-mixed", "--samples", "100"], True),
        (["--kind", "positivity", "--model", "cir-mixed", "--samples", "100"], True),
        (["--kind", "comparison", "--model", "cir-mixed", "--a", "0.05", "--a2", "0.1", "--samples", "200"], True),
        (["--kind", "comparison", "--model", "cir-mixed", "--a", "0.1", "--a2", "0.05", "--samples", "200"], False),
    ],
)
def test_check_kinds(capsys, argv, passed):
    code, out, err = run(capsys, "check", *argv)
    assert code == 0
    assert json.loads(out)["passed"] is passed
    assert json.loads(err)["passed"] is passed


@pytest.mark.parametrize("kind", ["drift", "domination"])
def test_compare(capsys, kind):
    code, out, err = run(capsys, "compare", "--kind", kind, "--n-paths", "20", "--N", "128")
    assert code == 0
    assert out.splitlines()[0] == "path,violated,max_violation"
    assert json.loads(err)["summary"]["n_violations"] == 0


def test_kernel_outputs(capsys, tmp_path):
    out = tmp_path / "k.csv"
    code, _, _ = run(capsys, "kernel", "--N", "32", "--tol", "1e-2", "--out", str(out))
    assert code == 0
    assert out.read_text().splitlines()[0] == "t,s,r"
    meta = json.loads((tmp_path / "k.csv.meta.json").read_text())
    assert meta["residual"]["passed"] is True


def test_kernel_half_needs_test_mode(capsys):
    code, _, err = run(capsys, "kernel", "--H", "0.5", "--N", "8")
    assert code == 2
    assert json.loads(err)["field"] == "H"
    code, out, _ = run(capsys, "kernel", "--H", "0.5", "--N", "8", "--test-mode", "true")
    assert code == 0
    assert all(float(line.split(",")[2]) == 0.0 for line in out.splitlines()[1:])


def test_price_and_bound(capsys):
    code, out, _ = run(capsys, "price", "--sigma", "0.5", "--n-paths", "500", "--N", "256")
    assert code == 0
    price = json.loads(out)
    code, out, _ = run(capsys, "bound", "--sigma", "0.5")
    bound = json.loads(out)
    assert bound["upper_bound"] == pytest.approx(2.4337, abs=1e-4)
    assert price["mc_price"] < bound["upper_bound"]
    assert bound["mean"] == pytest.approx(math.exp(0.5))


def test_small_table(capsys):
    code, out, err = run(capsys, "table", "--sigmas", "0.5", "--strikes", "1,2", "--N", "128", "--n-paths", "500")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "sigma,K,mc_price,mc_stderr,upper_bound,n_paths,n_steps,seed,H"
    assert len(lines) == 3
    assert json.loads(err)["config"]["H"] == 0.8


def test_hitting_outputs(capsys, tmp_path):
    nu0 = tmp_path / "nu0.csv"
    code, out, err = run(capsys, "hitting", "--a", "-1", "--horizon", "20", "--n-paths", "30", "--N", "256",
                         "--bins", "4", "--nu0-out", str(nu0))
    assert code == 0
    assert out.splitlines()[0] == "bin_left,bin_right,count"
    assert len(out.splitlines()) == 5
    assert len(nu0.read_text().splitlines()) == 31
    assert json.loads(err)["n_paths"] == 30


# --- configuration ---------------------------------------------------------


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0.1, "K": 2.0}))
    _, out, err = run(capsys, "bound", "--config", str(cfg), "--sigma", "1")
    meta = json.loads(err)
    assert meta["config"]["sigma"] == 1.0 and meta["config"]["K"] == 2.0
    assert json.loads(out)["upper_bound"] == pytest.approx(6.2501, abs=1e-4)


def test_unknown_config_key_is_named(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigmaa": 0.1}))
    code, _, err = run(capsys, "bound", "--config", str(cfg))
    assert code == 2
    assert json.loads(err)["field"] == "sigmaa"


def test_malformed_value_is_named(capsys):
    code, _, err = run(capsys, "price", "--n-paths", "many")
    assert code == 2
    payload = json.loads(err)
    assert payload["error"] == "invalid_config" and payload["field"] == "n_paths"


def test_unreadable_config(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "bound", "--config", str(bad))
    assert code == 2 and json.loads(err)["field"] == "config"


@pytest.mark.parametrize(
    "argv,code,error",
    [
        (["simulate", "--model", "quadratic"], 3, "unknown_model"),
        (["simulate", "--H", "0.7", "--N", "16"], 4, "invalid_hurst"),
        (["kernel", "--N", "2048"], 5, "resource_limit"),
        (["simulate", "--bogus", "1"], 2, "invalid_config"),
    ],
)
def test_error_codes(capsys, argv, code, error):
    got, out, err = run(capsys, *argv)
    assert got == code
    assert out == ""
    assert json.loads(err)["error"] == error


def test_error_codes_are_distinct():
    from mixsde.errors import ConfigError, HurstRangeError, ResourceLimitError, UnknownModelError

    codes = {e.exit_status for e in (ConfigError, UnknownModelError, HurstRangeError, ResourceLimitError)}
    assert len(codes) == 4 and 0 not in codes


def test_byte_identical_reruns_across_threads(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["table", "--sigmas", "0.5,1", "--strikes", "1", "--N", "64", "--n-paths", "300", "--seed", "42"]
    assert main(base + ["--out", str(a), "--threads", "1", "--batch-size", "50"]) == 0
    assert main(base + ["--out", str(b), "--threads", "4", "--batch-size", "128"]) == 0
    capsys.readouterr()
    assert a.read_bytes() == b.read_bytes()


def test_meta_path_flag(capsys, tmp_path):
    meta = tmp_path / "m.json"
    code, out, err = run(capsys, "bound", "--meta", str(meta))
    assert code == 0 and err == ""
    assert json.loads(meta.read_text())["command"] == "bound"
    assert json.loads(out)["upper_bound"] > 0
