import pytest

from fieldcov.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_parse_renders_canonical_form(capsys):
    code, out, _ = run(capsys, "parse", "mechanics")
    assert code == 0
    assert out == ("theory mechanics\n"
                   "base 1 (t)\n"
                   "param m\n"
                   "field q[1] : scalar variational\n"
                   "lagrangian -V(q) + 1/2*m*D[q;t]^2\n")


def test_covariantize_mechanics_golden(capsys):
    code, out, _ = run(capsys, "covariantize", "--mode", "horizontal", "mechanics")
    assert code == 0
    assert "field X[1] : scalar covariance" in out
    assert "lagrangian -D[Xt;t]*V(q) + 1/2*m*D[q;t]^2*D[Xt;t]^-1" in out


def test_covariantize_output_reparses(capsys, tmp_path):
    path = tmp_path / "cov.thy"
    code, _, _ = run(capsys, "covariantize", "kg1", "-o", str(path))
    assert code == 0
    code, out, _ = run(capsys, "parse", str(path))
    assert code == 0
    assert "field X[2] : scalar covariance" in out


def test_el_subcommand(capsys):
    code, out, _ = run(capsys, "el", "kg1")
    assert code == 0
    assert out == "EL[phi[0]] = -2*D[phi;t,x] - phi*m^2\n"


def test_sem_and_energy_subcommands(capsys):
    code, out, _ = run(capsys, "sem", "kg1")
    assert code == 0
    assert "t[0][0] = -1/2*phi^2*m^2" in out
    code, out, _ = run(capsys, "energy", "mechanics")
    assert code == 0
    assert out == "E = 1/2*m*D[q;t]^2 + V(q)\n"


def test_missing_file_is_usage_error(capsys):
    code, _, err = run(capsys, "el", "nonexistent.thy")
    assert code == 2
    assert "nonexistent.thy" in err


def test_bad_arguments_exit_2(capsys):
    assert main(["frobnicate"]) == 2
    capsys.readouterr()


def test_verify_checks_selection(capsys):
    code, out, _ = run(capsys, "verify", "kg1",
                       "--checks", "covariance,vacuous-el", "--samples", "10")
    assert code == 0
    assert "check: covariance" in out
    assert "check: vacuous-el" in out
    assert "status: pass" in out


def test_verify_failure_exit_code(capsys):
    code, out, _ = run(capsys, "verify", "proca", "--checks", "shift-invariance")
    assert code == 1
    assert "status: fail" in out


def test_verify_negative_control_passes(capsys):
    code, out, _ = run(capsys, "verify", "proca",
                       "--checks", "shift-invariance-negative")
    assert code == 0
    assert "failure expected" in out


@pytest.mark.parametrize("name", ["mechanics", "kg2", "chern-simons", "proca",
                                  "stueckelberg", "minimal-coupling"])
def test_verify_all_designated_checks(capsys, name):
    code, out, _ = run(capsys, "verify", name, "--all", "--samples", "25")
    assert code == 0, out
    assert "fail\n" not in out.replace("status: fail", "")


def test_verify_kg1_full_battery(capsys):
    code, out, _ = run(capsys, "verify", "kg1", "--all", "--samples", "25")
    assert code == 0
    for check in ("validate", "covariance", "vacuous-el", "sem-divergence",
                  "kg-reduction", "correspondence", "covariance-negative"):
        assert f"check: {check}" in out


def test_records_format_and_determinism(capsys):
    code1, out1, _ = run(capsys, "verify", "kg1", "--checks", "covariance",
                         "--samples", "8", "--format", "records")
    code2, out2, _ = run(capsys, "verify", "kg1", "--checks", "covariance",
                         "--samples", "8", "--format", "records")
    assert code1 == code2 == 0
    assert out1 == out2
    lines = out1.strip().splitlines()
    assert len(lines) == 9  # summary + one record per sample
    assert all(len(line.split("\t")) == 4 for line in lines)


def test_simulate_and_dump_section(capsys, tmp_path):
    path = tmp_path / "sec.txt"
    code, out, _ = run(capsys, "simulate", "mechanics", "--param", "m=1",
                       "--t1", "3.0", "-o", str(path))
    assert code == 0
    assert "max EL residual" in out
    code, out, _ = run(capsys, "dump-section", str(path))
    assert code == 0
    assert "q[0]" in out


def test_simulate_kg_grid(capsys):
    code, out, _ = run(capsys, "simulate", "kg1", "--param", "m=1", "--shape", "65")
    assert code == 0
    worst = float(out.strip().rsplit(" ", 1)[-1])
    assert worst < 1e-3


@pytest.mark.parametrize("name", ["mechanics", "kg1", "kg2", "chern-simons",
                                  "proca", "stueckelberg", "minimal-coupling"])
def test_every_fixture_covariantizes(capsys, name):
    code, out, _ = run(capsys, "covariantize", name)
    assert code == 0
    assert out.startswith("theory ")
