import io
import json
import math

import pytest

from offload_game import cli
from offload_game.leader import optimal_homogeneous
from offload_game.model import MnoParams


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc), encoding="utf-8")
    return str(path)


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


HOMOGENEOUS = {"aps": [{"cost": 2.0, "quality": 0.5, "capacity": 3.0}] * 2, "gain_coefficient": 6.0}
TWO_AP = {"aps": [{"cost": 2.0, "quality": 0.2, "capacity": 5.0}, {"cost": 3.0, "quality": 0.3, "capacity": 5.0}],
          "gain_coefficient": 50.0}


class TestScenarioFile:
    def test_unknown_top_level_key(self):
        with pytest.raises(cli.InputError, match="colour"):
            cli.parse_scenario(dict(TWO_AP, colour="red"))

    def test_unknown_ap_key_names_field(self):
        doc = json.loads(json.dumps(TWO_AP))
        doc["aps"][1]["speed"] = 3
        with pytest.raises(cli.InputError, match=r"aps\[1\]"):
            cli.parse_scenario(doc)

    def test_invalid_value(self):
        doc = json.loads(json.dumps(TWO_AP))
        doc["aps"][0]["quality"] = 0
        with pytest.raises(cli.InputError, match=r"aps\[0\]"):
            cli.parse_scenario(doc)

    def test_syntax_error_has_line(self, tmp_path):
        path = write(tmp_path, '{"aps": [\n  {"cost": 1,, }]}')
        with pytest.raises(cli.InputError, match="line 2"):
            cli.load_scenario(path)

    def test_offer_parsing(self):
        offer = cli.parse_offer("p=2,B=10")
        assert (offer.salary_rate, offer.bonus) == (2.0, 10.0)
        for bad in ("p=2", "q=1,B=2", "p=x,B=1", "p=-1,B=1"):
            with pytest.raises(cli.InputError):
                cli.parse_offer(bad)

    def test_round_trip(self):
        doc = dict(TWO_AP, scheme="salary", offer={"p": 1.5, "B": 2.0})
        sf = cli.parse_scenario(doc)
        again = cli.parse_scenario(json.loads(json.dumps(sf.to_dict())))
        assert again == sf


class TestSolve:
    def test_homogeneous_matches_library(self, tmp_path, capsys):
        code, out, _ = run(["solve", write(tmp_path, HOMOGENEOUS), "--json"], capsys)
        assert code == 0
        got = json.loads(out)
        ref = optimal_homogeneous(2, 2.0, 0.5, 3.0, MnoParams(6.0))
        assert got["utility"] == ref.utility
        assert got["scenario"]["offer"] == {"p": ref.offer.salary_rate, "B": ref.offer.bonus}

    def test_json_output_is_a_scenario(self, tmp_path, capsys):
        code, out, _ = run(["solve", write(tmp_path, TWO_AP), "--json"], capsys)
        sf = cli.parse_scenario(json.loads(out)["scenario"])
        assert len(sf.profiles) == 2 and sf.offer is not None

    def test_bonus_only_single_ap(self, tmp_path, capsys):
        doc = {"aps": [TWO_AP["aps"][0]], "gain_coefficient": 5.0}
        code, _, err = run(["solve", write(tmp_path, doc), "--scheme", "bonus"], capsys)
        assert code == 1 and "two APs" in err

    def test_fixed_offer_prints_follower_only(self, tmp_path, capsys):
        code, out, _ = run(["solve", write(tmp_path, TWO_AP), "--offer", "p=2,B=10"], capsys)
        assert code == 0
        assert "MNO utility" not in out and "p = 2.0000   B = 10.0000" in out

    def test_money_to_four_decimals(self, tmp_path, capsys):
        _, out, _ = run(["solve", write(tmp_path, TWO_AP)], capsys)
        assert f"{50 * math.log(11) - 30:.4f}" in out

    @pytest.mark.parametrize("solver", ["cases", "iterative", "algo3", "aggregate"])
    def test_every_solver_path(self, tmp_path, capsys, solver):
        code, _, _ = run(["solve", write(tmp_path, TWO_AP), "--ne-solver", solver, "--grid", "11x11"], capsys)
        assert code == 0

    def test_non_convergence_exit_code(self, tmp_path, capsys, monkeypatch):
        from offload_game import equilibrium
        real = equilibrium.ne_iterative
        monkeypatch.setattr(cli.eq, "ne_iterative", lambda *a, **k: real(*a, **dict(k, max_iter=1)))
        code, _, _ = run(["solve", write(tmp_path, TWO_AP), "--offer", "p=1,B=10", "--ne-solver", "iterative"],
                         capsys)
        assert code == 2

    def test_malformed_file(self, tmp_path, capsys):
        code, _, err = run(["solve", write(tmp_path, '{"aps": 3, "gain_coefficient": 1}')], capsys)
        assert code == 1 and "aps" in err

    def test_bad_grid(self, tmp_path, capsys):
        code, _, _ = run(["solve", write(tmp_path, TWO_AP), "--grid", "10by10"], capsys)
        assert code == 1


class TestVerify:
    def test_round_trip_from_solve(self, tmp_path, capsys):
        _, out, _ = run(["solve", write(tmp_path, TWO_AP), "--json"], capsys)
        doc = json.loads(out)
        path = write(tmp_path, doc["scenario"], "solved.json")
        alloc = ",".join(repr(x) for x in doc["equilibrium"]["allocation"])
        code, out, _ = run(["verify", path, "--allocation", alloc], capsys)
        assert code == 0 and "max deviation gain" in out

    def test_zero_allocation_under_bonus_only(self, tmp_path, capsys):
        code, out, _ = run(["verify", write(tmp_path, TWO_AP), "--scheme", "bonus", "--allocation", "0,0",
                            "--offer", "p=0,B=5"], capsys)
        assert code == 3 and "AP" in out

    def test_capacity_under_high_salary(self, tmp_path, capsys):
        code, _, _ = run(["verify", write(tmp_path, TWO_AP), "--allocation", "5,5", "--offer", "p=3,B=4"], capsys)
        assert code == 0

    def test_dimension_mismatch(self, tmp_path, capsys):
        code, _, err = run(["verify", write(tmp_path, TWO_AP), "--allocation", "1,2,3", "--offer", "p=1,B=1"],
                           capsys)
        assert code == 1 and "3 entries" in err


class TestCompare:
    def test_default_shape(self, tmp_path, capsys):
        out_csv = tmp_path / "c.csv"
        code, out, _ = run(["compare", "--n", "5", "--runs", "2", "--out", str(out_csv)], capsys)
        assert code == 0
        assert len(out_csv.read_text(encoding="utf-8").splitlines()) == 1 + 2 * 5 * 3
        assert "regime" in out

    def test_same_seed_same_bytes(self, tmp_path, capsys):
        paths = [tmp_path / f"{k}.csv" for k in range(2)]
        for p in paths:
            run(["compare", "--n", "6", "--runs", "3", "--gains", "10,20", "--seed", "9", "--out", str(p)], capsys)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_io_error(self, tmp_path, capsys):
        code, _, err = run(["compare", "--n", "4", "--runs", "1", "--gains", "10",
                            "--out", str(tmp_path / "no" / "x.csv")], capsys)
        assert code == 1 and "x.csv" in err

    @pytest.mark.parametrize("flags", [["--n", "1"], ["--regimes", "medium"], ["--gains", "0"]])
    def test_input_errors(self, tmp_path, capsys, flags):
        code, _, _ = run(["compare", "--runs", "1", "--out", str(tmp_path / "x.csv"), *flags], capsys)
        assert code == 1
