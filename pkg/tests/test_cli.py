import json
import os

import numpy as np
import pytest

from matgrammar.cli import load_matrix, main
from matgrammar.errors import ParseError, RaggedRows


def test_load_matrix_basic(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2\n3,4\n")
    X, mask = load_matrix(str(p))
    assert np.array_equal(X, [[1, 2], [3, 4]])
    assert mask.all()


def test_load_matrix_missing_entries(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,,3\n4,NaN,6\n")
    X, mask = load_matrix(str(p))
    assert not mask[0, 1] and not mask[1, 1]
    assert mask[0, 0] and mask[1, 2]
    assert X[0, 1] == 0.0


def test_load_matrix_parse_error_location(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,x\n")
    with pytest.raises(ParseError) as err:
        load_matrix(str(p))
    assert err.value.row == 1 and err.value.col == 2


def test_load_matrix_ragged(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(RaggedRows):
        load_matrix(str(p))


def test_load_matrix_headers(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("name,a,b\nr1,1,2\nr2,3,4\n")
    X, mask = load_matrix(str(p), header_row=True, header_col=True)
    assert np.array_equal(X, [[1, 2], [3, 4]])


def test_enumerate_subcommand(capsys):
    rc = main(["enumerate", "--level", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "MG+G" in out
    assert "8 reachable in 1..1 steps" in out


def test_exit_codes(tmp_path, capsys):
    assert main(["enumerate"]) == 1                      # usage error
    bad = tmp_path / "bad.csv"
    bad.write_text("1,x\n")
    rc = main(["score", "--input", str(bad), "--structure", "G",
               "--seed", "0"])
    assert rc == 2                                       # data error
    rc = main(["score", "--input", str(tmp_path / "missing.csv"),
               "--structure", "G"])
    assert rc == 2


def test_synth_and_score_round_trip(tmp_path, capsys):
    out_csv = tmp_path / "synth.csv"
    rc = main(["synth", "--structure", "MG+G", "--n", "24", "--d", "18",
               "--sigma2", "1.0", "--seed", "3", "--latent", "4",
               "--out-file", str(out_csv), "--truth",
               str(tmp_path / "truth.json")])
    assert rc == 0
    assert out_csv.exists()
    X, mask = load_matrix(str(out_csv))
    assert X.shape == (24, 18)
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["structure"] == "MG+G"
    rc = main(["score", "--input", str(out_csv), "--structure", "MG+G",
               "--seed", "0", "--init-sweeps", "20", "--gibbs-sweeps", "10",
               "--n-samples", "2", "--out", str(tmp_path / "sc")])
    assert rc == 0
    score = json.loads((tmp_path / "sc" / "score.json").read_text())
    assert np.isfinite(score["total"])


def test_search_end_to_end_writes_report(tmp_path, capsys):
    out_csv = tmp_path / "data.csv"
    main(["synth", "--structure", "G", "--n", "16", "--d", "12",
          "--sigma2", "1.0", "--seed", "1", "--out-file", str(out_csv)])
    out_dir = tmp_path / "run"
    args = ["search", "--input", str(out_csv), "--seed", "7",
            "--K", "2", "--max-level", "1", "--init-sweeps", "12",
            "--gibbs-sweeps", "8", "--n-samples", "2",
            "--out", str(out_dir)]
    assert main(args) == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["levels"][0]["best"] == "G"
    assert (out_dir / "score_curve.csv").exists()
    assert (out_dir / "level_scores.csv").exists()
    assert (out_dir / "row_order.csv").exists()
    assert (out_dir / "figures" / "score_curve.png").exists()
    assert (out_dir / "figures" / "heatmap.png").exists()
    assert (out_dir / "timings.json").exists()
    # the resolved config in the report replays the same selection
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"config": report["config"]}))
    out2 = tmp_path / "run2"
    assert main(["search", "--config", str(cfg_path), "--out",
                 str(out2)]) == 0
    report2 = json.loads((out2 / "report.json").read_text())
    assert report2["selected_structure"] == report["selected_structure"]
    assert report2["levels"] == report["levels"]


def test_report_version_refusal(tmp_path):
    out_csv = tmp_path / "data.csv"
    main(["synth", "--structure", "G", "--n", "12", "--d", "10",
          "--sigma2", "1.0", "--seed", "2", "--out-file", str(out_csv)])
    out_dir = tmp_path / "run"
    out_dir.mkdir()
    (out_dir / "report.json").write_text(json.dumps({"schema_version": 99}))
    args = ["search", "--input", str(out_csv), "--seed", "1",
            "--K", "1", "--max-level", "0", "--init-sweeps", "8",
            "--gibbs-sweeps", "6", "--n-samples", "2",
            "--out", str(out_dir)]
    assert main(args) == 2
    assert main(args + ["--force"]) == 0


def test_senate_style_two_bloc_votes(tmp_path):
    # a polarized vote matrix with absences: level-1 pick is in the
    # clustering family
    rng = np.random.default_rng(0)
    n, d = 40, 60
    bloc = (np.arange(n) < 22).astype(float)
    issue_side = rng.choice([-1.0, 1.0], size=d)
    votes = np.outer(2 * bloc - 1, issue_side)
    flip = rng.random((n, d)) < 0.1
    votes[flip] *= -1
    lines = []
    absent = rng.random((n, d)) < 0.07
    for i in range(n):
        cells = ["" if absent[i, j] else f"{votes[i, j]:.0f}"
                 for j in range(d)]
        lines.append(",".join(cells))
    p = tmp_path / "votes.csv"
    p.write_text("\n".join(lines) + "\n")
    X, mask = load_matrix(str(p))
    assert (~mask).sum() > 0
    from matgrammar.config import RunConfig
    from matgrammar.search import greedy_search
    cfg = RunConfig(seed=0, K=2, max_level=1, init_sweeps=30, init_burn=15,
                    gibbs_sweeps=20, n_samples=4).resolved()
    result = greedy_search(X, mask, cfg)
    level1_best = result.levels[1][0].structure
    assert level1_best in ("MG+G", "GM'+G", "BG+G", "GB'+G")
