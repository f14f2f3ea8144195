import csv
import filecmp
import json

import pytest

from herding.cli import main
from herding.pipeline import ARTIFACTS, EXIT_DEGENERATE, EXIT_INPUT, EXIT_OK, MANIFEST

SMALL = {
    "simulate": {"n_products": 900, "ratings_min": 5, "ratings_shape": 12.0, "seed": 5},
    "effects": {"n_resamples": 200},
}

T2015 = 1420070400  # 2015-01-01T00:00:00Z


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "config.json"
    path.write_text(json.dumps(SMALL))
    return path


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory, config_path):
    out = tmp_path_factory.mktemp("run1")
    assert main(["pipeline", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    return out


def _same_bundle(x, y):
    return [name for _, name in ARTIFACTS if not filecmp.cmp(x / name, y / name, shallow=False)]


def test_manifest_lists_nine_artifacts(pipeline_out):
    manifest = json.loads((pipeline_out / MANIFEST).read_text())
    assert [a["file"] for a in manifest["artifacts"]] == [name for _, name in ARTIFACTS]
    assert len(manifest["artifacts"]) == 9
    assert manifest["seeds"] == {"simulate": 5, "balance": 0, "bootstrap": 0}
    assert len(manifest["config_hash"]) == 64
    assert all((pipeline_out / name).exists() for _, name in ARTIFACTS)


def test_rerun_is_byte_identical(tmp_path, config_path, pipeline_out):
    assert main(["pipeline", "--config", str(config_path), "--out", str(tmp_path), "--threads", "3"]) == EXIT_OK
    assert _same_bundle(pipeline_out, tmp_path) == []
    assert (tmp_path / MANIFEST).read_bytes() == (pipeline_out / MANIFEST).read_bytes()


def test_pipeline_equals_composed_subcommands(tmp_path, config_path, pipeline_out):
    data, out = tmp_path / "data", tmp_path / "steps"
    cfg = ["--config", str(config_path)]
    assert main(["simulate", *cfg, "--out", str(data)]) == EXIT_OK
    io = [*cfg, "--inputs", str(data), "--out", str(out)]
    for step in ("match", "standardize", "label"):
        assert main([step, *io]) == EXIT_OK
    assert main(["balance", *cfg, "--out", str(out)]) == EXIT_OK
    assert main(["effects", *io]) == EXIT_OK
    assert main(["validity", *io, "--tables"]) == EXIT_OK
    assert _same_bundle(pipeline_out, out) == []
    assert (out / "table_internal_validity.csv").exists()


def test_missing_input_names_path(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "catalog_A.jsonl"
    code = main(["match", "--catalog-a", str(missing), "--catalog-b", str(missing),
                 "--ratings-a", str(missing), "--ratings-b", str(missing), "--out", str(tmp_path / "o")])
    assert code == EXIT_INPUT
    err = json.loads(capsys.readouterr().err)
    assert str(missing) in err["path"]
    assert json.loads((tmp_path / "o" / "error.json").read_text())["status"] == EXIT_INPUT


def test_pipeline_missing_input(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"inputs": {k: str(tmp_path / "x.jsonl") for k in
                                          ("catalog_a", "catalog_b", "ratings_a", "ratings_b")}}))
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert "x.jsonl" in (tmp_path / "o" / "error.json").read_text()


def test_stricter_theta_emits_fewer_pairs(tmp_path, pipeline_out):
    inputs = str(pipeline_out / "inputs")
    counts = {}
    for theta in ("0.8", "0.9"):
        out = tmp_path / theta
        assert main(["match", "--inputs", inputs, "--out", str(out), "--theta", theta]) == EXIT_OK
        counts[theta] = len((out / "match_pairs.csv").read_text().splitlines())
    assert counts["0.9"] <= counts["0.8"]


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_effects_on_hand_built_group_file(tmp_path):
    # one year per site; scores 2 and 4 in equal numbers give z = -1 and +1 exactly
    scores = {("A", "a1"): [4, 2, 4, 2, 2], ("A", "a2"): [2, 4, 2, 4, 4],
              ("B", "b1"): [2, 2, 4, 2, 4], ("B", "b2"): [4, 4, 2, 4, 2]}
    for site in "AB":
        _write_jsonl(tmp_path / f"catalog_{site}.jsonl", [
            {"site_id": site, "product_id": pid, "product_name": pid, "producer_id": "p", "producer_name": "P",
             "producer_location": "Ohio", "style": "IPA", "abv": 5.0}
            for (s, pid) in scores if s == site])
        _write_jsonl(tmp_path / f"ratings_{site}.jsonl", [
            {"site_id": site, "product_id": pid, "user_id": f"u{i}", "timestamp": T2015 + 100 * i, "score": v}
            for (s, pid), vals in scores.items() if s == site for i, v in enumerate(vals)])
    out = tmp_path / "out"
    assert main(["standardize", "--inputs", str(tmp_path), "--out", str(out)]) == EXIT_OK
    with open(out / "membership.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "ordered_group", "id_a", "id_b", "label_a", "label_b", "higher_site", "first_a", "first_b"])
        w.writerow(["HL", "HL", "a1", "b1", "H", "L", "A", "1.0", "-1.0"])
        w.writerow(["HL", "LH", "a2", "b2", "L", "H", "B", "-1.0", "1.0"])
    # the other asymmetric groups are empty, which is reported as degenerate
    assert main(["effects", "--inputs", str(tmp_path), "--out", str(out)]) == EXIT_DEGENERATE
    rows = [r for r in csv.DictReader(open(out / "effects.csv")) if r["group"] == "HL"]
    got = {(int(r["index"]), r["side"]): float(r["mean"]) for r in rows}
    # higher sides: a1 = (1,-1,1,-1,-1), b2 = (1,1,-1,1,-1); lower: b1, a2
    for i, (hi, lo) in enumerate([(1, -1), (0, 0), (0, 0), (0, 0), (-1, 1)], start=1):
        assert got[(i, "higher")] == hi
        assert got[(i, "lower")] == lo
        assert got[(i, "difference")] == hi - lo
    assert {r["n"] for r in rows} == {"2"}


def test_seed_flag_changes_balance_only(tmp_path, pipeline_out, config_path):
    assert main(["pipeline", "--config", str(config_path), "--out", str(tmp_path), "--seed", "5"]) == EXIT_OK
    manifest = json.loads((tmp_path / MANIFEST).read_text())
    assert manifest["seeds"] == {"simulate": 5, "balance": 5, "bootstrap": 5}
    assert filecmp.cmp(tmp_path / "match_pairs.csv", pipeline_out / "match_pairs.csv", shallow=False)
