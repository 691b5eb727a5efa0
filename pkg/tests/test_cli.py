"""Command-line plumbing: exit codes, file outputs, config overrides."""
import os

import pytest

import streamformer.cli as cli
from streamformer.errors import ContractError, ResourceError
from streamformer.model import load_model

TINY_CFG = ("d_model=16\nheads=2\nffn_dim=32\n"
            "enc_layers=1\ndec_layers=1\n"
            "steps=25\nbatch_size=4\nlog_every=100\n")


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return cli.main(list(argv))


def test_gen_data_is_byte_deterministic(workdir):
    args = ("gen-data", "--task", "prop", "--aps", "3", "--n", "25",
            "--min-size", "3", "--max-size", "7")
    assert run("--seed", "1", "--out", "a.tsv", *args) == 0
    assert run("--seed", "1", "--out", "b.tsv", *args) == 0
    assert (workdir / "a.tsv").read_bytes() == (workdir / "b.tsv").read_bytes()


def test_gen_data_default_output_name(workdir):
    assert run("gen-data", "--task", "copying", "--aps", "4",
               "--n", "5") == 0
    assert (workdir / "copying.tsv").exists()


def test_train_eval_topn_alpha_cov_pipeline(workdir, capsys):
    (workdir / "tiny.cfg").write_text(TINY_CFG)
    assert run("--out", "d.tsv", "gen-data", "--task", "prop", "--aps", "3",
               "--n", "20", "--min-size", "3", "--max-size", "6") == 0
    assert run("--config", "tiny.cfg", "--out", "m.ckpt", "train",
               "--data", "d.tsv") == 0
    model = load_model("m.ckpt")
    assert model.cfg.d_model == 16

    assert run("--out", "r.txt", "eval", "--model", "m.ckpt",
               "--data", "d.tsv", "--max-len", "10") == 0
    report = (workdir / "r.txt").read_text()
    assert report.splitlines()[0] == "n 20"
    assert "correct " in report and "exact " in report

    capsys.readouterr()
    assert run("topn", "--model", "m.ckpt", "--data", "d.tsv",
               "--n", "2", "--max-len", "8") == 0
    assert capsys.readouterr().out.startswith("top2 ")

    assert run("--out", "cov.txt", "alpha-cov", "--model", "m.ckpt",
               "--data", "d.tsv", "--max-len", "8") == 0
    cov = dict(line.split(" ", 1)
               for line in (workdir / "cov.txt").read_text().splitlines())
    assert cov["ap_count"] == "3"
    assert float(cov["mean"]) == 1.0


def test_train_flag_overrides_config(workdir):
    (workdir / "tiny.cfg").write_text(TINY_CFG)
    assert run("--out", "d.tsv", "gen-data", "--task", "copying",
               "--aps", "3", "--n", "8", "--min-size", "3",
               "--max-size", "5") == 0
    assert run("--config", "tiny.cfg", "--out", "m.ckpt", "train",
               "--data", "d.tsv", "--steps", "3") == 0
    # 3 steps, not 25: the run is near-instant and still checkpoints
    assert (workdir / "m.ckpt").exists()


def test_heatmap_csv_stability(workdir):
    (workdir / "tiny.cfg").write_text(TINY_CFG)
    assert run("--out", "d.tsv", "gen-data", "--task", "prop", "--aps", "3",
               "--n", "6", "--min-size", "3", "--max-size", "5") == 0
    assert run("--config", "tiny.cfg", "--out", "m.ckpt", "train",
               "--data", "d.tsv", "--steps", "3") == 0
    args = ("heatmap", "--model", "m.ckpt", "--task", "prop",
            "--aps", "2,3", "--lengths", "3,4", "--per-cell", "2")
    assert run("--out", "h1.csv", *args) == 0
    assert run("--out", "h2.csv", *args) == 0
    h1 = (workdir / "h1.csv").read_text()
    assert h1 == (workdir / "h2.csv").read_text()
    assert h1.splitlines()[0] == "ap,len,n,correct,exact"
    assert len(h1.splitlines()) == 5


def test_certify_fresh_models(workdir, capsys):
    (workdir / "tiny.cfg").write_text(TINY_CFG)
    assert run("--config", "tiny.cfg", "--seed", "7", "certify",
               "--trials", "6", "--max-len", "16") == 0
    out = capsys.readouterr().out
    assert "certification PASSED" in out
    assert out.count("trials") == 3


def test_time_subcommand(workdir, capsys):
    (workdir / "tiny.cfg").write_text(TINY_CFG)
    assert run("--config", "tiny.cfg", "time", "--aps", "1,2",
               "--samples", "2", "--length", "8") == 0
    out = capsys.readouterr().out
    assert "1 streams:" in out and "r2 " in out


def test_exit_codes(workdir, monkeypatch, capsys):
    assert run("definitely-not-a-command") == 2
    capsys.readouterr()
    (workdir / "p.tsv").write_text("#task=prop aps=3\n!a\ta0\n")
    assert run("eval", "--model", "missing.ckpt", "--data", "p.tsv") == 2
    (workdir / "bad.cfg").write_text("not_a_real_knob=1\n")
    assert run("--config", "bad.cfg", "certify", "--trials", "1") == 2
    (workdir / "mangled.cfg").write_text("just some words\n")
    assert run("--config", "mangled.cfg", "certify", "--trials", "1") == 2

    def boom(*a, **kw):
        raise ResourceError("synthetic blowup")
    monkeypatch.setattr(cli.ev, "certify_invariance", boom)
    assert run("certify", "--trials", "1") == 3


def test_config_parsing_and_model_mapping(workdir):
    text = ("# comment line\n"
            "\n"
            "d_model=24   # trailing comment\n"
            "cosine_head=false\n"
            "dropout=0.25\n"
            "cross_modes=per,agg\n"
            "steps=7\n")
    (workdir / "c.cfg").write_text(text)
    cfg = cli.load_config(workdir / "c.cfg")
    assert cfg == {"d_model": 24, "cosine_head": False, "dropout": 0.25,
                   "cross_modes": ("per", "agg"), "steps": 7}
    mc = cli._model_config(cfg)
    assert mc.d_model == 24 and mc.cross_modes == ("per", "agg")
    assert mc.cosine_head is False and mc.dropout == 0.25

    (workdir / "code.cfg").write_text("code=EP-DP-CA\nd_model=24\n")
    mc = cli._model_config(cli.load_config(workdir / "code.cfg"))
    assert mc.code == "EP-DP-CA" and mc.d_model == 24

    (workdir / "one.cfg").write_text("cross_modes=agg\n")
    assert cli._model_config(
        cli.load_config(workdir / "one.cfg")).cross_modes == ("agg",)

    (workdir / "mangled.cfg").write_text("oops\n")
    with pytest.raises(ContractError):
        cli.load_config(workdir / "mangled.cfg")
