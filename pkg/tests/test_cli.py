import numpy as np
import pytest

from nnlfnst.cli import build_parser, main
from nnlfnst.corpus import read_pgm, synthetic_image, write_pgm
from nnlfnst.predictor import ModelSet
from nnlfnst.transforms import random_bank


@pytest.fixture
def workdir(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    for i, kind in enumerate(("shapes", "stripes")):
        write_pgm(imgs / f"{kind}.pgm", synthetic_image(kind, 24, 32, i))
    random_bank(0).save(tmp_path / "bank.lfb")
    return tmp_path


def test_parser_lists_subcommands():
    text = build_parser().format_help()
    for cmd in ("train-bank", "collect-dataset", "train-nn", "encode", "decode", "eval"):
        assert cmd in text


def test_pipeline_collect_train_encode_decode(workdir, capsys):
    bank = str(workdir / "bank.lfb")
    ds = str(workdir / "ds.npz")
    models = str(workdir / "models")
    main(["collect-dataset", "--images", str(workdir / "imgs"), "--bank", bank, "--size", "4x4",
          "--per-image", "30", "--out", ds])
    main(["train-nn", "--dataset", ds, "--models", models, "--iterations", "20",
          "--batch-size", "10", "--warmup", "5", "--bank", bank, "--eval-every", "10"])
    assert (workdir / "models" / "f_4x4.nnw").exists()
    assert len(np.loadtxt(workdir / "models" / "loss_4x4.txt")) == 20
    assert len(ModelSet.load(models)) == 1

    src = workdir / "imgs" / "shapes.pgm"
    stream = workdir / "s.ntc"
    recon = workdir / "r.pgm"
    main(["encode", str(src), "--qp", "32", "--scheme", "prediction", "--models", models,
          "--bank", bank, "--out", str(stream), "--recon", str(recon)])
    out = workdir / "d.pgm"
    main(["decode", str(stream), "--models", models, "--bank", bank, "--out", str(out)])
    assert np.array_equal(read_pgm(out), read_pgm(recon))
    assert "bpp" in capsys.readouterr().out


def test_eval_writes_report(workdir):
    rep = workdir / "rep"
    main(["eval", "--images", str(workdir / "imgs"), "--bank", str(workdir / "bank.lfb"),
          "--no-nn", "--schemes", "default", "explicit", "--out", str(rep)])
    lines = (rep / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 4
    assert "BD-rate" in (rep / "summary.txt").read_text()


def test_missing_bank_is_an_error(workdir):
    with pytest.raises(SystemExit):
        main(["encode", str(workdir / "imgs" / "shapes.pgm")])
    with pytest.raises(SystemExit):
        main(["bogus"])
