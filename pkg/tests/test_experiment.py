"""Experiment declarations: config parsing, row expansion, model needs."""

import pytest

from relaxdec.experiment import (
    DecoderSpec,
    ExperimentConfig,
    ObjectiveChoice,
    build_objective,
    expand_rows,
    load_experiment_config,
    model_path,
    models_needed,
    write_train_log,
)
from conftest import make_model


def dec(name, method, **kw):
    return DecoderSpec(name=name, method=method, **kw)


def cfg_with(decoders, objectives=()):
    return ExperimentConfig(task="copy", decoders=list(decoders),
                            objectives=list(objectives))


def test_expand_rows_crosses_relaxed_decoders_with_objectives():
    cfg = cfg_with(
        [dec("gdec", "greedy"), dec("eg-greedy", "eg", init="greedy")],
        [ObjectiveChoice("single", "single"),
         ObjectiveChoice("bidir", "bidirectional"),
         ObjectiveChoice("biling", "bilingual")],
    )
    rows = expand_rows(cfg)
    assert [r.name for r in rows] == [
        "gdec", "eg-greedy", "eg-greedy+bidir", "eg-greedy+biling",
    ]
    # baselines always score under the plain forward objective
    assert rows[0].objective.kind == "single"
    assert rows[2].objective.kind == "bidirectional"


def test_expand_rows_rejects_name_collisions():
    cfg = cfg_with(
        [dec("a", "eg"), dec("a+b", "eg")],
        [ObjectiveChoice("single", "single"), ObjectiveChoice("b", "bidirectional")],
    )
    with pytest.raises(ValueError, match="collide"):
        expand_rows(cfg)


def test_config_defaults_to_the_single_objective():
    cfg = cfg_with([dec("eg", "eg")])
    assert [o.kind for o in cfg.objectives] == ["single"]
    with pytest.raises(ValueError):
        cfg_with([])
    with pytest.raises(ValueError):
        cfg_with([dec("x", "eg"), dec("x", "sgd")])


def test_models_needed():
    cfg = cfg_with(
        [dec("gdec", "greedy"), dec("bdec-r2l", "beam", direction="r2l"),
         dec("eg", "eg")],
        [ObjectiveChoice("single", "single"),
         ObjectiveChoice("bidir", "bidirectional"),
         ObjectiveChoice("biling", "bilingual")],
    )
    assert models_needed(expand_rows(cfg)) == {
        ("l2r", "s2t"), ("r2l", "s2t"), ("l2r", "t2s"),
    }


def test_model_path_layout(tmp_path):
    assert model_path(tmp_path, "r2l", "s2t") == str(
        tmp_path / "models" / "model-r2l-s2t.ckpt"
    )


def test_build_objective_picks_the_right_models():
    models = {
        ("l2r", "s2t"): make_model(seed=1, direction="l2r", side="s2t"),
        ("r2l", "s2t"): make_model(seed=2, direction="r2l", side="s2t"),
        ("l2r", "t2s"): make_model(seed=3, direction="l2r", side="t2s"),
    }
    x = [4, 5]
    single = build_objective(ObjectiveChoice("single", "single"), x, models)
    assert single.kind == "single"
    assert single.forward is models[("l2r", "s2t")]

    bidir = build_objective(
        ObjectiveChoice("b", "bidirectional", alpha=0.3), x, models
    )
    assert bidir.reverse is models[("r2l", "s2t")]
    assert bidir.alpha == 0.3

    biling = build_objective(ObjectiveChoice("b", "bilingual"), x, models)
    assert biling.reverse is models[("l2r", "t2s")]

    with pytest.raises(ValueError):
        build_objective(ObjectiveChoice("b", "bidirectional"), x,
                        {("l2r", "s2t"): models[("l2r", "s2t")]})


def test_load_experiment_config_round_trip(tmp_path):
    ini = tmp_path / "e.ini"
    ini.write_text(
        "[task]\nname = cipher\npairs = 50\nvocab = 9\n"
        "[training]\nepochs = 4\nlr = 0.25\n"
        "[experiment]\nseed = 3\njobs = 2\n"
        "[decoder eg-beam]\nmethod = eg\ninit = beam\neta = 12.5\nwidth = 7\n"
        "[objective bidir]\nkind = bidirectional\nalpha = 0.4\n",
        encoding="utf-8",
    )
    cfg = load_experiment_config(ini)
    assert cfg.task == "cipher"
    assert (cfg.pairs, cfg.vocab, cfg.epochs, cfg.lr) == (50, 9, 4, 0.25)
    assert (cfg.seed, cfg.jobs) == (3, 2)
    (d,) = cfg.decoders
    assert (d.name, d.method, d.init, d.eta, d.width) == ("eg-beam", "eg", "beam", 12.5, 7)
    (o,) = cfg.objectives
    assert (o.name, o.kind, o.alpha) == ("bidir", "bidirectional", 0.4)


@pytest.mark.parametrize("body,msg", [
    ("[solver]\nx = 1\n", "unknown config section"),
    ("[task]\ncolour = red\n", "unknown key"),
    ("[decoder d]\ninit = beam\n", "missing method"),
    ("[objective o]\nalpha = 0.5\n", "missing kind"),
    ("[task]\npairs = many\n", "pairs"),
])
def test_load_experiment_config_rejects_bad_input(tmp_path, body, msg):
    ini = tmp_path / "bad.ini"
    ini.write_text(body + "[decoder g]\nmethod = greedy\n", encoding="utf-8")
    with pytest.raises(ValueError, match=msg):
        load_experiment_config(ini)


def test_load_experiment_config_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_experiment_config(tmp_path / "nope.ini")


def test_decoder_spec_validates_through_optim_config():
    spec = dec("eg", "eg", eta=2.0, momentum=0.5, max_iter=7, init="uniform")
    oc = spec.optim_config()
    assert (oc.algorithm, oc.eta, oc.momentum, oc.max_iter) == ("eg", 2.0, 0.5, 7)
    with pytest.raises(ValueError):
        dec("bad", "eg", eta=-1.0).optim_config()


def test_write_train_log_round_trips_floats(tmp_path):
    path = tmp_path / "log.csv"
    history = [
        {"epoch": 1, "train_loss": 1.2345678901234567, "dev_ppl": 9.87654321, "lr": 0.5},
        {"epoch": 2, "train_loss": 1.1, "dev_ppl": 8.8, "lr": 0.25},
    ]
    write_train_log(path, history)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epoch,train_loss,dev_ppl,lr"
    cells = lines[1].split(",")
    assert float(cells[1]) == history[0]["train_loss"]
    assert float(cells[2]) == history[0]["dev_ppl"]
