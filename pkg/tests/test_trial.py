"""Trial running: determinism, divergence isolation, the results CSV, and
checkpoint round trips. Uses the synthetic IDX dataset from conftest."""

import numpy as np
import pytest

from analognn.config import config_from_mapping
from analognn.errors import DataFormatError, ShapeError
from analognn.model import build_model
from analognn.optim import Adam
from analognn.rng import RngStream
from analognn.trial import (CSV_COLUMNS, CSV_VERSION_LINE, TrialResult,
                            append_result, completed_hashes, load_checkpoint,
                            parse_epoch_list, read_results, restore_checkpoint,
                            result_row, run_trial, save_checkpoint)


def cfg(**kw):
    base = dict(dataset="mnist", model="1_linear", epochs=2, batch_size=32,
                lr=0.01, seed=3)
    base.update(kw)
    return config_from_mapping(base)


# training ------------------------------------------------------------------------

def test_trial_learns_synthetic_blocks(synth_data_dir):
    r = run_trial(cfg(epochs=3), synth_data_dir)
    assert not r.failed
    assert len(r.train_loss) == len(r.eval_loss) == len(r.eval_acc) == 3
    assert r.train_loss[-1] < r.train_loss[0]
    # block position encodes the class, so a linear probe gets it quickly
    assert r.max_eval_acc > 0.5
    assert r.official_test_acc is not None and r.seconds > 0


def test_trial_rerun_bit_identical(synth_data_dir):
    a = run_trial(cfg(), synth_data_dir)
    b = run_trial(cfg(), synth_data_dir)
    assert a.train_loss == b.train_loss
    assert a.eval_loss == b.eval_loss
    assert a.eval_acc == b.eval_acc
    assert a.official_test_acc == b.official_test_acc
    ra, rb = result_row(a), result_row(b)
    assert ra[:-1] == rb[:-1]  # identical apart from wall-clock seconds


def test_trial_analog_chains_rerun_identical(synth_data_dir):
    noisy = cfg(norm_y="clamp", norm_w="clamp", bits_y=4, bits_w=4,
                rp_mode="srp", ep_y=0.1, ep_w=0.1)
    a = run_trial(noisy, synth_data_dir)
    b = run_trial(noisy, synth_data_dir)
    assert not a.failed
    assert a.train_loss == b.train_loss and a.eval_acc == b.eval_acc


def test_explicit_zero_noise_matches_no_chain(synth_data_dir):
    plain = run_trial(cfg(), synth_data_dir)
    zeroed = run_trial(cfg(sigma_y=0.0, sigma_w=0.0), synth_data_dir)
    assert plain.config_hash != zeroed.config_hash  # different recipes
    assert plain.train_loss == zeroed.train_loss  # same arithmetic
    assert plain.eval_acc == zeroed.eval_acc
    assert plain.official_test_acc == zeroed.official_test_acc


def test_seed_changes_trajectory(synth_data_dir):
    a = run_trial(cfg(seed=3), synth_data_dir)
    b = run_trial(cfg(seed=4), synth_data_dir)
    assert a.train_loss != b.train_loss


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_divergence_marks_failure(synth_data_dir):
    # huge weights in two consecutive layers overflow the second matmul
    r = run_trial(cfg(model="2_linear", lr=1e200, epochs=2), synth_data_dir)
    assert r.failed and r.error.startswith("diverged")
    assert r.max_eval_acc is None and r.official_test_acc is None
    row = result_row(r)
    cols = dict(zip(CSV_COLUMNS, row))
    assert cols["max_eval_acc"] == "" and cols["official_test_acc"] == ""
    assert float(cols["seconds"]) > 0


def test_missing_data_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_trial(cfg(), tmp_path / "nowhere")


def test_log_file_contents(synth_data_dir, tmp_path):
    log = tmp_path / "logs" / "t.log"
    lines_seen = []
    r = run_trial(cfg(), synth_data_dir, log_path=log, echo=lines_seen.append)
    text = log.read_text()
    assert f"trial {r.config_hash}" in text
    assert "dataset = mnist" in text  # canonical config echoed into the log
    assert "epoch 1/2:" in text and "epoch 2/2:" in text
    assert "done: max_eval_acc=" in text
    assert text.splitlines() == lines_seen


def test_max_eval_acc_is_column_max():
    r = TrialResult(cfg(), [1.0, 0.5], [1.1, 0.6], [0.4, 0.9], 0.88, 1.0)
    assert r.max_eval_acc == 0.9
    cols = dict(zip(CSV_COLUMNS, result_row(r)))
    assert float(cols["max_eval_acc"]) == max(parse_epoch_list(cols["eval_acc_per_epoch"]))


# results CSV ----------------------------------------------------------------------

def fake_result(seed=0, acc=0.9, failed=False):
    c = cfg(seed=seed)
    if failed:
        return TrialResult(c, [2.3], [], [], None, 1.5, error="diverged: test")
    return TrialResult(c, [2.3, 1.1], [2.2, 1.2], [0.5, acc], acc - 0.01, 1.5)


def test_append_and_read_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    r = fake_result()
    append_result(path, r)
    rows = read_results(path)
    assert len(rows) == 1
    row = rows[0]
    assert row["config_hash"] == r.config_hash
    assert row["dataset"] == "mnist" and row["seed"] == "0"
    assert parse_epoch_list(row["eval_acc_per_epoch"]) == [0.5, 0.9]
    assert float(row["max_eval_acc"]) == 0.9


def test_header_written_once(tmp_path):
    path = tmp_path / "r.csv"
    for seed in range(3):
        append_result(path, fake_result(seed=seed))
    text = path.read_text()
    assert text.startswith(CSV_VERSION_LINE + "\n")
    assert text.count("config_hash,dataset") == 1
    assert len(read_results(path)) == 3


def test_failed_trial_row_cells(tmp_path):
    path = tmp_path / "r.csv"
    append_result(path, fake_result(failed=True))
    row = read_results(path)[0]
    assert row["max_eval_acc"] == "" and row["official_test_acc"] == ""
    assert row["eval_acc_per_epoch"] == ""
    assert parse_epoch_list(row["train_loss_per_epoch"]) == [2.3]


def test_completed_hashes(tmp_path):
    path = tmp_path / "r.csv"
    assert completed_hashes(path) == set()
    a, b = fake_result(seed=0), fake_result(seed=1, failed=True)
    append_result(path, a)
    append_result(path, b)
    # failed trials count as completed: a resume must not re-run them
    assert completed_hashes(path) == {a.config_hash, b.config_hash}


def test_read_results_validates_header(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataFormatError, match="unexpected header"):
        read_results(path)


def test_read_results_names_malformed_line(tmp_path):
    path = tmp_path / "r.csv"
    append_result(path, fake_result())
    with open(path, "a") as fh:
        fh.write("only,three,fields\n")
    with pytest.raises(DataFormatError, match="line 4"):
        read_results(path)


def test_epoch_list_round_trip():
    vals = [0.1234567890123456, 1e-17, 2.5]
    cell = ";".join(repr(v) for v in vals)
    assert parse_epoch_list(cell) == vals
    assert parse_epoch_list("") == []


# checkpoints ----------------------------------------------------------------------

def train_briefly(c, data_dir):
    from analognn.data import SplitPlan, batches, load_dataset, split
    from analognn.layers import cross_entropy
    from analognn.trial import _PassStreams

    ds = load_dataset(c.dataset, data_dir, train=True)
    train_view, _ = split(ds, SplitPlan(c.train_fraction, c.seed))
    root = RngStream(c.seed)
    model = build_model(c.model_spec(), root.child(0))
    opt = Adam(model.params(), lr=c.lr)
    passes = _PassStreams(root.child(2))
    for xb, yb in batches(train_view, c.batch_size, c.seed, 0):
        opt.zero_grad()
        cross_entropy(model.forward(xb, passes.take()), yb).backward()
        opt.step()
    return model, opt


def test_checkpoint_round_trip(synth_data_dir, tmp_path):
    c = cfg(model="2_linear")
    model, opt = train_briefly(c, synth_data_dir)
    path = tmp_path / "trial.ckpt"
    save_checkpoint(path, model, opt, c, epoch=1)

    manifest, tensors = load_checkpoint(path)
    assert manifest["config_hash"] == c.config_hash
    assert manifest["seed"] == c.seed and manifest["version"] == 1

    fresh_model = build_model(c.model_spec(), RngStream(999).child(0))
    fresh_opt = Adam(fresh_model.params(), lr=c.lr)
    epoch = restore_checkpoint(fresh_model, fresh_opt, manifest, tensors)
    assert epoch == 1 and fresh_opt.t == opt.t
    for p, q in zip(model.params(), fresh_model.params()):
        np.testing.assert_array_equal(p.raw.data, q.raw.data)
    for m, n in zip(opt._m, fresh_opt._m):
        np.testing.assert_array_equal(m, n)
    for v, w in zip(opt._v, fresh_opt._v):
        np.testing.assert_array_equal(v, w)


def test_checkpoint_without_optimizer(synth_data_dir, tmp_path):
    c = cfg()
    model, _ = train_briefly(c, synth_data_dir)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, None, c, epoch=0)
    manifest, tensors = load_checkpoint(path)
    assert set(tensors) == {"linear0.weight", "linear0.bias"}
    assert "adam_t" not in manifest


def test_checkpoint_corruption_detected(synth_data_dir, tmp_path):
    c = cfg()
    model, opt = train_briefly(c, synth_data_dir)
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, model, opt, c, epoch=2)
    raw = path.read_bytes()

    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(DataFormatError, match="bad magic"):
        load_checkpoint(bad)

    bad.write_bytes(raw[:-50])
    with pytest.raises(DataFormatError, match="truncated tensor"):
        load_checkpoint(bad)

    bad.write_bytes(raw + b"\x00" * 8)
    with pytest.raises(DataFormatError, match="trailing bytes"):
        load_checkpoint(bad)


def test_restore_validates_names_and_shapes(synth_data_dir, tmp_path):
    c = cfg()
    model, opt = train_briefly(c, synth_data_dir)
    path = tmp_path / "c.ckpt"
    save_checkpoint(path, model, opt, c, epoch=0)
    manifest, tensors = load_checkpoint(path)

    other = build_model(cfg(model="2_linear").model_spec(), RngStream(1).child(0))
    with pytest.raises((DataFormatError, ShapeError)):
        restore_checkpoint(other, None, manifest, tensors)

    del tensors["linear0.bias"]
    with pytest.raises(DataFormatError, match="missing tensor"):
        restore_checkpoint(model, None, manifest, tensors)
