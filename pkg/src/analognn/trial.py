"""Single-trial training, the results CSV, and checkpoint files.

A trial is fully determined by its TrialConfig: data split, parameter
init, batch order, and every stochastic transform draw are keyed off
cfg.seed through disjoint stream addresses, so reruns are bit-identical
(wall-clock aside). The CSV is the only artifact shared between
concurrent trials; appends take an exclusive lock.
"""

from __future__ import annotations

import csv
import fcntl
import io
import json
import math
import os
import struct
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import TrialConfig
from .data import SplitPlan, batches, load_dataset, split
from .errors import DataFormatError, NumericError, ShapeError
from .layers import cross_entropy
from .model import Model, build_model
from .optim import Adam
from .rng import RngStream

__all__ = ["TrialResult", "run_trial", "evaluate", "CSV_COLUMNS", "CSV_VERSION_LINE",
           "result_row", "append_result", "read_results", "completed_hashes",
           "parse_epoch_list", "save_checkpoint", "load_checkpoint", "restore_checkpoint"]

CSV_VERSION_LINE = "# analognn-results v1"
CSV_COLUMNS = [
    "config_hash", "dataset", "model", "activation", "norm_y", "norm_w",
    "bits_y", "bits_w", "rp_mode", "ep_y", "ep_w", "seed",
    "train_loss_per_epoch", "eval_loss_per_epoch", "eval_acc_per_epoch",
    "max_eval_acc", "official_test_acc", "seconds",
]


@dataclass
class TrialResult:
    """Outcome of one trial. Failed trials keep whatever epochs finished."""

    config: TrialConfig
    train_loss: list[float]
    eval_loss: list[float]
    eval_acc: list[float]
    official_test_acc: float | None
    seconds: float
    error: str | None = None

    @property
    def config_hash(self) -> str:
        return self.config.config_hash

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def max_eval_acc(self) -> float | None:
        if self.failed or not self.eval_acc:
            return None
        return max(self.eval_acc)


class _PassStreams:
    """Doles out one fresh substream per forward pass of a trial."""

    __slots__ = ("root", "i")

    def __init__(self, root: RngStream):
        self.root = root
        self.i = 0

    def take(self) -> RngStream:
        s = self.root.child(self.i)
        self.i += 1
        return s


def evaluate(model: Model, data, batch_size: int, passes: _PassStreams) -> tuple[float, float]:
    """Mean loss and accuracy over `data`, analog chains active."""
    total = 0.0
    correct = 0
    n = 0
    for xb, yb in batches(data, batch_size, 0, 0, shuffle=False):
        logits = model.forward(xb, passes.take())
        total += cross_entropy(logits, yb).item() * len(yb)
        correct += int((logits.data.argmax(axis=1) == yb).sum())
        n += len(yb)
    return total / n, correct / n


def run_trial(cfg: TrialConfig, data_dir, *, log_path=None, echo=None,
              blas_threads: int | None = None) -> TrialResult:
    """Train per `cfg`, returning per-epoch metrics and final test accuracy.

    Numeric divergence (non-finite loss or activations) marks the trial
    failed instead of raising, so sweeps continue past bad grid points.
    `blas_threads` caps BLAS parallelism for the duration (sweep workers
    pass 1 to avoid oversubscription); None keeps the ambient setting.
    """
    t0 = time.perf_counter()
    log_fh = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        log_fh = open(log_path, "w", encoding="utf-8")

    def emit(msg: str) -> None:
        if log_fh is not None:
            log_fh.write(msg + "\n")
            log_fh.flush()
        if echo is not None:
            echo(msg)

    try:
        emit(f"trial {cfg.config_hash}")
        for line in cfg.canonical_text().rstrip().splitlines():
            emit("  " + line)

        train_ds = load_dataset(cfg.dataset, data_dir, train=True)
        test_ds = load_dataset(cfg.dataset, data_dir, train=False)
        train_view, eval_view = split(train_ds, SplitPlan(cfg.train_fraction, cfg.seed))

        root = RngStream(cfg.seed)
        model = build_model(cfg.model_spec(), root.child(0))
        opt = Adam(model.params(), lr=cfg.lr, betas=(cfg.beta1, cfg.beta2),
                   eps=cfg.eps, weight_decay=cfg.weight_decay)
        passes = _PassStreams(root.child(2))

        train_hist: list[float] = []
        eval_loss_hist: list[float] = []
        eval_acc_hist: list[float] = []
        test_acc = None
        error = None

        limit = threadpool_limits(limits=blas_threads) if blas_threads else nullcontext()
        with limit:
            try:
                for epoch in range(cfg.epochs):
                    total, n = 0.0, 0
                    for xb, yb in batches(train_view, cfg.batch_size, cfg.seed, epoch):
                        opt.zero_grad()
                        logits = model.forward(xb, passes.take())
                        loss = cross_entropy(logits, yb)
                        loss.backward()
                        opt.step()
                        total += loss.item() * len(yb)
                        n += len(yb)
                    train_hist.append(total / n)
                    el, ea = evaluate(model, eval_view, cfg.batch_size, passes)
                    eval_loss_hist.append(el)
                    eval_acc_hist.append(ea)
                    emit(f"epoch {epoch + 1}/{cfg.epochs}: train_loss={train_hist[-1]:.6f} "
                         f"eval_loss={el:.6f} eval_acc={ea:.4f}")
                _, test_acc = evaluate(model, test_ds, cfg.batch_size, passes)
            except (NumericError, FloatingPointError) as e:
                error = f"diverged: {e}"
                emit(f"trial failed: {error}")

        seconds = time.perf_counter() - t0
        result = TrialResult(cfg, train_hist, eval_loss_hist, eval_acc_hist,
                             test_acc, seconds, error=error)
        if not result.failed:
            emit(f"done: max_eval_acc={result.max_eval_acc:.4f} "
                 f"official_test_acc={test_acc:.4f} seconds={seconds:.1f}")
        return result
    finally:
        if log_fh is not None:
            log_fh.close()


# results CSV ----------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def result_row(r: TrialResult) -> list[str]:
    cfg = r.config
    return [
        cfg.config_hash, cfg.dataset, cfg.model, cfg.activation,
        cfg.norm_y, cfg.norm_w, _cell(cfg.bits_y), _cell(cfg.bits_w),
        cfg.rp_mode, _cell(cfg.ep_y), _cell(cfg.ep_w), _cell(cfg.seed),
        ";".join(repr(v) for v in r.train_loss),
        ";".join(repr(v) for v in r.eval_loss),
        ";".join(repr(v) for v in r.eval_acc),
        _cell(r.max_eval_acc), _cell(r.official_test_acc), _cell(r.seconds),
    ]


def append_result(path, result: TrialResult) -> None:
    """Append one row, writing the version/header lines into an empty file.

    Holds an exclusive flock for the duration of the write so concurrent
    sweep processes cannot interleave partial rows.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(result_row(result))
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            fh.seek(0, os.SEEK_END)
            text = buf.getvalue()
            if fh.tell() == 0:
                head = io.StringIO()
                csv.writer(head, lineterminator="\n").writerow(CSV_COLUMNS)
                text = CSV_VERSION_LINE + "\n" + head.getvalue() + text
            fh.write(text)
            fh.flush()
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def read_results(path) -> list[dict[str, str]]:
    """Parse a results CSV into row dicts; malformed rows name their line."""
    path = Path(path)
    rows: list[dict[str, str]] = []
    header: list[str] | None = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for record in reader:
            if not record or record[0].startswith("#"):
                continue
            if header is None:
                header = record
                if header != CSV_COLUMNS:
                    raise DataFormatError(
                        f"{path} line {reader.line_num}: unexpected header; "
                        f"expected {CSV_COLUMNS}")
                continue
            if len(record) != len(header):
                raise DataFormatError(
                    f"{path} line {reader.line_num}: {len(record)} fields, "
                    f"expected {len(header)}")
            rows.append(dict(zip(header, record)))
    return rows


def completed_hashes(path) -> set[str]:
    p = Path(path)
    if not p.exists():
        return set()
    return {row["config_hash"] for row in read_results(p)}


def parse_epoch_list(cell: str) -> list[float]:
    return [float(tok) for tok in cell.split(";") if tok]


# checkpoints ----------------------------------------------------------------

CKPT_MAGIC = b"ANNCKPT1"


def _checkpoint_tensors(model: Model, optimizer: Adam | None) -> list[tuple[str, np.ndarray]]:
    tensors = [(p.name, p.raw.data) for p in model.params()]
    if optimizer is not None:
        for p, m, v in zip(optimizer.params, optimizer._m, optimizer._v):
            tensors.append((f"adam.m.{p.name}", m))
            tensors.append((f"adam.v.{p.name}", v))
    return tensors


def save_checkpoint(path, model: Model, optimizer: Adam | None,
                    cfg: TrialConfig, epoch: int) -> None:
    """Magic, manifest length, JSON manifest, then raw little-endian
    float64 buffers in manifest order."""
    tensors = _checkpoint_tensors(model, optimizer)
    manifest = {
        "version": 1,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "epoch": int(epoch),
        "tensors": [{"name": n, "shape": list(a.shape), "dtype": "<f8"}
                    for n, a in tensors],
    }
    if optimizer is not None:
        manifest["adam_t"] = optimizer.t
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in tensors:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:8] != CKPT_MAGIC:
        raise DataFormatError(f"{path}: bad magic at offset 0")
    if len(buf) < 16:
        raise DataFormatError(f"{path}: truncated header at offset {len(buf)}")
    (mlen,) = struct.unpack_from("<Q", buf, 8)
    if 16 + mlen > len(buf):
        raise DataFormatError(f"{path}: manifest overruns file at offset 16")
    try:
        manifest = json.loads(buf[16:16 + mlen])
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: manifest is not valid JSON ({e})") from None
    off = 16 + mlen
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        if entry.get("dtype", "<f8") != "<f8":
            raise DataFormatError(f"{path}: tensor {entry['name']!r} has "
                                  f"unsupported dtype {entry['dtype']!r}")
        shape = tuple(int(d) for d in entry["shape"])
        nbytes = int(math.prod(shape)) * 8
        if off + nbytes > len(buf):
            raise DataFormatError(f"{path}: truncated tensor {entry['name']!r} "
                                  f"at offset {off}")
        arr = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=off)
        tensors[entry["name"]] = arr.reshape(shape).copy()
        off += nbytes
    if off != len(buf):
        raise DataFormatError(f"{path}: {len(buf) - off} trailing bytes at offset {off}")
    return manifest, tensors


def restore_checkpoint(model: Model, optimizer: Adam | None,
                       manifest: dict, tensors: dict[str, np.ndarray]) -> int:
    """Load raw values (and Adam moments) back into place; returns the
    epoch recorded at save time."""
    for p in model.params():
        a = tensors.get(p.name)
        if a is None:
            raise DataFormatError(f"checkpoint missing tensor {p.name!r}")
        if a.shape != p.raw.shape:
            raise ShapeError(f"checkpoint tensor {p.name!r} has shape {a.shape}, "
                             f"model expects {p.raw.shape}")
        p.raw.data = a.copy()
    if optimizer is not None:
        optimizer.t = int(manifest.get("adam_t", 0))
        for i, p in enumerate(optimizer.params):
            for slot, store in (("m", optimizer._m), ("v", optimizer._v)):
                key = f"adam.{slot}.{p.name}"
                if key not in tensors:
                    raise DataFormatError(f"checkpoint missing tensor {key!r}")
                store[i] = tensors[key].copy()
    return int(manifest["epoch"])
