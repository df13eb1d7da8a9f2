"""Discrimination-game HTTP service.

Serves correlation matrices drawn with probability exactly 1/2 from a pool of
real (estimated) matrices and a pool of fake (generated, repaired) matrices.
Clients guess which is which; guesses append to a newline-delimited log, and
aggregate statistics are a pure fold over that log, so a restarted server
replaying its log reports identical numbers.

The engine is plain Python (testable without HTTP); `create_app` wraps it in
a FastAPI application exposing /api/challenge, /api/guess and /api/stats.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .core import CorrelationMatrix, CorrganError, StructuralError
from .matio import load_matrix_dir

logger = logging.getLogger(__name__)

LABELS = ("real", "fake")
PAYLOAD_DECIMALS = 4


class EmptyPoolError(CorrganError):
    """A matrix pool has no entries to serve."""


class UnknownChallengeError(CorrganError):
    """Guess for an id that was never issued or has expired."""


class DuplicateGuessError(CorrganError):
    """Second guess for an already-answered challenge."""


@dataclass(frozen=True)
class ServiceConfig:
    real_dir: str
    fake_dir: str
    log_file: str
    seed: int | None = None  # None: entropy-backed label draws
    ttl_seconds: float = 3600.0
    static_dir: str | None = None

    def __post_init__(self):
        if self.ttl_seconds <= 0.0:
            raise StructuralError(f"ttl_seconds must be > 0, got {self.ttl_seconds}")


@dataclass(frozen=True)
class Challenge:
    id: str
    label: str  # server-side only
    matrix: CorrelationMatrix
    created_at: float


@dataclass
class GameStats:
    total: int = 0
    correct: int = 0
    by_label: dict = field(
        default_factory=lambda: {lab: {"total": 0, "correct": 0} for lab in LABELS}
    )

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0

    def as_dict(self) -> dict:
        by = {}
        for lab in LABELS:
            t, c = self.by_label[lab]["total"], self.by_label[lab]["correct"]
            by[lab] = {"total": t, "correct": c, "accuracy": c / t if t else 0.0}
        return {
            "total": self.total,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "by_label": by,
        }


def _fold_record(stats: GameStats, true_label: str, correct: bool) -> None:
    stats.total += 1
    stats.correct += int(correct)
    stats.by_label[true_label]["total"] += 1
    stats.by_label[true_label]["correct"] += int(correct)


def payload_matrix(m: CorrelationMatrix, decimals: int = PAYLOAD_DECIMALS) -> list:
    """Row lists rounded for transport; enough precision for heatmaps."""
    return [[round(float(x), decimals) for x in row] for row in m.values]


class GameEngine:
    """Challenge issuing, guess recording, and log-backed statistics.

    All mutation happens under one lock; the guess log is append-only with
    one tab-separated record per line: timestamp, id, guess, true label,
    correct.  Stats are rebuilt from the log on startup.
    """

    def __init__(
        self,
        real_pool,
        fake_pool,
        log_path,
        seed: int | None = None,
        ttl_seconds: float = 3600.0,
        clock=time.monotonic,
    ):
        self._pools = {"real": list(real_pool), "fake": list(fake_pool)}
        for lab in LABELS:
            for m in self._pools[lab]:
                if not isinstance(m, CorrelationMatrix):
                    raise StructuralError(f"{lab} pool entries must be CorrelationMatrix")
        self._log_path = Path(log_path)
        self._rng = random.Random(seed) if seed is not None else random.SystemRandom()
        self._ttl = float(ttl_seconds)
        self._clock = clock
        self._lock = threading.Lock()
        self._open: dict[str, Challenge] = {}
        self._answered: set[str] = set()
        self._counter = 0
        self._stats = GameStats()
        self._replay_log()

    # -- persistence ------------------------------------------------------

    def _replay_log(self) -> None:
        if not self._log_path.exists():
            return
        with open(self._log_path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 5 or parts[3] not in LABELS:
                    raise StructuralError(
                        f"{self._log_path}:{lineno}: malformed guess record"
                    )
                _, cid, _, true_label, correct = parts
                _fold_record(self._stats, true_label, correct == "true")
                self._answered.add(cid)

    def _append_record(self, cid: str, guess: str, true_label: str, correct: bool):
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        stamp = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
        flag = "true" if correct else "false"
        with open(self._log_path, "a") as fh:
            fh.write(f"{stamp}\t{cid}\t{guess}\t{true_label}\t{flag}\n")
            fh.flush()

    # -- game -------------------------------------------------------------

    def _purge_expired(self, now: float) -> None:
        dead = [cid for cid, ch in self._open.items() if now - ch.created_at > self._ttl]
        for cid in dead:
            del self._open[cid]
        if dead:
            logger.info("expired %d unanswered challenges", len(dead))

    def new_challenge(self) -> Challenge:
        with self._lock:
            now = self._clock()
            self._purge_expired(now)
            label = LABELS[self._rng.getrandbits(1)]
            pool = self._pools[label]
            if not pool:
                raise EmptyPoolError(f"{label} pool is empty")
            matrix = pool[self._rng.randrange(len(pool))]
            self._counter += 1
            cid = f"c{self._counter:08d}-{self._rng.getrandbits(48):012x}"
            ch = Challenge(id=cid, label=label, matrix=matrix, created_at=now)
            self._open[cid] = ch
            return ch

    def submit_guess(self, cid: str, guess: str) -> dict:
        if guess not in LABELS:
            raise StructuralError(f"guess must be one of {LABELS}, got {guess!r}")
        with self._lock:
            self._purge_expired(self._clock())
            if cid in self._answered:
                raise DuplicateGuessError(f"challenge {cid} already answered")
            ch = self._open.pop(cid, None)
            if ch is None:
                raise UnknownChallengeError(f"unknown or expired challenge {cid}")
            correct = guess == ch.label
            self._append_record(cid, guess, ch.label, correct)
            _fold_record(self._stats, ch.label, correct)
            self._answered.add(cid)
            return {
                "correct": correct,
                "true_label": ch.label,
                "running_accuracy": self._stats.accuracy,
            }

    def stats(self) -> dict:
        with self._lock:
            return self._stats.as_dict()

    @property
    def open_count(self) -> int:
        with self._lock:
            return len(self._open)


def load_pool(directory) -> list:
    """Load a corrmat-csv directory as validated correlation matrices."""
    from .matio import matrix_files

    if not Path(directory).is_dir() or not matrix_files(directory):
        raise EmptyPoolError(f"no matrices under {directory}")
    return [CorrelationMatrix.from_values(v) for v in load_matrix_dir(directory)]


def engine_from_config(cfg: ServiceConfig) -> GameEngine:
    return GameEngine(
        real_pool=load_pool(cfg.real_dir),
        fake_pool=load_pool(cfg.fake_dir),
        log_path=cfg.log_file,
        seed=cfg.seed,
        ttl_seconds=cfg.ttl_seconds,
    )


class GuessRequest(BaseModel):
    id: str
    guess: Literal["real", "fake"]


def create_app(engine: GameEngine, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="correlation discrimination game", docs_url=None, redoc_url=None)

    @app.exception_handler(RequestValidationError)
    async def _bad_request(_, exc):  # malformed body: 400, not the default 422
        return JSONResponse(status_code=400, content={"detail": str(exc.errors()[:1])})

    @app.get("/api/challenge")
    def get_challenge():
        try:
            ch = engine.new_challenge()
        except EmptyPoolError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        return {"id": ch.id, "n": ch.matrix.n, "matrix": payload_matrix(ch.matrix)}

    @app.post("/api/guess")
    def post_guess(req: GuessRequest):
        try:
            return engine.submit_guess(req.id, req.guess)
        except UnknownChallengeError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DuplicateGuessError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.get("/api/stats")
    def get_stats():
        return engine.stats()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")
    return app


def create_app_from_config(cfg: ServiceConfig) -> FastAPI:
    return create_app(engine_from_config(cfg), static_dir=cfg.static_dir)
