"""Human-in-the-loop labeling service.

A single worker thread owns the model and all dataset mutations; HTTP
handlers talk to it through a command queue and read snapshots published
under a lock. Label submissions are applied immediately when idle and are
queued during training, taking effect at the next epoch boundary. Errors are
returned as machine-readable codes.
"""

from __future__ import annotations

import io
import queue
import threading
from dataclasses import asdict, replace

import numpy as np

from .commands import project_2d
from .config import RunConfig
from .data import Dataset, move_to_labeled
from .model import SaeModel, encode, init_model
from .svm import SvmModel, per_class_scores, svm_fit
from .training import EpochMetrics, train


class ServiceError(Exception):
    """Service-level failure with a machine-readable code."""

    def __init__(self, code: str, message: str, http_status: int = 400):
        self.code = code
        self.http_status = http_status
        super().__init__(message)


class ServiceState:
    """Training status, label queue, and published model snapshots."""

    def __init__(self, cfg: RunConfig, ds: Dataset, model: SaeModel | None = None):
        self.cfg = cfg
        self._lock = threading.RLock()
        self._ds = ds
        self._model = model if model is not None else init_model(cfg.model, cfg.train.seed)
        self._svm: SvmModel | None = None
        self._status = "idle"
        self._session_epoch: int | None = None
        self._pending: dict[int, int] = {}
        self._metrics: list[EpochMetrics] = []
        self._commands: "queue.Queue[tuple[str, int] | None]" = queue.Queue()
        self._worker = threading.Thread(target=self._run_worker, daemon=True)
        self._worker.start()

    # -- worker ------------------------------------------------------------

    def _run_worker(self) -> None:
        while True:
            command = self._commands.get()
            if command is None:
                return
            kind, epochs = command
            if kind == "train":
                try:
                    self._train(epochs)
                finally:
                    with self._lock:
                        self._status = "idle"
                        self._session_epoch = None

    def _train(self, epochs: int) -> None:
        with self._lock:
            ds = self._ds
            model = self._model
            offset = model.epochs_trained

        def on_epoch(epoch: int, live_model: SaeModel, metrics: EpochMetrics):
            with self._lock:
                self._session_epoch = epoch
                self._metrics.append(metrics)
                if self._pending:
                    self._ds = move_to_labeled(self._ds, self._pending)
                    self._pending.clear()
                    return self._ds
            return None

        tc = replace(self.cfg.train, epochs=epochs, epoch_offset=offset)
        trained, _ = train(model, ds, self.cfg.distances, tc, callbacks=[on_epoch])
        with self._lock:
            self._model = trained
            self._svm = None  # refreshed lazily against the new latents

    def shutdown(self) -> None:
        self._commands.put(None)
        self._worker.join(timeout=10)

    # -- queries and mutations ----------------------------------------------

    def status(self) -> dict:
        with self._lock:
            return {
                "status": self._status,
                "epoch": self._session_epoch,
                "epochs_trained": self._model.epochs_trained,
                "labeled_count": int(len(self._ds.labeled_ids) + len(self._pending)),
                "unlabeled_count": int(len(self._ds.unlabeled_ids) - len(self._pending)),
                "n_classes": self._ds.n_classes,
                "class_names": list(self._ds.class_names),
                "kind": self._ds.kind,
                "n_samples": self._ds.n,
                "dim": self._ds.dim,
            }

    def submit_label(self, sample_id: int, cls: int) -> dict:
        with self._lock:
            ds = self._ds
            if not (0 <= sample_id < ds.n):
                raise ServiceError("unknown_id", f"no sample {sample_id}", 404)
            if not (0 <= cls < max(ds.n_classes, 1)):
                raise ServiceError("invalid_class",
                                   f"class {cls} outside [0, {ds.n_classes})")
            already = sample_id in self._pending or bool(np.isin(sample_id, ds.labeled_ids))
            if already:
                raise ServiceError("already_labeled",
                                   f"sample {sample_id} is already labeled", 409)
            if self._status == "training":
                self._pending[sample_id] = cls
                return {"accepted": True, "applied": "queued"}
            self._ds = move_to_labeled(ds, {sample_id: cls})
            self._svm = None
            return {"accepted": True, "applied": "immediate"}

    def start_training(self, epochs: int) -> dict:
        if epochs < 1:
            raise ServiceError("invalid_epochs", f"epochs must be >= 1, got {epochs}")
        with self._lock:
            if self._status != "idle":
                raise ServiceError("busy", f"service is {self._status}", 409)
            self._status = "training"
            self._session_epoch = None
        self._commands.put(("train", epochs))
        return {"started": True, "epochs": epochs}

    def _ensure_svm(self) -> tuple[SaeModel, SvmModel, Dataset]:
        with self._lock:
            if self._status != "idle":
                raise ServiceError("busy", f"service is {self._status}", 409)
            ds = self._ds
            model = self._model
            if len(ds.labeled_ids) == 0:
                raise ServiceError("not_ready", "no labeled samples yet", 409)
            if self._svm is None:
                Z = encode(model, ds.features[ds.labeled_ids].T)
                self._svm = svm_fit(Z, ds.labeled_superclasses(), lam=self.cfg.svm.lam,
                                    epochs=self.cfg.svm.epochs, seed=self.cfg.svm.seed)
            return model, self._svm, ds

    def queue_page(self, k: int) -> list[dict]:
        """The k most uncertain unlabeled samples with margins and scores."""
        from .active import rank_unlabeled  # local import avoids a cycle

        model, svm, ds = self._ensure_svm()
        with self._lock:
            if len(ds.unlabeled_ids) == 0:
                return []
            self._status = "ranking"
        try:
            ranking = rank_unlabeled(svm, model, ds)
            page = ranking.entries[:k]
            Z = encode(model, ds.features[[i for i, _ in page]].T)
            items = []
            for j, (sample_id, margin) in enumerate(page):
                items.append({
                    "id": int(sample_id),
                    "margin": float(margin),
                    "scores": {str(c): float(s)
                               for c, s in per_class_scores(svm, Z[:, j]).items()},
                    "payload": (f"/api/sample/{sample_id}/image" if ds.kind == "image"
                                else f"/api/sample/{sample_id}/vector"),
                })
            return items
        finally:
            with self._lock:
                self._status = "idle"

    def sample_image_png(self, sample_id: int) -> bytes:
        from PIL import Image

        with self._lock:
            ds = self._ds
        if not (0 <= sample_id < ds.n):
            raise ServiceError("unknown_id", f"no sample {sample_id}", 404)
        if ds.kind != "image" or ds.image_shape is None:
            raise ServiceError("not_image", "dataset is not image data", 404)
        pixels = np.clip(np.rint(ds.features[sample_id].reshape(ds.image_shape) * 255.0),
                         0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(pixels, mode="L").save(buf, format="PNG")
        return buf.getvalue()

    def sample_vector(self, sample_id: int) -> list[float]:
        with self._lock:
            ds = self._ds
        if not (0 <= sample_id < ds.n):
            raise ServiceError("unknown_id", f"no sample {sample_id}", 404)
        return [float(v) for v in ds.features[sample_id]]

    def latent_points(self, n: int) -> list[dict]:
        with self._lock:
            ds = self._ds
            model = self._model
        ids = np.arange(ds.n)
        if n < ds.n:
            ids = np.sort(np.random.default_rng(0).choice(ids, size=n, replace=False))
        Z = encode(model, ds.features[ids].T)
        xy = project_2d(np.asarray(Z, np.float64), seed=self.cfg.train.seed)
        labeled = np.isin(ids, ds.labeled_ids)
        classes = (ds.superclass[ids] if ds.superclass is not None
                   else np.full(len(ids), -1))
        return [{"id": int(i), "x": float(xy[j, 0]), "y": float(xy[j, 1]),
                 "class": int(classes[j]), "labeled": bool(labeled[j])}
                for j, i in enumerate(ids)]

    def metrics_history(self) -> list[dict]:
        with self._lock:
            return [asdict(m) for m in self._metrics]


def create_app(state: ServiceState, static_dir=None):
    """FastAPI wrapper exposing the HTTP interface over a ServiceState."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="latent labeling service")

    @app.exception_handler(ServiceError)
    async def service_error_handler(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.http_status,
                            content={"error": {"code": exc.code, "message": str(exc)}})

    @app.get("/api/status")
    def get_status():
        return state.status()

    @app.get("/api/queue")
    def get_queue(k: int = 100):
        return state.queue_page(k)

    @app.get("/api/sample/{sample_id}/image")
    def get_sample_image(sample_id: int):
        return Response(content=state.sample_image_png(sample_id), media_type="image/png")

    @app.get("/api/sample/{sample_id}/vector")
    def get_sample_vector(sample_id: int):
        return {"id": sample_id, "values": state.sample_vector(sample_id)}

    @app.post("/api/labels")
    async def post_label(request: Request):
        body = await request.json()
        try:
            sample_id = int(body["id"])
            cls = int(body["class"])
        except (KeyError, TypeError, ValueError):
            raise ServiceError("malformed_request", "need {id, class} integers")
        return state.submit_label(sample_id, cls)

    @app.post("/api/train")
    async def post_train(request: Request):
        body = await request.json()
        try:
            epochs = int(body["epochs"])
        except (KeyError, TypeError, ValueError):
            raise ServiceError("malformed_request", "need {epochs} integer")
        return state.start_training(epochs)

    @app.get("/api/latent")
    def get_latent(n: int = 1000):
        return state.latent_points(n)

    @app.get("/api/metrics")
    def get_metrics():
        return state.metrics_history()

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def serve(cfg: RunConfig, port: int, ds: Dataset, model: SaeModel | None = None,
          static_dir=None, host: str = "127.0.0.1") -> None:
    """Run the labeling service until interrupted."""
    import uvicorn

    state = ServiceState(cfg, ds, model=model)
    app = create_app(state, static_dir=static_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        state.shutdown()
