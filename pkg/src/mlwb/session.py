"""Session state for the local service: one model per session, mutations
serialized through a per-session lock, a recurring field-validation
ticker, live event fan-out, and training control.

HTTP never appears here; the service module maps these calls and errors
onto routes and status codes.
"""

from __future__ import annotations

import base64
import io
import json
import pathlib
import threading
import uuid
from collections import deque

import numpy as np
from PIL import Image

from . import explain, mathmode
from .codegen import export_bundle, generate_python
from .compiled import (
    CompiledModel,
    compile_model,
    load_model,
    recompile,
    save_model,
    spec_from_dict,
)
from .data_import import (
    CsvImportConfig,
    Dataset,
    _decode_image,
    import_images,
    load_dataset,
    parse_csv,
    parse_tensor_literal,
    preview,
    save_dataset,
)
from .diagram import diagram
from .errors import (
    ConfigError,
    ContractError,
    EditRejected,
    ParseError,
    WorkbenchError,
)
from .model import (
    DEFAULT_MODE,
    EditHistory,
    EditOp,
    Mode,
    ModelSpec,
    adapt_output_layer,
    apply_edit,
    default_spec,
    validate,
)
from .tensor import Tensor
from .training import TrainConfig, _check_dataset, predict, train

TICK_SECONDS = 0.2
EVENT_QUEUE_CAP = 512
FORMAT_VERSION = 1


class UnknownSessionError(WorkbenchError):
    """No session with the given id."""


class BusyError(WorkbenchError):
    """A conflicting mutation arrived while training is running."""


class ValidationFailure(WorkbenchError):
    """Request refused; carries the validation report explaining why."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# Event fan-out
# ---------------------------------------------------------------------------


class Subscription:
    """One consumer's bounded event queue.

    When the queue is full the oldest batch_end event is coalesced away;
    epoch_end, train_end, and flag events are never dropped.
    """

    def __init__(self, cap: int):
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._cap = cap
        self.closed = False

    def _offer(self, event: dict) -> None:
        with self._cond:
            if len(self._items) >= self._cap:
                for i, item in enumerate(self._items):
                    if item.get("kind") == "batch_end":
                        del self._items[i]
                        break
                else:
                    if event.get("kind") == "batch_end":
                        return  # only protected events queued; skip this one
            self._items.append(event)
            self._cond.notify()

    def get(self, timeout: float | None = None) -> dict | None:
        """Next event, or None on timeout / after close."""
        with self._cond:
            if not self._items:
                self._cond.wait(timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify()


class EventBus:
    def __init__(self, cap: int = EVENT_QUEUE_CAP):
        self._cap = cap
        self._subs: list[Subscription] = []
        self._lock = threading.Lock()

    def subscribe(self) -> Subscription:
        sub = Subscription(self._cap)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.close()
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def publish(self, event: dict) -> None:
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub._offer(event)


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


class _TrainingHandle:
    def __init__(self):
        self.stop_event = threading.Event()
        self.thread: threading.Thread | None = None


class Session:
    def __init__(self, sid: str, mode: Mode = DEFAULT_MODE, seed: int = 0):
        self.id = sid
        self.mode = mode
        self.seed = seed
        self.spec: ModelSpec = default_spec()
        self.compiled: CompiledModel = compile_model(self.spec, seed=seed)
        self.compiled_in_sync = True
        self.history = EditHistory()
        self.dataset: Dataset | None = None
        self.bus = EventBus()
        self.lock = threading.RLock()
        self.training: _TrainingHandle | None = None
        self.last_train_config = TrainConfig()
        # field path -> (EditOp dict, message): rejected values the ticker
        # keeps re-checking against the evolving model
        self.pending_fields: dict[str, tuple[dict, str]] = {}
        self._published_invalid: dict[str, str] = {}

    @property
    def busy(self) -> bool:
        handle = self.training
        return bool(handle and handle.thread and handle.thread.is_alive())


def _finding_path(finding) -> str:
    if finding.layer_index is None:
        return f"model.{finding.field}"
    return f"layers[{finding.layer_index}].{finding.field}"


def _edit_path(op: EditOp) -> str:
    p = op.payload
    if op.kind == "set_param":
        return f"layers[{p['index']}].{p['name']}"
    if op.kind == "set_loss":
        return "model.loss"
    if op.kind == "set_optimizer":
        return "model.optimizer"
    if op.kind == "set_input_descriptor":
        return "model.input"
    return "model.layers"


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------


class SessionManager:
    """Owns sessions, the shared 200 ms validation ticker, and optional
    on-disk persistence (model file per session)."""

    def __init__(self, state_dir=None, tick_seconds: float = TICK_SECONDS):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._tick_seconds = tick_seconds
        self._stop = threading.Event()
        self._ticker: threading.Thread | None = None
        self.state_dir = pathlib.Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._restore_sessions()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if self._ticker is None:
            self._stop.clear()
            self._ticker = threading.Thread(
                target=self._ticker_loop, name="field-ticker", daemon=True
            )
            self._ticker.start()

    def close(self) -> None:
        self._stop.set()
        if self._ticker:
            self._ticker.join(timeout=2.0)
            self._ticker = None
        for session in list(self._sessions.values()):
            if session.busy:
                session.training.stop_event.set()
                session.training.thread.join(timeout=10.0)

    def _ticker_loop(self) -> None:
        while not self._stop.wait(self._tick_seconds):
            for session in list(self._sessions.values()):
                try:
                    self.tick(session)
                except Exception:
                    pass  # a broken session must not kill the ticker

    def tick(self, session: Session) -> int:
        """One validation pass; publishes flag changes, returns how many."""
        with session.lock:
            invalid: dict[str, str] = {}
            report = validate(session.spec, mode=session.mode)
            for finding in report.errors:
                invalid[_finding_path(finding)] = finding.message
            for path, (op_dict, message) in list(session.pending_fields.items()):
                try:
                    op = EditOp.from_dict(op_dict)
                    apply_edit(session.spec, op, mode=session.mode)
                except WorkbenchError as e:
                    invalid[path] = message or str(e)
                else:
                    # the model changed around the value; it would apply now
                    del session.pending_fields[path]

            changes = 0
            for path, message in invalid.items():
                if self._flag_changed(session, path, message):
                    changes += 1
            for path in list(session._published_invalid):
                if path not in invalid:
                    del session._published_invalid[path]
                    session.bus.publish(
                        _flag_event(session.id, path, "valid", "")
                    )
                    changes += 1
            return changes

    def _flag_changed(self, session: Session, path: str, message: str) -> bool:
        if session._published_invalid.get(path) == message:
            return False
        session._published_invalid[path] = message
        session.bus.publish(_flag_event(session.id, path, "invalid", message))
        return True

    # -- session registry ----------------------------------------------------

    def create_session(self, mode: str | Mode = DEFAULT_MODE, seed: int = 0) -> Session:
        mode = _coerce_mode(mode)
        sid = uuid.uuid4().hex[:12]
        session = Session(sid, mode=mode, seed=seed)
        with self._lock:
            self._sessions[sid] = session
        self._persist(session)
        return session

    def get(self, sid: str) -> Session:
        try:
            return self._sessions[sid]
        except KeyError:
            raise UnknownSessionError(f"unknown session {sid!r}") from None

    def sessions(self) -> list[Session]:
        return list(self._sessions.values())

    # -- model access --------------------------------------------------------

    def model_payload(self, session: Session) -> dict:
        with session.lock:
            report = validate(session.spec, mode=session.mode)
            return {
                "format_version": FORMAT_VERSION,
                "id": session.id,
                "mode": session.mode.value,
                "model": session.spec.to_dict(),
                "report": report.to_dict(),
                "compiled_in_sync": session.compiled_in_sync,
                "can_undo": session.history.can_undo,
                "can_redo": session.history.can_redo,
                "training": session.busy,
                "has_dataset": session.dataset is not None,
            }

    def put_model(self, session: Session, body: bytes) -> dict:
        self._require_idle(session)
        with session.lock:
            try:
                doc = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise ParseError(f"invalid JSON body: {e}") from e
            if isinstance(doc, dict) and "weights" in doc:
                spec, weights = load_model(body)
                compiled = compile_model(spec, seed=session.seed)
                compiled = compiled.with_weights(weights)
                session.spec = spec
                session.compiled = compiled
            else:
                inner = doc.get("model", doc) if isinstance(doc, dict) else doc
                spec = spec_from_dict(inner)
                report = validate(spec, mode=Mode.EXPERT)
                if not report.ok:
                    raise ValidationFailure(
                        "model did not validate", report=report
                    )
                session.spec = spec
                session.compiled = compile_model(spec, seed=session.seed)
            session.compiled_in_sync = True
            session.history = EditHistory()
            session.pending_fields.clear()
        self._persist(session)
        session.bus.publish(_model_event(session, origin="open"))
        return self.model_payload(session)

    # -- edits ----------------------------------------------------------------

    def edit(self, session: Session, op_dict: dict) -> dict:
        self._require_idle(session)
        with session.lock:
            op = EditOp.from_dict(op_dict)
            try:
                result = apply_edit(
                    session.spec, op, mode=session.mode, history=session.history
                )
            except EditRejected as e:
                message = str(e)
                session.pending_fields[_edit_path(op)] = (op.to_dict(), message)
                raise
            session.spec = result.spec
            session.pending_fields.pop(_edit_path(op), None)
            self._refresh_compiled(session)
        self._persist(session)
        session.bus.publish(_model_event(session, origin="edit"))
        payload = self.model_payload(session)
        payload["report"] = result.report.to_dict()
        payload["applied"] = [o.to_dict() for o in result.applied]
        return payload

    def undo(self, session: Session) -> dict:
        return self._history_step(session, "undo")

    def redo(self, session: Session) -> dict:
        return self._history_step(session, "redo")

    def _history_step(self, session: Session, direction: str) -> dict:
        self._require_idle(session)
        with session.lock:
            stepped = False
            if direction == "undo" and session.history.can_undo:
                session.spec = session.history.undo(session.spec)
                stepped = True
            elif direction == "redo" and session.history.can_redo:
                session.spec = session.history.redo(session.spec)
                stepped = True
            if stepped:
                self._refresh_compiled(session)
        if stepped:
            self._persist(session)
            session.bus.publish(_model_event(session, origin=direction))
        payload = self.model_payload(session)
        payload["noop"] = not stepped
        return payload

    def set_mode(self, session: Session, mode: str) -> dict:
        self._require_idle(session)
        with session.lock:
            session.mode = _coerce_mode(mode)
        self._persist(session)
        session.bus.publish(
            {"type": "mode_changed", "session": session.id, "mode": session.mode.value}
        )
        return self.model_payload(session)

    def _refresh_compiled(self, session: Session) -> None:
        """Weight-retaining recompile; an invalid spec keeps the last good
        compiled model and marks it stale."""
        try:
            session.compiled = recompile(session.compiled, session.spec)
            session.compiled_in_sync = True
        except WorkbenchError:
            session.compiled_in_sync = False

    # -- data import ------------------------------------------------------------

    def import_csv(self, session: Session, text: str, config: dict) -> dict:
        cfg = CsvImportConfig(
            input_columns=tuple(config.get("input_columns", ())),
            target_columns=tuple(config.get("target_columns", ())),
            separator=config.get("separator", ","),
            divisors=config.get("divisors"),
        )
        return self._attach_dataset(session, parse_csv(text, cfg))

    def import_images(self, session: Session, payload: dict) -> dict:
        files = []
        for i, entry in enumerate(payload.get("files", [])):
            try:
                data = base64.b64decode(entry["data_base64"], validate=True)
            except (KeyError, ValueError) as e:
                raise ParseError(f"files[{i}]: bad base64 image data: {e}") from e
            files.append((entry.get("label", ""), data, entry.get("name")))
        ds = import_images(
            files,
            target_h=int(payload.get("target_h", 32)),
            target_w=int(payload.get("target_w", 32)),
        )
        return self._attach_dataset(session, ds)

    def import_tensor(self, session: Session, x_text: str, y_text: str) -> dict:
        ds = Dataset(
            parse_tensor_literal(x_text),
            parse_tensor_literal(y_text),
            source="tensor",
        )
        return self._attach_dataset(session, ds)

    def _attach_dataset(self, session: Session, dataset: Dataset) -> dict:
        self._require_idle(session)
        adapted = False
        with session.lock:
            session.dataset = dataset
            if session.mode != Mode.EXPERT:
                new_spec = adapt_output_layer(session.spec, dataset, mode=session.mode)
                if new_spec.to_dict() != session.spec.to_dict():
                    session.spec = new_spec
                    self._refresh_compiled(session)
                    adapted = True
        self._persist(session)
        session.bus.publish(
            {
                "type": "dataset_changed",
                "session": session.id,
                "n": dataset.n,
                "source": dataset.source,
            }
        )
        if adapted:
            session.bus.publish(_model_event(session, origin="adapt"))
        out = preview(dataset, 5)
        out["format_version"] = FORMAT_VERSION
        out["adapted_output_layer"] = adapted
        return out

    def dataset_preview(self, session: Session, k: int) -> dict:
        with session.lock:
            if session.dataset is None:
                raise ContractError("no dataset attached to this session")
            out = preview(session.dataset, k)
        out["format_version"] = FORMAT_VERSION
        return out

    # -- training ------------------------------------------------------------------

    def start_training(self, session: Session, config_dict: dict) -> dict:
        with session.lock:
            if session.busy:
                raise BusyError("training already in progress")
            if session.dataset is None:
                raise ContractError("attach a dataset before training")
            report = validate(session.spec, mode=session.mode)
            if not report.ok or session.pending_fields:
                raise ValidationFailure(
                    "training is disabled while fields are invalid", report=report
                )
            if not session.compiled_in_sync:
                self._refresh_compiled(session)
            config = TrainConfig.from_dict(config_dict)
            dataset = session.dataset
            _check_dataset(session.compiled, dataset.X.data, dataset.Y.data)
            config.check(dataset.n)

            handle = _TrainingHandle()
            session.training = handle
            session.last_train_config = config
            compiled = session.compiled

        def commit(cm: CompiledModel) -> None:
            with session.lock:
                session.compiled = cm

        def sink(event) -> None:
            session.bus.publish(
                {"type": "train_event", "session": session.id, **event.to_dict()}
            )

        def run() -> None:
            try:
                result = train(
                    compiled,
                    dataset,
                    config,
                    sink=sink,
                    should_abort=handle.stop_event.is_set,
                    on_weights=commit,
                )
                with session.lock:
                    session.compiled = result
                    session.training = None
                self._persist(session)
            except Exception as e:
                with session.lock:
                    session.training = None
                session.bus.publish(
                    {"type": "train_error", "session": session.id, "message": str(e)}
                )

        handle.thread = threading.Thread(
            target=run, name=f"train-{session.id}", daemon=True
        )
        handle.thread.start()
        return {
            "format_version": FORMAT_VERSION,
            "training": True,
            "config": config_dict | {"epochs": config.epochs},
        }

    def stop_training(self, session: Session) -> dict:
        with session.lock:
            handle = session.training
            if not session.busy:
                return {"format_version": FORMAT_VERSION, "stopping": False}
            handle.stop_event.set()
        return {"format_version": FORMAT_VERSION, "stopping": True}

    def join_training(self, session: Session, timeout: float = 60.0) -> None:
        handle = session.training
        if handle and handle.thread:
            handle.thread.join(timeout)

    # -- inference / visualization -----------------------------------------------

    def _input_tensor(self, session: Session, payload: dict):
        compiled = session.compiled
        if "input" in payload:
            return parse_tensor_literal(str(payload["input"]))
        if "x" in payload:
            return Tensor(payload["x"])
        if "image_base64" in payload:
            try:
                raw = base64.b64decode(payload["image_base64"], validate=True)
            except ValueError as e:
                raise ParseError(f"bad base64 image data: {e}") from e
            shape = compiled.input_shape
            if len(shape) != 3:
                raise ContractError(
                    "image prediction needs an image-shaped model input"
                )
            arr = _decode_image(raw, shape[0], shape[1])
            return Tensor(arr)
        raise ConfigError("provide 'input' (tensor literal), 'x', or 'image_base64'")

    def predict(self, session: Session, payload: dict) -> dict:
        with session.lock:
            compiled = session.compiled  # latest committed snapshot
            in_sync = session.compiled_in_sync
        x = self._input_tensor(session, payload)
        out = predict(compiled, x)
        return {
            "format_version": FORMAT_VERSION,
            "output": out.tolist(),
            "output_shape": list(out.shape),
            "compiled_in_sync": in_sync,
        }

    def visualize(self, session: Session, kind: str, payload: dict | None = None) -> dict:
        payload = payload or {}
        with session.lock:
            spec = session.spec.clone()
            compiled = session.compiled
        if kind in ("fcnn", "lenet"):
            cap = int(payload.get("node_cap", 16))
            desc = diagram(spec, kind, node_cap=cap)
            desc["format_version"] = FORMAT_VERSION
            return desc
        if kind == "mathmode":
            ok, reason = mathmode.eligible(spec)
            if not ok:
                raise ContractError(f"math mode unavailable: {reason}")
            doc = mathmode.render(compiled)
            out = doc.to_dict()
            out["latex"] = doc.latex()
            out["format_version"] = FORMAT_VERSION
            return out
        if kind == "featuremap":
            result = explain.feature_map(
                compiled,
                layer_index=int(payload["layer_index"]),
                unit=int(payload.get("unit", 0)),
                steps=int(payload.get("steps", explain.FEATURE_MAP_STEPS)),
                step_size=float(payload.get("step_size", explain.FEATURE_MAP_STEP_SIZE)),
                seed=int(payload.get("seed", 0)),
            )
            out = result.to_dict()
            out["png_base64"] = _png_base64(result.optimized.data)
            out["format_version"] = FORMAT_VERSION
            return out
        if kind == "gradcam":
            x = self._input_tensor(session, payload)
            conv_index = payload.get("conv_layer_index")
            heatmap = explain.gradcam(
                compiled,
                x,
                class_index=int(payload.get("class_index", 0)),
                conv_layer_index=None if conv_index is None else int(conv_index),
            )
            out = heatmap.to_dict()
            out["png_base64"] = _png_base64(heatmap.values.data)
            out["format_version"] = FORMAT_VERSION
            return out
        if kind == "layerio":
            x = self._input_tensor(session, payload)
            out = explain.layer_io(compiled, x).to_dict()
            out["format_version"] = FORMAT_VERSION
            return out
        raise ConfigError(f"unknown visualization {kind!r}")

    # -- export ---------------------------------------------------------------------

    def export(self, session: Session, what: str):
        with session.lock:
            spec = session.spec.clone()
            compiled = session.compiled
            dataset = session.dataset
            config = session.last_train_config
        if what == "model":
            return save_model(compiled)
        if what == "python":
            program = generate_python(spec, config)
            return {
                "format_version": FORMAT_VERSION,
                "source": program.source,
                "instructions": program.instructions,
                "manifest": [list(entry) for entry in program.manifest],
            }
        if what == "bundle":
            return export_bundle(spec, compiled, dataset=dataset, config=config)
        raise ConfigError(f"unknown export {what!r}")

    # -- internals ----------------------------------------------------------------

    def _require_idle(self, session: Session) -> None:
        if session.busy:
            raise BusyError("the model is training; stop training first")

    def _persist(self, session: Session) -> None:
        if not self.state_dir:
            return
        with session.lock:
            model_bytes = save_model(session.compiled)
            meta = {
                "format_version": FORMAT_VERSION,
                "id": session.id,
                "mode": session.mode.value,
                "seed": session.seed,
            }
            dataset = session.dataset
            (self.state_dir / f"{session.id}.model.json").write_bytes(model_bytes)
            (self.state_dir / f"{session.id}.meta.json").write_text(
                json.dumps(meta, indent=1), encoding="utf-8"
            )
            if dataset is not None:
                (self.state_dir / f"{session.id}.dataset.json").write_bytes(
                    save_dataset(dataset)
                )

    def _restore_sessions(self) -> None:
        for meta_path in sorted(self.state_dir.glob("*.meta.json")):
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                sid = meta["id"]
                session = Session(
                    sid,
                    mode=_coerce_mode(meta.get("mode", "beginner")),
                    seed=int(meta.get("seed", 0)),
                )
                model_path = self.state_dir / f"{sid}.model.json"
                if model_path.exists():
                    spec, weights = load_model(model_path.read_bytes())
                    session.spec = spec
                    session.compiled = compile_model(
                        spec, seed=session.seed
                    ).with_weights(weights)
                data_path = self.state_dir / f"{sid}.dataset.json"
                if data_path.exists():
                    session.dataset = load_dataset(data_path.read_bytes())
                self._sessions[sid] = session
            except (WorkbenchError, OSError, KeyError, ValueError, json.JSONDecodeError):
                continue  # skip unreadable state; never block startup


def _coerce_mode(mode) -> Mode:
    if isinstance(mode, Mode):
        return mode
    try:
        return Mode(str(mode))
    except ValueError:
        raise ConfigError(
            f"unknown mode {mode!r}; expected one of "
            f"{[m.value for m in Mode]}"
        ) from None


def _flag_event(sid: str, path: str, state: str, message: str) -> dict:
    return {
        "type": "field_flag",
        "session": sid,
        "path": path,
        "state": state,
        "message": message,
    }


def _model_event(session: Session, origin: str) -> dict:
    return {
        "type": "model_changed",
        "session": session.id,
        "origin": origin,
        "ok": validate(session.spec, mode=session.mode).ok,
    }


def _png_base64(arr) -> str:
    """Grayscale or RGB PNG of a [h,w], [h,w,c], or [1,h,w,c] array of
    values in [0,1]."""
    data = np.asarray(arr, dtype=np.float64)
    if data.ndim == 4 and data.shape[0] == 1:
        data = data[0]
    if data.ndim == 3 and data.shape[-1] == 1:
        data = data[..., 0]
    if data.ndim == 1:
        data = data[None, :]
    pixels = np.clip(data * 255.0, 0, 255).astype("uint8")
    mode = "RGB" if pixels.ndim == 3 else "L"
    img = Image.fromarray(pixels, mode=mode)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
