"""REST surface consumed by the admin console.

All bodies are JSON. Reads serve the latest published snapshot; mutations
serialize through the gateway's writer lock and bump the registry
version. Invariant violations surface as 422 responses with the
validation message verbatim.
"""

from __future__ import annotations

import os
import threading
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from .errors import ConfigurationError, SafehomeError, ValidationError
from .gateway import Gateway
from .model import AccessLevel, DeviceId, DeviceRole, ScheduleRule


def create_app(gateway: Gateway) -> FastAPI:
    app = FastAPI(title="safehome gateway", version="0.1.0", docs_url=None, redoc_url=None)

    def parse_device_id(raw: str) -> DeviceId:
        try:
            return DeviceId(raw)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/api/health")
    def health() -> dict:
        snapshot = gateway.snapshot
        return {
            "status": "ok",
            "tick": snapshot.tick,
            "degraded": list(snapshot.degraded),
        }

    @app.get("/api/devices")
    def list_devices() -> list:
        with gateway.lock:
            media = dict(gateway.registry.media_flags)
            devices = gateway.registry.snapshot_devices()
        return [{**d.to_dict(), "media": bool(media.get(d.id, False))} for d in devices]

    @app.put("/api/devices/{device_id}/role")
    def set_role(device_id: str, payload: dict = Body(...)) -> dict:
        target = parse_device_id(device_id)
        try:
            role = DeviceRole(str(payload["role"]))
        except KeyError:
            raise HTTPException(status_code=422, detail="missing 'role'") from None
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        access: Optional[AccessLevel] = None
        if payload.get("access") is not None:
            try:
                access = AccessLevel(str(payload["access"]))
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        media = payload.get("media")
        if media is not None and not isinstance(media, bool):
            raise HTTPException(status_code=422, detail="'media' must be a boolean")
        try:
            device = gateway.set_device_role(target, role, media=media, access=access)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with gateway.lock:
            media_flag = bool(gateway.registry.media_flags.get(target, False))
        return {**device.to_dict(), "media": media_flag}

    @app.get("/api/schedules")
    def get_schedules() -> list:
        with gateway.lock:
            return [rule.to_dict() for rule in gateway.schedules]

    @app.put("/api/schedules")
    def put_schedules(payload: list = Body(...)) -> list:
        try:
            rules = [ScheduleRule.from_dict(item) for item in payload]
        except (ValidationError, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        gateway.set_schedules(rules)
        return [rule.to_dict() for rule in rules]

    @app.get("/api/status")
    def status() -> dict:
        return gateway.snapshot.to_dict()

    @app.get("/api/decisions")
    def decisions(limit: int = Query(default=50, ge=1, le=10000)) -> list:
        return gateway.recent_decisions(limit)

    @app.post("/api/scenario")
    def post_scenario(payload: dict = Body(...)) -> dict:
        scenario_id = payload.get("scenario_id")
        if not isinstance(scenario_id, int):
            raise HTTPException(status_code=422, detail="'scenario_id' must be an integer")
        try:
            gateway.switch_scenario(scenario_id)
        except ConfigurationError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (ValidationError, OSError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"scenario_id": scenario_id}

    @app.exception_handler(SafehomeError)
    def safehome_error_handler(_request, exc: SafehomeError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    console_dir = getattr(gateway.config, "console_dir", None)
    if console_dir and os.path.isdir(console_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app


class ServiceHandle:
    """A running gateway: periodic tick thread plus the API server."""

    def __init__(self, gateway: Gateway, server, tick_thread: threading.Thread,
                 stop_event: threading.Event):
        self.gateway = gateway
        self._server = server
        self._tick_thread = tick_thread
        self._stop_event = stop_event

    def stop(self) -> None:
        self._stop_event.set()
        self._server.should_exit = True
        if self._tick_thread.is_alive():
            self._tick_thread.join(timeout=10)


def serve_api(gateway: Gateway, run_ticks: bool = True) -> ServiceHandle:
    """Start the tick loop and API server threads; returns a handle whose
    ``stop()`` shuts both down."""
    import socket

    import uvicorn

    host, _, port_text = gateway.config.api_bind.partition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise ConfigurationError(f"bad api_bind {gateway.config.api_bind!r}") from None

    # fail at startup, not inside the server thread, if the port is taken
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host or "127.0.0.1", port))
    except OSError as exc:
        raise ConfigurationError(f"cannot bind {gateway.config.api_bind}: {exc}") from exc
    finally:
        probe.close()

    app = create_app(gateway)
    server = uvicorn.Server(uvicorn.Config(app, host=host or "127.0.0.1", port=port,
                                           log_level="warning"))

    stop_event = threading.Event()

    def tick_loop() -> None:
        while not stop_event.is_set():
            gateway.tick()
            stop_event.wait(gateway.config.tick_interval)

    tick_thread = threading.Thread(target=tick_loop, daemon=True, name="safehome-tick")
    if run_ticks:
        tick_thread.start()

    server_thread = threading.Thread(target=server.run, daemon=True, name="safehome-api")
    server_thread.start()
    return ServiceHandle(gateway, server, tick_thread, stop_event)
