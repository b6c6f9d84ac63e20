"""HTTP/JSON front end for the scene service.

Endpoints (all JSON; errors are {"code", "message"} with 400/404):

    GET  /datasets
    POST /sessions                      {"dataset_id": ...}
    GET  /sessions/{id}                 current session state
    GET  /sessions/{id}/snapshot?t=&tau=&compare=
    POST /sessions/{id}/select          {"label": ...}
    POST /sessions/{id}/reset
    POST /sessions/{id}/slice           {"axis": ..., "coord": ..., "thickness"?}
                                        (axis null clears the active slice)
    GET  /sessions/{id}/navigate?from=
    GET  /slice?axis=&coord=&t=&thickness=&dataset=
    GET  /compare?scope=&dataset=       scope: all | region:<label> | voxel:<id>
    GET  /bundles?dataset=

``dataset`` may be omitted whenever exactly one dataset is loaded.
Sessions are server-held and expire after 30 idle minutes; every mutation
returns the full new state so clients can stay stateless.
"""

from __future__ import annotations

from fastapi import Body, FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .errors import BoundsError, EngineError, FormatError, NotFoundError, ShapeError
from .scene import SceneService


def create_app(service: SceneService) -> FastAPI:
    app = FastAPI(title="dtbengine scene API")

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status = 404 if isinstance(exc, NotFoundError) else 400
        code = {
            NotFoundError: "not_found",
            BoundsError: "out_of_bounds",
            ShapeError: "shape_mismatch",
            FormatError: "bad_format",
        }.get(type(exc), "engine_error")
        return JSONResponse(status_code=status, content={"code": code, "message": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error_handler(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"code": "bad_request", "message": str(exc)})

    @app.get("/datasets")
    def datasets():
        return {"datasets": service.datasets()}

    @app.post("/sessions")
    def open_session(body: dict = Body(...)):
        state = service.open_session(body.get("dataset_id"))
        return state.to_payload()

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        return service.session(session_id).to_payload()

    @app.get("/sessions/{session_id}/snapshot")
    def snapshot(session_id: str, t: int | None = None, tau: float | None = None,
                 compare: bool | None = None):
        return service.snapshot(session_id, t=t, tau=tau, compare=compare)

    @app.post("/sessions/{session_id}/select")
    def select(session_id: str, body: dict = Body(...)):
        return service.select_region(session_id, int(body["label"])).to_payload()

    @app.post("/sessions/{session_id}/reset")
    def reset(session_id: str):
        return service.reset_navigation(session_id).to_payload()

    @app.post("/sessions/{session_id}/slice")
    def set_slice(session_id: str, body: dict = Body(...)):
        axis = body.get("axis")
        state = service.set_slice(
            session_id, axis,
            coord=body.get("coord"),
            thickness=body.get("thickness"),
        )
        return state.to_payload()

    @app.get("/sessions/{session_id}/navigate")
    def navigate(session_id: str, from_label: int = Query(..., alias="from")):
        neighbors = service.navigate_next(session_id, from_label)
        return {"from": from_label,
                "neighbors": [{"label": lab, "weight": w} for lab, w in neighbors]}

    @app.get("/slice")
    def slice_raster(axis: str, coord: float, t: int, thickness: float | None = None,
                     dataset: str | None = None):
        return service.slice_payload(dataset, axis, coord, t, thickness)

    @app.get("/compare")
    def compare(scope: str = "all", dataset: str | None = None):
        return service.compare_payload(dataset, scope)

    @app.get("/bundles")
    def bundles(dataset: str | None = None):
        return service.bundles_payload(dataset)

    return app
