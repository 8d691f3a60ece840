"""REST surface of the platform: JSON over HTTP with header identities.

Mutating calls carry an `X-Identity: name[:secret]` header naming the
acting principal; leaderboard reads are public. Private artifacts posted
here go to the transient vault only (standing in for owner-side serve
endpoints) — the journal never sees them.
"""

from __future__ import annotations

from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse

from ..audit import MerkleRoot
from ..core import DataPoint, Dataset, model_from_json
from ..executors import InlineWeights, RemoteEndpoint
from .platform import Platform
from .requests import PlatformError, ValidationError

_STATUS_BY_CODE = {
    "validation": 422,
    "not_found": 404,
    "conflict": 409,
    "forbidden": 403,
    "lifecycle": 409,
    "platform_error": 500,
}


def _identity(x_identity: Optional[str] = Header(default=None)) -> str:
    if not x_identity:
        raise ValidationError("missing X-Identity header")
    return x_identity.split(":", 1)[0]


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="truce platform")

    @app.exception_handler(PlatformError)
    async def on_platform_error(request: Request, exc: PlatformError):
        return JSONResponse(
            status_code=_STATUS_BY_CODE.get(exc.code, 500),
            content={"code": exc.code, "message": str(exc), "request_id": exc.request_id},
        )

    @app.post("/datasets")
    def post_dataset(body: dict, identity: str = Depends(_identity)):
        try:
            name = body["name"]
            num_features = int(body["num_features"])
            num_classes = int(body["num_classes"])
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed dataset registration: {e}") from e
        root = MerkleRoot.from_json(body["root"]) if body.get("root") else None
        dataset = None
        salts = None
        if body.get("points"):
            try:
                dataset = Dataset(
                    tuple(
                        DataPoint(tuple(p["input"]), int(p["label"])).quantized()
                        for p in body["points"]
                    ),
                    name,
                    num_features,
                    num_classes,
                )
            except (KeyError, ValueError) as e:
                raise ValidationError(f"malformed points: {e}") from e
            if body.get("salts"):
                salts = tuple(bytes.fromhex(s) for s in body["salts"])
        t = int(body.get("t") or (len(dataset) if dataset else 0))
        meta = platform.register_dataset(
            identity, name, num_features, num_classes, t, root=root, dataset=dataset, salts=salts
        )
        return {"name": name, **meta}

    @app.post("/models")
    def post_model(body: dict, identity: str = Depends(_identity)):
        try:
            name = body["name"]
            kind = body["kind"]
            if kind == "inline":
                spec, w, cfg = model_from_json(body["model"])
                source = InlineWeights(spec, w, cfg)
            elif kind == "remote":
                source = RemoteEndpoint(
                    body["url"], body.get("credential", ""), int(body["num_classes"])
                )
            else:
                raise ValidationError(f"unknown model kind {kind!r}")
        except PlatformError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed model registration: {e}") from e
        meta = platform.register_model(identity, name, source)
        return {"name": name, **meta}

    @app.post("/requests")
    def post_request(body: dict, identity: str = Depends(_identity)):
        try:
            model_ref = body["model"]
            dataset_ref = body["dataset"]
            mode = body["mode"]
        except KeyError as e:
            raise ValidationError(f"missing field {e}") from e
        req = platform.create_request(
            identity, model_ref, dataset_ref, mode, idempotency_key=body.get("idempotency_key")
        )
        return req.to_json()

    @app.post("/requests/{rid}/approve")
    def post_approve(rid: str, identity: str = Depends(_identity)):
        return platform.approve_request(identity, rid).to_json()

    @app.post("/requests/{rid}/refuse")
    def post_refuse(rid: str, body: Optional[dict] = None, identity: str = Depends(_identity)):
        reason = (body or {}).get("reason", "refused")
        return platform.refuse_request(identity, rid, reason).to_json()

    @app.get("/requests/{rid}")
    def get_request(rid: str):
        return platform.get_request(rid).to_json()

    @app.get("/leaderboard")
    def get_leaderboard(dataset: Optional[str] = None, mode: Optional[str] = None):
        return {"entries": [e.to_json() for e in platform.get_leaderboard(dataset, mode)]}

    @app.post("/audits")
    def post_audit(body: dict, identity: str = Depends(_identity)):
        try:
            dataset_ref = body["dataset"]
        except KeyError as e:
            raise ValidationError(f"missing field {e}") from e
        try:
            session = platform.create_audit(
                identity,
                dataset_ref,
                variant=body.get("variant", "Committed"),
                kappa=int(body.get("kappa", 100)),
                alpha=float(body.get("alpha", 95.0)),
                seed=body.get("seed"),
            )
        except ValueError as e:
            if isinstance(e, PlatformError):
                raise
            raise ValidationError(str(e)) from e
        return session.to_json()

    @app.get("/audits/{aid}")
    def get_audit(aid: str):
        return platform.get_audit(aid).to_json()

    return app
