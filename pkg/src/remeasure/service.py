"""HTTP JSON API exposing the analytic power module.

POST /api/power evaluates a design: it returns the absolute and relative
power curve over candidate remeasurement counts and, when a target power is
supplied, the minimal number of remeasured controls reaching it. GET
/healthz reports liveness. Handlers are pure functions of the request body,
so identical requests produce identical responses.
"""

from __future__ import annotations

import dataclasses
import math
import os

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from . import __version__
from .power import PowerQuery, power_curve, theoretical_power

__all__ = ["app", "PowerRequest", "PowerResponse"]


class PowerRequest(BaseModel):
    """Design inputs plus an optional curve range and power target."""

    n1: int = Field(ge=1)
    n2: int = Field(ge=2)
    rho: float = Field(gt=-1.0, lt=1.0)
    d: float
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    sigma1: float = Field(default=1.0, gt=0.0)
    n1_prime_min: int | None = Field(default=None, ge=2)
    n1_prime_max: int | None = None
    target: float | None = Field(default=None, gt=0.0, lt=1.0)
    mode: str = "absolute"

    @model_validator(mode="after")
    def _cross_field(self):
        if not math.isfinite(self.d):
            raise ValueError("d must be finite")
        if self.mode not in ("absolute", "relative"):
            raise ValueError("mode must be 'absolute' or 'relative'")
        lo = self.n1_prime_min if self.n1_prime_min is not None else 2
        hi = self.n1_prime_max if self.n1_prime_max is not None else self.n1
        if hi > self.n1:
            raise ValueError("n1_prime_max cannot exceed n1")
        if lo > hi:
            raise ValueError("n1_prime_min cannot exceed n1_prime_max")
        return self


class CurvePoint(BaseModel):
    n1_prime: int
    absolute_power: float
    relative_power: float
    oracle_sd: float


class PowerResponse(BaseModel):
    curve: list[CurvePoint]
    optimal_power: float
    min_remeasured_absolute: int | None = None
    min_remeasured_relative: int | None = None
    target: float | None = None
    mode: str | None = None


app = FastAPI(
    title="remeasure power service",
    version=__version__,
    description="Analytic power for two-batch case-control designs with remeasured controls.",
)
app.add_middleware(
    CORSMiddleware,
    allow_origins=os.environ.get("REMEASURE_CORS_ORIGINS", "*").split(","),
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(RequestValidationError)
async def _field_errors(request: Request, exc: RequestValidationError) -> JSONResponse:
    errors = [
        {
            "field": ".".join(str(part) for part in err["loc"] if part != "body"),
            "message": err["msg"],
        }
        for err in exc.errors()
    ]
    return JSONResponse(status_code=400, content={"errors": errors})


@app.get("/healthz")
def handle_health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/api/power", response_model=PowerResponse, responses={
    400: {"description": "Field-level validation errors"},
    422: {"description": "Absolute power target unachievable at any n1_prime"},
})
def handle_power(body: PowerRequest):
    base = PowerQuery(
        n1=body.n1,
        n2=body.n2,
        n1_prime=min(2, body.n1),
        effect=body.d,
        rho=body.rho,
        alpha=body.alpha,
        sigma1=body.sigma1,
    )
    lo = body.n1_prime_min if body.n1_prime_min is not None else 2
    hi = body.n1_prime_max if body.n1_prime_max is not None else body.n1
    curve = power_curve(base, range(lo, hi + 1))
    points = [
        CurvePoint(
            n1_prime=m,
            absolute_power=res.absolute_power,
            relative_power=res.relative_power,
            oracle_sd=res.oracle_sd,
        )
        for m, res in curve
    ]
    optimal = theoretical_power(
        dataclasses.replace(base, n1_prime=base.n1)
    ).optimal_power

    doc = PowerResponse(curve=points, optimal_power=optimal)
    if body.target is not None:
        # Search the full admissible range regardless of the requested
        # curve window, so the answer does not depend on display bounds.
        full = power_curve(base)
        min_abs = next(
            (m for m, res in full if res.absolute_power >= body.target), None
        )
        min_rel = next(
            (m for m, res in full if res.relative_power >= body.target), None
        )
        if body.mode == "absolute" and min_abs is None:
            return JSONResponse(
                status_code=422,
                content={
                    "error": "target unachievable: even remeasuring every control falls short",
                    "max_achievable_power": full[-1][1].absolute_power,
                },
            )
        doc = PowerResponse(
            curve=points,
            optimal_power=optimal,
            min_remeasured_absolute=min_abs,
            min_remeasured_relative=min_rel,
            target=body.target,
            mode=body.mode,
        )
    return doc
