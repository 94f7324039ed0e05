from fastapi import APIRouter

from backend.app import schemas
from backend.app.solvers.thinning import MixingModel, min_thinning, tv_bound

router = APIRouter()


def _model(payload: schemas.MixingInput) -> MixingModel:
    if payload.kind == "geometric":
        return MixingModel.geometric(payload.C, payload.rho)
    return MixingModel.tabulated(payload.eps or [])


@router.post("/bound", response_model=schemas.ThinningBoundResponse)
def thinning_bound(payload: schemas.ThinningBoundInput):
    """(N - 1) * eps_M for draws kept M steps apart."""
    return {"tv_bound": tv_bound(_model(payload), payload.N, payload.M)}


@router.post("/min-spacing", response_model=schemas.MinSpacingResponse)
def minimum_spacing(payload: schemas.MinSpacingInput):
    model = _model(payload)
    M = min_thinning(model, payload.N, payload.budget)
    return {"M": M, "tv_bound": tv_bound(model, payload.N, M)}
