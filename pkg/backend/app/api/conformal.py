from fastapi import APIRouter

from backend.app import schemas
from backend.app.solvers.conformal import ConformalConfig, concentration_certificate
from backend.app.solvers.scoring import ScoreTable

router = APIRouter()


@router.post("/certificate", response_model=schemas.CertificateResponse)
def certificate(payload: schemas.CertificateInput):
    """Coverage concentration bound for a set of calibration scores."""
    # gamma is not used by the certificate; any positive value makes a valid table
    table = ScoreTable(payload.scores, gamma=1.0)
    return concentration_certificate(table, ConformalConfig(payload.alpha), payload.delta).to_record()
