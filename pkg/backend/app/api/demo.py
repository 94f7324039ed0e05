from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from backend.app import database, schemas
from backend.app.runs import finite_json, record_run
from backend.app.solvers.demo_1d import run_demo

router = APIRouter()


@router.post("/one-dimensional")
def one_dimensional(payload: schemas.DemoInput, db: Session = Depends(database.get_db)):
    """KDE credible set against mean- and mode-centred credible balls on a bimodal mixture."""
    record, _ = run_demo(seed=payload.seed, gamma=payload.gamma, alpha=payload.alpha, size=payload.size)
    record_run(db, "demo-1d", payload.model_dump(), record)
    return finite_json(record)
