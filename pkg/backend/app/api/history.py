from typing import List

from fastapi import APIRouter, Depends
from sqlalchemy.orm import Session

from backend.app import database, schemas
from backend.app.runs import recent_runs

router = APIRouter()


@router.get("/{command}", response_model=List[schemas.RunResponse])
def get_history(command: str, db: Session = Depends(database.get_db)):
    # Last 10 runs of this command, newest first
    return recent_runs(db, command)
