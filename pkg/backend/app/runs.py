"""Run history: the 10 most recent runs per command, oldest evicted first."""
import json
import logging
import math
from typing import Any, Dict, List

import numpy as np
from sqlalchemy import desc
from sqlalchemy.orm import Session

from backend.app import models

logger = logging.getLogger(__name__)

HISTORY_LIMIT = 10


def finite_json(value: Any) -> Any:
    """Replace non-finite floats by None so the value serialises as strict JSON."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: finite_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [finite_json(v) for v in value]
    return value


def record_run(db: Session, command: str, parameters: Dict[str, Any], summary: Dict[str, Any]) -> models.RunRecord:
    query = db.query(models.RunRecord).filter(models.RunRecord.command == command)
    excess = query.count() - (HISTORY_LIMIT - 1)
    if excess > 0:
        for oldest in query.order_by(models.RunRecord.timestamp.asc(), models.RunRecord.id.asc()).limit(excess):
            db.delete(oldest)

    record = models.RunRecord(
        command=command,
        parameters=json.dumps(finite_json(parameters), default=str),
        summary=json.dumps(finite_json(summary), default=str),
    )
    db.add(record)
    db.commit()
    db.refresh(record)
    logger.debug("recorded %s run #%d", command, record.id)
    return record


def recent_runs(db: Session, command: str, limit: int = HISTORY_LIMIT) -> List[models.RunRecord]:
    return (
        db.query(models.RunRecord)
        .filter(models.RunRecord.command == command)
        .order_by(desc(models.RunRecord.timestamp), desc(models.RunRecord.id))
        .limit(limit)
        .all()
    )
