from fastapi import APIRouter

from backend.app import schemas
from backend.app.solvers.partition import canonicalize, vi_distance

router = APIRouter()


@router.post("/canonicalize", response_model=schemas.CanonicalizeResponse)
def canonicalize_labels(payload: schemas.CanonicalizeInput):
    """Renumber labels by first appearance."""
    p = canonicalize(payload.labels)
    return {"labels": p.tolist(), "k": p.k, "cluster_sizes": p.cluster_sizes().tolist()}


@router.post("/vi", response_model=schemas.VIResponse)
def variation_of_information(payload: schemas.VIInput):
    """VI distance in bits between two label vectors."""
    a, b = canonicalize(payload.a), canonicalize(payload.b)
    return {"vi": vi_distance(a, b), "k_a": a.k, "k_b": b.k}
