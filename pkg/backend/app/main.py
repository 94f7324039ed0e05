import logging

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from backend.app import database, models
from backend.app.api import conformal, demo, history, partition, pipeline, thinning
from backend.app.config import configure_logging
from backend.app.errors import CBIError

configure_logging()
logger = logging.getLogger(__name__)

# Create Tables safely
try:
    models.Base.metadata.create_all(bind=database.engine)
except Exception as e:
    logger.warning("run history table creation failed (possibly locked): %s", e)

app = FastAPI(title="CBI Lab")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(CBIError)
async def cbi_error_handler(request: Request, exc: CBIError):
    return JSONResponse(status_code=400, content={"detail": str(exc), "error": type(exc).__name__})


app.include_router(history.router, prefix="/api/v1/history", tags=["History"])
app.include_router(partition.router, prefix="/api/v1/partition", tags=["Partitions"])
app.include_router(pipeline.router, prefix="/api/v1/pipeline", tags=["Pipeline"])
app.include_router(conformal.router, prefix="/api/v1/conformal", tags=["Conformal"])
app.include_router(thinning.router, prefix="/api/v1/thinning", tags=["Thinning"])
app.include_router(demo.router, prefix="/api/v1/demo", tags=["Demo"])


@app.get("/")
def read_root():
    return {"message": "Welcome to the CBI Lab API"}
