from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from backend.app.config import get_settings

SQLALCHEMY_DATABASE_URL = get_settings().database_url


def make_engine(url: str = SQLALCHEMY_DATABASE_URL):
    # check_same_thread=False lets the FastAPI worker threads share SQLite connections
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


engine = make_engine()

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)

Base = declarative_base()


# Dependency
def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
