from datetime import datetime

from sqlalchemy import Column, DateTime, Integer, String, Text

from backend.app.database import Base


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, index=True)  # e.g. 'score', 'dpc', 'demo-1d'
    parameters = Column(Text)  # JSON string of the run configuration
    summary = Column(Text)  # JSON string of the headline results
    timestamp = Column(DateTime, default=datetime.utcnow)
