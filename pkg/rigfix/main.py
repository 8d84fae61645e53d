"""HTTP entry point: offloads rig-correction solves from capture devices."""
import logging

import logfire
from fastapi import FastAPI

from rigfix.config import settings
from rigfix.pipeline import configure_logging
from rigfix.routers import rectification

# Logfire before the app so instrumentation sees it
configure_logging()

logger = logging.getLogger(__name__)

app = FastAPI(
    title="rigfix",
    description="Online stereo self-rectification service",
    version="0.1.0"
)

# Instrument FastAPI and Pydantic with Logfire
logfire.instrument_fastapi(app)
logfire.instrument_pydantic()

app.include_router(rectification.router)


@app.get("/health")
async def health():
    """Health check endpoint."""
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run("rigfix.main:app", host="0.0.0.0", port=settings.PORT, reload=True)
