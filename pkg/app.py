"""
FastAPI Entrypoint for wpcn
===========================
ASGI application for uvicorn and container deployments.

Features:
- Solve and verify endpoints
- Prometheus metrics and health checks
"""

import os
import sys
from pathlib import Path

# Ensure stdout/stderr use UTF-8 for the status markers on Windows consoles
for stream in (sys.stdout, sys.stderr):
    if hasattr(stream, "reconfigure"):
        try:
            stream.reconfigure(encoding="utf-8")
        except Exception:
            pass

PROJECT_ROOT = Path(__file__).parent
sys.path.insert(0, str(PROJECT_ROOT))

import logging

from wpcn.api.server import create_app
from wpcn.config import HOST, LOG_LEVEL, PORT

logging.basicConfig(level=LOG_LEVEL)

app = create_app()

# This allows running with: uvicorn app:app
if __name__ == "__main__":
    import uvicorn
    reload = os.environ.get("DEBUG", "").lower() == "true"
    print(f"Starting wpcn service on {HOST}:{PORT}")
    uvicorn.run("app:app", host=HOST, port=PORT, reload=reload)
