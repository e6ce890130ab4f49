"""tracecity: OTLP trace ingestion, landscape reconstruction and city layout."""

from .config import ServiceConfig
from .service import TraceCityService

__all__ = ["ServiceConfig", "TraceCityService"]
__version__ = "0.1.0"
