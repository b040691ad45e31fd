"""
Process-level settings read from the environment (optionally a .env file)
"""
import os
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field


class Settings(BaseModel):
    """Environment-driven defaults for CLI, API and study runs"""
    seed: Optional[int] = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1)
    n_bootstrap: int = Field(default=4000, ge=500)
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Settings":
        seed = os.getenv("EDGEBAND_SEED")
        return cls(
            seed=int(seed) if seed not in (None, "") else None,
            threads=int(os.getenv("EDGEBAND_THREADS", "1")),
            n_bootstrap=int(os.getenv("EDGEBAND_N_BOOTSTRAP", "4000")),
            log_level=os.getenv("EDGEBAND_LOG_LEVEL", "INFO"),
        )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    load_dotenv()
    return Settings.from_env()
