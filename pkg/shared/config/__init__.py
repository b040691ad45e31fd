from .settings import Settings, get_settings  # noqa: F401
