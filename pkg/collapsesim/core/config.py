import json
import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = "~/config/collapsesim"


class Settings(BaseModel):
    seed: int = Field(default=20240601, ge=0, lt=2**64)
    out_dir: str = Field(default="./collapsesim-out")
    format: str = Field(default="json", pattern=r"^(json|csv)$")
    policy: str = Field(default="both", pattern=r"^(collapse|unitary|both)$")


class SettingsManager:
    def __init__(self, config_dir: Optional[str] = None):
        load_dotenv()
        config_dir = (
            config_dir or os.environ.get("COLLAPSESIM_CONFIG_DIR") or DEFAULT_CONFIG_DIR
        )
        self.config_dir = os.path.expanduser(config_dir)
        self.settings_file = os.path.join(self.config_dir, "settings.json")

    def _ensure_config_dir(self):
        os.makedirs(self.config_dir, exist_ok=True)

    def settings_exist(self) -> bool:
        return os.path.exists(self.settings_file)

    def save_settings(
        self,
        seed: Optional[int] = None,
        out_dir: Optional[str] = None,
        format: Optional[str] = None,
        policy: Optional[str] = None,
    ) -> Settings:
        self._ensure_config_dir()
        current = self.load_settings()
        updates = {
            "seed": seed,
            "out_dir": out_dir,
            "format": format,
            "policy": policy,
        }
        merged = current.model_dump()
        merged.update({k: v for k, v in updates.items() if v is not None})
        settings = Settings(**merged)

        with open(self.settings_file, "w") as f:
            json.dump(settings.model_dump(), f, indent=2)

        logger.debug("settings saved at %s", self.settings_file)
        return settings

    def load_settings(self) -> Settings:
        if not os.path.exists(self.settings_file):
            return Settings()
        try:
            with open(self.settings_file, "r") as f:
                return Settings(**json.load(f))
        except Exception as e:
            logger.warning("ignoring unreadable settings %s: %s", self.settings_file, e)
            return Settings()
