from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

DATA_DIR = Path(__file__).parent / "data"


class Settings(BaseSettings):
    log_level: str = "INFO"
    rig_path: Path = DATA_DIR / "default_rig.json"
    output_dir: Path = Path("output")
    jobs: int = 1
    seed: int = 0

    model_config = SettingsConfigDict(env_prefix="STEREOTAC_", env_file=".env", extra="ignore")


settings = Settings()
