"""Service configuration: a flat key = value file.

Recognised keys:

    storage_path          = /var/lib/factograph/store.db
    bind_address          = 127.0.0.1:8023
    token_secret          = <random string>
    set_timeout_seconds   = 30
    notification_sink_url = https://hooks.example/notify   (optional)
    ui_dir                = /opt/factograph/ui             (optional)

Blank lines and lines starting with # are ignored. Unknown keys are an
error so typos do not silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigInvalid

DEFAULT_BIND = ("127.0.0.1", 8023)


@dataclass
class ServiceConfig:
    storage_path: str = "factograph.db"
    bind_host: str = DEFAULT_BIND[0]
    bind_port: int = DEFAULT_BIND[1]
    token_secret: Optional[str] = None
    set_timeout_seconds: float = 30.0
    notification_sink_url: Optional[str] = None
    ui_dir: Optional[str] = None


def parse_config(text: str) -> ServiceConfig:
    config = ServiceConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigInvalid(f"line {lineno}: expected key = value, got {line!r}")
        key = key.strip()
        value = value.strip()
        if key == "storage_path":
            config.storage_path = value
        elif key == "bind_address":
            host, sep, port = value.rpartition(":")
            if not sep:
                raise ConfigInvalid(f"line {lineno}: bind_address needs host:port")
            try:
                config.bind_port = int(port)
            except ValueError:
                raise ConfigInvalid(f"line {lineno}: port {port!r} is not a number") from None
            config.bind_host = host
        elif key == "token_secret":
            config.token_secret = value or None
        elif key == "set_timeout_seconds":
            try:
                config.set_timeout_seconds = float(value)
            except ValueError:
                raise ConfigInvalid(f"line {lineno}: {value!r} is not a number") from None
            if config.set_timeout_seconds <= 0:
                raise ConfigInvalid(f"line {lineno}: timeout must be positive")
        elif key == "notification_sink_url":
            config.notification_sink_url = value or None
        elif key == "ui_dir":
            config.ui_dir = value or None
        else:
            raise ConfigInvalid(f"line {lineno}: unknown key {key!r}")
    return config


def load_config(path: str | Path) -> ServiceConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def render_config(config: ServiceConfig) -> str:
    lines = [
        f"storage_path = {config.storage_path}",
        f"bind_address = {config.bind_host}:{config.bind_port}",
        f"set_timeout_seconds = {config.set_timeout_seconds:g}",
    ]
    if config.token_secret:
        lines.append(f"token_secret = {config.token_secret}")
    if config.notification_sink_url:
        lines.append(f"notification_sink_url = {config.notification_sink_url}")
    if config.ui_dir:
        lines.append(f"ui_dir = {config.ui_dir}")
    return "\n".join(lines) + "\n"
