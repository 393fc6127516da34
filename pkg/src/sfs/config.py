"""Flat ``key = value`` configuration files for server and client.

The format is deliberately tiny: UTF-8 text, one assignment per line,
``#`` comments, blank lines ignored.  No sections, no interpolation.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .dn import DistinguishedName, parse_dn
from .errors import SfsError

DEFAULT_BASE_DN = "dc=sfs,dc=local"
DEFAULT_CLIENT_CONFIG = Path.home() / ".sfs" / "config"


class ConfigError(SfsError):
    code = "CONFIG_INVALID"


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def load_config_file(path: Path | str) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _existing_path(values: dict[str, str], key: str) -> Path:
    raw = values.get(key)
    if not raw:
        raise ConfigError(f"missing required config key {key!r}")
    path = Path(raw).expanduser()
    if not path.exists():
        raise ConfigError(f"{key} = {raw}: path does not exist")
    return path


@dataclass(frozen=True)
class ServerConfig:
    listen_host: str
    listen_port: int
    ca_cert: Path
    ca_key: Path
    server_cert: Path
    server_key: Path
    directory_path: Path
    store_path: Path
    max_upload_bytes: int
    base_dn: DistinguishedName
    ui_path: Path | None = None

    @classmethod
    def from_values(cls, values: dict[str, str]) -> ServerConfig:
        port_raw = values.get("listen.port", "8443")
        try:
            port = int(port_raw)
        except ValueError:
            raise ConfigError(f"listen.port = {port_raw!r}: not an integer") from None
        if not 1 <= port <= 65535:
            raise ConfigError(f"listen.port = {port}: out of range 1-65535")
        max_raw = values.get("max_upload_bytes", str(256 * 1024 * 1024))
        try:
            max_upload = int(max_raw)
        except ValueError:
            raise ConfigError(f"max_upload_bytes = {max_raw!r}: not an integer") from None
        if max_upload <= 0:
            raise ConfigError("max_upload_bytes must be positive")
        ui_raw = values.get("ui.path")
        ui_path = Path(ui_raw).expanduser() if ui_raw else None
        if ui_path is not None and not ui_path.is_dir():
            raise ConfigError(f"ui.path = {ui_raw}: not a directory")
        for key in ("directory.path", "store.path"):
            if not values.get(key):
                raise ConfigError(f"missing required config key {key!r}")
        return cls(
            listen_host=values.get("listen.host", "127.0.0.1"),
            listen_port=port,
            ca_cert=_existing_path(values, "ca_cert"),
            ca_key=_existing_path(values, "ca_key"),
            server_cert=_existing_path(values, "server_cert"),
            server_key=_existing_path(values, "server_key"),
            directory_path=Path(values["directory.path"]).expanduser(),
            store_path=Path(values["store.path"]).expanduser(),
            max_upload_bytes=max_upload,
            base_dn=parse_dn(values.get("base_dn", DEFAULT_BASE_DN)),
            ui_path=ui_path,
        )

    @classmethod
    def load(cls, explicit_path: str | None = None) -> ServerConfig:
        path = explicit_path or os.environ.get("SFS_CONFIG")
        if not path:
            raise ConfigError("no config file: pass --config or set SFS_CONFIG")
        return cls.from_values(load_config_file(path))


@dataclass(frozen=True)
class ClientConfig:
    server: str
    ca_cert: Path
    client_cert: Path | None
    client_key: Path | None
    output: str = "table"

    @classmethod
    def resolve(
        cls,
        flags: dict[str, str | None],
        env: dict[str, str] | None = None,
        config_path: Path | str | None = None,
    ) -> ClientConfig:
        """Merge flag > environment > config-file layers for each setting."""
        env = os.environ if env is None else env
        file_values: dict[str, str] = {}
        path = Path(config_path) if config_path else DEFAULT_CLIENT_CONFIG
        if flags.get("config"):
            file_values = load_config_file(flags["config"])
        elif path.exists():
            file_values = load_config_file(path)

        def pick(flag: str, env_key: str, file_key: str) -> str | None:
            if flags.get(flag):
                return flags[flag]
            if env.get(env_key):
                return env[env_key]
            return file_values.get(file_key)

        server = pick("server", "SFS_SERVER", "server")
        if not server:
            raise ConfigError(
                "no server URL: pass --server, set SFS_SERVER, or add 'server' to the config file"
            )
        ca = pick("ca", "SFS_CA", "ca_cert")
        if not ca:
            raise ConfigError(
                "no CA bundle: pass --ca, set SFS_CA, or add 'ca_cert' to the config file"
            )
        ca_path = Path(ca).expanduser()
        if not ca_path.exists():
            raise ConfigError(f"CA bundle {ca} does not exist")
        cert = pick("cert", "SFS_CERT", "client_cert")
        key = pick("key", "SFS_KEY", "client_key")
        cert_path = Path(cert).expanduser() if cert else None
        key_path = Path(key).expanduser() if key else None
        if (cert_path is None) != (key_path is None):
            raise ConfigError("client certificate and key must be given together")
        for p, label in ((cert_path, "client certificate"), (key_path, "client key")):
            if p is not None and not p.exists():
                raise ConfigError(f"{label} {p} does not exist")
        return cls(
            server=server.rstrip("/"),
            ca_cert=ca_path,
            client_cert=cert_path,
            client_key=key_path,
            output=file_values.get("output", "table"),
        )
