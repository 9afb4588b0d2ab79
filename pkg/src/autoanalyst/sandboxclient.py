"""Client side of the script-execution sandbox wire protocol.

The sandbox runner is a separate process (separate package, any
runtime): one JSON job on its stdin, one JSON result on its stdout,
exit code 0 whenever the protocol completed regardless of how the
script fared. Script outcomes travel in the result's status field.
"""

from __future__ import annotations

import base64
import json
import subprocess
from dataclasses import dataclass

from .errors import SandboxSpawnError

DEFAULT_TIMEOUT_S = 60
DEFAULT_MEMORY_MB = 512
# extra wall time granted to the runner process beyond the script budget
PROTOCOL_GRACE_S = 30

STATUSES = ("ok", "timeout", "killed_memory", "script_error", "missing_outputs")


@dataclass
class SandboxResult:
    status: str
    stdout: str
    stderr: str
    wall_time_s: float
    data_txt: bytes | None = None
    figure: bytes | None = None


class SandboxClient:
    """Spawns one runner process per job and speaks the stdio protocol."""

    def __init__(self, runner_cmd: list[str]):
        if not runner_cmd:
            raise ValueError("runner_cmd must name an executable")
        self.runner_cmd = list(runner_cmd)

    def run_script(
        self,
        script: str,
        db_file: str,
        db_alias: str,
        timeout_s: int = DEFAULT_TIMEOUT_S,
        memory_mb: int = DEFAULT_MEMORY_MB,
    ) -> SandboxResult:
        job = json.dumps(
            {
                "script": script,
                "db_file": db_file,
                "db_alias": db_alias,
                "timeout_s": timeout_s,
                "memory_mb": memory_mb,
            }
        )
        try:
            proc = subprocess.run(
                self.runner_cmd,
                input=job.encode("utf-8"),
                capture_output=True,
                timeout=timeout_s + PROTOCOL_GRACE_S,
            )
        except FileNotFoundError as exc:
            raise SandboxSpawnError(f"runner not found: {exc}") from exc
        except PermissionError as exc:
            raise SandboxSpawnError(f"runner not executable: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SandboxSpawnError("runner did not answer within grace period") from exc
        if proc.returncode != 0:
            raise SandboxSpawnError(
                f"runner exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:500]}"
            )
        try:
            raw = json.loads(proc.stdout.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SandboxSpawnError(f"runner spoke bad JSON: {exc}") from exc
        status = raw.get("status")
        if status not in STATUSES:
            raise SandboxSpawnError(f"runner reported unknown status {status!r}")
        return SandboxResult(
            status=status,
            stdout=str(raw.get("stdout", "")),
            stderr=str(raw.get("stderr", "")),
            wall_time_s=float(raw.get("wall_time_s", 0.0)),
            data_txt=_maybe_b64(raw.get("data_txt_b64")),
            figure=_maybe_b64(raw.get("figure_b64")),
        )


def _maybe_b64(value) -> bytes | None:
    if value is None:
        return None
    return base64.b64decode(value)
