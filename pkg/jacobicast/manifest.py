import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

logger = logging.getLogger("jacobicast.manifest")

MANIFEST_SUFFIX = ".manifest.json"


def file_digest(path: Union[str, Path]) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def with_seed(argv: List[str], seed: int) -> List[str]:
    """`argv` with its --seed option set to `seed`, appended when absent"""
    out = list(argv)
    for i, arg in enumerate(out):
        if arg == "--seed" and i + 1 < len(out):
            out[i + 1] = str(seed)
            return out
        if arg.startswith("--seed="):
            out[i] = f"--seed={seed}"
            return out
    return out + ["--seed", str(seed)]


class RunManifest:
    """Record of one CLI invocation: enough to re-run it and check the outputs.

    Started when a command begins, outputs are registered as they are
    written, and `finish()` stamps the wall time and writes the JSON file
    next to the primary output.
    """

    def __init__(self, command: str, config: Dict[str, Any], argv: Optional[List[str]] = None):
        from . import __version__
        self.command = command
        self.config = dict(config)
        self.argv = list(argv if argv is not None else sys.argv[1:])
        self.version = __version__
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}
        self.seed: Optional[int] = config.get("seed")
        self.wall_time: Optional[float] = None
        self._started = time.perf_counter()

    def add_input(self, path: Union[str, Path]) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: Union[str, Path]) -> None:
        self.outputs[str(path)] = file_digest(path)

    def record_seed(self, seed: Optional[int]) -> None:
        """Record the effective seed, also in `argv` so the recorded arguments replay the run"""
        if seed is None:
            return
        self.seed = int(seed)
        self.config["seed"] = self.seed
        self.argv = with_seed(self.argv, self.seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "argv": self.argv,
            "version": self.version,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "wall_time": self.wall_time,
        }

    def finish(self, path: Union[str, Path]) -> Path:
        self.wall_time = round(time.perf_counter() - self._started, 3)
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        logger.info("wrote manifest %s (%d outputs)", path, len(self.outputs))
        return path

    @staticmethod
    def path_for(output: Union[str, Path]) -> Path:
        output = Path(output)
        return output.with_name(output.stem + MANIFEST_SUFFIX)

    @classmethod
    def load(cls, path: Union[str, Path]) -> Dict[str, Any]:
        return json.loads(Path(path).read_text(encoding="utf-8"))


def verify_outputs(manifest: Dict[str, Any]) -> Dict[str, bool]:
    """For each output recorded in a loaded manifest, whether the file on disk still has the recorded digest"""
    result = {}
    for path, digest in manifest.get("outputs", {}).items():
        result[path] = Path(path).is_file() and file_digest(path) == digest
    return result
