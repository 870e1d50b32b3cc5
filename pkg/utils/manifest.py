"""
Provenance record written next to every report.
"""
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

from config.config import TOOL_VERSION

logger = logging.getLogger('polyplab')

MANIFEST_NAME = 'manifest.json'


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            sha.update(chunk)
    return f"sha256:{sha.hexdigest()}"


@dataclass
class RunManifest:
    command: str
    config: dict = field(default_factory=dict)
    input_digests: dict = field(default_factory=dict)
    tool_version: str = TOOL_VERSION
    seed: Optional[int] = None
    outputs: list = field(default_factory=list)

    def add_input(self, path: str):
        self.input_digests[os.path.basename(path)] = file_digest(path)

    def add_output(self, path: str):
        self.outputs.append(os.path.basename(path))

    def dumps(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + '\n'

    def write(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(self.dumps())
        logger.info(f"Wrote manifest to {path}")
        return path
