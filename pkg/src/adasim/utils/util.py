import logging
from typing import Dict

import yaml

from adasim.errors import ValidationError


def set_up_logging(level: int = logging.INFO) -> None:
    logging.basicConfig(
        level=level,
        format='%(levelname)s:   %(name)s   %(message)s',
        force=True,
    )

    # FILTER - WHAT NOT TO LOG
    class WorkerFilter(logging.Filter):
        """A filter to not process records from parallel worker plumbing."""

        namespaces_to_exclude: list[str] = [
            "joblib",
            "loky",
        ]

        def filter(self, record):
            return not any([record.name.startswith(namespace) for namespace in self.namespaces_to_exclude])

    for handler in logging.getLogger().handlers:
        handler.addFilter(WorkerFilter())

    logging.getLogger('joblib').setLevel(logging.WARNING)
    logging.getLogger('loky').setLevel(logging.WARNING)


def load_yaml_config(path: str) -> Dict:
    """Load a YAML mapping of options; an empty file yields an empty mapping"""
    with open(path, 'r', encoding='utf-8') as file:
        try:
            data = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ValidationError(f"{path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValidationError(f"{path} must contain a YAML mapping")
    return data
