from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union
import json

from pydantic import BaseModel

from priormix.core.config import settings

DocumentT = TypeVar("DocumentT", bound=BaseModel)


def _merge(data: Dict[str, Any], updates: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in updates.items():
        if value is None:
            continue
        if isinstance(value, dict):
            _merge(data.setdefault(key, {}), value)
        else:
            data[key] = value
    return data


def load_document(path: Union[str, Path], model: Type[DocumentT], **overrides: Any) -> DocumentT:
    """Parse a JSON experiment document with env and flag overrides merged in before validation.

    PRIORMIX_SEED beats the document's base_seed; flags (non-None overrides) beat both.
    Dict-valued overrides are merged into the matching nested object.
    """
    data = json.loads(Path(path).read_text())
    if settings.SEED is not None:
        data["base_seed"] = settings.SEED
    return model.model_validate(_merge(data, overrides))
