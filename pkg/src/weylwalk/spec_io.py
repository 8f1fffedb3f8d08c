"""
Walk files (JSON, format 'weylwalk/1'), CSV tables and TOML study files.
"""
import csv
import io
import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Protocol, Tuple, Union

import numpy as np
import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .evolve import StudyConfig
from .exceptions import StructuralError, WalkFileError
from .utils import format_float
from .walk import MAX_SHIFT, LatticeScale, WalkSpec

logger = logging.getLogger(__name__)

FORMAT_VERSION = "weylwalk/1"
MAX_DIM = 64

Shift = Annotated[int, Field(ge=-MAX_SHIFT, le=MAX_SHIFT)]


class ScaleEntry(BaseModel):
    a : float = Field(..., gt=0, allow_inf_nan=False)
    dt : float = Field(..., gt=0, allow_inf_nan=False)

    model_config = ConfigDict(extra="forbid")


class CoinEntry(BaseModel):
    """
    Attributes:
        q (List[int]): Displacement vector, each component within +-2**31.
        matrix (List[List[Tuple[float, float]]]): Row-major k x k entries as [re, im] pairs.
    """
    q : List[Shift] = Field(..., min_length=1)
    matrix : List[List[Tuple[float, float]]] = Field(..., min_length=1)

    model_config = ConfigDict(extra="forbid", strict=False)


class WalkFile(BaseModel):
    """
    On-disk walk definition.

    Attributes:
        version (str): Always 'weylwalk/1'.
        d (int): Spatial dimension.
        k (int): Internal dimension.
        scale (ScaleEntry): Lattice spacing and timestep.
        coins (List[CoinEntry]): Nonempty list of coins with unique q.
        name (str, optional): Label.
    """
    version : str
    d : int = Field(..., ge=1, le=MAX_DIM)
    k : int = Field(..., ge=1, le=MAX_DIM)
    scale : ScaleEntry
    coins : List[CoinEntry] = Field(..., min_length=1)
    name : Optional[str] = None

    model_config = ConfigDict(extra="forbid")


def _path(loc: Tuple[Union[str, int], ...]) -> str:
    text = ""
    for part in loc:
        text += f"[{part}]" if isinstance(part, int) else (f".{part}" if text else str(part))
    return text or "$"


def _check_shapes(walk_file: WalkFile) -> None:
    seen: Dict[Tuple[int, ...], int] = {}
    for i, coin in enumerate(walk_file.coins):
        if len(coin.q) != walk_file.d:
            raise WalkFileError("shape_mismatch", f"coins[{i}].q",
                                f"displacement has {len(coin.q)} components, expected d={walk_file.d}")
        if len(coin.matrix) != walk_file.k:
            raise WalkFileError("shape_mismatch", f"coins[{i}].matrix",
                                f"matrix has {len(coin.matrix)} rows, expected k={walk_file.k}")
        for r, row in enumerate(coin.matrix):
            if len(row) != walk_file.k:
                raise WalkFileError("shape_mismatch", f"coins[{i}].matrix[{r}]",
                                    f"row has {len(row)} entries, expected k={walk_file.k}")
        key = tuple(coin.q)
        if key in seen:
            raise WalkFileError("duplicate_q", f"coins[{i}].q",
                                f"displacement {list(key)} already defined by coins[{seen[key]}]")
        seen[key] = i


def parse_walk(text: Union[str, bytes]) -> WalkSpec:
    """
    Parses a walk file into a structurally valid WalkSpec.

    Unitarity is not checked here.

    Raises:
        WalkFileError: For any defect in the input; never anything else.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            raise WalkFileError("encoding", "$", f"input is not UTF-8 ({e.reason} at byte {e.start})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise WalkFileError("malformed_json", f"line {e.lineno} column {e.colno}", e.msg) from None
    except (RecursionError, ValueError) as e:
        raise WalkFileError("malformed_json", "$", str(e)) from None

    if not isinstance(data, dict):
        raise WalkFileError("invalid_field", "$", "top level must be a JSON object")
    version = data.get("version")
    if version != FORMAT_VERSION:
        raise WalkFileError("unknown_version", "version", f"expected '{FORMAT_VERSION}', got {version!r}")

    try:
        walk_file = WalkFile.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        raise WalkFileError("invalid_field", _path(error["loc"]), error["msg"]) from None
    except (OverflowError, ValueError) as e:
        raise WalkFileError("invalid_field", "coins", str(e)) from None
    _check_shapes(walk_file)

    try:
        coins = {
            tuple(coin.q): np.array([[complex(re, im) for re, im in row] for row in coin.matrix])
            for coin in walk_file.coins
        }
        return WalkSpec(
            d=walk_file.d,
            k=walk_file.k,
            coins=coins,
            scale=LatticeScale(a=walk_file.scale.a, dt=walk_file.scale.dt),
            name=walk_file.name,
        )
    except (StructuralError, ValidationError, ValueError, OverflowError) as e:
        raise WalkFileError("invalid_field", "coins", str(e)) from None


def serialize_walk(spec: WalkSpec) -> str:
    """Inverse of ``parse_walk``; floats are written with round-trip precision."""
    document: Dict[str, Any] = {
        "version": FORMAT_VERSION,
        "name": spec.name,
        "d": spec.d,
        "k": spec.k,
        "scale": {"a": spec.scale.a, "dt": spec.scale.dt},
        "coins": [
            {
                "q": [int(x) for x in q],
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in matrix],
            }
            for q, matrix in spec.coins.items()
        ],
    }
    if spec.name is None:
        del document["name"]
    return json.dumps(document, indent=2) + "\n"


def read_walk(path: Union[str, Path]) -> WalkSpec:
    with open(path, "rb") as f:
        return parse_walk(f.read())


def write_walk(spec: WalkSpec, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_walk(spec))


class CsvTable(Protocol):
    def csv_header(self) -> List[str]: ...
    def csv_rows(self) -> List[list]: ...


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def emit_csv(table: CsvTable) -> str:
    """
    RFC 4180 CSV with a header row; floats carry 17 significant digits.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(table.csv_header())
    for row in table.csv_rows():
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def write_csv(table: CsvTable, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(emit_csv(table))


def load_study_config(path: Union[str, Path]) -> StudyConfig:
    """
    Loads a StudyConfig from TOML. A [study] table is used if present,
    otherwise the whole document.
    """
    with open(path, "rb") as f:
        config = tomllib.load(f)
    return StudyConfig.model_validate(config.get("study", config))


def default_study(name: str) -> StudyConfig:
    """Loads one of the study files shipped in ``weylwalk/default_studies``."""
    path = Path(__file__).parent / "default_studies" / f"{name}.toml"
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.toml"))
        raise KeyError(f"No default study '{name}'. Available: {', '.join(available)}")
    return load_study_config(path)


def write_study_summary(path: Union[str, Path], summary: Dict[str, Any]) -> None:
    """Writes a study summary as TOML, dropping None values (TOML has no null)."""
    cleaned = {key: value for key, value in summary.items() if value is not None}
    with open(path, "wb") as f:
        tomli_w.dump(cleaned, f)
