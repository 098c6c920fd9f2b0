"""
GPX ingestion and the JSONL interchange format.

GPX 1.1 files are parsed with gpxpy; each <trkseg> becomes its own
Trajectory. The interchange format is one JSON object per line:
{"id": str, "points": [[lng, lat, t], ...], "meta": {...}}.
"""

import io
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Any, Dict, List, Optional, Tuple, Union

import gpxpy
import gpxpy.gpx

from trajforge.errors import (DataIOError, InvalidTrajectory, MalformedXml, NoUsablePoints,
                              SchemaViolation)
from trajforge.geo import is_valid_coordinate
from trajforge.trajectory import Trajectory, TrajectoryDataset
from trajforge.utils import round_coord

logger = logging.getLogger(__name__)

PathOrFile = Union[str, Path, IO[str]]


@dataclass
class IngestStats:
    """Counters collected while parsing GPX input."""

    files: int = 0
    failed_files: int = 0
    trajectories: int = 0
    points_in: int = 0
    dropped: Counter = field(default_factory=Counter)

    @property
    def dropped_points(self) -> int:
        return sum(self.dropped.values())

    def merge(self, other: "IngestStats") -> None:
        self.files += other.files
        self.failed_files += other.failed_files
        self.trajectories += other.trajectories
        self.points_in += other.points_in
        self.dropped.update(other.dropped)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "files": self.files,
            "failed_files": self.failed_files,
            "trajectories": self.trajectories,
            "points_in": self.points_in,
            "dropped_points": self.dropped_points,
            "dropped_by_reason": dict(sorted(self.dropped.items())),
        }


def _epoch_seconds(when: datetime) -> float:
    if when.tzinfo is None:
        when = when.replace(tzinfo=timezone.utc)
    return when.timestamp()


def parse_gpx(data: Union[bytes, str], source: str = "gpx",
              stats: Optional[IngestStats] = None) -> List[Trajectory]:
    """
    Parse a GPX document into trajectories, one per track segment.

    Points without a time or with out-of-range coordinates are dropped, as are
    points whose timestamp does not increase (identical consecutive points are
    counted as duplicates). Segments left with fewer than two points are
    discarded.

    Args:
        data: Raw GPX bytes or text
        source: Prefix for trajectory ids ("<source>:<track>:<segment>")
        stats: Optional counters to update

    Returns:
        List[Trajectory]: Parsed trajectories in document order

    Raises:
        MalformedXml: when the document cannot be parsed
        NoUsablePoints: when no segment keeps at least two points
    """
    stats = stats if stats is not None else IngestStats()
    text = data.decode("utf-8-sig", errors="replace") if isinstance(data, bytes) else data
    try:
        gpx = gpxpy.parse(text)
    except (gpxpy.gpx.GPXException, ValueError) as e:
        raise MalformedXml(f"{source}: {e}", source=source) from e

    trajectories: List[Trajectory] = []
    for ti, track in enumerate(gpx.tracks):
        meta = {k: v for k, v in (("creator", gpx.creator), ("name", track.name),
                                  ("type", track.type)) if v}
        for si, segment in enumerate(track.segments):
            rows: List[Tuple[float, float, float]] = []
            for point in segment.points:
                stats.points_in += 1
                if point.time is None:
                    stats.dropped["missing_time"] += 1
                    continue
                if not is_valid_coordinate(point.longitude, point.latitude):
                    stats.dropped["out_of_range"] += 1
                    continue
                row = (round_coord(point.longitude), round_coord(point.latitude),
                       _epoch_seconds(point.time))
                if rows and row[2] <= rows[-1][2]:
                    reason = "duplicate" if row == rows[-1] else "non_monotonic"
                    stats.dropped[reason] += 1
                    continue
                rows.append(row)
            if len(rows) < 2:
                stats.dropped["singleton"] += len(rows)
                continue
            trajectories.append(Trajectory(f"{source}:{ti}:{si}", rows, meta))

    if not trajectories:
        raise NoUsablePoints(f"{source}: no track segment with at least two usable points",
                             source=source)
    stats.trajectories += len(trajectories)
    return trajectories


def parse_gpx_file(path: Union[str, Path]) -> Tuple[List[Trajectory], IngestStats]:
    """
    Parse a single GPX file, isolating failures.

    Returns:
        Tuple[List[Trajectory], IngestStats]: (trajectories, stats); the list is
        empty and ``failed_files`` is 1 when the file could not be used
    """
    path = Path(path)
    stats = IngestStats(files=1)
    try:
        trajectories = parse_gpx(path.read_bytes(), source=path.stem, stats=stats)
    except (OSError, MalformedXml, NoUsablePoints) as e:
        logger.warning("Skipping %s: %s", path.name, e)
        stats.failed_files = 1
        return [], stats
    logger.debug("Parsed %s: %d trajectories", path.name, len(trajectories))
    return trajectories, stats


def ingest_directory(gpx_dir: Union[str, Path],
                     workers: int = 1) -> Tuple[TrajectoryDataset, IngestStats]:
    """
    Parse every *.gpx file of a directory.

    Files are processed concurrently when workers > 1; the output order is the
    sorted file order regardless of worker count.

    Raises:
        DataIOError: when the directory cannot be read
    """
    gpx_dir = Path(gpx_dir)
    if not gpx_dir.is_dir():
        raise DataIOError(f"not a readable directory: {gpx_dir}", path=str(gpx_dir))
    try:
        files = sorted(p for p in gpx_dir.iterdir() if p.suffix.lower() == ".gpx")
    except OSError as e:
        raise DataIOError(f"cannot list {gpx_dir}: {e}", path=str(gpx_dir)) from e

    total = IngestStats()
    trajectories: List[Trajectory] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for parsed, stats in pool.map(parse_gpx_file, files):
            trajectories.extend(parsed)
            total.merge(stats)
    return TrajectoryDataset(tuple(trajectories), provenance=str(gpx_dir)), total


def _plain_time(t: float) -> Union[int, float]:
    return int(t) if float(t).is_integer() else float(t)


def trajectory_to_json(traj: Trajectory) -> Dict[str, Any]:
    """Interchange representation of one trajectory."""
    return {
        "id": traj.id,
        "points": [[round_coord(lng), round_coord(lat), _plain_time(t)]
                   for lng, lat, t in traj.data.tolist()],
        "meta": traj.meta,
    }


def write_jsonl(ds: TrajectoryDataset, sink: PathOrFile) -> int:
    """
    Write a dataset as JSONL, one trajectory per line.

    Args:
        ds: Dataset to write
        sink: Path or text file object

    Returns:
        int: Number of lines written
    """
    if isinstance(sink, (str, Path)):
        Path(sink).parent.mkdir(parents=True, exist_ok=True)
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            return write_jsonl(ds, f)
    for traj in ds:
        sink.write(json.dumps(trajectory_to_json(traj), ensure_ascii=False,
                              separators=(",", ":")))
        sink.write("\n")
    return len(ds)


def _trajectory_from_json(obj: Any, line_no: int) -> Trajectory:
    if not isinstance(obj, dict):
        raise SchemaViolation("expected a JSON object", line=line_no)
    for key, kind in (("id", str), ("points", list)):
        if key not in obj:
            raise SchemaViolation(f"missing field {key!r}", line=line_no)
        if not isinstance(obj[key], kind):
            raise SchemaViolation(f"field {key!r} must be {kind.__name__}", line=line_no)
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaViolation("field 'meta' must be an object", line=line_no)
    for point in obj["points"]:
        if (not isinstance(point, list) or len(point) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for v in point)):
            raise SchemaViolation("each point must be [lng, lat, t] numbers", line=line_no)
    try:
        return Trajectory(obj["id"], obj["points"], meta)
    except InvalidTrajectory as e:
        raise SchemaViolation(e.message, line=line_no) from e


def read_jsonl(source: PathOrFile) -> TrajectoryDataset:
    """
    Read a JSONL interchange file.

    Args:
        source: Path or text file object

    Returns:
        TrajectoryDataset: Trajectories in file order

    Raises:
        SchemaViolation: on the first invalid line (1-based line number)
        DataIOError: when the file cannot be opened
    """
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as f:
                ds = read_jsonl(f)
        except OSError as e:
            raise DataIOError(f"cannot read {source}: {e}", path=str(source)) from e
        return TrajectoryDataset(ds.trajectories, provenance=str(source))

    trajectories: List[Trajectory] = []
    seen = set()
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"invalid JSON: {e.msg}", line=line_no) from e
        traj = _trajectory_from_json(obj, line_no)
        if traj.id in seen:
            raise SchemaViolation(f"duplicate id {traj.id!r}", line=line_no)
        seen.add(traj.id)
        trajectories.append(traj)
    return TrajectoryDataset(tuple(trajectories), provenance=getattr(source, "name", "stream"))


def dumps_jsonl(ds: TrajectoryDataset) -> str:
    """JSONL text of a dataset."""
    buffer = io.StringIO()
    write_jsonl(ds, buffer)
    return buffer.getvalue()
