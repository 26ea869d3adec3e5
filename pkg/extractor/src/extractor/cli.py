"""Command-line entry point: `extract --manifest raw.ndjson --out DIR`."""

import argparse
import json
import logging
import sys

from . import encoders, jobs
from .errors import ExtractorError

log = logging.getLogger("extractor")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="extract",
        description="Convert raw micro-video media into MVFB feature bundles")
    p.add_argument("--manifest", required=True,
                   help="NDJSON rows: video_id, video, audio?, caption?")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--lock", default=None,
                   help="encoder lockfile (default: packaged pin)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel extraction jobs (default 1)")
    p.add_argument("--report", default=None,
                   help="write per-job NDJSON results here (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        enc = encoders.build_encoders(encoders.load_lock(args.lock))
        batch = jobs.jobs_from_manifest(args.manifest, args.out)
        results = jobs.run_batch(batch, enc, workers=args.workers)
    except ExtractorError as exc:
        log.error("%s", exc)
        return 1
    lines = "".join(json.dumps(r.as_dict()) + "\n" for r in results)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as f:
            f.write(lines)
    else:
        sys.stdout.write(lines)
    failed = sum(r.status != "ok" for r in results)
    if failed:
        log.warning("%d/%d jobs failed", failed, len(results))
    return 0 if failed == 0 else 2


if __name__ == "__main__":
    raise SystemExit(main())
