"""Command-line client for the simulator service.

The CLI is a thin client: every subcommand posts to the HTTP service and
renders the response. By default the service runs in-process (no socket);
--server points at a remote instance instead. Scenario and program files are
read client-side and shipped in the request, so remote runs see the same
inputs as local ones.
"""

from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path
from typing import Optional

import httpx
import yaml


class CliError(Exception):
    pass


def _client(server: Optional[str]) -> httpx.AsyncClient:
    if server:
        return httpx.AsyncClient(base_url=server, timeout=60.0)
    from .service.app import app

    return httpx.AsyncClient(transport=httpx.ASGITransport(app=app),
                             base_url="http://qcluster.local", timeout=None)


def _post(server: Optional[str], path: str, payload: dict) -> dict:
    async def go():
        async with _client(server) as client:
            response = await client.post(path, json=payload)
            if response.status_code != 200:
                try:
                    detail = response.json().get("detail", response.text)
                except ValueError:
                    detail = response.text
                raise CliError(f"{path} failed ({response.status_code}): {detail}")
            return response.json()

    return asyncio.run(go())


def _sidecar_program(scenario_path: Path, scenario_text: str) -> Optional[str]:
    # the service cannot see client files; resolve the program reference here
    try:
        raw = yaml.safe_load(scenario_text)
    except yaml.YAMLError:
        return None  # let the service report the parse error
    if not isinstance(raw, dict):
        return None
    rel = raw.get("program")
    if not isinstance(rel, str):
        return None
    path = scenario_path.parent / rel
    try:
        return path.read_text()
    except OSError as exc:
        raise CliError(f"program: cannot read {rel!r}: {exc}") from exc


def _scenario_payload(args) -> dict:
    path = Path(args.scenario)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError(f"scenario: cannot read {path}: {exc}") from exc
    payload = {"scenario_yaml": text,
               "program_text": _sidecar_program(path, text)}
    if getattr(args, "seed", None) is not None:
        payload["seed"] = args.seed
    return payload


def cmd_run(args) -> int:
    payload = _scenario_payload(args)
    if args.until is not None:
        payload["until"] = args.until
    result = _post(args.server, "/run", payload)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "trace.jsonl").write_text(result["trace_jsonl"])
    (outdir / "pulses.csv").write_text(result["pulses_csv"])
    (outdir / "report.txt").write_text(result["report_txt"])
    sys.stdout.write(result["report_txt"])
    sys.stdout.write(f"artifacts written to {outdir}/\n")
    return 0


def cmd_sync_check(args) -> int:
    result = _post(args.server, "/sync-check", _scenario_payload(args))
    sys.stdout.write(result["report_txt"])
    return 0


def cmd_throughput(args) -> int:
    payload = {"scenario_yaml": "", "program_text": None}
    if args.scenario is not None:
        payload = _scenario_payload(args)
    result = _post(args.server, "/throughput", payload)
    sys.stdout.write(result["report_txt"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcluster",
        description="Deterministic multi-FPGA control cluster simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario and write trace/pulses/report")
    p.add_argument("scenario", help="path to a .scenario file")
    p.add_argument("--out", default="out", help="artifact directory (default: out)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--until", default=None,
                   help="run horizon as a duration literal, e.g. 2ms")
    p.add_argument("--server", default=None, help="remote service URL")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sync-check", help="run ring synchronization only")
    p.add_argument("scenario", help="path to a .scenario file")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--server", default=None, help="remote service URL")
    p.set_defaults(func=cmd_sync_check)

    p = sub.add_parser("throughput", help="print exact lane throughput accounting")
    p.add_argument("scenario", nargs="?", default=None,
                   help="optional .scenario file with lane parameters")
    p.add_argument("--server", default=None, help="remote service URL")
    p.set_defaults(func=cmd_throughput)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
