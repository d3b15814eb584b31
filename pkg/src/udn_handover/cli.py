"""Command-line client.

Every computing subcommand is a request to the HTTP service: by default the
app runs in-process, and ``--server URL`` sends the same requests to a
running ``udn-handover serve``.  ``plot-script`` only rewrites a local CSV
into a script and needs no service.

Exit codes: 0 ok, 1 validation failed, 2 configuration or input error.
"""
from __future__ import annotations

import argparse
import asyncio
import sys
from pathlib import Path

import httpx

from .experiments import PlotScriptError, emit_plot_script
from .model import ConfigError, DEFAULT_CONFIG_PATH, tomllib

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

PRESETS = {
    "fig3": {"variable": "user_height", "start": 0.0, "stop": 60.0, "points": 25, "tier": 1, "families": []},
    "fig4": {"variable": "tier_intensity", "start": 10.0, "stop": 100.0, "points": 10, "tier": 1,
             "families": [0.0, 6.0], "family_tier": 1},
}


def u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("need at least 2")
    return value


def non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def tier_ref(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def _common(p: argparse.ArgumentParser, mc_default: bool) -> None:
    p.add_argument("--config", type=Path, help="scenario TOML (default: shipped reference scenario)")
    p.add_argument("--seed", type=u64, help="master RNG seed (unsigned 64-bit)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--mc", action=argparse.BooleanOptionalAction, default=mc_default,
                   help=f"run the simulator as well (default: {'on' if mc_default else 'off'})")
    p.add_argument("--realizations", type=positive_int, help="simulation realizations per point")
    p.add_argument("--traj-km", type=non_negative, help="trajectory length per realization in km")
    p.add_argument("--server", help="base URL of a running service; default runs it in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="udn-handover", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a parameter sweep and write a CSV")
    _common(p, mc_default=False)
    p.add_argument("--preset", choices=sorted(PRESETS), default="fig3",
                   help="fig3: user height 0-60 m; fig4: small-cell intensity 10-100/km^2 at 0 and 6 dB bias")
    p.add_argument("--variable", choices=["user_height", "tier_intensity", "bias_db"])
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--points", type=int)
    p.add_argument("--tier", type=tier_ref, help="tier index or id for intensity/bias sweeps")
    p.add_argument("--family-bias-db", type=float, nargs="*", help="bias families (dB) for --family-tier")
    p.add_argument("--family-tier", type=tier_ref)
    p.add_argument("--events", action="store_true", help="also dump raw crossing events per simulated point")

    p = sub.add_parser("validate", help="compare the analytical engine with closed forms and simulation")
    _common(p, mc_default=True)
    p.add_argument("--rel-tol", type=float, default=0.05, help="relative tolerance (default 0.05)")
    p.add_argument("--mutate-beta", type=float, help=argparse.SUPPRESS)

    p = sub.add_parser("plot-script", help="write a matplotlib script for a sweep CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--out", type=Path, help="directory for the script (default: next to the CSV)")

    p = sub.add_parser("dump-config", help="print or write the effective scenario TOML")
    _common(p, mc_default=False)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def load_raw(args) -> dict:
    path = args.config or DEFAULT_CONFIG_PATH
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    if args.seed is not None:
        raw["seed"] = args.seed
    sim = raw.setdefault("sim", {})
    if args.realizations is not None:
        sim["realizations"] = args.realizations
    if args.traj_km is not None:
        sim["trajectory_length_m"] = args.traj_km * 1e3
    return raw


class InProcessClient:
    """Synchronous client that sends requests straight to the ASGI app."""

    def __init__(self):
        from .service import app
        self._transport = httpx.ASGITransport(app=app)

    def request(self, method: str, path: str, json=None) -> httpx.Response:
        async def send():
            async with httpx.AsyncClient(transport=self._transport, base_url="http://in-process",
                                         timeout=None) as client:
                return await client.request(method, path, json=json)
        return asyncio.run(send())

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    return InProcessClient()


class InputError(Exception):
    """The service rejected the request as invalid input (HTTP 422)."""


def call(client, method: str, path: str, payload=None) -> dict:
    resp = client.request(method, path, json=payload)
    if resp.status_code == 422:
        details = resp.json().get("detail", [])
        msgs = [f"{d.get('field') or '.'.join(str(x) for x in d.get('loc', []) if x != 'body')}: {d.get('msg')}"
                for d in details]
        raise InputError("; ".join(msgs) or resp.text)
    resp.raise_for_status()
    return resp.json()


def out_dir(args) -> Path:
    path = args.out or Path(".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_sweep(args, client) -> int:
    req = dict(PRESETS[args.preset])
    for key in ("variable", "start", "stop", "points", "tier", "family_tier"):
        value = getattr(args, key)
        if value is not None:
            req[key] = value
    if args.family_bias_db is not None:
        req["families"] = args.family_bias_db
    if args.variable and args.variable != PRESETS[args.preset]["variable"] and args.family_bias_db is None:
        req["families"] = []
    req.update(config=load_raw(args), simulate=args.mc, events=args.events and args.mc)
    res = call(client, "POST", "/sweep", req)
    base = out_dir(args)
    name = args.preset if args.variable is None else req["variable"]
    path = base / f"sweep_{name}.csv"
    write_text(path, res["csv"])
    for ev in res["events"]:
        write_text(base / ev["name"], ev["csv"])
    print(f"wrote {path} ({len(res['csv'].splitlines()) - 1} rows)")
    if res["failed_points"]:
        print(f"warning: {res['failed_points']} point(s) failed, see the error column", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args, client) -> int:
    req = {"config": load_raw(args), "simulate": args.mc, "tolerances": {"rel": args.rel_tol}}
    if args.mutate_beta is not None:
        req["mutate_beta"] = args.mutate_beta
    res = call(client, "POST", "/validate", req)
    print(res["report"], end="")
    if args.out is not None:
        write_text(out_dir(args) / "validation.csv", res["csv"])
    return EXIT_OK if res["status"] == 0 else EXIT_FAIL


def cmd_dump_config(args, client) -> int:
    res = call(client, "POST", "/config/normalize", load_raw(args))
    if args.out is None:
        print(res["toml"], end="")
    else:
        path = out_dir(args) / "config.toml"
        write_text(path, res["toml"])
        print(f"wrote {path}")
    return EXIT_OK


def cmd_plot_script(args) -> int:
    target = None
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        target = args.out / (args.csv.stem + "_plot.py")
    path = emit_plot_script(args.csv, target)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("udn_handover.service:app", host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {"sweep": cmd_sweep, "validate": cmd_validate, "dump-config": cmd_dump_config}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot-script":
            return cmd_plot_script(args)
        if args.command == "serve":
            return cmd_serve(args)
        with make_client(args.server) as client:
            return COMMANDS[args.command](args, client)
    except (ConfigError, InputError, PlotScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except httpx.HTTPError as exc:
        print(f"error: service request failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
