"""Command-line entry point.

    uads index|features|corpora|umap|metrics|plots|all --config FILE
    uads synth --out DIR [--devices N ...] [--emit-config FILE]
    uads export --config FILE --out DIR [--ui DIR]
    uads serve --bundle DIR [--bind HOST:PORT]

Exit codes: 0 ok, 1 configuration/validation error, 2 runtime error.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .dataset import LAYOUT_BASENAME, SynthSpec, synth_dataset
from .errors import ConfigError, UadsError
from .pipeline import STAGES, Pipeline

log = logging.getLogger(__name__)

_SYNTH_CONFIG_TEMPLATE = """\
[dataset]
root = {root}
layout = {layout}

[features]
window = 1024
hop = 512
n_mels = 128

[stacks]
sizes = 1,5,10

[sampling.device]
validation_cap = 400
other_cap = 400

[sampling.global]
validation_cap = 200
other_cap = 100

[umap]
k_neighbors = 15
epochs = 200

[output]
cache_dir = {cache_dir}
output_dir = {output_dir}

[runtime]
seed = {seed}
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uads", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for stage in (*STAGES, "all"):
        sp = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "all" else "run every stage")
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--deterministic", action="store_true", default=None)

    sp = sub.add_parser("synth", help="generate a synthetic desk-scale corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--devices", type=int, default=2)
    sp.add_argument("--sections", type=int, default=2)
    sp.add_argument("--clips-per-split", type=int, default=6)
    sp.add_argument("--clip-seconds", type=float, default=2.0)
    sp.add_argument("--anomaly", default="click_train", choices=["click_train", "noise_burst", "detune"])
    sp.add_argument("--domain-shift", default="pitch_shift", choices=["pitch_shift", "noise_floor"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--emit-config", default=None, help="also write a ready-to-run config file")

    sp = sub.add_parser("export", help="export the static viewer bundle")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ui", default=None, help="built frontend directory to bundle")

    sp = sub.add_parser("serve", help="serve a viewer bundle")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--bind", default=os.environ.get("UADS_BIND", "127.0.0.1:8787"))
    return parser


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        devices=args.devices,
        sections=args.sections,
        clips_per_split=args.clips_per_split,
        clip_seconds=args.clip_seconds,
        anomaly_kind=args.anomaly,
        domain_shift=args.domain_shift,
        seed=args.seed,
    )
    index = synth_dataset(spec, args.out)
    print(f"wrote {len(index)} clips under {args.out}")
    if args.emit_config:
        out = Path(args.out).resolve()
        cfg_path = Path(args.emit_config)
        cfg_path.parent.mkdir(parents=True, exist_ok=True)
        cfg_path.write_text(
            _SYNTH_CONFIG_TEMPLATE.format(
                root=out,
                layout=out / LAYOUT_BASENAME,
                cache_dir=out.parent / "cache",
                output_dir=out.parent / "out",
                seed=args.seed,
            )
        )
        print(f"wrote config {cfg_path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--bind must look like HOST:PORT, got {args.bind!r}")
    app = create_app(args.bundle)
    uvicorn.run(app, host=host, port=int(port), log_level="info")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "serve":
            return _cmd_serve(args)
        if args.command == "export":
            cfg = load_config(args.config)
            Pipeline(cfg).export_viewer_bundle(Path(args.out), ui_dir=Path(args.ui) if args.ui else None)
            print(f"bundle written to {args.out}")
            return 0
        cfg = load_config(
            args.config, seed=args.seed, threads=args.threads, deterministic=args.deterministic
        )
        Pipeline(cfg).run(args.command)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except UadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 2


if __name__ == "__main__":
    sys.exit(main())
