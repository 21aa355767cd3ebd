"""``sepris`` command line.

Exit status: 0 success, 1 a check or threshold failed, 2 bad usage or input.
Anything random needs ``--seed`` (reproducible) or ``--random`` (OS entropy).
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from sepris import __version__, pnm
from sepris._drbg import Drbg, derive
from sepris.codec import DabKeyset, FrameBuffer, decipher_frame, encipher_frame, sprc
from sepris.envelope import generate_keypair, write_keypair
from sepris.errors import SeprisError
from sepris.ledger import Chain, TxKind, chain_transactions, validate_chain
from sepris.metrics import dab_cipher_view, identity_cipher_view, security_report
from sepris.samples import test_image
from sepris.storage import VideoRecord, VideoStore, decode_video

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable input; maps to exit status 2."""


@dataclass
class CliConfig:
    home: Path
    keys_dir: Path
    store_dir: Path
    chain_file: Path
    difficulty_bits: int
    seed: int | None
    output: str

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        home = Path(args.home or os.environ.get("SEPRIS_HOME") or Path.home() / ".sepris")
        return cls(home, home / "keys", home / "store", home / "chain.jsonl",
                   getattr(args, "difficulty", None) or 8, getattr(args, "seed", None), args.format)


def _entropy(args: argparse.Namespace, label: str) -> bytes:
    if getattr(args, "seed", None) is not None:
        return derive(str(args.seed).encode(), label)
    if getattr(args, "random", False):
        return os.urandom(32)
    raise UsageError("this command needs --seed N (reproducible) or --random")


def _emit(cfg: CliConfig, obj: dict, text: str) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True) if cfg.output == "json" else text)


# -- keygen --------------------------------------------------------------------------


def cmd_keygen(args: argparse.Namespace, cfg: CliConfig) -> int:
    out = Path(args.dir) if args.dir else cfg.keys_dir
    if not args.label or "/" in args.label or args.label.startswith("."):
        raise UsageError(f"invalid label {args.label!r}")
    if args.dab:
        path = out / f"{args.label}.dab.json"
        if path.exists() and not args.force:
            raise UsageError(f"DuplicateLabel: {path} exists (use --force)")
        keys = DabKeyset.generate(args.quality, rng=Drbg(_entropy(args, "dab:" + args.label)))
        out.mkdir(parents=True, exist_ok=True)
        path.write_text(keys.to_json() + "\n")
        path.chmod(0o600)
        _emit(cfg, {"keyset": str(path)}, str(path))
        return EXIT_OK
    priv = out / f"{args.label}.key"
    if priv.exists() and not args.force:
        raise UsageError(f"DuplicateLabel: {priv} exists (use --force)")
    kp = generate_keypair(args.label, _entropy(args, "keypair:" + args.label))
    priv, pub = write_keypair(kp, out)
    fp = kp.public.fingerprint.hex()
    _emit(cfg, {"private": str(priv), "public": str(pub), "fingerprint": fp}, f"{priv}\n{pub}")
    return EXIT_OK


# -- ingest --------------------------------------------------------------------------


def _read_frames(paths: list[str]) -> list[FrameBuffer]:
    frames = []
    for p in paths:
        data = Path(p).read_bytes()
        if data[:4] == b"SPRS":
            frames.extend(decode_video(data).frames)
        else:
            frames.append(pnm.decode(data))
    return frames


def _store_secret(store: Path, args: argparse.Namespace) -> bytes:
    f = store / "store.secret"
    if f.exists():
        return f.read_bytes()
    secret = _entropy(args, "store-secret")
    store.mkdir(parents=True, exist_ok=True)
    f.write_bytes(secret)
    f.chmod(0o600)
    return secret


def cmd_ingest(args: argparse.Namespace, cfg: CliConfig) -> int:
    store_dir = Path(args.store) if args.store else cfg.store_dir
    inputs = args.inputs
    if len(inputs) == 1 and Path(inputs[0]).read_bytes()[:4] == b"SPRS":
        rec = decode_video(Path(inputs[0]).read_bytes())
    else:
        if not (args.camera and args.date and args.start):
            raise UsageError("--camera, --date and --start are required unless the input is one SPRS file")
        rec = VideoRecord(args.camera, dt.date.fromisoformat(args.date), dt.time.fromisoformat(args.start),
                          args.fps, _read_frames(inputs))
    store = VideoStore(_store_secret(store_dir, args), store_dir)
    ref = store.ingest(rec)
    _emit(cfg, {"reference": ref, "frames": len(rec.frames)}, ref)
    return EXIT_OK


# -- codec ----------------------------------------------------------------------------


def _load_keys(path: str, quality: int | None) -> DabKeyset:
    try:
        keys = DabKeyset.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot read keyset {path}: {e}") from e
    if quality is not None:
        keys = DabKeyset(keys.aes_key, keys.shuffle_seed, quality, keys.frame_nonce_base)
    return keys


def cmd_encipher(args: argparse.Namespace, cfg: CliConfig) -> int:
    keys = _load_keys(args.keys, args.quality)
    frames = _read_frames(args.inputs)
    with open(args.out, "wb") as out:
        n = sprc.write_stream(out, (encipher_frame(f, keys, args.first_index + i) for i, f in enumerate(frames)))
    _emit(cfg, {"out": args.out, "frames": n}, f"{n} frame(s) -> {args.out}")
    return EXIT_OK


def cmd_decipher(args: argparse.Namespace, cfg: CliConfig) -> int:
    keys = _load_keys(args.keys, None)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cf in sprc.iter_stream(Path(args.input).read_bytes()):
        frame = decipher_frame(cf, keys)
        ext = "pgm" if frame.channels == 1 else "ppm"
        path = out / f"frame-{cf.frame_index:06d}.{ext}"
        pnm.write(path, frame)
        written.append(str(path))
    _emit(cfg, {"frames": written}, "\n".join(written))
    return EXIT_OK


# -- metrics ---------------------------------------------------------------------------


def cmd_metrics(args: argparse.Namespace, cfg: CliConfig) -> int:
    if args.test_image == bool(args.image):
        raise UsageError("give exactly one of IMAGE or --test-image")
    plain = test_image() if args.test_image else pnm.read(args.image)
    keys = _load_keys(args.keys, args.quality)
    view = identity_cipher_view if args.codec == "identity" else dab_cipher_view
    report = security_report(plain, keys, view=view, correlation_samples=args.correlation_samples)
    doc = {**report.to_dict(), "checks": report.checks(), "passed": report.passed}
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=2) + "\n")
    _emit(cfg, doc, report.table() + f"\n\noverall: {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_CHECK


# -- simulation ------------------------------------------------------------------------


def _load_scenario(args: argparse.Namespace) -> dict:
    from sepris.network import court_scenario

    if args.scenario == "court":
        return court_scenario()
    try:
        return json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read scenario {args.scenario}: {e}") from e


def cmd_sim_run(args: argparse.Namespace, cfg: CliConfig) -> int:
    from sepris.network import run_scenario

    if args.seed is None:
        raise UsageError("sim run needs --seed N")
    config = _load_scenario(args)
    if args.difficulty is not None:
        config = {**config, "difficulty_bits": args.difficulty}
    result = run_scenario(config, args.seed)
    out = Path(args.out) if args.out else cfg.home / "runs" / f"seed-{args.seed}"
    (out / "streams").mkdir(parents=True, exist_ok=True)
    transcript = result.transcript_bytes()
    (out / "transcript.jsonl").write_bytes(transcript)
    result.chain.save(out / "chain.jsonl")
    ks = out / "keystore.json"
    ks.write_text(json.dumps({k: v.hex() for k, v in result.keystore().items()}, sort_keys=True) + "\n")
    ks.chmod(0o600)
    for i, s in enumerate(result.streams):
        (out / "streams" / f"stream-{i:03d}.sprc").write_bytes(s)
    valid = validate_chain(result.chain)
    ok = bool(valid) and result.network.replicas_identical()
    summary = {
        "seed": args.seed,
        "out": str(out),
        "blocks": len(result.chain),
        "outcomes": result.outcomes,
        "transcript_sha256": hashlib.sha256(transcript).hexdigest(),
        "chain_valid": bool(valid),
        "replicas_identical": result.network.replicas_identical(),
    }
    lines = [f"run seed={args.seed} -> {out}", f"blocks: {len(result.chain)}"]
    lines += [f"  [{o['index']}] {o['action']}: {o['status']}" + (f" at step {o['step']} ({o['reason']})"
              if o["status"] == "denied" else "") for o in result.outcomes]
    lines.append(f"transcript sha256: {summary['transcript_sha256']}")
    _emit(cfg, summary, "\n".join(lines))
    return EXIT_OK if ok else EXIT_CHECK


def _load_chain(path: str) -> Chain:
    try:
        return Chain.load(Path(path))
    except OSError as e:
        raise UsageError(f"cannot read chain {path}: {e}") from e


def cmd_sim_verify(args: argparse.Namespace, cfg: CliConfig) -> int:
    chain = _load_chain(args.chain)
    v = validate_chain(chain)
    doc = {"valid": v.ok, "blocks": len(chain), "failed_index": v.index, "reason": v.reason}
    text = f"valid: {len(chain)} blocks" if v else f"INVALID at block {v.index}: {v.reason}"
    _emit(cfg, doc, text)
    return EXIT_OK if v else EXIT_CHECK


def cmd_sim_audit_list(args: argparse.Namespace, cfg: CliConfig) -> int:
    chain = _load_chain(args.chain)
    try:
        store = {k: bytes.fromhex(v) for k, v in json.loads(Path(args.keystore).read_text()).items()}
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot read keystore {args.keystore}: {e}") from e
    records = [{"height": h, **json.loads(tx.payload)} for h, tx in chain_transactions(chain, store)
               if tx.kind is TxKind.AUDIT]
    text = "\n".join(f"#{r['height']} {r['action']} t={r['timestamp']} uid={r['requestor_uid']} "
                     f"ref={r['accessed_reference']} watermark={r['viewer_watermark'][:16]}" for r in records)
    _emit(cfg, {"audit_records": records}, text or "(no audit records)")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------


def _seed_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int, help="deterministic seed")
    g.add_argument("--random", action="store_true", help="use OS entropy instead of a seed")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sepris", description="Blockchain-mediated surveillance video access control.")
    p.add_argument("--version", action="version", version=f"sepris {__version__}")
    p.add_argument("--home", help="config directory (default $SEPRIS_HOME or ~/.sepris)")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="write a signing/key-agreement key pair, or a DAB keyset with --dab")
    k.add_argument("label")
    k.add_argument("--dir", help="output directory (default <home>/keys)")
    k.add_argument("--force", action="store_true", help="overwrite existing files")
    k.add_argument("--dab", action="store_true", help="write a DAB frame-cipher keyset instead")
    k.add_argument("--quality", type=int, default=50, help="quality for --dab keysets")
    _seed_flags(k)
    k.set_defaults(func=cmd_keygen)

    i = sub.add_parser("ingest", help="add a video segment to a storage directory")
    i.add_argument("inputs", nargs="+", help="PGM/PPM frames in order, or one SPRS container")
    i.add_argument("--store", help="store directory (default <home>/store)")
    i.add_argument("--camera")
    i.add_argument("--date", help="YYYY-MM-DD")
    i.add_argument("--start", help="HH:MM[:SS]")
    i.add_argument("--fps", type=int, default=1)
    _seed_flags(i)
    i.set_defaults(func=cmd_ingest)

    e = sub.add_parser("encipher", help="DAB-encipher PGM/PPM/SPRS input into an SPRC stream")
    e.add_argument("inputs", nargs="+")
    e.add_argument("--keys", required=True, help="DAB keyset JSON")
    e.add_argument("--out", required=True)
    e.add_argument("--quality", type=int, help="override the keyset's quality")
    e.add_argument("--first-index", type=int, default=0, help="frame index of the first frame")
    e.set_defaults(func=cmd_encipher)

    d = sub.add_parser("decipher", help="decipher an SPRC stream into PGM/PPM frames")
    d.add_argument("input")
    d.add_argument("--keys", required=True)
    d.add_argument("--out-dir", required=True)
    d.set_defaults(func=cmd_decipher)

    m = sub.add_parser("metrics", help="security report for one image; exit 1 if any threshold fails")
    m.add_argument("image", nargs="?", help="PGM/PPM image")
    m.add_argument("--test-image", action="store_true", help="use the built-in 512x512 test image")
    m.add_argument("--keys", required=True)
    m.add_argument("--quality", type=int)
    m.add_argument("--json", help="also write the report as JSON to this path")
    m.add_argument("--correlation-samples", type=int, help="sample this many pairs instead of all")
    m.add_argument("--codec", choices=("dab", "identity"), default="dab", help=argparse.SUPPRESS)
    m.set_defaults(func=cmd_metrics)

    s = sub.add_parser("sim", help="protocol simulation")
    ss = s.add_subparsers(dest="sim_command", required=True)
    r = ss.add_parser("run", help="run a scenario ('court' for the built-in walkthrough)")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (default <home>/runs/seed-N)")
    r.add_argument("--difficulty", type=int, help="override the scenario's difficulty bits")
    r.set_defaults(func=cmd_sim_run)
    v = ss.add_parser("verify", help="validate a chain file; exit 1 with the failing block index")
    v.add_argument("chain")
    v.set_defaults(func=cmd_sim_verify)
    a = ss.add_parser("audit-list", help="decrypt and list audit records")
    a.add_argument("chain")
    a.add_argument("--keystore", required=True, help="body keystore JSON written by 'sim run'")
    a.set_defaults(func=cmd_sim_audit_list)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = CliConfig.from_args(args)
    try:
        return args.func(args, cfg)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
    except SeprisError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
    except (OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
