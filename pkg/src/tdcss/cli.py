"""Command-line front end: one subcommand per algorithm plus serve, scenario and bench.

Every file argument is a JSON envelope (see FORMATS.md).  Exit status is 0
on success and the error class's ``exit_code`` otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from pathlib import Path

from . import bench, encoding, groups, scheme
from .actors import assemble, frame_payload, run_scenario
from .csstore import CloudStore
from .errors import DecodeError, TamperDetected, TdcssError
from .policy import compile_lsss, parse_formula
from .service import ManualClock, StoreClient, make_server

USAGE_EXIT = 2
IO_EXIT = 14


def _read(path, kind):
    try:
        return encoding.loads(Path(path).read_text(encoding="utf-8"), kind)
    except UnicodeDecodeError as exc:
        raise DecodeError(f"{path}: not text") from exc


def _write(path, obj, kind=None):
    Path(path).write_text(encoding.dumps(obj, kind), encoding="utf-8")


def _indices(text: str, n: int) -> list[int]:
    if text.strip() == "all":
        return list(range(1, n + 1))
    return [int(v) for v in text.split(",") if v.strip()]


def _now(args) -> float:
    return time.time() if args.now is None else args.now


# -- algorithm commands ------------------------------------------------------

def cmd_setup(args, rng):
    if args.attributes:
        universe = [a for a in args.attributes.split(",") if a]
    else:
        universe = [f"attr{i}" for i in range(args.universe_size)]
    mpk, msk = scheme.setup(universe, security=args.security, ell=args.ell, rng=rng)
    _write(args.mpk, mpk)
    _write(args.msk, msk)


def cmd_keygen_sp(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    attrs = [a for a in args.attributes.split(",") if a]
    _write(args.out, scheme.keygen_sp(mpk, _read(args.msk, "MasterSecretKey"), args.id, attrs, rng=rng))


def cmd_gen_seed(args, rng):
    seed = scheme.gen_seed(_read(args.mpk, "MasterPublicKey"), args.id, rng=rng)
    _write(args.out, seed)
    _write(args.psi_out, seed.psi, "SeedPoint")


def cmd_pkeygen_pdo(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    pk, beta = scheme.pkeygen_pdo(mpk, _read(args.psi, "SeedPoint"), rng=rng)
    _write(args.pk_out, pk, "PublicKey")
    _write(args.beta_out, beta, "Scalar")


def cmd_skeygen_pdo(args, rng):
    seed = _read(args.seed_file, "SeedPair")
    sk = scheme.skeygen_pdo(seed.gamma, _read(args.beta, "Scalar"))
    if args.pk is not None:
        params = groups.group_setup()
        if groups.g2_exp(params.g2, sk) != _read(args.pk, "PublicKey"):
            raise DecodeError("public key does not match the seed and factor")
    _write(args.out, sk, "Scalar")


def cmd_encapsulate(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    policy = compile_lsss(parse_formula(args.policy, mpk.universe))
    granules = frame_payload(Path(args.data).read_bytes(), mpk.ell)
    dci, local, capsule = scheme.encapsulate(mpk, _read(args.sk_pdo, "Scalar"), granules, policy, rng=rng)
    _write(args.dci_out, dci, "CapsuleId")
    _write(args.capsule_out, capsule)
    _write(args.local_out, local)
    _write(args.granules_out, granules)
    print(f"{len(granules)} granules")


def cmd_task_issue(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    local = _read(args.local, "LocalSecret")
    granules = _read(args.granules, "GranuleSet")
    now = _now(args)
    task, rev, dl, nxt = scheme.task_issue(
        mpk, _read(args.sk_pdo, "Scalar"), args.sp_id, granules,
        _indices(args.indices, len(granules)), local, now + args.ttl, rng=rng, now=now)
    _write(args.task_out, task)
    _write(args.revocation_out, rev)
    _write(args.download_out, dl)
    _write(args.local_out or args.local, nxt)


def cmd_access(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    task = _read(args.task, "Task")
    param = scheme.access_dc(mpk, _read(args.sk_sp, "SPSecretKey"), task.dci, task,
                             _read(args.pk_pdo, "PublicKey"))
    _write(args.out, param, "DownloadParameter")


def cmd_upload(args, rng):
    client = StoreClient(args.server)
    if args.capsule:
        client.store_capsule(_read(args.dci, "CapsuleId"), _read(args.capsule, "DataCapsule"))
    if args.revocation:
        client.register_tokens(_read(args.dci, "CapsuleId"), _read(args.revocation, "RevocationToken"),
                               _read(args.download_token, "DownloadToken"))


def cmd_download(args, rng):
    param = _read(args.param, "DownloadParameter")
    if args.server:
        dci = _read(args.task, "Task").dci
        capsule = StoreClient(args.server).handle_download(dci, param)
    else:
        scheme.download_dc(_read(args.download_token, "DownloadToken"), param, _now(args))
        capsule = _read(args.capsule, "DataCapsule")
    _write(args.out, capsule)


def cmd_decrypt(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    task = _read(args.task, "Task")
    try:
        capsule = _read(args.capsule, "DataCapsule")
    except DecodeError as exc:
        raise TamperDetected(f"capsule does not decode: {exc}") from exc
    granules = scheme.dec_dc(mpk, _read(args.sk_sp, "SPSecretKey"), task.dci, capsule, task,
                             _read(args.param, "DownloadParameter"))
    Path(args.out).write_bytes(assemble(granules, mpk.ell))


def cmd_update(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey")
    dci, capsule = scheme.update_dc(mpk, _read(args.dci, "CapsuleId"), _read(args.capsule, "DataCapsule"),
                                    _read(args.revocation, "RevocationToken"))
    _write(args.dci_out, dci, "CapsuleId")
    _write(args.capsule_out, capsule)


# -- service, scenarios, bench ----------------------------------------------

def cmd_serve(args, rng):
    mpk = _read(args.mpk, "MasterPublicKey") if args.mpk else None
    manual = ManualClock(args.start_time) if args.clock == "manual" else None
    store = CloudStore(mpk, data_dir=args.data_dir, clock=manual or time.time)
    server = make_server(store, args.host, args.port, manual_clock=manual)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        store.close()


def cmd_scenario(args, rng):
    config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        config["seed"] = args.seed
    factory = (lambda mpk, clock: StoreClient(args.server)) if args.server else None
    report = run_scenario(config, store_factory=factory)
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_bench(args, rng):
    phases = args.phase or list(bench.PHASES)
    ranges = {p: bench.parse_range(args.sizes) for p in phases} if args.sizes else None
    report = bench.run_bench(phases, ranges, args.repetitions, seed=args.seed or 0)
    failed = [p for p, s in report["phases"].items() if not s["counts_ok"]]
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.csv:
        bench.write_csv(report, args.csv)
    for phase, s in report["phases"].items():
        print(f"{phase:>10}: relative slope per step {s['relative_step_slope']:+.3%}, "
              f"counts {'ok' if s['counts_ok'] else 'MISMATCH'}", file=sys.stderr)
    if failed:
        raise TdcssError(f"operation counts differ from the expected formulas in: {', '.join(failed)}")


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdcss", description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None,
                    help="deterministic randomness (tests only; default is the OS CSPRNG)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("setup", cmd_setup, "create master public and secret keys")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--attributes", help="comma-separated attribute universe")
    g.add_argument("--universe-size", type=int, default=1000, help="use attr0..attrN-1")
    p.add_argument("--security", type=int, default=128)
    p.add_argument("--ell", type=int, default=groups.DEFAULT_ELL, help="granule length in bits")
    p.add_argument("--mpk", required=True)
    p.add_argument("--msk", required=True)

    p = add("keygen-sp", cmd_keygen_sp, "issue a service provider key")
    for flag in ("--mpk", "--msk", "--id", "--attributes", "--out"):
        p.add_argument(flag, required=True)

    p = add("gen-seed", cmd_gen_seed, "owner: create a key seed")
    for flag in ("--mpk", "--id", "--out", "--psi-out"):
        p.add_argument(flag, required=True)

    p = add("pkeygen-pdo", cmd_pkeygen_pdo, "authority: blind an owner's seed into a public key")
    for flag in ("--mpk", "--psi", "--pk-out", "--beta-out"):
        p.add_argument(flag, required=True)

    p = add("skeygen-pdo", cmd_skeygen_pdo, "owner: derive the secret key")
    p.add_argument("--seed-file", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--pk", help="check the result against this public key")
    p.add_argument("--out", required=True)

    p = add("encapsulate", cmd_encapsulate, "owner: turn a file into a data capsule")
    for flag in ("--mpk", "--sk-pdo", "--data", "--policy", "--dci-out", "--capsule-out",
                 "--local-out", "--granules-out"):
        p.add_argument(flag, required=True)

    p = add("task-issue", cmd_task_issue, "owner: grant a provider access to some granules")
    for flag in ("--mpk", "--sk-pdo", "--sp-id", "--granules", "--local",
                 "--task-out", "--revocation-out", "--download-out"):
        p.add_argument(flag, required=True)
    p.add_argument("--indices", required=True, help="comma-separated granule indices (1-based) or 'all'")
    p.add_argument("--ttl", type=float, default=3600.0, help="seconds until the task expires")
    p.add_argument("--now", type=float, help="issue time (default: wall clock)")
    p.add_argument("--local-out", help="where to write the advanced local secret (default: overwrite --local)")

    p = add("access", cmd_access, "provider: compute the download parameter")
    for flag in ("--mpk", "--sk-sp", "--task", "--pk-pdo", "--out"):
        p.add_argument(flag, required=True)

    p = add("upload", cmd_upload, "send a capsule and/or tokens to a running store")
    p.add_argument("--server", required=True)
    p.add_argument("--dci", required=True)
    p.add_argument("--capsule")
    p.add_argument("--revocation")
    p.add_argument("--download-token")

    p = add("download", cmd_download, "gate check: locally against a token file, or via --server")
    p.add_argument("--param", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--server", help="store URL; needs --task")
    p.add_argument("--task")
    p.add_argument("--capsule", help="local mode: capsule to release")
    p.add_argument("--download-token", help="local mode: token to check against")
    p.add_argument("--now", type=float)

    p = add("decrypt", cmd_decrypt, "provider: verify and decrypt the task's granules")
    for flag in ("--mpk", "--sk-sp", "--task", "--capsule", "--param", "--out"):
        p.add_argument(flag, required=True)

    p = add("update", cmd_update, "store: apply a revocation token")
    for flag in ("--mpk", "--dci", "--capsule", "--revocation", "--dci-out", "--capsule-out"):
        p.add_argument(flag, required=True)

    p = add("serve", cmd_serve, "run the cloud store over HTTP")
    p.add_argument("--mpk", help="master public key (optional; the store only needs the group)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--data-dir", help="directory for the append-only log (default: memory only)")
    p.add_argument("--clock", choices=("system", "manual"), default="system",
                   help="manual clock is settable through POST /admin/clock")
    p.add_argument("--start-time", type=float, default=0.0)

    p = add("scenario", cmd_scenario, "run a JSON scenario description")
    p.add_argument("config")
    p.add_argument("--server", help="run against a live store instead of in-process")
    p.add_argument("--out")

    p = add("bench", cmd_bench, "time the phases and check operation counts")
    p.add_argument("--phase", action="append", choices=bench.PHASES)
    p.add_argument("--sizes", "--policy-sizes", dest="sizes", help="sweep such as 10..100 or 1,2,4")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--out")
    p.add_argument("--csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    rng = random.Random(args.seed) if args.seed is not None else None
    try:
        args.fn(args, rng)
    except TdcssError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_EXIT
    except (ValueError, IndexError) as exc:
        print(f"error: invalid argument: {exc}", file=sys.stderr)
        return USAGE_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
