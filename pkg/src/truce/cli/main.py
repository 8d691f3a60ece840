"""Role-oriented command line: model owner, dataset owner, auditor, operator.

Exit codes: 0 success, 2 validation/state error, 3 remote/network error,
4 protocol abort. `--output json` prints one machine-parseable JSON object
per command.
"""

from __future__ import annotations

import json
import socket
import sys
import time
from dataclasses import dataclass

import click
import httpx

from ..core import (
    FixedPointConfig,
    encode_array,
    load_dataset,
    load_model,
    model_to_json,
)
from ..audit import commit_dataset
from ..executors import (
    AttestationRoot,
    Enclave,
    InlineWeights,
    StubModelServer,
    serve_enclave,
)
from ..mpc import (
    MpcSessionConfig,
    PartyEngine,
    ProtocolAbort,
    SocketFrameChannel,
    budget_for,
    dealer_generate,
    deserialize_bundle,
    labels_to_onehot_bits,
    run_inference_party,
    serialize_bundle,
)
from ..mpc.session import REVEAL_POLICIES
from ..orchestrator import Platform, create_app
from ..transport import (
    generate_identity_key,
    load_private_key,
    save_private_key,
    tcp_listen,
)
from ..transport.channel import recv_raw_frame, send_raw_frame

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_REMOTE = 3
EXIT_ABORT = 4


@dataclass
class CliConfig:
    url: str
    identity: str
    output: str

    def emit(self, obj: dict, human: str) -> None:
        click.echo(json.dumps(obj) if self.output == "json" else human)

    def fail(self, exit_code: int, code: str, message: str) -> None:
        payload = json.dumps({"error": code, "message": message})
        click.echo(payload if self.output == "json" else f"error ({code}): {message}", err=True)
        sys.exit(exit_code)


def api(cfg: CliConfig, method: str, path: str, body=None, params=None):
    headers = {"X-Identity": cfg.identity} if cfg.identity else {}
    try:
        resp = httpx.request(
            method, cfg.url + path, json=body, params=params, headers=headers, timeout=120.0
        )
    except httpx.HTTPError as e:
        cfg.fail(EXIT_REMOTE, "network", str(e))
    if resp.status_code >= 500:
        cfg.fail(EXIT_REMOTE, "remote", resp.text)
    if resp.status_code >= 400:
        try:
            obj = resp.json()
            cfg.fail(EXIT_VALIDATION, obj.get("code", "error"), obj.get("message", resp.text))
        except ValueError:
            cfg.fail(EXIT_VALIDATION, "error", resp.text)
    return resp.json()


@click.group()
@click.option("--platform-url", envvar="TRUCE_PLATFORM_URL", default="http://127.0.0.1:8400")
@click.option("--identity", envvar="TRUCE_IDENTITY", default="")
@click.option("--output", type=click.Choice(["human", "json"]), default="human")
@click.pass_context
def cli(ctx, platform_url, identity, output):
    ctx.obj = CliConfig(platform_url.rstrip("/"), identity, output)


# -- dataset -----------------------------------------------------------------


@cli.group()
def dataset():
    """Dataset-owner commands."""


def _commit_from_keyfile(ds, keyfile):
    with open(keyfile, "rb") as fh:
        seed = fh.read()
    _, root, salts = commit_dataset(ds, rng_seed=seed)
    return root, salts


@dataset.command("commit")
@click.argument("file", type=click.Path(exists=True))
@click.option("--keyfile", required=True, type=click.Path(exists=True))
@click.option("--salts-out", type=click.Path(), default=None)
@click.pass_obj
def dataset_commit(cfg, file, keyfile, salts_out):
    """Commit every point; the root is deterministic under a fixed keyfile."""
    ds = load_dataset(file)
    root, salts = _commit_from_keyfile(ds, keyfile)
    if salts_out:
        with open(salts_out, "w", encoding="utf-8") as fh:
            json.dump([s.hex() for s in salts], fh)
    cfg.emit(root.to_json(), f"{root.root.hex()} (t={root.t})")


@dataset.command("register")
@click.argument("file", type=click.Path(exists=True))
@click.option("--name", default=None)
@click.option("--keyfile", type=click.Path(exists=True), default=None,
              help="Commit and register the root alongside the dataset.")
@click.pass_obj
def dataset_register(cfg, file, name, keyfile):
    ds = load_dataset(file)
    name = name or ds.name
    body = {
        "name": name,
        "num_features": ds.num_features,
        "num_classes": ds.num_classes,
        "t": len(ds),
        "points": [{"input": list(p.input), "label": p.label} for p in ds.points],
    }
    if keyfile:
        root, salts = _commit_from_keyfile(ds, keyfile)
        body["root"] = root.to_json()
        body["salts"] = [s.hex() for s in salts]
    obj = api(cfg, "POST", "/datasets", body=body)
    cfg.emit(obj, f"registered dataset {name} (t={len(ds)})")


@dataset.command("serve")
@click.argument("file", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=0, type=int)
@click.pass_obj
def dataset_serve(cfg, file, host, port):
    """Owner endpoint serving the dataset header and requested points."""
    from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
    from urllib.parse import parse_qs, urlparse

    ds = load_dataset(file)

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            parsed = urlparse(self.path)
            if parsed.path == "/header":
                body = json.dumps(
                    {"name": ds.name, "num_features": ds.num_features,
                     "num_classes": ds.num_classes, "t": len(ds)}
                ).encode()
            elif parsed.path == "/points":
                idx = [int(i) for i in parse_qs(parsed.query).get("indices", [""])[0].split(",") if i]
                try:
                    body = json.dumps(
                        [{"input": list(ds.points[i].input), "label": ds.points[i].label}
                         for i in idx]
                    ).encode()
                except IndexError:
                    self.send_error(422, "index out of range")
                    return
            else:
                self.send_error(404)
                return
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *a):
            pass

    srv = ThreadingHTTPServer((host, port), Handler)
    click.echo(json.dumps({"serving": f"http://{host}:{srv.server_address[1]}", "t": len(ds)}))
    srv.serve_forever()


# -- model -------------------------------------------------------------------


@cli.group()
def model():
    """Model-owner commands."""


@model.command("register")
@click.argument("file", type=click.Path(exists=True), required=False)
@click.option("--name", required=True)
@click.option("--url", default=None, help="Register a remote inference endpoint instead.")
@click.option("--credential", default="")
@click.option("--num-classes", type=int, default=None)
@click.pass_obj
def model_register(cfg, file, name, url, credential, num_classes):
    if url:
        if num_classes is None:
            cfg.fail(EXIT_VALIDATION, "validation", "--num-classes is required with --url")
        body = {"name": name, "kind": "remote", "url": url,
                "credential": credential, "num_classes": num_classes}
    elif file:
        spec, w, mcfg = load_model(file)
        body = {"name": name, "kind": "inline", "model": model_to_json(spec, w, mcfg)}
    else:
        cfg.fail(EXIT_VALIDATION, "validation", "provide a model file or --url")
    obj = api(cfg, "POST", "/models", body=body)
    cfg.emit(obj, f"registered model {name}")


@model.command("serve")
@click.argument("file", type=click.Path(exists=True))
@click.option("--credential", default="stub-token")
@click.pass_obj
def model_serve(cfg, file, credential):
    """Serve the model behind the inference API (model-as-an-API mode)."""
    spec, w, mcfg = load_model(file)
    with StubModelServer(InlineWeights(spec, w, mcfg), credential=credential) as srv:
        click.echo(json.dumps({"serving": srv.url}))
        try:
            while True:
                time.sleep(3600)
        except KeyboardInterrupt:
            pass


# -- request -----------------------------------------------------------------


@cli.group()
def request():
    """Evaluation-request lifecycle commands."""


def _show_request(cfg, obj):
    acc = obj.get("record", {} ) or {}
    acc = acc.get("accuracy")
    human = f"request {obj['id']}: {obj['state']} ({obj['mode']} {obj['model']} on {obj['dataset']})"
    if acc:
        human += f" accuracy={acc['numerator']}/{acc['denominator']}"
    if obj.get("failure_reason"):
        human += f" reason={obj['failure_reason']}"
    cfg.emit(obj, human)


@request.command("create")
@click.option("--model", "model_ref", required=True)
@click.option("--dataset", "dataset_ref", required=True)
@click.option("--mode", required=True)
@click.option("--idempotency-key", default=None)
@click.pass_obj
def request_create(cfg, model_ref, dataset_ref, mode, idempotency_key):
    obj = api(cfg, "POST", "/requests", body={
        "model": model_ref, "dataset": dataset_ref, "mode": mode,
        "idempotency_key": idempotency_key,
    })
    _show_request(cfg, obj)


@request.command("approve")
@click.argument("rid")
@click.pass_obj
def request_approve(cfg, rid):
    obj = api(cfg, "POST", f"/requests/{rid}/approve")
    _show_request(cfg, obj)
    if obj["state"] == "Failed":
        sys.exit(EXIT_ABORT)


@request.command("refuse")
@click.argument("rid")
@click.option("--reason", default="refused")
@click.pass_obj
def request_refuse(cfg, rid, reason):
    _show_request(cfg, api(cfg, "POST", f"/requests/{rid}/refuse", body={"reason": reason}))


@request.command("show")
@click.argument("rid")
@click.pass_obj
def request_show(cfg, rid):
    _show_request(cfg, api(cfg, "GET", f"/requests/{rid}"))


# -- leaderboard ---------------------------------------------------------------


@cli.group()
def leaderboard():
    """Public leaderboard."""


@leaderboard.command("show")
@click.option("--dataset", default=None)
@click.option("--mode", default=None)
@click.pass_obj
def leaderboard_show(cfg, dataset, mode):
    params = {k: v for k, v in (("dataset", dataset), ("mode", mode)) if v}
    obj = api(cfg, "GET", "/leaderboard", params=params)
    lines = [
        f"{e['model']:<20} {e['dataset']:<16} {e['mode']:<14} "
        f"{e['accuracy']['decimal']:.4f}  {e['num_samples']:>5}  "
        f"{e['total_communication_bytes']:>10}"
        for e in obj["entries"]
    ]
    cfg.emit(obj, "\n".join(lines) if lines else "(empty leaderboard)")


# -- audit ---------------------------------------------------------------------


@cli.group()
def audit():
    """Benchmark audits."""


@audit.command("run")
@click.option("--dataset", "dataset_ref", required=True)
@click.option("--variant", type=click.Choice(["HonestOwner", "Committed"]), default="Committed")
@click.option("--kappa", type=int, default=100)
@click.option("--alpha", type=float, default=95.0)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def audit_run(cfg, dataset_ref, variant, kappa, alpha, seed):
    obj = api(cfg, "POST", "/audits", body={
        "dataset": dataset_ref, "variant": variant, "kappa": kappa,
        "alpha": alpha, "seed": seed,
    })
    cfg.emit(
        obj,
        f"audit {obj['session_id']}: {obj['verdict']} "
        f"(bound {obj['bound']:.6f}, kappa={kappa}, alpha={alpha})",
    )


@audit.command("show")
@click.argument("aid")
@click.pass_obj
def audit_show(cfg, aid):
    obj = api(cfg, "GET", f"/audits/{aid}")
    cfg.emit(obj, f"audit {obj['session_id']}: {obj['state']} verdict={obj['verdict']}")


# -- platform ------------------------------------------------------------------


@cli.group()
def platform():
    """Platform-operator commands."""


@platform.command("ca-init")
@click.option("--out", required=True, type=click.Path())
@click.pass_obj
def platform_ca_init(cfg, out):
    key = generate_identity_key()
    save_private_key(key, out)
    pub = key.public_key().public_bytes_raw().hex()
    cfg.emit({"key_path": out, "public_key": pub}, f"wrote CA key to {out} (pub {pub})")


@platform.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8400, type=int)
@click.option("--journal", type=click.Path(), default=None)
@click.option("--ca-key", type=click.Path(exists=True), default=None)
def platform_serve(host, port, journal, ca_key):
    import uvicorn

    key = load_private_key(ca_key) if ca_key else None
    app = create_app(Platform(journal_path=journal, ca_key=key))
    uvicorn.run(app, host=host, port=port, log_level="warning")


# -- mpc -----------------------------------------------------------------------


@cli.group()
def mpc():
    """Two-party secure computation roles."""


def _retry_connect(cfg, host, port, attempts=100):
    for _ in range(attempts):
        try:
            return socket.create_connection((host, port), timeout=5)
        except OSError:
            time.sleep(0.1)
    cfg.fail(EXIT_REMOTE, "network", f"cannot reach {host}:{port}")


def _parse_dims(s):
    return tuple(int(d) for d in s.split(","))


@mpc.command("dealer-serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=0, type=int)
@click.pass_obj
def mpc_dealer_serve(cfg, host, port):
    """Hand both parties their correlated randomness; sees no inputs."""
    srv = tcp_listen(host, port)
    click.echo(json.dumps({"dealing_on": srv.getsockname()[1]}), nl=True)
    sys.stdout.flush()
    conns, configs = {}, {}
    while len(conns) < 2:
        conn, _ = srv.accept()
        req = json.loads(recv_raw_frame(conn))
        conns[req["party"]] = conn
        configs[req["party"]] = {k: v for k, v in req.items() if k != "party"}
    if configs[0] != configs[1]:
        for conn in conns.values():
            conn.close()
        cfg.fail(EXIT_VALIDATION, "validation", "parties disagree on the session config")
    from ..core import ModelSpec

    c = configs[0]
    fp = FixedPointConfig(f=c["f"], ring_bits=c["ring_bits"])
    budget = budget_for(ModelSpec(tuple(c["layer_dims"])), c["t"], fp, c["reveal_policy"])
    bundles = dealer_generate(budget, c["dealer_seed"], fp)
    for party, conn in conns.items():
        blob = serialize_bundle(bundles[party])
        send_raw_frame(conn, blob)
        conn.close()
    srv.close()
    cfg.emit({"dealt": True, "parties": 2}, "dealt randomness to both parties")


@mpc.command("party-serve")
@click.option("--party", type=click.IntRange(0, 1), required=True)
@click.option("--layer-dims", required=True, help="comma-separated, e.g. 6,8,3")
@click.option("--t", "t", type=int, required=True)
@click.option("--model", "model_file", type=click.Path(exists=True), default=None)
@click.option("--dataset", "dataset_file", type=click.Path(exists=True), default=None)
@click.option("--dealer", required=True, help="host:port of the dealer")
@click.option("--listen-port", type=int, default=None, help="party 0 listens here")
@click.option("--peer", default=None, help="host:port of party 0 (party 1 connects)")
@click.option("--f", "f_bits", type=int, default=12)
@click.option("--reveal-policy", type=click.Choice(list(REVEAL_POLICIES)), default="aggregate_only")
@click.option("--session-seed", type=int, default=0)
@click.option("--dealer-seed", type=int, default=1)
@click.pass_obj
def mpc_party_serve(cfg, party, layer_dims, t, model_file, dataset_file, dealer,
                    listen_port, peer, f_bits, reveal_policy, session_seed, dealer_seed):
    """Run one party of the secure evaluation."""
    from ..core import ModelSpec

    dims = _parse_dims(layer_dims)
    spec = ModelSpec(dims)
    fp = FixedPointConfig(f=f_bits)
    session = MpcSessionConfig(cfg=fp, reveal_policy=reveal_policy,
                               session_seed=session_seed, dealer_seed=dealer_seed)

    kwargs = {}
    srv = None
    if party == 0:
        if model_file is None:
            cfg.fail(EXIT_VALIDATION, "validation", "party 0 needs --model")
        mspec, w, _ = load_model(model_file)
        if mspec.layer_dims != dims:
            cfg.fail(EXIT_VALIDATION, "validation", "--layer-dims does not match the model file")
        kwargs["weights"] = w
        # advertise the peer port before blocking on the dealer (which waits
        # for both parties)
        srv = tcp_listen("127.0.0.1", listen_port or 0)
        click.echo(json.dumps({"listening_on": srv.getsockname()[1]}))
        sys.stdout.flush()

    host, port_s = dealer.rsplit(":", 1)
    dconn = _retry_connect(cfg, host, int(port_s))
    dconn.settimeout(120)
    send_raw_frame(dconn, json.dumps({
        "party": party, "layer_dims": list(dims), "t": t, "f": fp.f,
        "ring_bits": fp.ring_bits, "reveal_policy": reveal_policy,
        "dealer_seed": dealer_seed,
    }).encode())
    bundle = deserialize_bundle(recv_raw_frame(dconn, max_len=1 << 31))
    dconn.close()

    if party == 0:
        sock, _ = srv.accept()
        srv.close()
    else:
        if dataset_file is None or peer is None:
            cfg.fail(EXIT_VALIDATION, "validation", "party 1 needs --dataset and --peer")
        ds = load_dataset(dataset_file, fp)
        if len(ds) != t:
            cfg.fail(EXIT_VALIDATION, "validation", f"--t={t} but the dataset has {len(ds)} points")
        kwargs["inputs_ring"] = encode_array(ds.inputs_array(), fp)
        kwargs["label_bits"] = labels_to_onehot_bits(ds.labels_array(), spec.num_classes)
        phost, pport = peer.rsplit(":", 1)
        sock = _retry_connect(cfg, phost, int(pport))

    engine = PartyEngine(party, fp, SocketFrameChannel(sock), bundle, session_seed, reveal_policy)
    try:
        correct, total, z = run_inference_party(engine, spec, t, session, **kwargs)
    except ProtocolAbort as e:
        cfg.fail(EXIT_ABORT, "abort", str(e))
    result = {
        "party": party,
        "accuracy": {"numerator": correct, "denominator": total},
        "per_sample_outcomes": [int(b) for b in z] if z is not None else None,
        "payload_bytes_sent": engine.transcript.sent_payload_bytes(),
    }
    cfg.emit(result, f"party {party}: accuracy {correct}/{total}")


# -- tee -----------------------------------------------------------------------


@cli.group()
def tee():
    """Simulated confidential-execution roles."""


@tee.command("enclave-serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=0, type=int)
@click.option("--request-id", default="cli-job")
@click.option("--f", "f_bits", type=int, default=12)
@click.option("--expected-root", default=None, help="hex root the dataset must open to")
@click.option("--expected-root-t", type=int, default=None)
def tee_enclave_serve(host, port, request_id, f_bits, expected_root, expected_root_t):
    """Serve one attested evaluation job, then exit."""
    from ..audit import MerkleRoot

    fp = FixedPointConfig(f=f_bits)
    root = (
        MerkleRoot(bytes.fromhex(expected_root), expected_root_t)
        if expected_root and expected_root_t
        else None
    )
    rot = AttestationRoot()
    enclave = Enclave(request_id, rot, fp, expected_root=root)
    srv = tcp_listen(host, port)
    click.echo(json.dumps({
        "enclave_on": srv.getsockname()[1],
        "measurement": enclave.measurement.hex(),
        "attestation_root_pub": rot.public_key.public_bytes_raw().hex(),
    }))
    sys.stdout.flush()
    conn, _ = srv.accept()
    serve_enclave(conn, enclave)
    conn.close()
    srv.close()


if __name__ == "__main__":
    cli()
