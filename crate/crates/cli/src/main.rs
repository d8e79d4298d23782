use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ringmesh::keylist::{correction_factor, request_trigger_index, KeyDistributor};
use ringmesh::ring::{
    client_confirm, derive_seed, fit_affine, generate_ring, generate_server, server_verify_and_respond,
    sign_and_initiate, ClientSession, ClientVerdict, RingDirectory, RingMember, RingSignature, ServerKeys,
    ServerPublic, ServerResponse, ServerVerdict, SizeRow,
};
use ringmesh::sim::{
    build_bootstrap_topology, build_paper_topology, measure_overhead_runs, run, run_with_trace, KeyMode,
    Metrics, SimScenario,
};
use ringmesh::{is_valid_group, BigUint, Error, TrapdoorPrivate};

const EXIT_REJECT: u8 = 2;
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(name = "ringmesh", version, about = "Anonymous ring-signature authentication and key lists for mesh networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a ring of member keys and an authentication-server key pair.
    Keygen(KeygenArgs),
    /// Sign an access request on behalf of one ring member (round 1).
    Sign(SignArgs),
    /// Verify a signed request as the authentication server (round 2).
    Verify(VerifyArgs),
    /// Run all three rounds locally and write the transcript.
    Exchange(ExchangeArgs),
    /// Derive a key list and evaluate the key-index arithmetic.
    Keylist(KeylistArgs),
    /// Run the mesh simulator.
    Simulate(SimulateArgs),
    /// Tabulate serialized signature length against ring size.
    BenchSigSize(BenchSigSizeArgs),
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 5)]
    members: usize,
    #[arg(long)]
    p_bits: Option<u32>,
    #[arg(long)]
    q_bits: Option<u32>,
    /// Small 16-bit groups, for tests only.
    #[arg(long)]
    tiny: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct KeyFiles {
    #[arg(long)]
    ring: PathBuf,
}

#[derive(Args)]
struct SignArgs {
    #[command(flatten)]
    files: KeyFiles,
    /// Member key file written by keygen.
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    server_pub: PathBuf,
    #[arg(long)]
    identity: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to keep the client's round-3 state.
    #[arg(long)]
    session_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    files: KeyFiles,
    #[arg(long)]
    server_key: PathBuf,
    /// Signed request or exchange transcript.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Tamper {
    Alpha,
    Beta,
    Glue,
    BlindedShare,
    Commitment,
    MemberId,
    Identity,
    Digest,
    ServerShare,
    Ack,
}

#[derive(Args)]
struct ExchangeArgs {
    #[command(flatten)]
    files: KeyFiles,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    server_key: PathBuf,
    #[arg(long)]
    identity: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    tamper: Option<Tamper>,
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct KeylistArgs {
    /// Master secret seed of the authentication server.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    session: u64,
    #[arg(long, default_value_t = 10)]
    cardinality: usize,
    #[arg(long, default_value_t = 1000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    epoch_ms: u64,
    /// Evaluate key index and remaining validity at this instant.
    #[arg(long)]
    at_ms: Option<u64>,
    /// Last observed response delay, for the correction factor.
    #[arg(long)]
    response_delay_ms: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Static,
    Rotating,
}

impl From<ModeArg> for KeyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Static => KeyMode::StaticKey,
            ModeArg::Rotating => KeyMode::RotatingKey,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, conflicts_with_all = ["paper_topology", "bootstrap_topology"])]
    scenario: Option<PathBuf>,
    /// Five routers in a ring with nine clients each.
    #[arg(long)]
    paper_topology: bool,
    /// Four routers joining one after another.
    #[arg(long, conflicts_with = "paper_topology")]
    bootstrap_topology: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Consecutive seeds starting at the scenario seed.
    #[arg(long, default_value_t = 1)]
    runs: usize,
    /// Run static and rotating modes and report the difference.
    #[arg(long)]
    overhead: bool,
    /// Force the correction factor to zero.
    #[arg(long)]
    no_correction: bool,
    #[arg(long)]
    max_response_delay_ms: Option<u64>,
    /// Write an NDJSON event trace (single run only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the resolved scenario instead of running it.
    #[arg(long)]
    dump_scenario: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchSigSizeArgs {
    #[arg(long, value_delimiter = ',', default_values_t = (1..=20).collect::<Vec<usize>>())]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1024)]
    p_bits: u32,
    #[arg(long, default_value_t = 160)]
    q_bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A member's secret, as written by keygen.
#[derive(Serialize, Deserialize)]
struct MemberKeyFile {
    id: String,
    #[serde(flatten)]
    secret: TrapdoorPrivate,
}

/// Round-1 output; an exchange transcript carries the same fields.
#[derive(Serialize, Deserialize)]
struct SignedRequest {
    seed: u64,
    identity_hex: String,
    signature_hex: String,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct ServerOutcome {
    verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_hex: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    session_key_hex: Option<String>,
}

enum Outcome {
    Ok,
    Reject,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => keygen(a),
        Command::Sign(a) => sign(a),
        Command::Verify(a) => verify(a),
        Command::Exchange(a) => exchange(a),
        Command::Keylist(a) => keylist(a),
        Command::Simulate(a) => simulate(a),
        Command::BenchSigSize(a) => bench_sig_size(a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Reject) => ExitCode::from(EXIT_REJECT),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn emit<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn seed_bytes(seed: u64) -> [u8; 8] {
    seed.to_be_bytes()
}

fn client_seed(seed: u64) -> [u8; 32] {
    derive_seed(&seed_bytes(seed), "cli-client", 0)
}

fn server_seed(seed: u64) -> [u8; 32] {
    derive_seed(&seed_bytes(seed), "cli-server", 0)
}

fn keygen(a: KeygenArgs) -> anyhow::Result<Outcome> {
    let (p_bits, q_bits) = if a.tiny {
        let p = a.p_bits.unwrap_or(16);
        let q = a.q_bits.unwrap_or(8);
        if p > 16 {
            bail!("--tiny needs --p-bits <= 16");
        }
        (p, q)
    } else {
        (a.p_bits.unwrap_or(1024), a.q_bits.unwrap_or(160))
    };
    if a.members == 0 {
        bail!("--members must be at least 1");
    }
    let seed = seed_bytes(a.seed);
    let (ring, secrets) = generate_ring(a.members, p_bits, q_bits, &seed)?;
    let server = generate_server(p_bits, q_bits, &seed)?;
    for (m, x) in ring.members().iter().zip(&secrets) {
        let g = &m.public.group;
        if !is_valid_group(g) || !x.pairs_with(&m.public) {
            bail!("generated key for {} failed validation", m.id);
        }
    }
    if !server.is_consistent() {
        bail!("generated server key failed validation");
    }
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut files = vec!["ring.json".to_string()];
    write_json(&a.out_dir.join("ring.json"), &ring)?;
    for (m, x) in ring.members().iter().zip(secrets) {
        let name = format!("{}.key.json", m.id);
        write_json(&a.out_dir.join(&name), &MemberKeyFile { id: m.id.clone(), secret: x })?;
        files.push(name);
    }
    write_json(&a.out_dir.join("server.key.json"), &server)?;
    write_json(&a.out_dir.join("server.pub.json"), &server.public())?;
    files.extend(["server.key.json".to_string(), "server.pub.json".to_string()]);
    eprintln!("wrote {} files to {}", files.len(), a.out_dir.display());
    emit(&serde_json::json!({
        "seed": a.seed,
        "members": a.members,
        "p_bits": p_bits,
        "q_bits": q_bits,
        "files": files,
    }))?;
    Ok(Outcome::Ok)
}

struct Signer {
    ring: RingDirectory,
    index: usize,
    secret: TrapdoorPrivate,
}

fn load_signer(ring: &Path, key: &Path) -> anyhow::Result<Signer> {
    let ring: RingDirectory = read_json(ring)?;
    let key: MemberKeyFile = read_json(key)?;
    let index = ring
        .members()
        .iter()
        .position(|m: &RingMember| m.id == key.id)
        .with_context(|| format!("member {:?} is not in the ring", key.id))?;
    Ok(Signer {
        ring,
        index,
        secret: key.secret,
    })
}

fn sign_request(signer: &Signer, server: &ServerPublic, identity: &[u8], seed: u64) -> anyhow::Result<(RingSignature, ClientSession)> {
    let cfg = signer.ring.combining_config()?;
    Ok(sign_and_initiate(
        &signer.ring,
        signer.index,
        &signer.secret,
        server,
        identity,
        &cfg,
        &client_seed(seed),
    )?)
}

fn sign(a: SignArgs) -> anyhow::Result<Outcome> {
    let signer = load_signer(&a.files.ring, &a.key)?;
    let server: ServerPublic = read_json(&a.server_pub)?;
    let (sig, session) = sign_request(&signer, &server, a.identity.as_bytes(), a.seed)?;
    let cfg = signer.ring.combining_config()?;
    let request = SignedRequest {
        seed: a.seed,
        identity_hex: hex::encode(a.identity.as_bytes()),
        signature_hex: hex::encode(sig.encode(&cfg)?),
    };
    if let Some(out) = &a.out {
        write_json(out, &request)?;
    }
    if let Some(out) = &a.session_out {
        write_json(out, &session)?;
    }
    emit(&request)?;
    Ok(Outcome::Ok)
}

fn server_side(keys: &ServerKeys, ring: &RingDirectory, sig_bytes: &[u8], identity: &[u8], seed: u64) -> anyhow::Result<(ServerOutcome, Option<ServerResponse>)> {
    let cfg = ring.combining_config()?;
    let verdict = RingSignature::decode(sig_bytes, &cfg)
        .and_then(|sig| server_verify_and_respond(keys, ring, &sig, identity, &cfg, &server_seed(seed)));
    Ok(match verdict {
        Ok(ServerVerdict::Accept { response, session_key }) => (
            ServerOutcome {
                verdict: "accept".into(),
                reason: None,
                response_hex: Some(hex::encode(response.encode())),
                session_key_hex: Some(hex::encode(session_key.to_bytes())),
            },
            Some(response),
        ),
        Ok(ServerVerdict::Reject(reason)) => (reject(reason.to_string()), None),
        Err(e @ (Error::MalformedSignature(_) | Error::Decode(_))) => (reject(format!("malformed: {e}")), None),
        Err(e) => return Err(e.into()),
    })
}

fn reject(reason: String) -> ServerOutcome {
    ServerOutcome {
        verdict: "reject".into(),
        reason: Some(reason),
        response_hex: None,
        session_key_hex: None,
    }
}

fn verify(a: VerifyArgs) -> anyhow::Result<Outcome> {
    let ring: RingDirectory = read_json(&a.files.ring)?;
    let keys: ServerKeys = read_json(&a.server_key)?;
    let request: SignedRequest = read_json(&a.input)?;
    let sig = hex::decode(&request.signature_hex).context("signature_hex")?;
    let identity = hex::decode(&request.identity_hex).context("identity_hex")?;
    let (outcome, _) = server_side(&keys, &ring, &sig, &identity, a.seed)?;
    if let Some(reason) = &outcome.reason {
        eprintln!("rejected: {reason}");
    }
    let accepted = outcome.verdict == "accept";
    emit(&serde_json::json!({ "seed": a.seed, "server": outcome }))?;
    Ok(if accepted { Outcome::Ok } else { Outcome::Reject })
}

fn flip_low_bit(n: &mut BigUint) {
    *n ^= BigUint::from(1u8);
}

fn tamper_signature(sig: &mut RingSignature, identity: &mut Vec<u8>, t: Tamper) {
    match t {
        Tamper::Alpha => flip_low_bit(&mut sig.pairs[0].alpha),
        Tamper::Beta => flip_low_bit(&mut sig.pairs[0].beta),
        Tamper::Glue => flip_low_bit(&mut sig.glue),
        Tamper::BlindedShare => flip_low_bit(&mut sig.blinded_share),
        Tamper::Commitment => flip_low_bit(&mut sig.commitment),
        Tamper::MemberId => sig.member_ids.reverse(),
        Tamper::Identity => identity.push(b'!'),
        Tamper::Digest | Tamper::ServerShare | Tamper::Ack => {}
    }
}

fn tamper_response(resp: &mut ServerResponse, t: Tamper) {
    match t {
        Tamper::Digest => resp.digest[0] ^= 1,
        Tamper::ServerShare => flip_low_bit(&mut resp.server_share),
        Tamper::Ack => resp.ack[0] ^= 1,
        _ => {}
    }
}

fn exchange(a: ExchangeArgs) -> anyhow::Result<Outcome> {
    let signer = load_signer(&a.files.ring, &a.key)?;
    let keys: ServerKeys = read_json(&a.server_key)?;
    let cfg = signer.ring.combining_config()?;
    let (mut sig, session) = sign_request(&signer, &keys.public(), a.identity.as_bytes(), a.seed)?;
    let mut identity = a.identity.as_bytes().to_vec();
    if let Some(t) = a.tamper {
        tamper_signature(&mut sig, &mut identity, t);
        if t == Tamper::MemberId && sig.member_ids.len() < 2 {
            sig.member_ids[0].push('!');
        }
    }
    let sig_bytes = sig.encode(&cfg)?;
    let (server, response) = server_side(&keys, &signer.ring, &sig_bytes, &identity, a.seed)?;
    let (client_verdict, client_key) = match response {
        None => ("not-run".to_string(), None),
        Some(mut resp) => {
            if let Some(t) = a.tamper {
                tamper_response(&mut resp, t);
            }
            match client_confirm(&session, &resp) {
                ClientVerdict::Accept(k) => ("accept".to_string(), Some(hex::encode(k.to_bytes()))),
                ClientVerdict::Reject(r) => (format!("reject: {r}"), None),
            }
        }
    };
    let keys_equal = client_key.is_some() && client_key == server.session_key_hex;
    let accepted = server.verdict == "accept" && client_verdict == "accept" && keys_equal;
    let transcript = serde_json::json!({
        "seed": a.seed,
        "tamper": a.tamper,
        "identity_hex": hex::encode(&identity),
        "signature_hex": hex::encode(&sig_bytes),
        "signature": sig,
        "server": server,
        "client": {
            "verdict": client_verdict,
            "session_key_hex": client_key,
        },
        "keys_equal": keys_equal,
        "accepted": accepted,
    });
    if let Some(path) = &a.transcript {
        write_json(path, &transcript)?;
    }
    if !accepted {
        eprintln!("exchange rejected");
    }
    emit(&transcript)?;
    Ok(if accepted { Outcome::Ok } else { Outcome::Reject })
}

fn keylist(a: KeylistArgs) -> anyhow::Result<Outcome> {
    let dist = KeyDistributor::new(&seed_bytes(a.seed), a.epoch_ms, a.cardinality, a.timeout_ms)?;
    let list = dist.list_for_session(a.session);
    let at = match a.at_ms {
        None => serde_json::Value::Null,
        Some(t) => match list.lookup(t) {
            Ok((key, h)) => serde_json::json!({
                "t_ms": t,
                "key_idx": h.key_idx,
                "remaining_ms": h.remaining,
                "key_hex": hex::encode(key),
            }),
            Err(e) => serde_json::json!({ "t_ms": t, "error": e.to_string() }),
        },
    };
    let scheduler = a.response_delay_ms.map(|d| {
        let c = correction_factor(d, a.timeout_ms);
        serde_json::json!({
            "t_last_ms": d,
            "correction_factor": c,
            "trigger_index": request_trigger_index(a.cardinality as u64, c),
        })
    });
    emit(&serde_json::json!({
        "seed": a.seed,
        "session": a.session,
        "ts_kl_ms": list.ts_kl,
        "timeout_ms": list.timeout,
        "cardinality": list.cardinality(),
        "session_length_ms": list.session_length(),
        "keys": list.keys().iter().map(hex::encode).collect::<Vec<_>>(),
        "response_hex": hex::encode(list.encode()),
        "at": at,
        "scheduler": scheduler,
    }))?;
    Ok(Outcome::Ok)
}

fn resolve_scenario(a: &SimulateArgs) -> anyhow::Result<SimScenario> {
    let mut s = match (&a.scenario, a.paper_topology, a.bootstrap_topology) {
        (Some(path), _, _) => read_json(path)?,
        (None, true, _) => build_paper_topology(),
        (None, false, true) => build_bootstrap_topology(),
        (None, false, false) => bail!("one of --scenario, --paper-topology or --bootstrap-topology is required"),
    };
    if let Some(m) = a.mode {
        s = s.with_mode(m.into());
    }
    if let Some(seed) = a.seed {
        s = s.with_seed(seed);
    }
    if a.no_correction {
        s.key.correction = false;
    }
    if let Some(d) = a.max_response_delay_ms {
        s.key.response_delay.max_ms = d;
        s.key.response_delay.min_ms = s.key.response_delay.min_ms.min(d);
    }
    s.validate()?;
    Ok(s)
}

/// Runs each scenario on its own thread; results keep input order.
fn run_all(scenarios: &[SimScenario]) -> anyhow::Result<Vec<Metrics>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = scenarios.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked").map_err(anyhow::Error::from))
            .collect()
    })
}

fn simulate(a: SimulateArgs) -> anyhow::Result<Outcome> {
    let s = resolve_scenario(&a)?;
    if a.dump_scenario {
        emit(&s)?;
        return Ok(Outcome::Ok);
    }
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    if a.trace.is_some() && (a.runs > 1 || a.overhead) {
        bail!("--trace needs a single run without --overhead");
    }
    let seeds: Vec<u64> = (0..a.runs as u64).map(|i| s.seed.wrapping_add(i)).collect();
    eprintln!("scenario {:?}, seeds {}..={}", s.name, seeds[0], seeds[seeds.len() - 1]);
    let doc = if a.overhead {
        let base: Vec<_> = seeds.iter().map(|&x| s.with_seed(x).with_mode(KeyMode::StaticKey)).collect();
        let secured: Vec<_> = seeds.iter().map(|&x| s.with_seed(x).with_mode(KeyMode::RotatingKey)).collect();
        let pairs: Vec<_> = run_all(&base)?.into_iter().zip(run_all(&secured)?).collect();
        let report = measure_overhead_runs(&pairs)?;
        eprintln!(
            "throughput delta {:.2}% (reference {:.0}%)",
            report.throughput_delta * 100.0,
            report.reference_throughput_delta * 100.0
        );
        serde_json::json!({ "seed": s.seed, "report": report })
    } else if let Some(trace_path) = &a.trace {
        let out = run_with_trace(&s)?;
        fs::write(trace_path, out.trace_ndjson()).with_context(|| format!("writing {}", trace_path.display()))?;
        serde_json::to_value(&out.metrics)?
    } else if a.runs == 1 {
        serde_json::to_value(run(&s)?)?
    } else {
        let runs: Vec<_> = seeds.iter().map(|&x| s.with_seed(x)).collect();
        serde_json::json!({ "seed": s.seed, "runs": run_all(&runs)? })
    };
    if let Some(out) = &a.out {
        write_json(out, &doc)?;
    }
    emit(&doc)?;
    Ok(Outcome::Ok)
}

const REFERENCE_PER_MEMBER_BYTES: f64 = 60.0;
const REFERENCE_FIXED_BYTES: f64 = 60.0;

fn bench_sig_size(a: BenchSigSizeArgs) -> anyhow::Result<Outcome> {
    if a.n.iter().any(|&n| n == 0) {
        bail!("ring sizes must be at least 1");
    }
    eprintln!("generating {} member keys", a.n.iter().max().unwrap_or(&0));
    let rows: Vec<SizeRow> = ringmesh::ring::signature_sizes(&a.n, a.p_bits, a.q_bits, &seed_bytes(a.seed))?;
    let pts: Vec<_> = rows.iter().map(|r| (r.n as u64, r.fixed_width_bytes as u64)).collect();
    let fit = fit_affine(&pts);
    if let Some(f) = &fit {
        eprintln!(
            "size = {:.1}·n + {:.1} bytes (reference {}·n + {})",
            f.a, f.b, REFERENCE_PER_MEMBER_BYTES, REFERENCE_FIXED_BYTES
        );
    }
    emit(&serde_json::json!({
        "seed": a.seed,
        "p_bits": a.p_bits,
        "q_bits": a.q_bits,
        "rows": rows,
        "fit": fit,
        "reference": { "a": REFERENCE_PER_MEMBER_BYTES, "b": REFERENCE_FIXED_BYTES },
    }))?;
    Ok(Outcome::Ok)
}
