//! The `healthledger` command line. Each subcommand parses arguments,
//! calls into the core crate and renders the result; nothing else.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use data_encoding::{BASE32_NOPAD, BASE64};
use healthledger_core::crypto::{open, seal, CryptoError, KdfCost, SealedEnvelope};
use healthledger_core::harness::{compare, DeskError, HarnessError, MetricsReport, ScenarioConfig};
use healthledger_core::identity::{AuthSession, IdentityError};
use healthledger_core::ledger::{AccessScope, Chain, LedgerError, Role, TxError};
use healthledger_core::pbft::QuorumRule;
use healthledger_core::store::{ContentAddress, StoreError};
use rand::rngs::OsRng;
use serde::Serialize;
use serde_json::json;

use crate::bench::{bench_crypto, parse_size};
use crate::desk_dir::{DeskDir, DeskDirError};
use crate::formats::{self, FormatError};
use crate::host;
use crate::runs::{self, ReportFormat};
use crate::secrets::{self, SecretError, PASSWORD_VAR, RECORD_PASSWORD_VAR};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Auth = 2,
    Integrity = 3,
    Stall = 4,
    Io = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    fn new(exit: Exit, message: impl ToString) -> Self {
        CliError { exit, message: message.to_string() }
    }

    fn usage(message: impl ToString) -> Self {
        CliError::new(Exit::Usage, message)
    }
}

fn crypto_exit(e: &CryptoError) -> Exit {
    match e {
        CryptoError::EmptyPassword | CryptoError::InvalidParams(_) => Exit::Usage,
        CryptoError::KdfFailure | CryptoError::AuthFailure | CryptoError::MalformedEnvelope(_) | CryptoError::MalformedVerifier => {
            Exit::Integrity
        }
    }
}

fn desk_exit(e: &DeskError) -> Exit {
    match e {
        DeskError::Identity(IdentityError::DuplicateId | IdentityError::EmptyId) => Exit::Usage,
        DeskError::Identity(IdentityError::Crypto(c)) => crypto_exit(c),
        DeskError::Identity(_) | DeskError::UnknownUser(_) => Exit::Auth,
        DeskError::Rejected(TxError::Denied(_)) => Exit::Auth,
        DeskError::Rejected(_) | DeskError::UnknownRecord(_) | DeskError::Harness(_) => Exit::Usage,
        DeskError::Crypto(c) => crypto_exit(c),
        DeskError::Store(StoreError::NotFound(_) | StoreError::NodeDead(_)) => Exit::Io,
        DeskError::Store(StoreError::EmptyData) => Exit::Usage,
        DeskError::Store(_) | DeskError::EnvelopeMismatch | DeskError::BadState(_) => Exit::Integrity,
        DeskError::Stalled => Exit::Stall,
    }
}

fn format_exit(e: &FormatError) -> Exit {
    match e {
        FormatError::Ledger { .. } => Exit::Integrity,
        FormatError::Parse { .. } => Exit::Usage,
        FormatError::Io { .. } | FormatError::Csv(_) | FormatError::Json(_) => Exit::Io,
    }
}

impl From<DeskError> for CliError {
    fn from(e: DeskError) -> Self {
        CliError::new(desk_exit(&e), e)
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::new(format_exit(&e), e)
    }
}

impl From<DeskDirError> for CliError {
    fn from(e: DeskDirError) -> Self {
        let exit = match &e {
            DeskDirError::Missing(_) | DeskDirError::Exists(_) => Exit::Usage,
            DeskDirError::Format(f) => format_exit(f),
            DeskDirError::Desk(d) => desk_exit(d),
            DeskDirError::Misnamed { .. } => Exit::Integrity,
        };
        CliError::new(exit, e)
    }
}

impl From<CryptoError> for CliError {
    fn from(e: CryptoError) -> Self {
        CliError::new(crypto_exit(&e), e)
    }
}

impl From<SecretError> for CliError {
    fn from(e: SecretError) -> Self {
        let exit = match e {
            SecretError::Io(_) => Exit::Io,
            _ => Exit::Usage,
        };
        CliError::new(exit, e)
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::usage(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "healthledger", version, about = "Encrypted health records on a simulated PBFT ledger")]
pub struct Cli {
    /// Print machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encrypt a file into a password-sealed envelope.
    Seal(SealArgs),
    /// Decrypt an envelope produced by `seal`.
    Open(OpenArgs),
    /// Register users, log in, grant and revoke access.
    #[command(subcommand)]
    User(UserCommand),
    /// Store and fetch sealed records through the ledger.
    #[command(subcommand)]
    Record(RecordCommand),
    /// Run and compare simulated scenarios.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Inspect and verify chain exports.
    #[command(subcommand)]
    Ledger(LedgerCommand),
    /// Local timing tables.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KdfPreset {
    /// 64 MiB, 3 passes, 4 lanes.
    Standard,
    /// Cheap settings for tests and simulations.
    Light,
}

impl KdfPreset {
    fn cost(self) -> KdfCost {
        match self {
            KdfPreset::Standard => KdfCost::default(),
            KdfPreset::Light => KdfCost::light(),
        }
    }
}

#[derive(Args, Debug)]
pub struct SealArgs {
    /// File to encrypt.
    pub input: PathBuf,
    /// Defaults to the input path with `.env` appended.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Associated data bound to the envelope; must match on open.
    #[arg(long, default_value = "")]
    pub ad: String,
    #[arg(long, value_enum, default_value_t = KdfPreset::Standard)]
    pub kdf: KdfPreset,
}

#[derive(Args, Debug)]
pub struct OpenArgs {
    /// Envelope to decrypt.
    pub input: PathBuf,
    /// Defaults to the input path without `.env`, or with `.out` appended.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Associated data given at sealing time.
    #[arg(long, default_value = "")]
    pub ad: String,
}

#[derive(Args, Debug)]
pub struct DeskArg {
    /// Directory holding the desk state, chain and records.
    #[arg(long, env = "HEALTHLEDGER_DESK", default_value = "healthledger-desk")]
    pub desk: PathBuf,
}

#[derive(Args, Debug)]
pub struct LoginArgs {
    #[command(flatten)]
    pub desk: DeskArg,
    /// User id.
    #[arg(long)]
    pub id: String,
    /// Current 6-digit code from the user's authenticator.
    #[arg(long)]
    pub code: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Patient,
    Doctor,
}

#[derive(Subcommand, Debug)]
pub enum UserCommand {
    /// Register a user; creates the desk when `--seed` is given and none exists.
    Register {
        #[command(flatten)]
        desk: DeskArg,
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Cluster seed for a new desk.
        #[arg(long)]
        seed: Option<u64>,
        /// Validator count for a new desk.
        #[arg(long, default_value_t = 4)]
        nodes: usize,
        /// Password and record KDF cost for a new desk.
        #[arg(long, value_enum, default_value_t = KdfPreset::Standard)]
        kdf: KdfPreset,
    },
    /// Check password and one-time code.
    Login(LoginArgs),
    /// Grant a user read access to your records.
    Grant(GrantArgs),
    /// Revoke a previous grant.
    Revoke(GrantArgs),
}

#[derive(Args, Debug)]
pub struct GrantArgs {
    #[command(flatten)]
    pub login: LoginArgs,
    /// Grantee user id.
    #[arg(long)]
    pub to: String,
    /// Limit the grant to one record address; all records otherwise.
    #[arg(long)]
    pub record: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum RecordCommand {
    /// Seal a file under your password and record it on the ledger.
    Store {
        #[command(flatten)]
        login: LoginArgs,
        /// File to seal and store.
        file: PathBuf,
    },
    /// Fetch and decrypt a record you are authorized to read.
    Fetch {
        #[command(flatten)]
        login: LoginArgs,
        /// Owner of the record.
        #[arg(long)]
        patient: String,
        /// Record address printed by `record store`.
        #[arg(long)]
        address: String,
        /// Where to write the plaintext; stdout otherwise.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum SimCommand {
    /// Run a scenario for one or more seeds.
    Run(RunArgs),
    /// Compare metric reports against the first one.
    Compare {
        /// Report files; deltas are taken against the first.
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    TwoThirds,
    Classical,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario file, TOML or JSON; built-in defaults otherwise.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Seed `N` or inclusive range `A..B`; repeatable.
    #[arg(long, required = true, value_parser = parse_seeds)]
    pub seed: Vec<Vec<u64>>,
    /// Output directory; one subdirectory per seed when there are several.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report file format inside the output directory.
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Override the scenario's quorum rule.
    #[arg(long, value_enum)]
    pub quorum_rule: Option<RuleArg>,
    /// Time seal and open with the wall clock (makes reports machine-dependent).
    #[arg(long)]
    pub time_crypto: bool,
    /// Write process memory and CPU gauges to host.json.
    #[arg(long)]
    pub host_gauges: bool,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.parse().map_err(|_| "bad range start")?, b.parse().map_err(|_| "bad range end")?);
            if a > b || b - a >= 100_000 {
                return Err("range must be A..B with A <= B and fewer than 100000 seeds".into());
            }
            Ok((a..=b).collect())
        }
        None => s.parse().map(|v| vec![v]).map_err(|_| format!("bad seed {s:?}")),
    }
}

#[derive(Subcommand, Debug)]
pub enum LedgerCommand {
    /// Print blocks and transactions of a chain export.
    Dump {
        /// Chain export file or desk directory; the default desk otherwise.
        path: Option<PathBuf>,
    },
    /// Validate every block, certificate and transaction of a chain export.
    Verify {
        /// Chain export file or desk directory; the default desk otherwise.
        path: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Seal/open timings per record size.
    Crypto {
        /// Sizes such as 1K,64K,1M.
        #[arg(long, value_delimiter = ',', default_value = "1K,64K,1M")]
        sizes: Vec<String>,
        /// Seal and open repetitions per size.
        #[arg(long, default_value_t = 3)]
        iterations: u32,
        #[arg(long, value_enum, default_value_t = KdfPreset::Standard)]
        kdf: KdfPreset,
    },
}

/// What a command prints: human text, or a JSON value under `--json`.
pub struct Output {
    pub text: String,
    pub json: serde_json::Value,
    /// Raw bytes for stdout in text mode, e.g. a fetched record.
    pub raw: Option<Vec<u8>>,
    pub exit: Exit,
}

impl Output {
    fn new(text: impl Into<String>, json: serde_json::Value) -> Self {
        Output { text: text.into(), json, raw: None, exit: Exit::Ok }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    Ok(formats::read_file(path)?)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    Ok(formats::write_file(path, bytes)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(cli: Cli) -> Result<Output, CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Seal(a) => seal_cmd(a),
        Command::Open(a) => open_cmd(a),
        Command::User(c) => user_cmd(c),
        Command::Record(c) => record_cmd(c),
        Command::Sim(SimCommand::Run(a)) => sim_run(a, cli.json, verbose),
        Command::Sim(SimCommand::Compare { reports }) => sim_compare(&reports),
        Command::Ledger(c) => ledger_cmd(c),
        Command::Bench(BenchCommand::Crypto { sizes, iterations, kdf }) => bench_cmd(&sizes, iterations, kdf),
    }
}

fn seal_cmd(a: SealArgs) -> Result<Output, CliError> {
    let plaintext = read(&a.input)?;
    let password = secrets::password(PASSWORD_VAR, "Password: ")?;
    let env = seal(&plaintext, password.as_bytes(), &a.kdf.cost(), a.ad.as_bytes(), &mut OsRng)?;
    let out = a.output.unwrap_or_else(|| with_suffix(&a.input, ".env"));
    let bytes = env.to_bytes();
    write(&out, &bytes)?;
    let text = format!("sealed {} bytes into {} ({} bytes)", plaintext.len(), out.display(), bytes.len());
    Ok(Output::new(
        text,
        json!({"output": out, "plaintext_bytes": plaintext.len(), "envelope_bytes": bytes.len(), "envelope_digest": env.digest()}),
    ))
}

fn open_cmd(a: OpenArgs) -> Result<Output, CliError> {
    let bytes = read(&a.input)?;
    let password = secrets::password(PASSWORD_VAR, "Password: ")?;
    let env = SealedEnvelope::from_bytes(&bytes)?;
    let plaintext = zeroize::Zeroizing::new(open(&env, password.as_bytes(), a.ad.as_bytes())?);
    let out = a.output.unwrap_or_else(|| match a.input.extension() {
        Some(e) if e == "env" => a.input.with_extension(""),
        _ => with_suffix(&a.input, ".out"),
    });
    write(&out, &plaintext)?;
    let text = format!("opened {} bytes into {}", plaintext.len(), out.display());
    Ok(Output::new(text, json!({"output": out, "plaintext_bytes": plaintext.len()})))
}

fn otpauth_uri(id: &str, secret: &[u8]) -> String {
    let mut label = String::new();
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~".contains(&b) {
            label.push(b as char);
        } else {
            let _ = write!(label, "%{b:02X}");
        }
    }
    format!(
        "otpauth://totp/healthledger:{label}?secret={}&issuer=healthledger&algorithm=SHA1&digits=6&period=30",
        BASE32_NOPAD.encode(secret)
    )
}

fn login(dir: &DeskDir, args: &LoginArgs) -> Result<(healthledger_core::harness::Desk, AuthSession, zeroize::Zeroizing<String>), CliError> {
    let mut desk = dir.load(unix_now())?;
    let password = secrets::password(PASSWORD_VAR, "Password: ")?;
    let session = desk.login(&args.id, password.as_bytes(), &args.code)?;
    Ok((desk, session, password))
}

fn scope_of(record: &Option<String>) -> Result<AccessScope, CliError> {
    match record {
        None => Ok(AccessScope::AllRecords),
        Some(hex) => {
            ContentAddress::from_hex(hex).map(AccessScope::Record).ok_or_else(|| CliError::usage(format!("bad record address {hex:?}")))
        }
    }
}

fn user_cmd(c: UserCommand) -> Result<Output, CliError> {
    match c {
        UserCommand::Register { desk, id, role, seed, nodes, kdf } => {
            let dir = DeskDir::new(desk.desk);
            let mut d = match (dir.exists(), seed) {
                (true, _) => dir.load(unix_now())?,
                (false, Some(seed)) => dir.create(seed, nodes, kdf.cost(), unix_now())?,
                (false, None) => return Err(DeskDirError::Missing(dir.root().into()).into()),
            };
            let password = secrets::password(PASSWORD_VAR, "New password: ")?;
            let role = match role {
                RoleArg::Patient => Role::Patient,
                RoleArg::Doctor => Role::Doctor,
            };
            let reg = d.register(&id, role, password.as_bytes(), &mut OsRng)?;
            dir.save(&d)?;
            let uri = otpauth_uri(&id, reg.totp_secret.as_ref());
            let text = format!(
                "registered {id} at height {}\npublic key {}\nauthenticator: {uri}",
                reg.height,
                healthledger_core::hash::to_hex(&reg.public_key.to_bytes())
            );
            Ok(Output::new(
                text,
                json!({"id": id, "role": role, "public_key": reg.public_key, "tx": reg.tx, "height": reg.height, "otpauth_uri": uri}),
            ))
        }
        UserCommand::Login(args) => {
            let dir = DeskDir::new(&args.desk.desk);
            let (_, session, _) = login(&dir, &args)?;
            Ok(Output::new(format!("{} authenticated as {:?}", session.user, session.role), to_value(&session)))
        }
        UserCommand::Grant(g) => grant_cmd(g, true),
        UserCommand::Revoke(g) => grant_cmd(g, false),
    }
}

fn grant_cmd(g: GrantArgs, grant: bool) -> Result<Output, CliError> {
    let scope = scope_of(&g.record)?;
    let dir = DeskDir::new(&g.login.desk.desk);
    let (mut desk, session, _) = login(&dir, &g.login)?;
    let committed = if grant { desk.grant(&session, &g.to, scope)? } else { desk.revoke(&session, &g.to, scope)? };
    dir.save(&desk)?;
    let verb = if grant { "granted" } else { "revoked" };
    Ok(Output::new(
        format!("{} {verb} access for {} at height {}", session.user, g.to, committed.height),
        json!({"action": verb, "patient": session.user, "grantee": g.to, "scope": scope, "tx": committed.tx, "height": committed.height}),
    ))
}

fn record_cmd(c: RecordCommand) -> Result<Output, CliError> {
    match c {
        RecordCommand::Store { login: args, file } => {
            let plaintext = zeroize::Zeroizing::new(read(&file)?);
            let dir = DeskDir::new(&args.desk.desk);
            let (mut desk, session, password) = login(&dir, &args)?;
            let record_password = secrets::optional(RECORD_PASSWORD_VAR)?.unwrap_or(password);
            let stored = desk.store_record(&session, record_password.as_bytes(), &plaintext, &mut OsRng)?;
            dir.save(&desk)?;
            Ok(Output::new(
                format!("stored {} at height {} on {} replicas", stored.address.0, stored.height, stored.replicas),
                to_value(&stored),
            ))
        }
        RecordCommand::Fetch { login: args, patient, address, output } => {
            let address = ContentAddress::from_hex(&address).ok_or_else(|| CliError::usage(format!("bad record address {address:?}")))?;
            let dir = DeskDir::new(&args.desk.desk);
            let (mut desk, session, password) = login(&dir, &args)?;
            let record_password = match secrets::optional(RECORD_PASSWORD_VAR)? {
                Some(p) => p,
                None if session.user == patient => password,
                None => return Err(CliError::usage(format!("set {RECORD_PASSWORD_VAR} to the record owner's secret"))),
            };
            let fetched = desk.fetch_record(&session, &patient, address, record_password.as_bytes());
            // the access attempt is on the ledger even when decryption fails
            dir.save(&desk)?;
            let fetched = fetched?;
            let mut json = json!({
                "patient": patient, "address": address, "bytes": fetched.plaintext.len(),
                "served_by": fetched.served_by, "access_tx": fetched.access_tx, "height": fetched.height,
            });
            let mut out = Output::new(String::new(), serde_json::Value::Null);
            match output {
                Some(path) => {
                    write(&path, &fetched.plaintext)?;
                    json["output"] = to_value(&path);
                    out.text = format!("fetched {} bytes into {}", fetched.plaintext.len(), path.display());
                }
                None => {
                    json["plaintext_base64"] = BASE64.encode(&fetched.plaintext).into();
                    out.raw = Some(fetched.plaintext.to_vec());
                }
            }
            out.json = json;
            Ok(out)
        }
    }
}

fn sim_run(a: RunArgs, json_mode: bool, verbose: u8) -> Result<Output, CliError> {
    if json_mode && a.format == FormatArg::Csv && a.out.is_none() {
        return Err(CliError::usage("--json and --format csv both select stdout; pick one or pass --out"));
    }
    let mut cfg = match &a.scenario {
        Some(path) => formats::load_scenario(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(rule) = a.quorum_rule {
        cfg.quorum_rule = match rule {
            RuleArg::TwoThirds => QuorumRule::TwoThirds,
            RuleArg::Classical => QuorumRule::Classical,
        };
    }
    cfg.validate()?;
    let seeds: Vec<u64> = a.seed.into_iter().flatten().collect();
    if verbose > 0 {
        eprintln!("running {:?} for {} seed(s)", cfg.name, seeds.len());
    }
    let results = runs::run_seeds(&cfg, &seeds, a.time_crypto);
    let format = match a.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::Csv => ReportFormat::Csv,
    };
    let mut reports: Vec<MetricsReport> = Vec::with_capacity(results.len());
    for (seed, result) in seeds.iter().zip(results) {
        let out = result?;
        if let Some(root) = &a.out {
            let dir = if seeds.len() == 1 { root.clone() } else { root.join(format!("seed-{seed}")) };
            runs::write_run(&dir, &out, format)?;
            if verbose > 0 {
                eprintln!("seed {seed}: wrote {}", dir.display());
            }
        }
        reports.push(out.report);
    }
    let gauges = a.host_gauges.then(host::sample);
    if let (Some(root), Some(g)) = (&a.out, &gauges) {
        write(&root.join("host.json"), &serde_json::to_vec_pretty(g).map_err(FormatError::Json)?)?;
    }
    if let (Some(root), true) = (&a.out, reports.len() > 1) {
        write(&root.join(runs::REPORT_CSV), &formats::reports_csv(&reports)?)?;
    }
    let mut text = String::from("seed      committed  stalled  efficiency%  fault-tol%  integrity%  latency-p95-ms\n");
    for r in &reports {
        let m = &r.metrics;
        let _ = writeln!(
            text,
            "{:<9} {:>9}  {:>7}  {:>11.2}  {:>10.2}  {:>10.2}  {:>14.2}",
            r.seed,
            r.counts.txs_committed,
            r.stalled,
            m.consensus_efficiency_pct,
            m.fault_tolerance_pct,
            m.data_integrity_pct,
            m.latency_p95_ms
        );
    }
    let mut json = if reports.len() == 1 { to_value(&reports[0]) } else { to_value(&reports) };
    if let Some(g) = &gauges {
        json = json!({"reports": json, "host": g});
    }
    let mut out = Output::new(text.trim_end(), json);
    if a.out.is_none() && a.format == FormatArg::Csv {
        out.raw = Some(formats::reports_csv(&reports)?);
    }
    if reports.iter().any(|r| r.stalled) {
        out.exit = Exit::Stall;
    }
    Ok(out)
}

fn sim_compare(paths: &[PathBuf]) -> Result<Output, CliError> {
    let reports = paths.iter().map(|p| formats::load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = compare(&reports).map_err(CliError::usage)?;
    let mut text = format!("{:<34}", "metric");
    for r in &reports {
        let _ = write!(text, " {:>22}", format!("{}#{}", r.scenario, r.seed));
    }
    text.push('\n');
    for row in &cmp.rows {
        let _ = write!(text, "{:<34}", row.metric);
        for (v, d) in row.values.iter().zip(&row.deltas) {
            let cell = match (v, d) {
                (Some(v), Some(d)) => format!("{v:.3} ({d:+.3})"),
                _ => "-".into(),
            };
            let _ = write!(text, " {cell:>22}");
        }
        text.push('\n');
    }
    Ok(Output::new(text.trim_end(), to_value(&cmp)))
}

/// A chain file, or the chain inside a desk directory.
fn chain_path(path: Option<PathBuf>) -> PathBuf {
    let path = path.unwrap_or_else(|| PathBuf::from(std::env::var("HEALTHLEDGER_DESK").unwrap_or_else(|_| "healthledger-desk".into())));
    if path.is_dir() {
        DeskDir::new(path).chain_path()
    } else {
        path
    }
}

fn ledger_cmd(c: LedgerCommand) -> Result<Output, CliError> {
    match c {
        LedgerCommand::Dump { path } => {
            let chain = formats::load_chain(&chain_path(path))?;
            let dump = formats::dump_chain(&chain);
            let mut text = format!(
                "height {}  transactions {}  users {}  records {}  live grants {}\n",
                dump.height, dump.transactions, dump.users, dump.records, dump.live_grants
            );
            for b in &dump.blocks {
                let _ = writeln!(
                    text,
                    "#{:<5} {} view {} proposer n{} txs {}",
                    b.height,
                    &b.hash[..16],
                    b.view,
                    b.proposer,
                    b.transactions.len()
                );
                for tx in &b.transactions {
                    let _ = writeln!(
                        text,
                        "       {} {:?} {} -> {}",
                        &tx.id[..16],
                        tx.action,
                        tx.actor,
                        tx.grantee.as_deref().unwrap_or(&tx.subject)
                    );
                }
            }
            Ok(Output::new(text.trim_end(), to_value(&dump)))
        }
        LedgerCommand::Verify { path } => {
            let path = chain_path(path);
            let bytes = read(&path)?;
            match Chain::import(&bytes) {
                Ok(chain) if chain.replay_state() == *chain.state() => Ok(Output::new(
                    format!("valid: height {}, {} transactions, tip {}", chain.height(), chain.transaction_count(), chain.tip_hash()),
                    json!({"valid": true, "height": chain.height(), "transactions": chain.transaction_count(), "tip": chain.tip_hash()}),
                )),
                Ok(_) => Err(CliError::new(Exit::Integrity, "replayed state differs from the materialized state")),
                Err(e) => {
                    let height = match &e {
                        LedgerError::Invalid(v) => Some(v.height),
                        _ => None,
                    };
                    let mut out = Output::new(format!("invalid: {e}"), json!({"valid": false, "error": e.to_string(), "height": height}));
                    out.exit = Exit::Integrity;
                    Ok(out)
                }
            }
        }
    }
}

fn bench_cmd(sizes: &[String], iterations: u32, kdf: KdfPreset) -> Result<Output, CliError> {
    let sizes = sizes.iter().map(|s| parse_size(s)).collect::<Result<Vec<_>, _>>().map_err(CliError::usage)?;
    let rows = bench_crypto(&sizes, iterations, kdf.cost())?;
    let mut text = String::from("size_bytes  seal_ms  open_ms  seal_MiB/s  open_MiB/s\n");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>10}  {:>7.2}  {:>7.2}  {:>10.2}  {:>10.2}",
            r.size_bytes, r.seal_mean_ms, r.open_mean_ms, r.seal_mib_per_s, r.open_mib_per_s
        );
    }
    text.push_str("timings include key derivation and depend on this machine");
    Ok(Output::new(text, json!({"kdf": kdf.cost(), "rows": rows, "comparable_across_machines": false})))
}

/// Parses `args`, runs the command and prints its output.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Usage as u8 } else { 0 });
        }
    };
    let json_mode = cli.json;
    match run(cli) {
        Ok(out) => {
            let printed = if json_mode {
                formats::write_stdout(format!("{}\n", out.json).as_bytes())
            } else if let Some(raw) = &out.raw {
                formats::write_stdout(raw)
            } else {
                formats::write_stdout(format!("{}\n", out.text).as_bytes())
            };
            if let (Some(_), false) = (&out.raw, json_mode) {
                if !out.text.is_empty() {
                    eprintln!("{}", out.text);
                }
            }
            match printed {
                Ok(()) => ExitCode::from(out.exit as u8),
                Err(_) => ExitCode::from(Exit::Io as u8),
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            if json_mode {
                let _ = formats::write_stdout(format!("{}\n", json!({"error": e.message, "exit_code": e.exit as u8})).as_bytes());
            }
            ExitCode::from(e.exit as u8)
        }
    }
}
