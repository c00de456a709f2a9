//! `oconsent`: drive a persisted OConsent platform from the shell.
//!
//! Exit codes: 0 for grant or valid, 1 for deny or invalid, 2 for errors.

mod commands;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uuid::Uuid;

use oconsent::flow::FlowError;
use oconsent::identity::{Role, KEY_BITS};
use workspace::ClockMode;

#[derive(Debug, Parser)]
#[command(name = "oconsent", version, about = "Consent agreements with verifiable proofs and NGAC access decisions")]
pub struct Cli {
    /// Directory holding keys, the sidechain, main-chain simulators and audit log.
    #[arg(long, global = true, default_value = "oconsent-data", env = "OCONSENT_DATA_DIR")]
    data_dir: PathBuf,

    /// `simulated` starts at a fixed epoch and ticks one minute per command.
    #[arg(long, global = true, value_enum, default_value = "simulated")]
    clock: ClockMode,

    /// Confirmations to wait for on each simulated main chain.
    #[arg(long, global = true, default_value_t = 6)]
    confirmations: u64,

    /// RSA modulus size for newly generated keys.
    #[arg(long, global = true, default_value_t = KEY_BITS)]
    key_bits: usize,

    /// Passphrase protecting stored private keys.
    #[arg(long, global = true, env = "OCONSENT_PASSPHRASE", default_value = "oconsent", hide_env_values = true)]
    passphrase: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register data subjects and controllers.
    #[command(subcommand)]
    Party(PartyCommand),
    /// A controller asks a subject for consent; prints the draft agreement.
    Request(RequestArgs),
    /// The subject answers a stored request.
    Grant(GrantArgs),
    /// The subject withdraws consent for a whole agreement lineage.
    Revoke(RevokeArgs),
    /// Ask for a data access key under an agreement.
    Access(AccessArgs),
    /// Verify a consent proof, fingerprint proof or data access key file.
    VerifyProof(VerifyArgs),
    /// Batch pending proofs and anchor the batch on both main chains.
    AnchorNow(AnchorArgs),
    /// Export the audit trail of an agreement.
    Audit(AuditArgs),
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Ngac(NgacCommand),
    #[command(subcommand)]
    Cache(CacheCommand),
    #[command(subcommand)]
    Clock(ClockCommand),
}

#[derive(Debug, Subcommand)]
pub enum PartyCommand {
    Add {
        #[arg(long)]
        role: Role,
        #[arg(long)]
        name: String,
        /// 32 lowercase hex characters; random when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    List,
}

#[derive(Debug, Args)]
pub struct RequestArgs {
    #[arg(long)]
    controller: String,
    #[arg(long)]
    subject: String,
    /// Lowercase processing context; must be one of the requested purposes.
    #[arg(long)]
    context: String,
    /// `purpose=attr1,attr2` with an optional `@YYYY-MM-DD` expiry. Repeatable.
    #[arg(long = "scope", required = true)]
    scopes: Vec<String>,
    #[arg(long)]
    lease_days: Option<u32>,
    /// Allow auxiliary controllers to use the agreement through its proxy.
    #[arg(long)]
    transferrable: bool,
    /// Auxiliary controller id. Repeatable.
    #[arg(long = "aux")]
    aux: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GrantArgs {
    /// Request id printed by `request`, or a path to a request file.
    request: String,
    /// Decline instead of accepting.
    #[arg(long)]
    decline: bool,
}

#[derive(Debug, Args)]
pub struct RevokeArgs {
    #[arg(long)]
    agreement: Uuid,
    /// The data subject revoking; only the subject may revoke.
    #[arg(long)]
    subject: String,
}

#[derive(Debug, Args)]
pub struct AccessArgs {
    #[arg(long)]
    requester: String,
    #[arg(long)]
    agreement: Uuid,
    #[arg(long)]
    purpose: String,
    /// Data attribute to access. Repeatable.
    #[arg(long = "attr", required = true)]
    attributes: Vec<String>,
    /// Operation, e.g. `r`. Repeatable.
    #[arg(long = "op", default_value = "r")]
    ops: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    file: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnchorArgs {
    /// Confirmations on the Ethereum simulator; defaults to `--confirmations`.
    #[arg(long)]
    eth_confirmations: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    agreement: Uuid,
    /// Write the export here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ChainCommand {
    /// Print one block as canonical JSON, or every block as JSON lines.
    Export {
        #[arg(long)]
        height: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum NgacCommand {
    /// Decide whether `user` may perform `op` on `object`.
    Check {
        #[arg(long)]
        user: String,
        #[arg(long)]
        op: String,
        #[arg(long)]
        object: String,
        /// Policy document; the platform's own policy when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// Counters of the consent state cache in this process.
    Stats,
}

#[derive(Debug, Subcommand)]
pub enum ClockCommand {
    Now,
    /// Move the simulated clock forward.
    Advance {
        #[arg(long, default_value_t = 0)]
        days: i64,
        #[arg(long, default_value_t = 0)]
        seconds: i64,
    },
}

/// What a successful command concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Positive,
    Negative,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(Verdict::Positive) => ExitCode::SUCCESS,
        Ok(Verdict::Negative) => ExitCode::from(1),
        // A tampered audit log is an invalid result, not a malfunction.
        Err(e) if matches!(e.downcast_ref(), Some(FlowError::AuditTampered { .. })) => {
            eprintln!("invalid: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
