//! Everything a command needs from the data directory: identities and keys,
//! the clock, and the persisted platform.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Duration, Utc};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use oconsent::flow::{FlowConfig, Platform};
use oconsent::identity::{generate_keypair_with_bits, Identity, IdentityStore, KeyPair, Role};
use oconsent::timestamp::{
    BitcoinNTimeProvider, NistBeaconProvider, SimulatedBeacon, SimulatedTsa, TimestampProvider,
};

/// Start of simulated time in a fresh data directory.
pub const SIMULATED_EPOCH: &str = "2026-01-01T00:00:00Z";

/// How far the simulated clock moves after each command.
const SIMULATED_STEP_SECS: i64 = 60;

const META_FILE: &str = "platform.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockMode {
    Real,
    Simulated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    platform_id: String,
    tsa_id: String,
    beacon_id: String,
    genesis: DateTime<Utc>,
    simulated_now: DateTime<Utc>,
}

pub struct Workspace {
    dir: PathBuf,
    meta: Meta,
    clock: ClockMode,
    key_bits: usize,
    pub identities: IdentityStore,
    pub platform: Platform,
    pub now: DateTime<Utc>,
}

fn simulated_epoch() -> DateTime<Utc> {
    SIMULATED_EPOCH.parse().expect("valid epoch")
}

fn service_identity(store: &IdentityStore, name: &str, key_bits: usize) -> Result<String> {
    let identity = Identity::new(Role::Platform, name);
    let id = identity.id().to_owned();
    store.register(identity, Some(generate_keypair_with_bits(None, key_bits)?))?;
    Ok(id)
}

impl Workspace {
    pub fn open(dir: &Path, clock: ClockMode, key_bits: usize, passphrase: &str) -> Result<Workspace> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let identities = IdentityStore::open(dir, passphrase)?;
        let meta_path = dir.join(META_FILE);
        let meta = if meta_path.exists() {
            serde_json::from_slice(&fs::read(&meta_path)?).context("reading platform.json")?
        } else {
            let start = match clock {
                ClockMode::Real => Utc::now(),
                ClockMode::Simulated => simulated_epoch(),
            };
            let meta = Meta {
                platform_id: service_identity(&identities, "OConsent platform", key_bits)?,
                tsa_id: service_identity(&identities, "Simulated timestamp authority", key_bits)?,
                beacon_id: service_identity(&identities, "Simulated randomness beacon", key_bits)?,
                genesis: start,
                simulated_now: start,
            };
            identities.flush()?;
            fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
            meta
        };
        let now = match clock {
            ClockMode::Real => Utc::now(),
            ClockMode::Simulated => meta.simulated_now,
        };
        if now < meta.genesis {
            bail!("clock reads {now}, before the platform genesis {}", meta.genesis);
        }
        let key = |id: &str| identities.signing_key(id).with_context(|| format!("loading key of {id}"));
        let headers = ((now - meta.genesis).num_minutes() / 10 + 2 * 144 + 1) as u64;
        let providers: Vec<Box<dyn TimestampProvider>> = vec![
            Box::new(SimulatedTsa::new(key(&meta.tsa_id)?)),
            Box::new(NistBeaconProvider::simulated(SimulatedBeacon::new(
                key(&meta.beacon_id)?,
                meta.genesis,
                1,
            ))),
            Box::new(BitcoinNTimeProvider::synthetic(meta.genesis - Duration::days(1), headers, 1)),
        ];
        let platform = Platform::open(dir, key(&meta.platform_id)?, providers, FlowConfig::default(), meta.genesis - Duration::days(1))?;
        for identity in identities.identities() {
            if identity.role() != Role::Platform {
                platform.register_party(identity.clone(), identities.public_key(identity.id())?);
            }
        }
        Ok(Workspace {
            dir: dir.to_path_buf(),
            meta,
            clock,
            key_bits,
            identities,
            platform,
            now,
        })
    }

    pub fn subdir(&self, name: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::create_dir_all(&path)?;
        Ok(path)
    }

    pub fn new_key(&self) -> Result<KeyPair> {
        Ok(generate_keypair_with_bits(None, self.key_bits)?)
    }

    pub fn key_of(&self, id: &str) -> Result<KeyPair> {
        self.identities.signing_key(id).with_context(|| format!("no private key for {id}"))
    }

    pub fn identity(&self, id: &str) -> Result<Identity> {
        self.identities.get(id).with_context(|| format!("unknown identity {id}"))
    }

    /// Move simulated time forward without running a command.
    pub fn advance(&mut self, by: Duration) -> Result<()> {
        if self.clock != ClockMode::Simulated {
            bail!("only the simulated clock can be advanced");
        }
        if by < Duration::zero() {
            bail!("time cannot move backwards");
        }
        self.now += by;
        Ok(())
    }

    /// Persist platform state and identities, then tick the simulated clock.
    pub fn close(mut self) -> Result<()> {
        self.platform.save()?;
        self.identities.flush()?;
        if self.clock == ClockMode::Simulated {
            self.meta.simulated_now = self.now + Duration::seconds(SIMULATED_STEP_SECS);
            let tmp = self.dir.join(format!("{META_FILE}.tmp"));
            fs::write(&tmp, serde_json::to_vec_pretty(&self.meta)?)?;
            fs::rename(&tmp, self.dir.join(META_FILE))?;
        }
        Ok(())
    }
}
