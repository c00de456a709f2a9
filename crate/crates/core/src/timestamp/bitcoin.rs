use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{Evidence, ProviderKind, TimestampError, TimestampProof, TimestampProvider};
use crate::canonical::{is_hex_digest, sha256};

const BLOCK_659792: &str = include_str!("../../fixtures/btc/block_659792.json");

/// A block header reference. The nTime field is miner-chosen and only
/// accurate to within two hours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtcHeaderAnchor {
    pub height: u64,
    #[serde(rename = "hash")]
    pub block_hash: String,
    pub ntime: DateTime<Utc>,
}

impl BtcHeaderAnchor {
    /// Block hashes meeting any realistic difficulty target start with zeros.
    pub fn looks_mined(&self) -> bool {
        is_hex_digest(&self.block_hash) && self.block_hash.starts_with("00000000")
    }
}

/// Anchors a digest to the most recent known block at request time.
pub struct BitcoinNTimeProvider {
    headers: Vec<BtcHeaderAnchor>,
}

impl BitcoinNTimeProvider {
    pub fn from_headers(mut headers: Vec<BtcHeaderAnchor>) -> Self {
        headers.sort_by_key(|h| (h.ntime, h.height));
        BitcoinNTimeProvider { headers }
    }

    /// Block 659792, mined 2020-12-04.
    pub fn fixture_659792() -> BtcHeaderAnchor {
        serde_json::from_str(BLOCK_659792).expect("bundled fixture parses")
    }

    /// `count` headers ten minutes apart starting at `start`, with hashes
    /// derived from `seed`.
    pub fn synthetic(start: DateTime<Utc>, count: u64, seed: u64) -> Self {
        let headers = (0..count)
            .map(|i| {
                let mut preimage = seed.to_be_bytes().to_vec();
                preimage.extend_from_slice(&i.to_be_bytes());
                let h = hex::encode(sha256(&sha256(&preimage)));
                BtcHeaderAnchor {
                    height: 700_000 + i,
                    block_hash: format!("00000000{}", &h[8..]),
                    ntime: start + Duration::minutes(10 * i as i64),
                }
            })
            .collect();
        Self::from_headers(headers)
    }

    pub fn headers(&self) -> &[BtcHeaderAnchor] {
        &self.headers
    }
}

impl TimestampProvider for BitcoinNTimeProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::BitcoinNTime
    }

    fn stamp(&self, digest: &str, now: DateTime<Utc>) -> Result<TimestampProof, TimestampError> {
        let precision = ProviderKind::BitcoinNTime.time_precision();
        let i = self.headers.partition_point(|h| h.ntime <= now);
        let header = i
            .checked_sub(1)
            .map(|i| &self.headers[i])
            .filter(|h| now - h.ntime <= precision)
            .ok_or_else(|| TimestampError::ProviderUnavailable(format!("no block header within two hours before {now}")))?;
        Ok(TimestampProof {
            provider: ProviderKind::BitcoinNTime,
            anchor_value: header.block_hash.clone(),
            anchor_time: header.ntime,
            time_precision_secs: precision.num_seconds(),
            uri: format!("btc://block/{}", header.height),
            stamped_digest: Some(digest.to_owned()),
            evidence: Evidence::BtcHeader(header.clone()),
        })
    }

    fn public_key(&self) -> Option<Vec<u8>> {
        None
    }
}

pub(super) fn verify_proof(proof: &TimestampProof, header: &BtcHeaderAnchor) -> bool {
    header.looks_mined()
        && proof.anchor_value.eq_ignore_ascii_case(&header.block_hash)
        && proof.anchor_time == header.ntime
        && proof.uri == format!("btc://block/{}", header.height)
}
