use std::collections::{BTreeSet, HashSet};

use super::chain::{audit_blocks, Block};
use super::SidechainError;

/// Pick between two forks. A fork that is internally inconsistent or omits
/// any block anchored on the main chain loses; otherwise the longer fork
/// wins, and equal lengths go to the lower head hash.
pub fn fork_choice<'a>(
    chain_a: &'a [Block],
    chain_b: &'a [Block],
    anchors: &BTreeSet<String>,
) -> Result<&'a [Block], SidechainError> {
    match (chain_a.first(), chain_b.first()) {
        (Some(ga), Some(gb)) if ga.block_hash == gb.block_hash => {}
        _ => return Err(SidechainError::GenesisMismatch),
    }
    let respects = |chain: &[Block]| {
        if audit_blocks(chain).is_err() {
            return false;
        }
        let hashes: HashSet<&str> = chain.iter().map(|b| b.block_hash.as_str()).collect();
        anchors.iter().all(|a| hashes.contains(a.as_str()))
    };
    match (respects(chain_a), respects(chain_b)) {
        (false, false) => Err(SidechainError::AnchorViolation),
        (true, false) => Ok(chain_a),
        (false, true) => Ok(chain_b),
        (true, true) => {
            let (ha, hb) = (chain_a.last().expect("non-empty"), chain_b.last().expect("non-empty"));
            Ok(match chain_a.len().cmp(&chain_b.len()) {
                std::cmp::Ordering::Greater => chain_a,
                std::cmp::Ordering::Less => chain_b,
                std::cmp::Ordering::Equal if hb.block_hash < ha.block_hash => chain_b,
                std::cmp::Ordering::Equal => chain_a,
            })
        }
    }
}
