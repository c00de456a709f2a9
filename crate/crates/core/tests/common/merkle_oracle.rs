use sha2::{Digest, Sha256};

fn h(parts: &[&[u8]]) -> Vec<u8> {
    let mut d = Sha256::new();
    for p in parts {
        d.update(p);
    }
    d.finalize().to_vec()
}

/// Recursive tree hash: leaves prefixed with 0x00, inner nodes with 0x01,
/// split at the largest power of two strictly below the leaf count.
pub fn root(leaves: &[Vec<u8>]) -> Vec<u8> {
    assert!(!leaves.is_empty());
    if leaves.len() == 1 {
        return h(&[&[0u8], &leaves[0]]);
    }
    let mut k = 1;
    while k * 2 < leaves.len() {
        k *= 2;
    }
    h(&[&[1u8], &root(&leaves[..k]), &root(&leaves[k..])])
}

pub fn root_hex(leaves_hex: &[String]) -> String {
    let raw: Vec<Vec<u8>> = leaves_hex.iter().map(|l| hex::decode(l).expect("hex leaf")).collect();
    hex::encode(root(&raw))
}

pub fn ceil_log2(n: usize) -> usize {
    let mut d = 0;
    while (1usize << d) < n {
        d += 1;
    }
    d
}
