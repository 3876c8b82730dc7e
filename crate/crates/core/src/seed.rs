use sha2::{Digest, Sha256};

/// Platform-independent 64-bit hash of a seed and a list of byte strings.
pub fn stable_hash(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// Seed for a task identified by its coordinates (model, fold, grid point, ...).
pub fn derive_seed(seed: u64, coordinates: &[u64]) -> u64 {
    let bytes: Vec<[u8; 8]> = coordinates.iter().map(|c| c.to_le_bytes()).collect();
    let parts: Vec<&[u8]> = bytes.iter().map(|b| b.as_slice()).collect();
    stable_hash(seed, &parts)
}
