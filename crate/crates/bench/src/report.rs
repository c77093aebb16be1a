//! Report headers: every emitted file names its config hash and seeds.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of the config's JSON serialisation, hex encoded.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serialises");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `#` comment lines opening a CSV report.
pub fn header(command: &str, hash: &str, seeds: &[u64], notes: &[String]) -> String {
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let mut s = format!(
        "# zcproxy {command}\n# config_sha256={hash}\n# seeds={}\n",
        seeds.join(",")
    );
    for n in notes {
        s.push_str("# ");
        s.push_str(n);
        s.push('\n');
    }
    s
}

/// Protocol note written into every regression report.
pub const PROTOCOL_NOTE: &str =
    "protocol=mean and sample std of test R2 over one shuffled split per seed";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn header_lines() {
        let h = header("fit", "ab", &[0, 1], &["x=1".into()]);
        assert_eq!(h, "# zcproxy fit\n# config_sha256=ab\n# seeds=0,1\n# x=1\n");
    }
}
