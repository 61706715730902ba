use swarmsync_core::protocol::vectors::{check_vector, golden_vectors, CodecVector};

const FILE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/codec_vectors.json");

fn load() -> Vec<CodecVector> {
    let text = std::fs::read_to_string(FILE).expect("codec_vectors.json is checked in");
    serde_json::from_str(&text).unwrap()
}

#[test]
fn checked_in_vectors_decode_exactly() {
    let vectors = load();
    assert!(vectors.len() >= 10);
    let failures: Vec<String> = vectors.iter().filter_map(|v| check_vector(v).err()).collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn checked_in_vectors_match_the_generator() {
    // regenerate with `swarmsync codec-vectors --out crates/core/tests/data/codec_vectors.json`
    assert_eq!(load(), golden_vectors());
}
