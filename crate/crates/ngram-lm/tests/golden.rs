//! The committed two-word golden fixture.

use std::fs;
use std::io::Cursor;

use ngram_lm::arpa::{read_arpa, to_arpa_string};

const LN_10: f64 = std::f64::consts::LN_10;

fn fixture_text() -> String {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/fixtures/golden_ab.arpa"
    );
    fs::read_to_string(path).expect("golden fixture present")
}

#[test]
fn golden_fixture_matches_its_hand_table() {
    let model = read_arpa(Cursor::new(fixture_text())).unwrap();
    let a = model.vocab().id("a").unwrap();
    let b = model.vocab().id("b").unwrap();
    // Hand table: p(a) = p(b) = 0.5, alpha(a) = 0.8, p(b|a) = 0.6, and the
    // backed-off cell p(a|a) = 0.8 * 0.5 = 0.4. Stored values carry the
    // 7-decimal print precision of the file.
    let cases: [(&[u32], u32, f64); 5] = [
        (&[], a, 0.5),
        (&[], b, 0.5),
        (&[a], b, 0.6),
        (&[a], a, 0.4),
        (&[b], b, 0.5), // alpha(b) = 1 (no weight stored)
    ];
    for (history, word, want) in cases {
        let got = model.conditional_prob(history, word).unwrap();
        assert!(
            ((got - want.ln()) / LN_10).abs() < 1e-6,
            "p({word}|{history:?}) = {got}, want ln {want}"
        );
    }
    assert!(model.validate_with_tolerance(1e-5).is_clean());
}

#[test]
fn golden_fixture_write_is_byte_identical() {
    let text = fixture_text();
    let model = read_arpa(Cursor::new(text.clone())).unwrap();
    assert_eq!(to_arpa_string(&model), text);
}
