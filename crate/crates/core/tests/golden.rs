//! Seeded policies must keep producing the same trees across releases.
//! Run with `FPGAUNTLET_BLESS=1` to rewrite the recorded file.

use fpgauntlet_core::exprtree::{build_tree, OrderPolicy};
use fpgauntlet_core::{FloatFormat, FpValue};

const GOLDEN: &str = "tests/golden/seeded_trees.txt";

fn render() -> String {
    let xs: Vec<FpValue> = (1..=10).map(|i| FpValue::from_i64(i, FloatFormat::Binary64).unwrap()).collect();
    let mut out = String::new();
    for policy in [
        OrderPolicy::RandomPermutation(7),
        OrderPolicy::RandomPermutation(8),
        OrderPolicy::RandomTree(7),
        OrderPolicy::RandomTree(8),
    ] {
        let t = build_tree(&policy, &xs).unwrap();
        out.push_str(&format!("{policy} {t}\n"));
    }
    out
}

#[test]
fn seeded_trees_are_stable() {
    let got = render();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("FPGAUNTLET_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(got, want);
}
