//! CLI reports compared byte-for-byte with files under `tests/golden/`.
//! `ODDREG_BLESS=1 cargo test --test golden` rewrites them.

use std::path::PathBuf;

use clap::Parser;
use oddreg::cli::{execute, Cli};

fn golden(name: &str, args: &[&str]) {
    let cli = Cli::try_parse_from(["oddreg", "--no-timing"].iter().chain(args)).unwrap();
    let (text, code) = execute(&cli).unwrap();
    assert_eq!(code, 0, "{args:?} exited {code}");
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("ODDREG_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, expected, "{} differs", path.display());
}

#[test]
fn table_one_text() {
    golden("table1.txt", &["tables", "--which", "1"]);
}

#[test]
fn table_two_text() {
    golden("table2.txt", &["tables", "--which", "2"]);
}

#[test]
fn table_three_text() {
    golden("table3.txt", &["tables", "--which", "3"]);
}

#[test]
fn table_three_json() {
    golden("table3.json", &["--format", "json", "tables", "--which", "3"]);
}

#[test]
fn psi_value() {
    golden("psi_3_107_131_20.txt", &["psi", "--eta", "3", "--u", "107", "--v", "131", "--w", "20"]);
}

#[test]
fn watson_chain() {
    golden("watson_1_5_100.txt", &["watson", "--form", "1,5,100", "--p", "5"]);
}

#[test]
fn genus_classes() {
    golden("genus_1_4_5.txt", &["genus", "--form", "1,4,5"]);
}

#[test]
fn verify_json() {
    golden("verify_1_4_5.json", &["--format", "json", "verify", "--form", "1,4,5", "--limit", "10000"]);
}

#[test]
fn trap_report() {
    let cert = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/certs/trap_l3_r2.json");
    golden("trap_l3_r2.txt", &["trap", "--cert", cert.to_str().unwrap()]);
}
