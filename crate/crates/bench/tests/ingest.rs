use std::process::Command;

use zcp_bench::{ingest_str, AccColumn, FlopsUnit, Format, IngestOptions, PercentMode};
use zcp_proxies::ProxyId;

const THREE: &str = "\
# source=handmade
arch_index,dataset,jacov,flops,clean,fgsm@1/255,pgd@1/255
0,cifar10,-60.5,10.0,0.91,0.55,0.31
1,cifar10,-61.0,12.5,0.86,0.50,0.20
2,cifar10,,11.0,0.10,0.10,0.10
";

fn opts() -> IngestOptions {
    IngestOptions::default()
}

fn err(text: &str, o: &IngestOptions) -> String {
    ingest_str(text, Format::Csv, o).unwrap_err().to_string()
}

#[test]
fn three_well_formed_rows() {
    let t = ingest_str(THREE, Format::Csv, &opts()).unwrap();
    assert_eq!(t.records.len(), 3);
    assert!(t.warnings.is_empty(), "{:?}", t.warnings);
    assert!(!t.percent_scaled);
    assert_eq!(t.proxies, vec![ProxyId::Jacov, ProxyId::Flops]);
    assert_eq!(t.columns[0], AccColumn::Clean);
    assert_eq!(t.records[2].proxies[0], None);
    assert_eq!(t.records[1].line, 4);
    assert_eq!(t.meta.get("source").map(String::as_str), Some("handmade"));
    let s = &t.summary()[0];
    assert_eq!((s.rows, s.missing_cells), (3, 1));
}

#[test]
fn percent_cells_are_scaled() {
    let text = "arch_index,dataset,clean\n5,cifar10,91.2\n6,cifar10,40\n";
    for mode in [PercentMode::Percent, PercentMode::Auto] {
        let o = IngestOptions { percent: mode, ..opts() };
        let t = ingest_str(text, Format::Csv, &o).unwrap();
        assert!((t.records[0].accuracies[0].unwrap() - 0.912).abs() < 1e-15);
        assert!(t.percent_scaled);
        assert_eq!(t.warnings.len(), usize::from(mode == PercentMode::Auto));
    }
    let o = IngestOptions { percent: PercentMode::Fraction, ..opts() };
    assert!(err(text, &o).contains("line 2, column clean: accuracy 91.2 outside [0, 1]"));
}

#[test]
fn duplicate_key_names_both_lines() {
    let text = "arch_index,dataset,clean\n# note\n3,cifar10,0.5\n4,cifar10,0.5\n3,CIFAR10,0.6\n";
    let e = err(text, &opts());
    assert!(e.contains("duplicate key (arch_index 3, dataset CIFAR10) on lines 3 and 5"), "{e}");
}

#[test]
fn malformed_cells_and_columns() {
    let e = err("arch_index,dataset,jacov,clean\n1,c,abc,0.5\n2,c,1,0.5\n99999,c,1,0.5\n", &opts());
    assert!(e.contains("line 2, column jacov: cannot parse \"abc\""), "{e}");
    assert!(e.contains("line 4: arch_index \"99999\""), "{e}");
    assert!(err("arch_index,jacov\n1,2\n", &opts()).contains("missing required columns: dataset, clean"));
    assert!(err("arch_index,dataset,clean,clean\n", &opts()).contains("duplicate column"));
    assert!(err("arch_index,dataset,clean\n1,c\n", &opts()).starts_with("line 2"));
}

#[test]
fn unknown_columns_warn() {
    let t = ingest_str("arch_index,dataset,clean,val_acc\n1,c,0.5,3\n", Format::Csv, &opts()).unwrap();
    assert_eq!(t.warnings, vec!["ignored column \"val_acc\"".to_string()]);
}

#[test]
fn flops_units_normalise_to_millions() {
    let text = "arch_index,dataset,flops,clean\n1,c,2500000,0.5\n";
    let o = IngestOptions { flops_units: FlopsUnit::Raw, ..opts() };
    let t = ingest_str(text, Format::Csv, &o).unwrap();
    assert!((t.records[0].proxies[0].unwrap() - 2.5).abs() < 1e-12);
}

#[test]
fn json_matches_csv() {
    let json = r#"[
        {"arch_index": 0, "dataset": "cifar10", "jacov": -60.5, "flops": 10.0, "clean": 0.91, "fgsm@1/255": 0.55, "pgd@1/255": 0.31},
        {"arch_index": 1, "dataset": "cifar10", "jacov": -61.0, "flops": 12.5, "clean": 0.86, "fgsm@1/255": 0.50, "pgd@1/255": 0.20},
        {"arch_index": 2, "dataset": "cifar10", "jacov": null, "flops": 11.0, "clean": 0.10, "fgsm@1/255": 0.10, "pgd@1/255": 0.10}
    ]"#;
    let a = ingest_str(json, Format::Json, &opts()).unwrap();
    let b = ingest_str(THREE, Format::Csv, &opts()).unwrap();
    assert_eq!(a.proxies, b.proxies);
    assert_eq!(a.columns, b.columns);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.arch_index, &x.proxies, &x.accuracies), (y.arch_index, &y.proxies, &y.accuracies));
    }
    assert!(ingest_str(r#"[1]"#, Format::Json, &opts()).unwrap_err().to_string().contains("record 1"));
}

#[test]
fn export_reingests_to_the_same_table() {
    // shuffled column order and percent inputs
    let text = "pgd@1/255,clean,dataset,arch_index,jacov\n20,86,cifar10,1,-61\n31,91,cifar10,0,\n";
    let t = ingest_str(text, Format::Csv, &opts()).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let out = String::from_utf8(buf).unwrap();
    assert!(out.contains("arch_index,dataset,jacov,clean,pgd@1/255\n1,cifar10,-61,0.86,0.2\n"), "{out}");
    let back = ingest_str(&out, Format::Csv, &opts()).unwrap();
    let strip = |r: &zcp_bench::Record| (r.arch_index, r.dataset.clone(), r.proxies.clone(), r.accuracies.clone());
    assert_eq!(back.records.iter().map(strip).collect::<Vec<_>>(), t.records.iter().map(strip).collect::<Vec<_>>());
    assert!(!back.percent_scaled);
}

fn zcproxy(args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_zcproxy")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap_or(-1), text)
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("t.csv");
    std::fs::write(&good, THREE).unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "arch_index,dataset,clean\n1,c,0.5\n1,c,0.5\n").unwrap();

    let (code, out) = zcproxy(&["ingest", good.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("cifar10: 3 rows"), "{out}");
    let (code, out) = zcproxy(&["ingest", bad.to_str().unwrap()]);
    assert_eq!(code, 2, "{out}");
    assert!(out.contains("lines 2 and 3"));
    let (code, out) = zcproxy(&[
        "fit",
        good.to_str().unwrap(),
        "--attack",
        "square",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{out}");
    assert!(out.contains("available: clean, fgsm@1/255, pgd@1/255"), "{out}");
    let (code, _) = zcproxy(&["ingest", "/nonexistent.csv"]);
    assert_eq!(code, 2);
}
