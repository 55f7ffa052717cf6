//! Replays the checked-in fuzz seeds through the same round-trip checks as
//! the fuzz targets.

use std::fs;
use std::path::PathBuf;

use chemovir::config::parse_config;
use chemovir::monitors::{read_diagnostics_csv, write_diagnostics_csv};
use chemovir::snapshot::{parse_snapshot, write_snapshot};
use chemovir::sweep::{Preset, SweepResult};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.display().to_string(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_config") {
        if let Ok(c) = parse_config(std::str::from_utf8(&data).unwrap()) {
            assert_eq!(parse_config(&c.to_config_string()).unwrap(), c, "{name}");
            parsed += 1;
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn snapshot_seeds() {
    for (name, data) in seeds("parse_snapshot") {
        let (g, s) = parse_snapshot(std::str::from_utf8(&data).unwrap())
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(
            parse_snapshot(&write_snapshot(&g, &s).unwrap()).unwrap(),
            (g, s),
            "{name}"
        );
    }
}

#[test]
fn csv_seeds() {
    for (name, data) in seeds("read_diagnostics_csv") {
        let records =
            read_diagnostics_csv(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        write_diagnostics_csv(&records, &mut out).unwrap();
        assert_eq!(
            read_diagnostics_csv(out.as_slice()).unwrap(),
            records,
            "{name}"
        );
    }
    for (name, data) in seeds("read_sweep_csv") {
        let result =
            SweepResult::read_csv(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut out = Vec::new();
        result.write_csv(&mut out).unwrap();
        assert_eq!(
            SweepResult::read_csv(out.as_slice()).unwrap(),
            result,
            "{name}"
        );
    }
}

#[test]
fn preset_seeds() {
    for (name, data) in seeds("parse_preset") {
        let p: Preset = std::str::from_utf8(&data)
            .unwrap()
            .parse()
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
    }
}
