use std::process::Command;

use tiltbeam::harness::{ExperimentConfig, GainRow, SweepRow};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tiltbeam"))
}

#[test]
fn printed_defaults_parse_back() {
    for preset in ["desk", "full"] {
        let out = bin().args(["config", "--print-defaults", "--preset", preset]).output().unwrap();
        assert!(out.status.success());
        let cfg = ExperimentConfig::from_toml_str(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert_eq!(cfg, ExperimentConfig::preset(preset).unwrap());
    }
}

#[test]
fn run_writes_one_row_per_point_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg_path,
        "num_drops = 2\nsweep_dbm = [22.0, 40.0]\nmodes = [\"3d_cluster\", \"2d_baseline\"]\n",
    )
    .unwrap();
    let out = dir.path().join("out.csv");
    let gain = dir.path().join("gain.csv");
    let status = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .arg("--gain-out")
        .arg(&gain)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SweepRow::HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2);
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 11);
        for c in cells.iter().skip(2) {
            assert!(c.parse::<f64>().unwrap().is_finite(), "{line}");
        }
    }
    let g = std::fs::read_to_string(&gain).unwrap();
    assert_eq!(g.lines().next().unwrap(), GainRow::HEADER);
    assert_eq!(g.lines().count(), 3);
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "num_drops = 0\n").unwrap();
    let status = bin().args(["run", "--config"]).arg(&p).arg("--out").arg(dir.path().join("o.csv")).status().unwrap();
    assert_eq!(status.code(), Some(2));
    std::fs::write(&p, "not toml [").unwrap();
    let status = bin().args(["validate", "--config"]).arg(&p).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn drop_prints_traces() {
    let out = bin().args(["drop", "--index", "1", "--p-dbm", "30", "--mode", "2d_baseline"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("iter,eta_min,eta_max,eta,f_value"));
    assert!(text.contains("iter,g_value,bs_power"));
    assert!(text.contains("ee="));
}
