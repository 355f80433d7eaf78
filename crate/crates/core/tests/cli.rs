use std::fs;

use gfmsim::cli::{run, EXIT_INVALID, EXIT_OK, EXIT_USAGE};
use gfmsim::export::TRAJECTORY_HEADER;

fn gfmsim(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("gfmsim").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn design_sheet_matches_table_2() {
    let (code, out, _) = gfmsim(&["design", "--h", "5", "--zeta", "0.7", "--xc", "0.15"]);
    assert_eq!(code, EXIT_OK);
    for needle in ["D_GFM", "202.6", "K_P", "0.00967", "omega_n", "14.47"] {
        assert!(out.contains(needle), "missing {needle} in\n{out}");
    }
    let (code, out, _) = gfmsim(&["design", "--h", "5", "--xc", "0.15", "--d", "20"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("0.0691"), "{out}");
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let (code, _, err) = gfmsim(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("Usage"));
    assert_eq!(gfmsim(&["simulate"]).0, EXIT_USAGE);
    assert_eq!(gfmsim(&["cct", "--scenario", "x", "--bogus"]).0, EXIT_USAGE);
    let (code, out, _) = gfmsim(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("simulate") && out.contains("pdelta"));
}

#[test]
fn horizon_before_clearing_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let (code, _, err) = gfmsim(&[
        "simulate",
        "--scenario",
        "table3_vsm_pll",
        "--override",
        "sim.t_end=1.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("sim.t_end"), "{err}");
    assert!(!out.exists());
}

#[test]
fn missing_scenario_and_bad_keys_exit_2() {
    assert_eq!(gfmsim(&["cct", "--scenario", "no_such_scenario"]).0, EXIT_INVALID);
    let (code, _, err) = gfmsim(&["cct", "--scenario", "table3_vsm_pll", "--override", "grid.nonsense=1"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("nonsense"), "{err}");
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let (code, out, err) = gfmsim(&[
        "simulate",
        "--scenario",
        "fig14_flc300ms_ip_control",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("verdict: stable (settled)"), "{out}");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRAJECTORY_HEADER));
    let mut saw_latched = false;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 10);
        assert!(matches!(fields[8], "0" | "1"));
        saw_latched |= fields[8] == "1";
        for (k, f) in fields.iter().enumerate() {
            if k != 8 {
                f.parse::<f64>().unwrap();
            }
        }
    }
    assert!(saw_latched);
    assert!(text.ends_with('\n') && !text.contains(",\n"));
}

#[test]
fn single_precision_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f32.csv");
    let (code, out, err) = gfmsim(&[
        "simulate",
        "--f32",
        "--scenario",
        "fig12_fault300ms_vsm_nopll_d20",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.starts_with("verdict: unstable"), "{out}");
}

#[test]
fn cct_reports_bracket_and_probes() {
    let (code, out, err) = gfmsim(&["cct", "--scenario", "table3_vsm_nopll_d20"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let first = out.lines().next().unwrap();
    assert!(first.starts_with("CCT = 0.28 s (bracket [0.28, 0.29] s"), "{first}");
    assert!(out.lines().skip(1).all(|l| l.starts_with("probe")));
    let (_, quiet, _) = gfmsim(&["cct", "--scenario", "table3_vsm_nopll_d20", "--quiet"]);
    assert_eq!(quiet.lines().count(), 1);
}

#[test]
fn override_matches_edited_file() {
    let dir = tempfile::tempdir().unwrap();
    let base = fs::read_to_string("../../scenarios/table5_twd_2s.toml").unwrap();
    let edited = base.replace("t_wd = 2.0", "t_wd = 0.2");
    assert_ne!(base, edited);
    let path = dir.path().join("edited.toml");
    fs::write(&path, edited).unwrap();
    let (c1, via_override, _) = gfmsim(&[
        "cct",
        "--scenario",
        "table5_twd_2s",
        "--override",
        "strategy.t_wd=0.2",
        "--print-config",
    ]);
    let (c2, via_file, _) = gfmsim(&["cct", "--scenario", path.to_str().unwrap(), "--print-config"]);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(via_override, via_file);
    assert!(via_file.contains("t_wd = 0.2"));
}

#[test]
fn sweep_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let args = |csv: &str| {
        vec![
            "sweep".to_string(),
            "--scenario".to_string(),
            "table3_vsm_nopll_d20".to_string(),
            "--axis".to_string(),
            "enhancement".to_string(),
            "--values".to_string(),
            "base,vapc".to_string(),
            "--axis2".to_string(),
            "d_gfm".to_string(),
            "--values2".to_string(),
            "20,40".to_string(),
            "--resolution".to_string(),
            "0.05".to_string(),
            "--t-hi".to_string(),
            "1".to_string(),
            "--out".to_string(),
            csv.to_string(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let run_args = |p: &std::path::Path| {
        let v = args(p.to_str().unwrap());
        let refs: Vec<&str> = v.iter().map(|s| s.as_str()).collect();
        gfmsim(&refs)
    };
    let (c1, t1, e1) = run_args(&a);
    let (c2, t2, _) = run_args(&b);
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK), "{e1}");
    assert_eq!(t1, t2);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let table: Vec<&str> = t1.lines().collect();
    assert!(table[0].starts_with("enhancement  d_gfm"), "{t1}");
    assert_eq!(table.len(), 2 + 4);
    assert!(table[2].starts_with("base") && table[3].starts_with("base"));
    let csv = fs::read_to_string(&a).unwrap();
    assert!(csv.starts_with("enhancement,d_gfm,cct_s,"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn sweep_over_scenarios() {
    let (code, out, err) = gfmsim(&[
        "sweep",
        "--axis",
        "scenario",
        "--values",
        "table3_ip_control,table3_vsm_nopll_d20",
        "--resolution",
        "0.02",
        "--t-hi",
        "1",
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(
        out.contains("table3_ip_control") && out.contains("table3_vsm_nopll_d20"),
        "{out}"
    );
}

#[test]
fn empty_sweep_gives_header_only() {
    let (code, out, _) = gfmsim(&["sweep", "--scenario", "table3_vsm_pll", "--axis", "t_wd", "--values"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().count(), 2);
}

#[test]
fn pdelta_csv_on_stdout() {
    let (code, out, _) = gfmsim(&["pdelta", "--mode", "vapc", "--points", "91"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "delta_rad,delta_deg,p_pu,k_cl");
    assert_eq!(lines.len(), 92);
    assert!(lines[1].starts_with("0,0,0,"));
    assert_eq!(gfmsim(&["pdelta", "--mode", "weird"]).0, EXIT_INVALID);
}
