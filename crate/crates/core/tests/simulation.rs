use gfmsim::analysis::{cct_search, probe_fault_duration, CctBound, CctBounds};
use gfmsim::control::{FlcAntiWindup, FlcConfig, StrategyKind};
use gfmsim::export::export_trajectory;
use gfmsim::model::SetpointStep;
use gfmsim::scenario::load_scenario;
use gfmsim::sim::{simulate, SimConfig, SystemConfig, VerdictReason};
use gfmsim::SimError;

fn last<T: Copy>(v: &[T]) -> T {
    *v.last().unwrap()
}

#[test]
fn single_and_double_precision_agree() {
    let a = load_scenario::<f64>("fig9_fault150ms_vsm_pll", &[]).unwrap();
    let b = load_scenario::<f32>("fig9_fault150ms_vsm_pll", &[]).unwrap();
    let (ta, va) = simulate(&a.sys, &a.sim).unwrap();
    let (tb, vb) = simulate(&b.sys, &b.sim).unwrap();
    assert_eq!(va, vb);
    assert_eq!(ta.len(), tb.len());
    let peak = |d: &[f64]| d.iter().fold(f64::MIN, |m, &x| m.max(x));
    let peak_b = tb.delta.iter().fold(f32::MIN, |m, &x| m.max(x)) as f64;
    assert!(
        (peak(&ta.delta) - peak_b).abs() < 1e-3,
        "{} vs {}",
        peak(&ta.delta),
        peak_b
    );
    // In f32 the per-step angle increment near equilibrium falls below half an ulp of delta,
    // leaving a small static offset.
    assert!(
        (last(&ta.p_g) - last(&tb.p_g) as f64).abs() < 5e-3,
        "{} vs {}",
        last(&ta.p_g),
        last(&tb.p_g)
    );
}

#[test]
fn no_fault_equilibrium_holds() {
    for kind in [
        StrategyKind::VsmNoPll,
        StrategyKind::VsmPll,
        StrategyKind::VsmWashout,
        StrategyKind::IpControl,
    ] {
        let mut sys = SystemConfig::<f64>::new(kind);
        sys.grid.fault = None;
        let sim = SimConfig {
            t_end: 3.0,
            ..SimConfig::default()
        };
        let (traj, verdict) = simulate(&sys, &sim).unwrap();
        assert_eq!(verdict.reason, VerdictReason::Settled, "{kind}");
        let d0 = traj.delta[0];
        assert!(traj.delta.iter().all(|d| (d - d0).abs() < 1e-9), "{kind}");
        assert!(traj.p_g.iter().all(|p| (p - 0.7).abs() < 1e-9), "{kind}");
    }
}

#[test]
fn setpoint_step_reaches_new_value() {
    let mut sys = SystemConfig::<f64>::new(StrategyKind::IpControl);
    sys.grid.fault = None;
    sys.grid.setpoint_step = Some(SetpointStep { t: 0.5, delta_p: 0.1 });
    let sim = SimConfig::for_grid(&sys.grid);
    let (traj, verdict) = simulate(&sys, &sim).unwrap();
    assert!(verdict.stable);
    assert!((last(&traj.p_g) - 0.8).abs() < 1e-4, "{}", last(&traj.p_g));
}

#[test]
fn pfr_shares_a_grid_frequency_offset() {
    let mut sys = SystemConfig::<f64>::new(StrategyKind::VsmPll);
    sys.grid.fault = None;
    sys.grid.omega_e = 1.001;
    let sim = SimConfig {
        t_end: 20.0,
        ..SimConfig::default()
    };
    let (traj, _) = simulate(&sys, &sim).unwrap();
    assert!((last(&traj.omega) - 1.001).abs() < 1e-6);
    assert!((last(&traj.p_g) - 0.68).abs() < 2e-3, "{}", last(&traj.p_g));
}

#[test]
fn cct_bracket_is_reproducible_and_verified() {
    let sc = load_scenario::<f64>("table3_vsm_nopll_d20", &[]).unwrap();
    let bounds = CctBounds {
        t_lo: 0.0,
        t_hi: 1.0,
        resolution: 0.02,
    };
    let r1 = cct_search(&sc.sys, &sc.sim, &bounds).unwrap();
    let r2 = cct_search(&sc.sys, &sc.sim, &bounds).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(r1.bound, CctBound::Bracketed);
    let (s, u) = (r1.stable_t.unwrap(), r1.unstable_t.unwrap());
    assert!((u - s - 0.02).abs() < 1e-12);
    assert!(probe_fault_duration(&sc.sys, &sc.sim, s).unwrap().stable);
    assert!(!probe_fault_duration(&sc.sys, &sc.sim, u).unwrap().stable);
    assert!(r1.probes.len() <= 2 + 6);
}

#[test]
fn open_brackets_are_reported() {
    let sc = load_scenario::<f64>("table3_vsm_pll", &[]).unwrap();
    let above = cct_search(
        &sc.sys,
        &sc.sim,
        &CctBounds {
            t_lo: 0.0,
            t_hi: 0.5,
            resolution: 0.1,
        },
    )
    .unwrap();
    assert_eq!(above.bound, CctBound::AboveUpper);
    assert_eq!(above.unstable_t, None);
    let below = cct_search(
        &sc.sys,
        &sc.sim,
        &CctBounds {
            t_lo: 2.0,
            t_hi: 3.0,
            resolution: 0.5,
        },
    )
    .unwrap();
    assert_eq!(below.bound, CctBound::BelowLower);
    assert_eq!(below.stable_t, None);
    assert_eq!(below.probes.len(), 1);
}

#[test]
fn cct_requires_a_fault() {
    let mut sys = SystemConfig::<f64>::new(StrategyKind::VsmPll);
    sys.grid.fault = None;
    let err = cct_search(&sys, &SimConfig::default(), &CctBounds::default()).unwrap_err();
    assert!(matches!(err, SimError::Config(ref e) if e.field == "fault"), "{err}");
}

#[test]
fn reset_anti_windup_also_rides_through() {
    let mut sc = load_scenario::<f64>("fig14_flc300ms_ip_control", &[]).unwrap();
    sc.sys.strategy.flc = Some(FlcConfig {
        anti_windup: FlcAntiWindup::Reset,
        ..FlcConfig::default()
    });
    let (traj, verdict) = simulate(&sc.sys, &sc.sim).unwrap();
    assert!(verdict.stable);
    let omega_ss = traj.omega[0];
    for k in 0..traj.len() {
        if traj.gamma1[k] {
            assert!((traj.omega[k] - omega_ss).abs() <= 0.005 + 1e-12);
        }
    }
}

#[test]
fn unstable_case_is_flagged() {
    let sc = load_scenario::<f64>("fig12_fault300ms_ip_control", &[]).unwrap();
    let (_, verdict) = simulate(&sc.sys, &sc.sim).unwrap();
    assert!(!verdict.stable);
    assert_eq!(verdict.reason, VerdictReason::AngleDiverged);
}

#[test]
fn short_export_has_header_plus_samples() {
    let mut sys = SystemConfig::<f64>::new(StrategyKind::VsmPll);
    sys.grid.fault = None;
    let sim = SimConfig {
        t_end: 0.0002,
        record_stride: 1,
        ..SimConfig::default()
    };
    let (traj, _) = simulate(&sys, &sim).unwrap();
    assert_eq!(traj.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.csv");
    export_trajectory(&traj, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
}
