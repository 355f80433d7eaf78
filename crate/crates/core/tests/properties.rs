use gfmsim::analysis::{
    closed_loop_tf_response, design_ip, design_vsm, pdelta, zeta_from_damping, zeta_from_kp, DesignSpec, PdeltaInputs,
    PdeltaMode,
};
use gfmsim::control::{flc_detect, FlcConfig, StrategyKind};
use gfmsim::export::fmt_sig9;
use gfmsim::model::{csa_limit, Dq};
use gfmsim::sim::{init_steady_state, SystemConfig};
use proptest::prelude::*;

fn strategy() -> impl Strategy<Value = StrategyKind> {
    prop_oneof![
        Just(StrategyKind::VsmNoPll),
        Just(StrategyKind::VsmPll),
        Just(StrategyKind::VsmWashout),
        Just(StrategyKind::IpControl),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn csa_respects_bound_and_phase(d in -20.0..20.0f64, q in -20.0..20.0f64, i_max in 0.1..3.0f64) {
        let raw = Dq::new(d, q);
        let (lim, k_cl) = csa_limit(raw, i_max);
        prop_assert!(lim.magnitude() <= i_max);
        prop_assert!(k_cl >= 0.0);
        if raw.magnitude() <= i_max {
            prop_assert_eq!(lim, raw);
        } else {
            prop_assert!(k_cl > 1.0);
            prop_assert!((lim.angle() - raw.angle()).abs() < 1e-12);
            prop_assert!((lim.magnitude() - i_max).abs() < 1e-12);
        }
    }

    #[test]
    fn pdelta_characteristics_are_ordered(
        x_g in 0.0..0.6f64,
        i_max in 0.5..2.0f64,
        e_m0 in 0.9..1.1f64,
    ) {
        let inputs = PdeltaInputs { e_m0, v_e: 1.0, x_c: 0.15, x_g, i_max };
        let unsat = pdelta(&inputs, PdeltaMode::Unsaturated, 91).unwrap();
        let sat = pdelta(&inputs, PdeltaMode::Saturated, 91).unwrap();
        let vapc = pdelta(&inputs, PdeltaMode::VapcVirtual, 91).unwrap();
        prop_assert!(unsat.p[0].abs() < 1e-12 && sat.p[0].abs() < 1e-12);
        for k in 0..unsat.p.len() {
            prop_assert!(unsat.p[k] + 1e-12 >= sat.p[k]);
            prop_assert!(vapc.p[k] + 1e-12 >= sat.p[k]);
            prop_assert!(sat.k_cl[k] >= 1.0);
        }
        prop_assert!(sat.p_max2 <= unsat.p_max1 + 1e-12);
    }

    #[test]
    fn design_round_trips(h in 0.5..20.0f64, zeta in 0.05..2.0f64, x_c in 0.05..0.5f64) {
        let spec = DesignSpec::new(h, zeta, x_c);
        let vsm = design_vsm(&spec).unwrap();
        let ip = design_ip(&spec).unwrap();
        let w_b = spec.omega_b;
        prop_assert!((zeta_from_damping(vsm.d_gfm, h, x_c, w_b) - zeta).abs() < 1e-9);
        prop_assert!((zeta_from_kp(ip.k_p, h, x_c, w_b) - zeta).abs() < 1e-9);
        let identity = 2.0 * h * ip.k_p * w_b / x_c;
        prop_assert!((identity - vsm.d_gfm).abs() < 1e-9 * vsm.d_gfm);
    }

    #[test]
    fn transfer_function_settles_to_one(h in 1.0..10.0f64, zeta in 0.2..3.0f64) {
        let spec = DesignSpec::new(h, zeta, 0.15);
        let d = design_vsm(&spec).unwrap().d_gfm;
        let t_settle = 60.0 / (zeta.min(1.0) * spec.omega_n()) * zeta.max(1.0).powi(2);
        let y = closed_loop_tf_response(&spec, d, &[0.0, t_settle]).unwrap();
        prop_assert_eq!(y[0], 0.0);
        prop_assert!((y[1] - 1.0).abs() < 1e-6, "{}", y[1]);
    }

    #[test]
    fn sig9_round_trips(x in prop::num::f64::NORMAL) {
        let back: f64 = fmt_sig9(x).parse().unwrap();
        prop_assert!(((back - x) / x).abs() <= 5.1e-9);
    }

    #[test]
    fn detector_hysteresis(volts in prop::collection::vec(0.0..1.2f64, 1..100)) {
        let cfg = FlcConfig::<f64>::default();
        let mut gamma = false;
        for v in volts {
            let next = flc_detect(&cfg, v, gamma);
            if v <= cfg.v_a { prop_assert!(next); }
            if v > cfg.v_b { prop_assert!(!next); }
            if v > cfg.v_a && v <= cfg.v_b { prop_assert_eq!(next, gamma); }
            gamma = next;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn initialization_hits_the_setpoint(
        kind in strategy(),
        p in -0.8..0.9f64,
        x_g in 0.0..0.3f64,
        vapc in any::<bool>(),
    ) {
        let mut sys = SystemConfig::<f64>::new(kind);
        sys.grid.p_g0 = p;
        sys.grid.x_g = x_g;
        sys.strategy.use_vapc = vapc;
        let init = init_steady_state(&sys).unwrap();
        prop_assert!(init.residual < 1e-8, "residual {}", init.residual);
        prop_assert!((init.outputs.p_g - p).abs() < 1e-8);
        prop_assert!(init.outputs.i_ref.magnitude() <= sys.converter.i_max);
    }
}
