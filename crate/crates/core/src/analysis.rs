//! Closed-form design rules, P–δ characteristics, critical-clearing-time
//! search and parameter sweeps.

use rayon::prelude::*;

use crate::control::StrategyKind;
use crate::error::{ensure, ConfigError, SimError};
use crate::model::{ConverterParams, FaultEvent, GridScenario};
use crate::scalar::Scalar;
use crate::sim::{simulate, SimConfig, SystemConfig, Verdict};

/// Inputs of the second-order design rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec<T> {
    pub h_gfm: T,
    pub zeta: T,
    /// Reactance seen by the synchronization loop (pu).
    pub x_c: T,
    pub omega_b: T,
}

impl<T: Scalar> DesignSpec<T> {
    pub fn new(h_gfm: T, zeta: T, x_c: T) -> Self {
        Self {
            h_gfm,
            zeta,
            x_c,
            omega_b: T::lit(100.0) * T::PI(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.h_gfm > T::zero(), "design.h", || {
            format!("must be > 0, got {}", self.h_gfm)
        })?;
        ensure(self.zeta >= T::zero(), "design.zeta", || {
            format!("must be >= 0, got {}", self.zeta)
        })?;
        ensure(self.x_c > T::zero(), "design.x_c", || {
            format!("must be > 0, got {}", self.x_c)
        })?;
        ensure(self.omega_b > T::zero(), "design.omega_b", || {
            format!("must be > 0, got {}", self.omega_b)
        })
    }

    /// `ω_n = √(ω_b / (2 H x_c))`.
    pub fn omega_n(&self) -> T {
        (self.omega_b / (T::two() * self.h_gfm * self.x_c)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VsmDesign<T> {
    pub d_gfm: T,
    pub omega_n: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpDesign<T> {
    pub k_p: T,
    pub omega_n: T,
}

/// Damping coefficient giving damping ratio `ζ`: `D = 4 H ζ ω_n`.
pub fn design_vsm<T: Scalar>(spec: &DesignSpec<T>) -> Result<VsmDesign<T>, ConfigError> {
    spec.validate()?;
    let omega_n = spec.omega_n();
    Ok(VsmDesign {
        d_gfm: T::lit(4.0) * spec.h_gfm * spec.zeta * omega_n,
        omega_n,
    })
}

/// IP proportional gain giving damping ratio `ζ`: `K_P = ζ √(2 x_c / (H ω_b))`.
pub fn design_ip<T: Scalar>(spec: &DesignSpec<T>) -> Result<IpDesign<T>, ConfigError> {
    spec.validate()?;
    Ok(IpDesign {
        k_p: spec.zeta * (T::two() * spec.x_c / (spec.h_gfm * spec.omega_b)).sqrt(),
        omega_n: spec.omega_n(),
    })
}

/// Damping ratio produced by a VSM damping coefficient.
pub fn zeta_from_damping<T: Scalar>(d_gfm: T, h_gfm: T, x_c: T, omega_b: T) -> T {
    let spec = DesignSpec {
        h_gfm,
        zeta: T::zero(),
        x_c,
        omega_b,
    };
    d_gfm / (T::lit(4.0) * h_gfm * spec.omega_n())
}

/// Damping ratio produced by an IP proportional gain.
pub fn zeta_from_kp<T: Scalar>(k_p: T, h_gfm: T, x_c: T, omega_b: T) -> T {
    k_p / (T::two() * x_c / (h_gfm * omega_b)).sqrt()
}

/// Peak overshoot of the standard second-order step response.
pub fn overshoot<T: Scalar>(zeta: T) -> T {
    if zeta >= T::one() {
        T::zero()
    } else {
        (-T::PI() * zeta / (T::one() - zeta * zeta).sqrt()).exp()
    }
}

/// Unit-step response of `ω_n² / (s² + (D/2H) s + ω_n²)` with
/// `ω_n² = ω_b / (2 H x_c)` at each instant of `t_grid`.
pub fn closed_loop_tf_response<T: Scalar>(spec: &DesignSpec<T>, d_gfm: T, t_grid: &[T]) -> Result<Vec<T>, ConfigError> {
    spec.validate()?;
    ensure(d_gfm >= T::zero(), "design.d_gfm", || {
        format!("must be >= 0, got {d_gfm}")
    })?;
    let wn = spec.omega_n();
    let zeta = d_gfm / (T::lit(4.0) * spec.h_gfm * wn);
    let one = T::one();
    let near_critical = (zeta - one).abs() <= T::epsilon().sqrt();
    let response = |t: T| -> T {
        if t <= T::zero() {
            return T::zero();
        }
        if near_critical {
            one - (-wn * t).exp() * (one + wn * t)
        } else if zeta < one {
            let root = (one - zeta * zeta).sqrt();
            let wd = wn * root;
            one - (-zeta * wn * t).exp() * ((wd * t).cos() + zeta / root * (wd * t).sin())
        } else {
            let root = (zeta * zeta - one).sqrt();
            let s1 = -wn * (zeta - root);
            let s2 = -wn * (zeta + root);
            one + (s2 * (s1 * t).exp() - s1 * (s2 * t).exp()) / (s1 - s2)
        }
    };
    Ok(t_grid.iter().map(|&t| response(t)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PdeltaMode {
    /// Eq. (7): no current limit.
    Unsaturated,
    /// Eq. (8): current magnitude held at `i_max` beyond `δ_a`.
    Saturated,
    /// Eq. (14): virtual power seen by the synchronization loop with VAPC.
    VapcVirtual,
}

impl PdeltaMode {
    pub const ALL: [PdeltaMode; 3] = [Self::Unsaturated, Self::Saturated, Self::VapcVirtual];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unsaturated => "unsaturated",
            Self::Saturated => "saturated",
            Self::VapcVirtual => "vapc",
        }
    }
}

impl std::str::FromStr for PdeltaMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ConfigError::new("mode", format!("unknown mode `{s}` (unsaturated, saturated, vapc)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeltaCurve<T> {
    pub delta_grid: Vec<T>,
    pub p: Vec<T>,
    /// Limit-onset angle, absent when the limit is never reached on `[0, π]`.
    pub delta_a: Option<T>,
    /// Peak of the unsaturated characteristic.
    pub p_max1: T,
    /// Peak of this mode's characteristic.
    pub p_max2: T,
    /// `K_CL` along the grid (all ones unless the limit is active).
    pub k_cl: Vec<T>,
    pub mode: PdeltaMode,
}

/// Lossless ingredients of the P–δ characteristics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeltaInputs<T> {
    pub e_m0: T,
    pub v_e: T,
    pub x_c: T,
    pub x_g: T,
    pub i_max: T,
}

impl<T: Scalar> PdeltaInputs<T> {
    pub fn from_config(params: &ConverterParams<T>, grid: &GridScenario<T>) -> Self {
        Self {
            e_m0: params.e_m0,
            v_e: grid.v_e,
            x_c: params.x_cv(),
            x_g: grid.x_g,
            i_max: params.i_max,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("converter.e_m0", self.e_m0),
            ("grid.v_e", self.v_e),
            ("converter.x_c", self.x_c),
            ("converter.i_max", self.i_max),
        ] {
            ensure(value > T::zero(), name, || format!("must be > 0, got {value}"))?;
        }
        ensure(self.x_g >= T::zero(), "grid.x_g", || {
            format!("must be >= 0, got {}", self.x_g)
        })
    }

    pub fn x_tot(&self) -> T {
        self.x_c + self.x_g
    }

    /// `|e − v e^{−jδ}|`, the voltage across the total reactance.
    fn phasor_gap(&self, delta: T) -> T {
        let re = self.e_m0 - self.v_e * delta.cos();
        let im = self.v_e * delta.sin();
        (re * re + im * im).sqrt()
    }

    /// Unsaturated current magnitude at `delta`.
    pub fn current(&self, delta: T) -> T {
        self.phasor_gap(delta) / self.x_tot()
    }

    /// Angle at which the unsaturated current reaches `i_max`, from
    /// `cos δ_a = (e² + v² − (i_max x_tot)²) / (2 e v)`.
    pub fn limit_onset(&self) -> Option<T> {
        let reach = self.i_max * self.x_tot();
        let c = (self.e_m0 * self.e_m0 + self.v_e * self.v_e - reach * reach) / (T::two() * self.e_m0 * self.v_e);
        if c > T::one() {
            Some(T::zero())
        } else if c < -T::one() {
            None
        } else {
            Some(c.acos())
        }
    }

    pub fn p_unsaturated(&self, delta: T) -> T {
        self.e_m0 * self.v_e * delta.sin() / self.x_tot()
    }

    /// Eq. (8) evaluated branch-wise.
    pub fn p_saturated(&self, delta: T) -> T {
        let gap = self.phasor_gap(delta);
        if gap <= self.i_max * self.x_tot() {
            self.p_unsaturated(delta)
        } else {
            self.e_m0 * self.v_e * delta.sin() * self.i_max / gap
        }
    }

    /// Closed-form `K_CL(δ)` on the quasi-static locus with the limit active.
    pub fn k_cl(&self, delta: T) -> T {
        let k = (self.phasor_gap(delta) - self.i_max * self.x_g) / (self.i_max * self.x_c);
        k.max(T::one())
    }

    /// Eq. (14): `p = e v sin δ / (x_c + x_g / K_CL)`.
    pub fn p_vapc(&self, delta: T) -> T {
        self.e_m0 * self.v_e * delta.sin() / (self.x_c + self.x_g / self.k_cl(delta))
    }
}

/// Samples a P–δ characteristic on `points` uniformly spaced angles in `[0, π]`.
pub fn pdelta<T: Scalar>(
    inputs: &PdeltaInputs<T>,
    mode: PdeltaMode,
    points: usize,
) -> Result<PdeltaCurve<T>, ConfigError> {
    inputs.validate()?;
    ensure(points >= 2, "points", || format!("must be >= 2, got {points}"))?;
    let step = T::PI() / T::count(points - 1);
    let delta_grid: Vec<T> = (0..points).map(|k| T::count(k) * step).collect();
    let delta_a = inputs.limit_onset();
    let (p, k_cl): (Vec<T>, Vec<T>) = delta_grid
        .iter()
        .map(|&d| match (mode, delta_a) {
            (PdeltaMode::Unsaturated, _) | (_, None) => (inputs.p_unsaturated(d), T::one()),
            (PdeltaMode::Saturated, Some(_)) => (inputs.p_saturated(d), inputs.k_cl(d)),
            (PdeltaMode::VapcVirtual, Some(_)) => (inputs.p_vapc(d), inputs.k_cl(d)),
        })
        .unzip();
    let p_max2 = p.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    Ok(PdeltaCurve {
        delta_grid,
        p,
        delta_a,
        p_max1: inputs.e_m0 * inputs.v_e / inputs.x_tot(),
        p_max2,
        k_cl,
        mode,
    })
}

/// Bounds and resolution of the clearing-time bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CctBounds<T> {
    pub t_lo: T,
    pub t_hi: T,
    pub resolution: T,
}

impl<T: Scalar> Default for CctBounds<T> {
    fn default() -> Self {
        Self {
            t_lo: T::zero(),
            t_hi: T::lit(5.0),
            resolution: T::lit(0.01),
        }
    }
}

impl<T: Scalar> CctBounds<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.resolution > T::zero(), "cct.resolution", || {
            format!("must be > 0, got {}", self.resolution)
        })?;
        ensure(self.t_lo >= T::zero(), "cct.t_lo", || {
            format!("must be >= 0, got {}", self.t_lo)
        })?;
        ensure(self.t_hi > self.t_lo, "cct.t_hi", || {
            format!("t_hi > t_lo required, got {} <= {}", self.t_hi, self.t_lo)
        })
    }
}

/// How the search terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CctBound {
    /// Stable and unstable probes one resolution step apart.
    Bracketed,
    /// The upper bound itself is stable: CCT > t_hi.
    AboveUpper,
    /// The lower bound is already unstable: CCT < t_lo.
    BelowLower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CctProbe<T> {
    /// Fault duration (s).
    pub duration: T,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CctResult<T> {
    /// Longest stable fault duration found (s).
    pub cct: T,
    pub stable_t: Option<T>,
    pub unstable_t: Option<T>,
    pub bound: CctBound,
    pub resolution: T,
    /// Every probe in evaluation order.
    pub probes: Vec<CctProbe<T>>,
}

/// Simulates `sys` with the fault lasting `duration`; zero means no fault.
pub fn probe_fault_duration<T: Scalar>(
    sys: &SystemConfig<T>,
    sim: &SimConfig<T>,
    duration: T,
) -> Result<Verdict, SimError> {
    let base = sys
        .grid
        .fault
        .ok_or_else(|| ConfigError::new("fault", "a fault is required for clearing-time studies"))?;
    let mut probe = *sys;
    let mut probe_sim = *sim;
    probe_sim.t_end = sim.t_end - base.t_clear + base.t_apply + duration;
    probe.grid.fault = if duration > T::zero() {
        Some(FaultEvent {
            t_clear: base.t_apply + duration,
            ..base
        })
    } else {
        None
    };
    Ok(simulate(&probe, &probe_sim)?.1)
}

/// Bisection on the fault duration over integer multiples of the resolution.
///
/// Probes are evaluated in a fixed order, so the result is deterministic.
/// Undecided probes count as unstable.
pub fn cct_search<T: Scalar>(
    sys: &SystemConfig<T>,
    sim: &SimConfig<T>,
    bounds: &CctBounds<T>,
) -> Result<CctResult<T>, SimError> {
    bounds.validate()?;
    sys.validate()?;
    let res = bounds.resolution;
    let quanta = |t: T| (t / res).round().to_usize().unwrap_or(0);
    let time = |n: usize| T::count(n) * res;
    let mut probes = Vec::new();
    let mut run = |n: usize| -> Result<bool, SimError> {
        let verdict = probe_fault_duration(sys, sim, time(n))?;
        probes.push(CctProbe {
            duration: time(n),
            verdict,
        });
        Ok(verdict.stable)
    };

    let mut lo = quanta(bounds.t_lo);
    let mut hi = quanta(bounds.t_hi).max(lo + 1);
    let result = |cct, stable_t, unstable_t, bound, probes| CctResult {
        cct,
        stable_t,
        unstable_t,
        bound,
        resolution: res,
        probes,
    };

    if !run(lo)? {
        return Ok(result(time(lo), None, Some(time(lo)), CctBound::BelowLower, probes));
    }
    if run(hi)? {
        return Ok(result(time(hi), Some(time(hi)), None, CctBound::AboveUpper, probes));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if run(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(result(
        time(lo),
        Some(time(lo)),
        Some(time(hi)),
        CctBound::Bracketed,
        probes,
    ))
}

/// Combination of the two transient-stability enhancements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Enhancement {
    Base,
    Vapc,
    Flc,
    FlcVapc,
}

impl Enhancement {
    pub const ALL: [Enhancement; 4] = [Self::Base, Self::Vapc, Self::Flc, Self::FlcVapc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::Vapc => "vapc",
            Self::Flc => "flc",
            Self::FlcVapc => "flc_vapc",
        }
    }

    /// Enables or disables VAPC and FLC; an existing FLC configuration is kept.
    pub fn apply<T: Scalar>(self, sys: &mut SystemConfig<T>) {
        let (vapc, flc) = match self {
            Self::Base => (false, false),
            Self::Vapc => (true, false),
            Self::Flc => (false, true),
            Self::FlcVapc => (true, true),
        };
        sys.strategy.use_vapc = vapc;
        sys.strategy.flc = if flc {
            Some(sys.strategy.flc.unwrap_or_default())
        } else {
            None
        };
    }
}

impl std::str::FromStr for Enhancement {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| {
            ConfigError::new(
                "enhancement",
                format!("unknown enhancement `{s}` (base, vapc, flc, flc_vapc)"),
            )
        })
    }
}

/// Parameter varied along one sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Strategy,
    TWd,
    DGfm,
    HGfm,
    KP,
    UseVapc,
    Flc,
    Enhancement,
    XG,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 9] = [
        Self::Strategy,
        Self::TWd,
        Self::DGfm,
        Self::HGfm,
        Self::KP,
        Self::UseVapc,
        Self::Flc,
        Self::Enhancement,
        Self::XG,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Strategy => "strategy",
            Self::TWd => "t_wd",
            Self::DGfm => "d_gfm",
            Self::HGfm => "h_gfm",
            Self::KP => "k_p",
            Self::UseVapc => "use_vapc",
            Self::Flc => "flc",
            Self::Enhancement => "enhancement",
            Self::XG => "x_g",
        }
    }

    /// Parses one textual axis value.
    pub fn parse_value<T: Scalar>(self, text: &str) -> Result<AxisValue<T>, ConfigError> {
        let field = format!("sweep.{}", self.as_str());
        let text = text.trim();
        match self {
            Self::Strategy => Ok(AxisValue::Strategy(text.parse()?)),
            Self::Enhancement => Ok(AxisValue::Enhancement(text.parse()?)),
            Self::UseVapc | Self::Flc => match text {
                "true" | "on" | "1" => Ok(AxisValue::Flag(true)),
                "false" | "off" | "0" => Ok(AxisValue::Flag(false)),
                _ => Err(ConfigError::new(field, format!("expected a boolean, got `{text}`"))),
            },
            _ => text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| AxisValue::Number(T::lit(x)))
                .ok_or_else(|| ConfigError::new(field, format!("expected a number, got `{text}`"))),
        }
    }

    /// Writes `value` into the configuration.
    pub fn apply<T: Scalar>(self, sys: &mut SystemConfig<T>, value: &AxisValue<T>) -> Result<(), ConfigError> {
        let field = || format!("sweep.{}", self.as_str());
        match (self, *value) {
            (Self::Strategy, AxisValue::Strategy(kind)) => {
                let keep = sys.strategy;
                sys.strategy = crate::control::SyncStrategyConfig::new(kind);
                sys.strategy.use_vapc = keep.use_vapc;
                sys.strategy.flc = keep.flc;
                sys.strategy.pfr = keep.pfr;
                sys.strategy.pll = keep.pll;
                sys.strategy.h_gfm = keep.h_gfm;
            }
            (Self::TWd, AxisValue::Number(x)) => sys.strategy.t_wd = x,
            (Self::DGfm, AxisValue::Number(x)) => sys.strategy.d_gfm = x,
            (Self::HGfm, AxisValue::Number(x)) => sys.strategy.h_gfm = x,
            (Self::KP, AxisValue::Number(x)) => sys.strategy.k_p = x,
            (Self::XG, AxisValue::Number(x)) => sys.grid.x_g = x,
            (Self::UseVapc, AxisValue::Flag(on)) => sys.strategy.use_vapc = on,
            (Self::Flc, AxisValue::Flag(on)) => {
                sys.strategy.flc = if on {
                    Some(sys.strategy.flc.unwrap_or_default())
                } else {
                    None
                }
            }
            (Self::Enhancement, AxisValue::Enhancement(e)) => e.apply(sys),
            _ => {
                return Err(ConfigError::new(
                    field(),
                    format!("value {value} does not fit this axis"),
                ))
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|a| a.as_str()).collect();
            ConfigError::new("axis", format!("unknown axis `{s}` ({})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue<T> {
    Strategy(StrategyKind),
    Number(T),
    Flag(bool),
    Enhancement(Enhancement),
}

impl<T: Scalar> std::fmt::Display for AxisValue<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Strategy(k) => write!(f, "{k}"),
            Self::Number(x) => write!(f, "{x}"),
            Self::Flag(b) => write!(f, "{b}"),
            Self::Enhancement(e) => f.write_str(e.as_str()),
        }
    }
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase<T> {
    /// One label per axis.
    pub labels: Vec<String>,
    pub sys: SystemConfig<T>,
    pub sim: SimConfig<T>,
}

#[derive(Debug)]
pub struct SweepRow<T> {
    pub labels: Vec<String>,
    pub result: Result<CctResult<T>, SimError>,
}

/// Cartesian product of axis values applied to a base configuration.
/// The first axis varies slowest.
pub fn sweep_cases<T: Scalar>(
    base: &SystemConfig<T>,
    sim: &SimConfig<T>,
    axes: &[(SweepAxis, Vec<AxisValue<T>>)],
) -> Result<Vec<SweepCase<T>>, ConfigError> {
    let mut cases = vec![SweepCase {
        labels: Vec::new(),
        sys: *base,
        sim: *sim,
    }];
    for (axis, values) in axes {
        let mut next = Vec::with_capacity(cases.len() * values.len());
        for case in &cases {
            for value in values {
                let mut c = case.clone();
                axis.apply(&mut c.sys, value)?;
                c.labels.push(value.to_string());
                next.push(c);
            }
        }
        cases = next;
    }
    if axes.iter().any(|(_, v)| v.is_empty()) {
        cases.clear();
    }
    Ok(cases)
}

/// Runs a CCT search per case in parallel; rows keep the order of `cases`.
pub fn sweep<T: Scalar>(cases: &[SweepCase<T>], bounds: &CctBounds<T>) -> Vec<SweepRow<T>> {
    cases
        .par_iter()
        .map(|c| SweepRow {
            labels: c.labels.clone(),
            result: cct_search(&c.sys, &c.sim, bounds),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table2() -> DesignSpec<f64> {
        DesignSpec::new(5.0, 0.7, 0.15)
    }

    #[test]
    fn vsm_design_matches_table_2() {
        let d = design_vsm(&table2()).unwrap();
        assert_abs_diff_eq!(d.omega_n, 14.47, epsilon = 0.01);
        assert_abs_diff_eq!(d.d_gfm, 202.6, epsilon = 0.05);
        assert_eq!(d.d_gfm.round(), 203.0);
        let zero = design_vsm(&DesignSpec { zeta: 0.0, ..table2() }).unwrap();
        assert_eq!(zero.d_gfm, 0.0);
    }

    #[test]
    fn ip_design_matches_table_2() {
        let spec = table2();
        let ip = design_ip(&spec).unwrap();
        assert_abs_diff_eq!(ip.k_p, 0.0096, epsilon = 1e-4);
        let vsm = design_vsm(&spec).unwrap();
        assert_abs_diff_eq!(
            vsm.d_gfm,
            2.0 * spec.h_gfm * ip.k_p * spec.omega_b / spec.x_c,
            epsilon = 1e-9
        );
        assert_eq!(design_ip(&DesignSpec { zeta: 0.0, ..spec }).unwrap().k_p, 0.0);
    }

    #[test]
    fn damping_inversion() {
        let spec = table2();
        assert_abs_diff_eq!(zeta_from_damping(20.0, 5.0, 0.15, spec.omega_b), 0.0691, epsilon = 5e-4);
        let ip = design_ip(&spec).unwrap();
        assert_abs_diff_eq!(zeta_from_kp(ip.k_p, 5.0, 0.15, spec.omega_b), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn invalid_design_spec() {
        let err = design_vsm(&DesignSpec { h_gfm: 0.0, ..table2() }).unwrap_err();
        assert_eq!(err.field, "design.h");
    }

    #[test]
    fn step_response_shape() {
        let spec = table2();
        let d = design_vsm(&spec).unwrap();
        let t: Vec<f64> = (0..=20000).map(|k| k as f64 * 1e-4).collect();
        let y = closed_loop_tf_response(&spec, d.d_gfm, &t).unwrap();
        let (k_peak, peak) = y
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        assert_abs_diff_eq!(peak - 1.0, overshoot(0.7), epsilon = 1e-4);
        assert_abs_diff_eq!(overshoot(0.7), 0.046, epsilon = 1e-3);
        assert_abs_diff_eq!(t[k_peak], 0.304, epsilon = 1e-3);
        assert_abs_diff_eq!(*y.last().unwrap(), 1.0, epsilon = 1e-6);
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn step_response_damping_regimes_are_continuous() {
        let spec = table2();
        let wn = spec.omega_n();
        let t = [0.05, 0.1, 0.3];
        let critical = closed_loop_tf_response(&spec, 4.0 * 5.0 * wn, &t).unwrap();
        let under = closed_loop_tf_response(&spec, 4.0 * 5.0 * wn * (1.0 - 1e-5), &t).unwrap();
        let over = closed_loop_tf_response(&spec, 4.0 * 5.0 * wn * (1.0 + 1e-5), &t).unwrap();
        for k in 0..t.len() {
            assert_abs_diff_eq!(critical[k], under[k], epsilon = 1e-4);
            assert_abs_diff_eq!(critical[k], over[k], epsilon = 1e-4);
        }
    }

    fn lossless_unit() -> PdeltaInputs<f64> {
        PdeltaInputs {
            e_m0: 1.0,
            v_e: 1.0,
            x_c: 0.15,
            x_g: 0.1,
            i_max: 1.2,
        }
    }

    #[test]
    fn unsaturated_peak() {
        let c = pdelta(&lossless_unit(), PdeltaMode::Unsaturated, 181).unwrap();
        assert_abs_diff_eq!(c.p_max1, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.p[90], 4.0, epsilon = 1e-12);
        assert_eq!(c.p[0], 0.0);
    }

    #[test]
    fn saturation_onset_angle() {
        let inputs = lossless_unit();
        let delta_a = inputs.limit_onset().unwrap();
        assert_abs_diff_eq!(delta_a.to_degrees(), 17.25, epsilon = 0.05);
        assert_abs_diff_eq!((2.0 - 2.0 * delta_a.cos()).sqrt() / 0.25, 1.2, epsilon = 1e-12);
        let c = pdelta(&inputs, PdeltaMode::Saturated, 1801).unwrap();
        assert_eq!(c.delta_a, Some(delta_a));
        assert!(c.p_max2 < c.p_max1);
    }

    #[test]
    fn unreachable_limit_leaves_saturated_equal_to_unsaturated() {
        let inputs = PdeltaInputs {
            i_max: 100.0,
            ..lossless_unit()
        };
        assert_eq!(inputs.limit_onset(), None);
        let sat = pdelta(&inputs, PdeltaMode::Saturated, 91).unwrap();
        let unsat = pdelta(&inputs, PdeltaMode::Unsaturated, 91).unwrap();
        assert_eq!(sat.p, unsat.p);
        assert!(sat.delta_a.is_none());
    }

    #[test]
    fn curve_ordering() {
        let inputs = lossless_unit();
        for k in 1..180 {
            let d = (k as f64).to_radians();
            assert!(inputs.p_vapc(d) >= inputs.p_unsaturated(d) - 1e-12);
            assert!(inputs.p_unsaturated(d) >= inputs.p_saturated(d) - 1e-12);
            assert!(inputs.k_cl(d) >= 1.0);
        }
    }

    #[test]
    fn pdelta_rejects_bad_inputs() {
        let err = pdelta(
            &PdeltaInputs {
                x_c: 0.0,
                ..lossless_unit()
            },
            PdeltaMode::Saturated,
            10,
        )
        .unwrap_err();
        assert_eq!(err.field, "converter.x_c");
        assert!(pdelta(&lossless_unit(), PdeltaMode::Saturated, 1).is_err());
    }

    #[test]
    fn axis_parsing_and_application() {
        let mut sys = SystemConfig::<f64>::new(StrategyKind::VsmWashout);
        let v = SweepAxis::TWd.parse_value::<f64>("0.2").unwrap();
        SweepAxis::TWd.apply(&mut sys, &v).unwrap();
        assert_eq!(sys.strategy.t_wd, 0.2);
        let e = SweepAxis::Enhancement.parse_value::<f64>("flc_vapc").unwrap();
        SweepAxis::Enhancement.apply(&mut sys, &e).unwrap();
        assert!(sys.strategy.use_vapc && sys.strategy.flc.is_some());
        assert!(SweepAxis::TWd.apply(&mut sys, &e).is_err());
        assert!(SweepAxis::TWd.parse_value::<f64>("abc").is_err());
        assert!("nonsense".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn empty_axis_gives_empty_table() {
        let sys = SystemConfig::<f64>::new(StrategyKind::VsmPll);
        let cases = sweep_cases(&sys, &SimConfig::default(), &[(SweepAxis::TWd, vec![])]).unwrap();
        assert!(cases.is_empty());
        assert!(sweep(&cases, &CctBounds::default()).is_empty());
    }

    #[test]
    fn two_axis_product_order() {
        let sys = SystemConfig::<f64>::new(StrategyKind::VsmNoPll);
        let axes = vec![
            (SweepAxis::DGfm, vec![AxisValue::Number(20.0), AxisValue::Number(203.0)]),
            (
                SweepAxis::Enhancement,
                vec![
                    AxisValue::Enhancement(Enhancement::Base),
                    AxisValue::Enhancement(Enhancement::Flc),
                ],
            ),
        ];
        let cases = sweep_cases(&sys, &SimConfig::default(), &axes).unwrap();
        let labels: Vec<_> = cases.iter().map(|c| c.labels.join("/")).collect();
        assert_eq!(labels, ["20/base", "20/flc", "203/base", "203/flc"]);
    }
}
