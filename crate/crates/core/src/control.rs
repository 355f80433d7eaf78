//! Self-synchronisation strategies and their auxiliary loops: the PLL, the
//! primary frequency response, virtual active power feedback and the
//! fault-triggered frequency limiter.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{ensure, ConfigError};
use crate::model::{DqCurrent, DqVoltage};
use crate::scalar::{saturate, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    /// Swing equation damped against the fixed reference frequency.
    VsmNoPll,
    /// Swing equation damped against a PLL estimate of the PCC frequency.
    VsmPll,
    /// Swing equation damped by a washout-filtered frequency deviation.
    VsmWashout,
    /// Integral-proportional active power controller.
    IpControl,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::VsmNoPll, Self::VsmPll, Self::VsmWashout, Self::IpControl];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::VsmNoPll => "vsm_nopll",
            Self::VsmPll => "vsm_pll",
            Self::VsmWashout => "vsm_washout",
            Self::IpControl => "ip_control",
        }
    }

    /// Whether the strategy carries an explicit PFR loop.
    pub fn has_explicit_pfr(self) -> bool {
        !matches!(self, Self::VsmNoPll)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            ConfigError::new(
                "strategy.kind",
                format!("unknown strategy `{s}` (expected vsm_nopll, vsm_pll, vsm_washout or ip_control)"),
            )
        })
    }
}

/// Frequency signal driving the explicit PFR loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PfrSignal {
    /// The converter's own frequency.
    #[default]
    Converter,
    /// The PLL estimate (only meaningful for `VsmPll`).
    Pll,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfrConfig<T> {
    pub k_pfr: T,
    /// Low-pass time constant (s); zero means an algebraic passthrough.
    pub t_pfr: T,
    pub dp_max: T,
}

impl<T: Scalar> Default for PfrConfig<T> {
    fn default() -> Self {
        Self {
            k_pfr: T::lit(20.0),
            t_pfr: T::one(),
            dp_max: T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllGains<T> {
    pub k_p: T,
    /// Integral gain (pu/s).
    pub k_i: T,
    /// Symmetric frequency saturation around `omega_0`.
    pub dw_max: T,
}

impl<T: Scalar> Default for PllGains<T> {
    fn default() -> Self {
        Self {
            k_p: T::lit(3.1831),
            k_i: T::lit(795.7747),
            dw_max: T::lit(0.1),
        }
    }
}

/// How the inertia integrator is treated while the frequency limiter clamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlcAntiWindup {
    /// Integration held while the unclamped derivative points outward.
    #[default]
    Hold,
    /// Integrator reset onto the clamp value after every step.
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlcConfig<T> {
    pub dw_max: T,
    /// Fault detected when `|v_g| <= v_a`.
    pub v_a: T,
    /// Fault released when `|v_g| > v_b`.
    pub v_b: T,
    pub anti_windup: FlcAntiWindup,
}

impl<T: Scalar> Default for FlcConfig<T> {
    fn default() -> Self {
        Self {
            dw_max: T::lit(0.005),
            v_a: T::lit(0.5),
            v_b: T::lit(0.9),
            anti_windup: FlcAntiWindup::Hold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncStrategyConfig<T> {
    pub kind: StrategyKind,
    /// Emulated inertia constant (s).
    pub h_gfm: T,
    /// Damping coefficient (VSM variants).
    pub d_gfm: T,
    /// Proportional power gain (IP control).
    pub k_p: T,
    /// Washout time constant (s).
    pub t_wd: T,
    pub pfr: PfrConfig<T>,
    pub pfr_signal: PfrSignal,
    pub pll: PllGains<T>,
    pub use_vapc: bool,
    pub flc: Option<FlcConfig<T>>,
    pub omega_0: T,
}

impl<T: Scalar> SyncStrategyConfig<T> {
    /// Strategy with the default tuning used throughout the case study.
    pub fn new(kind: StrategyKind) -> Self {
        let d_gfm = match kind {
            StrategyKind::VsmNoPll => T::lit(20.0),
            _ => T::lit(203.0),
        };
        Self {
            kind,
            h_gfm: T::lit(5.0),
            d_gfm,
            k_p: T::lit(0.0096),
            t_wd: T::two(),
            pfr: PfrConfig::default(),
            pfr_signal: PfrSignal::Converter,
            pll: PllGains::default(),
            use_vapc: false,
            flc: None,
            omega_0: T::one(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.h_gfm > T::zero(), "strategy.h_gfm", || {
            format!("must be > 0, got {}", self.h_gfm)
        })?;
        ensure(self.d_gfm >= T::zero(), "strategy.d_gfm", || {
            format!("must be >= 0, got {}", self.d_gfm)
        })?;
        ensure(self.k_p >= T::zero(), "strategy.k_p", || {
            format!("must be >= 0, got {}", self.k_p)
        })?;
        ensure(self.omega_0 > T::zero(), "strategy.omega_0", || {
            format!("must be > 0, got {}", self.omega_0)
        })?;
        if self.kind == StrategyKind::VsmWashout {
            ensure(self.t_wd > T::zero(), "strategy.t_wd", || {
                format!("must be > 0 for vsm_washout, got {}", self.t_wd)
            })?;
        }
        ensure(self.pfr.t_pfr >= T::zero(), "pfr.t_pfr", || {
            format!("must be >= 0, got {}", self.pfr.t_pfr)
        })?;
        ensure(self.pfr.dp_max >= T::zero(), "pfr.dp_max", || {
            format!("must be >= 0, got {}", self.pfr.dp_max)
        })?;
        if self.kind == StrategyKind::VsmPll {
            ensure(
                self.pll.k_p > T::zero() && self.pll.k_i > T::zero(),
                "strategy.k_p_pll",
                || "PLL gains must be positive".to_string(),
            )?;
            ensure(self.pll.dw_max > T::zero(), "strategy.dw_pll_max", || {
                format!("must be > 0, got {}", self.pll.dw_max)
            })?;
        }
        if let Some(flc) = &self.flc {
            ensure(flc.dw_max > T::zero(), "flc.dw_max", || {
                format!("must be > 0, got {}", flc.dw_max)
            })?;
            ensure(flc.v_a < flc.v_b, "flc.v_a", || {
                format!("v_a < v_b required, got v_a = {} and v_b = {}", flc.v_a, flc.v_b)
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PllState<T> {
    /// PLL angle relative to the infinite bus (rad).
    pub delta_pll: T,
    pub xi_pll: T,
    pub omega_pll: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlcState<T> {
    /// Fault-detected flag.
    pub gamma1: bool,
    /// Latched pre-fault steady-state frequency.
    pub omega_ss: T,
}

/// Dynamic state of the self-synchronisation loop.
///
/// Angles are kept relative to the infinite bus and unwrapped; the absolute
/// frame angle is `delta + theta_e(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncState<T> {
    /// Converter frequency (VSM variants; IP control stores its output here).
    pub omega: T,
    pub delta: T,
    pub washout_state: T,
    pub ip_integrator: T,
    pub pll: PllState<T>,
    pub pfr_filter_state: T,
    pub flc: FlcState<T>,
}

impl<T: Scalar> SyncState<T> {
    /// Absolute converter angle, given the infinite-bus angle.
    pub fn theta(&self, theta_e: T) -> T {
        self.delta + theta_e
    }
}

/// Time derivatives of the strategy's own states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SyncRates<T> {
    pub d_omega: T,
    pub d_washout: T,
    pub d_ip: T,
}

/// Signals entering the self-synchronisation law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncInputs<T> {
    /// Active-power setpoint `p_g0`.
    pub p_ref: T,
    /// Measured or virtual power, depending on VAPC.
    pub p_feedback: T,
    /// PFR correction added to the setpoint (ignored by `VsmNoPll`).
    pub dp_pfr: T,
    /// PLL frequency estimate (used by `VsmPll`).
    pub omega_pll: T,
}

/// Frequency imposed by the strategy before any limiter.
pub fn strategy_frequency<T: Scalar>(cfg: &SyncStrategyConfig<T>, state: &SyncState<T>, p_feedback: T) -> T {
    match cfg.kind {
        StrategyKind::IpControl => cfg.omega_0 + state.ip_integrator - cfg.k_p * p_feedback,
        _ => state.omega,
    }
}

/// Right-hand side of the self-synchronisation law.
///
/// Returns the strategy-state derivatives and the converter frequency. The
/// frame angle obeys `d(theta)/dt = omega_b * omega`, integrated by the caller
/// relative to the infinite bus.
pub fn sync_derivatives<T: Scalar>(
    cfg: &SyncStrategyConfig<T>,
    state: &SyncState<T>,
    inputs: &SyncInputs<T>,
) -> (SyncRates<T>, T) {
    let two_h = T::two() * cfg.h_gfm;
    let omega = strategy_frequency(cfg, state, inputs.p_feedback);
    let p_star = match cfg.kind {
        StrategyKind::VsmNoPll => inputs.p_ref,
        _ => inputs.p_ref + inputs.dp_pfr,
    };
    let mut rates = SyncRates::default();
    match cfg.kind {
        StrategyKind::VsmNoPll => {
            rates.d_omega = (p_star - inputs.p_feedback - cfg.d_gfm * (omega - cfg.omega_0)) / two_h;
        }
        StrategyKind::VsmPll => {
            rates.d_omega = (p_star - inputs.p_feedback - cfg.d_gfm * (omega - inputs.omega_pll)) / two_h;
        }
        StrategyKind::VsmWashout => {
            let u = omega - cfg.omega_0;
            let w = u - state.washout_state;
            rates.d_washout = w / cfg.t_wd;
            rates.d_omega = (p_star - inputs.p_feedback - cfg.d_gfm * w) / two_h;
        }
        StrategyKind::IpControl => {
            rates.d_ip = (p_star - inputs.p_feedback) / two_h;
        }
    }
    (rates, omega)
}

/// Output of one PLL evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllOutput<T> {
    pub omega_pll: T,
    pub d_xi: T,
    /// Phase error fed to the PI.
    pub error: T,
    pub saturated: bool,
}

/// Synchronous-reference-frame PLL with conditional-integration anti-windup.
///
/// `frame_offset` is the converter frame angle minus the PLL angle, used to
/// rotate `v_g` into the PLL frame; the phase error is the resulting
/// q component. A zero PCC voltage yields a zero error, freezing the PLL.
pub fn pll_derivatives<T: Scalar>(
    v_g: DqVoltage<T>,
    frame_offset: T,
    state: &PllState<T>,
    gains: &PllGains<T>,
    omega_0: T,
) -> PllOutput<T> {
    let error = v_g.rotate(frame_offset).q;
    let raw = gains.k_p * error + gains.k_i * state.xi_pll;
    let limited = saturate(raw, gains.dw_max);
    let saturated = limited != raw;
    let winding_up = saturated && (raw > T::zero()) == (error > T::zero()) && error != T::zero();
    PllOutput {
        omega_pll: omega_0 + limited,
        d_xi: if winding_up { T::zero() } else { error },
        error,
        saturated,
    }
}

/// Primary frequency response: gain, first-order low-pass and saturation.
///
/// Returns the power correction and the filter-state derivative.
pub fn pfr_output<T: Scalar>(cfg: &SyncStrategyConfig<T>, omega: T, filter_state: T) -> (T, T) {
    if !cfg.kind.has_explicit_pfr() {
        return (T::zero(), T::zero());
    }
    let pfr = &cfg.pfr;
    let target = -pfr.k_pfr * (omega - cfg.omega_0);
    if pfr.t_pfr == T::zero() {
        (saturate(target, pfr.dp_max), T::zero())
    } else {
        (saturate(filter_state, pfr.dp_max), (target - filter_state) / pfr.t_pfr)
    }
}

/// Unsaturated virtual active power `v_g . i_ref'`.
#[inline]
pub fn vapc_feedback<T: Scalar>(v_g: DqVoltage<T>, i_ref_unsat: DqCurrent<T>) -> T {
    v_g.dot(i_ref_unsat)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlcOutcome<T> {
    pub omega_limited: T,
    pub gamma1: bool,
    /// The clamp is engaged.
    pub antiwindup_active: bool,
}

/// Voltage hysteresis of the fault detector.
#[inline]
pub fn flc_detect<T: Scalar>(cfg: &FlcConfig<T>, v_g_mag: T, gamma1_prev: bool) -> bool {
    v_g_mag <= cfg.v_a || (gamma1_prev && v_g_mag <= cfg.v_b)
}

/// Frequency limiter: hysteresis fault detection followed by a clamp of the
/// frequency to `omega_ss +- dw_max` while a fault is detected.
pub fn flc_step<T: Scalar>(
    cfg: &FlcConfig<T>,
    v_g_mag: T,
    gamma1_prev: bool,
    omega_candidate: T,
    omega_ss: T,
) -> FlcOutcome<T> {
    let gamma1 = flc_detect(cfg, v_g_mag, gamma1_prev);
    let (omega_limited, antiwindup_active) = if gamma1 {
        flc_clamp(cfg, omega_candidate, omega_ss)
    } else {
        (omega_candidate, false)
    };
    FlcOutcome {
        omega_limited,
        gamma1,
        antiwindup_active,
    }
}

/// Clamp applied while a fault is detected. Returns the limited frequency
/// and whether the bound is engaged.
#[inline]
pub fn flc_clamp<T: Scalar>(cfg: &FlcConfig<T>, omega: T, omega_ss: T) -> (T, bool) {
    let limited = omega.clamp_to(omega_ss - cfg.dw_max, omega_ss + cfg.dw_max);
    let engaged = omega >= omega_ss + cfg.dw_max || omega <= omega_ss - cfg.dw_max;
    (limited, engaged)
}

/// Trailing mean of the converter frequency, latched as the pre-fault
/// steady-state frequency when the fault detector trips.
#[derive(Debug, Clone)]
pub struct FrequencyWindow<T> {
    samples: VecDeque<T>,
    capacity: usize,
}

impl<T: Scalar> FrequencyWindow<T> {
    /// Window of `capacity` samples, pre-filled with `initial`.
    pub fn new(capacity: usize, initial: T) -> Self {
        let capacity = capacity.max(1);
        Self {
            samples: std::iter::repeat_n(initial, capacity).collect(),
            capacity,
        }
    }

    pub fn push(&mut self, omega: T) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(omega);
    }

    pub fn mean(&self) -> T {
        let n = T::count(self.samples.len());
        self.samples.iter().fold(T::zero(), |acc, &x| acc + x) / n
    }
}
