//! Time-domain simulation of the converter on an infinite bus: steady-state
//! initialization, fixed-step RK4 integration with fault switching, and
//! loss-of-synchronism classification.

use crate::control::{
    flc_clamp, flc_detect, pfr_output, pll_derivatives, strategy_frequency, sync_derivatives, FlcAntiWindup, FlcConfig,
    FrequencyWindow, PfrSignal, PllState, StrategyKind, SyncInputs, SyncState, SyncStrategyConfig,
};
use crate::error::{ensure, ConfigError, SimError};
use crate::model::{
    active_power, csa_limit, current_controller, current_setpoints, electrical_derivatives, infinite_bus_dq,
    network_voltages, reactive_power, ConverterParams, Dq, DqCurrent, DqVoltage, ElectricalState, GridScenario,
};
use crate::ode::rk4_step;
use crate::scalar::{saturate, Scalar};

/// Converter, grid and control configuration of one study case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig<T> {
    pub converter: ConverterParams<T>,
    pub grid: GridScenario<T>,
    pub strategy: SyncStrategyConfig<T>,
}

impl<T: Scalar> SystemConfig<T> {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            converter: ConverterParams::default(),
            grid: GridScenario::default(),
            strategy: SyncStrategyConfig::new(kind),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.converter.validate()?;
        self.grid.validate(&self.converter)?;
        self.strategy.validate()
    }
}

/// Thresholds of the loss-of-synchronism classifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstabilityCriteria<T> {
    /// Maximum excursion of `delta` from its initial value (rad).
    pub delta_limit: T,
    /// Frequency band around the grid frequency required at the end (pu).
    pub settle_band: T,
    /// Length of the final window checked for settling (s).
    pub settle_window: T,
    /// Half-width of the band `delta` must stay in over the final window (rad).
    pub angle_band: T,
    pub omega_min: T,
    pub omega_max: T,
    /// State magnitude treated as numerical blow-up.
    pub blowup: T,
}

impl<T: Scalar> Default for InstabilityCriteria<T> {
    fn default() -> Self {
        Self {
            delta_limit: T::PI(),
            settle_band: T::lit(1e-4),
            settle_window: T::two(),
            angle_band: T::lit(5.0).to_radians(),
            omega_min: T::lit(0.5),
            omega_max: T::lit(1.5),
            blowup: T::lit(1e6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T> {
    /// Integration step (s).
    pub dt: T,
    /// Horizon (s).
    pub t_end: T,
    /// Keep one sample every `record_stride` steps.
    pub record_stride: usize,
    pub instability: InstabilityCriteria<T>,
}

impl<T: Scalar> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-4),
            t_end: T::lit(11.15),
            record_stride: 10,
            instability: InstabilityCriteria::default(),
        }
    }
}

impl<T: Scalar> SimConfig<T> {
    /// Default horizon: ten seconds past the last scripted event.
    pub fn default_horizon(grid: &GridScenario<T>) -> T {
        let last = match (grid.fault, grid.setpoint_step) {
            (Some(f), Some(s)) => f.t_clear.max(s.t),
            (Some(f), None) => f.t_clear,
            (None, Some(s)) => s.t,
            (None, None) => T::zero(),
        };
        last + T::lit(10.0)
    }

    pub fn for_grid(grid: &GridScenario<T>) -> Self {
        Self {
            t_end: Self::default_horizon(grid),
            ..Self::default()
        }
    }

    pub fn validate(&self, grid: &GridScenario<T>) -> Result<(), ConfigError> {
        ensure(self.dt > T::zero(), "sim.dt", || {
            format!("must be > 0, got {}", self.dt)
        })?;
        ensure(self.record_stride >= 1, "sim.record_stride", || {
            "must be >= 1".to_string()
        })?;
        ensure(self.instability.delta_limit > T::zero(), "sim.delta_limit", || {
            format!("must be > 0, got {}", self.instability.delta_limit)
        })?;
        ensure(self.instability.settle_band > T::zero(), "sim.settle_band", || {
            format!("must be > 0, got {}", self.instability.settle_band)
        })?;
        ensure(self.instability.settle_window >= T::zero(), "sim.settle_window", || {
            format!("must be >= 0, got {}", self.instability.settle_window)
        })?;
        if let Some(fault) = &grid.fault {
            ensure(self.t_end > fault.t_clear, "sim.t_end", || {
                format!(
                    "t_end > fault.t_clear required, got {} <= {}",
                    self.t_end, fault.t_clear
                )
            })?;
        }
        ensure(self.t_end > T::zero(), "sim.t_end", || {
            format!("must be > 0, got {}", self.t_end)
        })
    }

    /// Number of integration steps covering `t`.
    pub fn steps_for(&self, t: T) -> usize {
        (t / self.dt).round().to_usize().unwrap_or(0)
    }
}

/// Full continuous state of the converter and its controls.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState<T> {
    pub electrical: ElectricalState<T>,
    pub sync: SyncState<T>,
}

const I_D: usize = 0;
const I_Q: usize = 1;
const XI_D: usize = 2;
const XI_Q: usize = 3;
const OMEGA: usize = 4;
const DELTA: usize = 5;
const WASHOUT: usize = 6;
const IP: usize = 7;
const PFR: usize = 8;
const DELTA_PLL: usize = 9;
const XI_PLL: usize = 10;
/// Length of the integrated state vector.
pub const N_STATES: usize = 11;

impl<T: Scalar> SimState<T> {
    pub fn to_array(&self) -> [T; N_STATES] {
        let mut y = [T::zero(); N_STATES];
        y[I_D] = self.electrical.i.d;
        y[I_Q] = self.electrical.i.q;
        y[XI_D] = self.electrical.xi.d;
        y[XI_Q] = self.electrical.xi.q;
        y[OMEGA] = self.sync.omega;
        y[DELTA] = self.sync.delta;
        y[WASHOUT] = self.sync.washout_state;
        y[IP] = self.sync.ip_integrator;
        y[PFR] = self.sync.pfr_filter_state;
        y[DELTA_PLL] = self.sync.pll.delta_pll;
        y[XI_PLL] = self.sync.pll.xi_pll;
        y
    }

    /// Rebuilds the state, keeping the discrete and derived parts of `template`.
    pub fn from_array(y: &[T; N_STATES], template: &SimState<T>) -> Self {
        let mut s = *template;
        s.electrical.i = Dq::new(y[I_D], y[I_Q]);
        s.electrical.xi = Dq::new(y[XI_D], y[XI_Q]);
        s.sync.omega = y[OMEGA];
        s.sync.delta = y[DELTA];
        s.sync.washout_state = y[WASHOUT];
        s.sync.ip_integrator = y[IP];
        s.sync.pfr_filter_state = y[PFR];
        s.sync.pll.delta_pll = y[DELTA_PLL];
        s.sync.pll.xi_pll = y[XI_PLL];
        s
    }
}

/// Algebraic signals at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outputs<T> {
    pub v_g: DqVoltage<T>,
    pub i_ref_unsat: DqCurrent<T>,
    pub i_ref: DqCurrent<T>,
    pub k_cl: T,
    pub e_m: DqVoltage<T>,
    pub p_g: T,
    pub q_g: T,
    pub p_virt: T,
    /// Frequency before the limiter.
    pub omega_candidate: T,
    /// Frequency imposed on the frame.
    pub omega: T,
    pub omega_pll: T,
    pub flc_engaged: bool,
}

/// Limiter status for one evaluation: present only while a fault is detected.
#[derive(Debug, Clone, Copy)]
struct ActiveLimiter<'a, T> {
    cfg: &'a FlcConfig<T>,
    omega_ss: T,
}

/// Evaluates the composed right-hand side and the algebraic outputs.
fn evaluate<T: Scalar>(
    sys: &SystemConfig<T>,
    y: &[T; N_STATES],
    faulted: bool,
    limiter: Option<ActiveLimiter<'_, T>>,
    p_ref: T,
) -> ([T; N_STATES], Outputs<T>) {
    let conv = &sys.converter;
    let grid = &sys.grid;
    let cfg = &sys.strategy;

    let el = ElectricalState {
        i: Dq::new(y[I_D], y[I_Q]),
        xi: Dq::new(y[XI_D], y[XI_Q]),
    };
    let delta = y[DELTA];
    let (v_g, _) = network_voltages(&el, delta, grid, faulted);
    let i_ref_unsat = current_setpoints(v_g, conv);
    let (i_ref, k_cl) = csa_limit(i_ref_unsat, conv.i_max);
    let p_g = active_power(v_g, el.i);
    let p_virt = active_power(v_g, i_ref_unsat);
    let p_feedback = if cfg.use_vapc { p_virt } else { p_g };

    let mut sync = SyncState {
        omega: y[OMEGA],
        delta,
        washout_state: y[WASHOUT],
        ip_integrator: y[IP],
        pfr_filter_state: y[PFR],
        pll: PllState {
            delta_pll: y[DELTA_PLL],
            xi_pll: y[XI_PLL],
            omega_pll: cfg.omega_0,
        },
        ..SyncState::default()
    };

    let omega_candidate = strategy_frequency(cfg, &sync, p_feedback);
    let (omega, flc_engaged) = match limiter {
        Some(l) => flc_clamp(l.cfg, omega_candidate, l.omega_ss),
        None => (omega_candidate, false),
    };
    if cfg.kind != StrategyKind::IpControl {
        sync.omega = omega;
    }

    let mut dy = [T::zero(); N_STATES];

    let mut omega_pll = cfg.omega_0;
    if cfg.kind == StrategyKind::VsmPll {
        let pll = pll_derivatives(v_g, delta - sync.pll.delta_pll, &sync.pll, &cfg.pll, cfg.omega_0);
        omega_pll = pll.omega_pll;
        dy[XI_PLL] = pll.d_xi;
        dy[DELTA_PLL] = conv.omega_b * (omega_pll - grid.omega_e);
    }

    let pfr_input = match cfg.pfr_signal {
        PfrSignal::Pll if cfg.kind == StrategyKind::VsmPll => omega_pll,
        _ => omega,
    };
    let (dp_pfr, d_pfr) = pfr_output(cfg, pfr_input, sync.pfr_filter_state);
    dy[PFR] = d_pfr;

    let inputs = SyncInputs {
        p_ref,
        p_feedback,
        dp_pfr,
        omega_pll,
    };
    let (mut rates, _) = sync_derivatives(cfg, &sync, &inputs);
    if let Some(l) = limiter {
        if flc_engaged && l.cfg.anti_windup == FlcAntiWindup::Hold {
            let at_max = omega_candidate >= l.omega_ss + l.cfg.dw_max;
            let outward = |rate: T| (at_max && rate > T::zero()) || (!at_max && rate < T::zero());
            if outward(rates.d_omega) {
                rates.d_omega = T::zero();
            }
            if outward(rates.d_ip) {
                rates.d_ip = T::zero();
            }
        }
    }
    dy[OMEGA] = rates.d_omega;
    dy[WASHOUT] = rates.d_washout;
    dy[IP] = rates.d_ip;
    dy[DELTA] = conv.omega_b * (omega - grid.omega_e);

    let (e_m, dxi) = current_controller(&el, i_ref, v_g, omega, conv);
    dy[XI_D] = dxi.d;
    dy[XI_Q] = dxi.q;
    let di = electrical_derivatives(&el, e_m, delta, omega, grid, conv, faulted);
    dy[I_D] = di.d;
    dy[I_Q] = di.q;

    let outputs = Outputs {
        v_g,
        i_ref_unsat,
        i_ref,
        k_cl,
        e_m,
        p_g,
        q_g: reactive_power(v_g, el.i),
        p_virt,
        omega_candidate,
        omega,
        omega_pll,
        flc_engaged,
    };
    (dy, outputs)
}

/// Derivatives and outputs of `state` with no limiter engaged.
pub fn state_derivatives<T: Scalar>(
    sys: &SystemConfig<T>,
    state: &SimState<T>,
    faulted: bool,
) -> ([T; N_STATES], Outputs<T>) {
    evaluate(sys, &state.to_array(), faulted, None, sys.grid.p_g0)
}

/// Steady operating point and the largest state derivative it leaves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitReport<T> {
    pub state: SimState<T>,
    pub outputs: Outputs<T>,
    /// Maximum absolute state derivative at the returned state.
    pub residual: T,
}

/// Quasi-static (unsaturated) current and PCC voltage for a frame angle.
fn quasi_static_point<T: Scalar>(
    delta: T,
    conv: &ConverterParams<T>,
    grid: &GridScenario<T>,
) -> (DqCurrent<T>, DqVoltage<T>) {
    let v_e = infinite_bus_dq(delta, grid.v_e);
    let a = conv.x_cv() + grid.x_g;
    let r = grid.r_g;
    let b1 = -v_e.q;
    let b2 = v_e.d - conv.e_m0;
    let det = a * a + r * r;
    let i = Dq::new((a * b1 - r * b2) / det, (a * b2 + r * b1) / det);
    (i, v_e + i.times_impedance(grid.r_g, grid.x_g))
}

/// Active power the strategy settles to when every frequency equals the grid's.
fn steady_power_target<T: Scalar>(sys: &SystemConfig<T>) -> T {
    let cfg = &sys.strategy;
    let offset = sys.grid.omega_e - cfg.omega_0;
    match cfg.kind {
        StrategyKind::VsmNoPll => sys.grid.p_g0 - cfg.d_gfm * offset,
        _ => sys.grid.p_g0 + saturate(-cfg.pfr.k_pfr * offset, cfg.pfr.dp_max),
    }
}

/// Solves the algebraic fixed point of the full model with the fault off.
///
/// The frame angle is found by bracketing and bisection on the quasi-static
/// power characteristic; controller integrators, filters and the PLL are then
/// placed at their consistent values.
pub fn init_steady_state<T: Scalar>(sys: &SystemConfig<T>) -> Result<InitReport<T>, SimError> {
    sys.validate()?;
    let conv = &sys.converter;
    let grid = &sys.grid;
    let cfg = &sys.strategy;
    let p_target = steady_power_target(sys);
    let mismatch = |delta: T| {
        let (i, v) = quasi_static_point(delta, conv, grid);
        active_power(v, i) - p_target
    };

    // Bracket on the rising branch of the characteristic.
    let step = T::lit(1.0).to_radians();
    let mut lo = -T::FRAC_PI_2();
    let mut f_lo = mismatch(lo);
    let mut bracket = None;
    while lo < T::FRAC_PI_2() {
        let hi = lo + step;
        let f_hi = mismatch(hi);
        if f_lo <= T::zero() && f_hi >= T::zero() {
            bracket = Some((lo, hi));
            break;
        }
        lo = hi;
        f_lo = f_hi;
    }
    let (mut lo, mut hi) =
        bracket.ok_or_else(|| SimError::Infeasible(format!("no operating angle delivers p = {p_target}")))?;
    for _ in 0..200 {
        let mid = (lo + hi) / T::two();
        if mid <= lo || mid >= hi {
            break;
        }
        if mismatch(mid) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = if mismatch(hi).abs() < mismatch(lo).abs() {
        hi
    } else {
        lo
    };

    let (i, v_g) = quasi_static_point(delta, conv, grid);
    if i.magnitude() >= conv.i_max {
        return Err(SimError::Infeasible(format!(
            "steady current {} reaches the limit {}",
            i.magnitude(),
            conv.i_max
        )));
    }

    let omega = grid.omega_e;
    let v_rem = infinite_bus_dq(delta, grid.v_e);
    let r_tot = conv.r_c + grid.r_g;
    let x_tot = conv.x_c + grid.x_g;
    let e_m = Dq::new(
        v_rem.d + r_tot * i.d - omega * x_tot * i.q,
        v_rem.q + r_tot * i.q + omega * x_tot * i.d,
    );
    let xi = if conv.k_cc_i > T::zero() {
        Dq::new(
            (e_m.d - v_g.d + omega * conv.x_c * i.q) / conv.k_cc_i,
            (e_m.q - v_g.q - omega * conv.x_c * i.d) / conv.k_cc_i,
        )
    } else {
        Dq::zero()
    };

    let offset = omega - cfg.omega_0;
    let p_g = active_power(v_g, i);
    let mut sync = SyncState {
        omega,
        delta,
        washout_state: offset,
        ip_integrator: offset + cfg.k_p * p_g,
        pfr_filter_state: if cfg.kind.has_explicit_pfr() && cfg.pfr.t_pfr > T::zero() {
            -cfg.pfr.k_pfr * offset
        } else {
            T::zero()
        },
        ..SyncState::default()
    };
    if cfg.kind == StrategyKind::VsmPll {
        sync.pll = PllState {
            delta_pll: delta + v_g.angle(),
            xi_pll: offset / cfg.pll.k_i,
            omega_pll: omega,
        };
    }
    sync.flc.omega_ss = omega;

    let state = SimState {
        electrical: ElectricalState { i, xi },
        sync,
    };
    let (dy, outputs) = state_derivatives(sys, &state, false);
    let residual = dy.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tolerance = T::lit(1e-8).max(T::epsilon().sqrt() * T::lit(10.0));
    if residual.is_nan() || residual > tolerance {
        return Err(SimError::NoConvergence {
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(InitReport {
        state,
        outputs,
        residual,
    })
}

/// Uniformly sampled simulation record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub t: Vec<T>,
    pub delta: Vec<T>,
    pub omega: Vec<T>,
    pub p_g: Vec<T>,
    pub q_g: Vec<T>,
    pub v_g_mag: Vec<T>,
    pub i_mag: Vec<T>,
    pub p_virt: Vec<T>,
    pub gamma1: Vec<bool>,
    pub k_cl: Vec<T>,
    /// Network condition applying from each sample onward.
    pub faulted: Vec<bool>,
    pub states: Vec<SimState<T>>,
    pub omega_e: T,
    pub t_end: T,
}

impl<T: Scalar> Trajectory<T> {
    fn with_capacity(n: usize, omega_e: T, t_end: T) -> Self {
        Self {
            t: Vec::with_capacity(n),
            delta: Vec::with_capacity(n),
            omega: Vec::with_capacity(n),
            p_g: Vec::with_capacity(n),
            q_g: Vec::with_capacity(n),
            v_g_mag: Vec::with_capacity(n),
            i_mag: Vec::with_capacity(n),
            p_virt: Vec::with_capacity(n),
            gamma1: Vec::with_capacity(n),
            k_cl: Vec::with_capacity(n),
            faulted: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            omega_e,
            t_end,
        }
    }

    fn push(&mut self, t: T, state: &SimState<T>, out: &Outputs<T>, faulted: bool) {
        self.t.push(t);
        self.delta.push(state.sync.delta);
        self.omega.push(out.omega);
        self.p_g.push(out.p_g);
        self.q_g.push(out.q_g);
        self.v_g_mag.push(out.v_g.magnitude());
        self.i_mag.push(state.electrical.i.magnitude());
        self.p_virt.push(out.p_virt);
        self.gamma1.push(state.sync.flc.gamma1);
        self.k_cl.push(out.k_cl);
        self.faulted.push(faulted);
        self.states.push(*state);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the sample closest to time `t`.
    pub fn index_at(&self, t: T) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| {
            (self.t[a] - t)
                .abs()
                .partial_cmp(&(self.t[b] - t).abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictReason {
    Settled,
    AngleDiverged,
    NumericalBlowup,
    /// Neither diverged nor settled within the horizon.
    HorizonUndecided,
}

impl VerdictReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Settled => "settled",
            Self::AngleDiverged => "angle_diverged",
            Self::NumericalBlowup => "numerical_blowup",
            Self::HorizonUndecided => "horizon_undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub stable: bool,
    pub reason: VerdictReason,
}

impl Verdict {
    pub fn from_reason(reason: VerdictReason) -> Self {
        Self {
            stable: reason == VerdictReason::Settled,
            reason,
        }
    }
}

fn blown_up<T: Scalar>(state: &SimState<T>, limit: T) -> bool {
    state.to_array().iter().any(|x| !x.is_finite() || x.abs() > limit)
}

fn lost_synchronism<T: Scalar>(delta: T, delta0: T, omega: T, c: &InstabilityCriteria<T>) -> bool {
    (delta - delta0).abs() > c.delta_limit || !(omega >= c.omega_min && omega <= c.omega_max)
}

/// Classifies a trajectory as settled, diverged or undecided.
pub fn classify<T: Scalar>(traj: &Trajectory<T>, sim: &SimConfig<T>) -> Result<Verdict, SimError> {
    if traj.is_empty() {
        return Err(SimError::Config(ConfigError::new("trajectory", "empty trajectory")));
    }
    let c = &sim.instability;
    if traj.states.iter().any(|s| blown_up(s, c.blowup)) {
        return Ok(Verdict::from_reason(VerdictReason::NumericalBlowup));
    }
    let delta0 = traj.delta[0];
    if traj
        .delta
        .iter()
        .zip(&traj.omega)
        .any(|(&d, &w)| lost_synchronism(d, delta0, w, c))
    {
        return Ok(Verdict::from_reason(VerdictReason::AngleDiverged));
    }
    let t_last = traj.t[traj.len() - 1];
    if t_last < traj.t_end - sim.dt / T::two() {
        return Ok(Verdict::from_reason(VerdictReason::HorizonUndecided));
    }
    let start = t_last - c.settle_window;
    let mut d_min = T::infinity();
    let mut d_max = T::neg_infinity();
    let mut settled = true;
    for k in (0..traj.len()).rev() {
        if traj.t[k] < start {
            break;
        }
        settled &= (traj.omega[k] - traj.omega_e).abs() < c.settle_band;
        d_min = d_min.min(traj.delta[k]);
        d_max = d_max.max(traj.delta[k]);
    }
    settled &= d_max - d_min <= T::two() * c.angle_band;
    Ok(Verdict::from_reason(if settled {
        VerdictReason::Settled
    } else {
        VerdictReason::HorizonUndecided
    }))
}

/// Runs the scenario from its steady operating point.
///
/// Fault application and clearing are aligned to step boundaries. The
/// frequency limiter's detector runs once per accepted step; while it reports
/// a fault the frequency state is projected onto the clamp band.
pub fn simulate<T: Scalar>(sys: &SystemConfig<T>, sim: &SimConfig<T>) -> Result<(Trajectory<T>, Verdict), SimError> {
    sim.validate(&sys.grid)?;
    let init = init_steady_state(sys)?;
    let cfg = &sys.strategy;
    let grid = &sys.grid;

    let n_steps = sim.steps_for(sim.t_end);
    let (n_apply, n_clear) = match grid.fault {
        Some(f) => (sim.steps_for(f.t_apply), sim.steps_for(f.t_clear)),
        None => (usize::MAX, usize::MAX),
    };
    let faulted_at = |n: usize| n >= n_apply && n < n_clear;
    let time_at = |n: usize| T::count(n) * sim.dt;

    let mut window = FrequencyWindow::new(sim.steps_for(T::lit(0.1)), init.state.sync.omega);
    let mut state = init.state;
    let delta0 = state.sync.delta;
    let mut traj = Trajectory::with_capacity(n_steps / sim.record_stride + 2, grid.omega_e, time_at(n_steps));

    let limiter_for = |s: &SimState<T>| -> Option<ActiveLimiter<'_, T>> {
        match &cfg.flc {
            Some(flc) if s.sync.flc.gamma1 => Some(ActiveLimiter {
                cfg: flc,
                omega_ss: s.sync.flc.omega_ss,
            }),
            _ => None,
        }
    };

    let (_, out0) = evaluate(sys, &state.to_array(), faulted_at(0), None, grid.p_setpoint(T::zero()));
    traj.push(T::zero(), &state, &out0, faulted_at(0));

    let c = &sim.instability;
    for n in 0..n_steps {
        let faulted = faulted_at(n);
        let p_ref = grid.p_setpoint(time_at(n));
        let limiter = limiter_for(&state);
        let y = rk4_step(&state.to_array(), sim.dt, |y| {
            evaluate(sys, y, faulted, limiter, p_ref).0
        });
        state = SimState::from_array(&y, &state);

        let t_next = time_at(n + 1);
        let faulted_next = faulted_at(n + 1);
        let p_ref_next = grid.p_setpoint(t_next);

        if let Some(flc) = &cfg.flc {
            let (v_g, _) = network_voltages(&state.electrical, state.sync.delta, grid, faulted_next);
            let was = state.sync.flc.gamma1;
            let now = flc_detect(flc, v_g.magnitude(), was);
            if now && !was {
                state.sync.flc.omega_ss = window.mean();
            }
            state.sync.flc.gamma1 = now;
            if now {
                project_onto_band(sys, flc, &mut state, faulted_next, p_ref_next);
            }
        }

        let (_, out) = evaluate(sys, &state.to_array(), faulted_next, limiter_for(&state), p_ref_next);
        if cfg.flc.is_some() && !state.sync.flc.gamma1 {
            window.push(out.omega);
        }

        let diverged = blown_up(&state, c.blowup) || lost_synchronism(state.sync.delta, delta0, out.omega, c);
        if (n + 1) % sim.record_stride == 0 || n + 1 == n_steps || diverged {
            traj.push(t_next, &state, &out, faulted_next);
        }
        if diverged {
            break;
        }
    }
    let verdict = classify(&traj, sim)?;
    Ok((traj, verdict))
}

/// Post-step projection of the frequency (or the IP integrator in reset
/// mode) onto the limiter band.
fn project_onto_band<T: Scalar>(
    sys: &SystemConfig<T>,
    flc: &FlcConfig<T>,
    state: &mut SimState<T>,
    faulted: bool,
    p_ref: T,
) {
    let omega_ss = state.sync.flc.omega_ss;
    let cfg = &sys.strategy;
    match cfg.kind {
        StrategyKind::IpControl => {
            if flc.anti_windup == FlcAntiWindup::Reset {
                let (_, out) = evaluate(sys, &state.to_array(), faulted, None, p_ref);
                let (limited, engaged) = flc_clamp(flc, out.omega_candidate, omega_ss);
                if engaged {
                    state.sync.ip_integrator = state.sync.ip_integrator + (limited - out.omega_candidate);
                }
            }
        }
        _ => {
            state.sync.omega = flc_clamp(flc, state.sync.omega, omega_ss).0;
        }
    }
}
