//! Per-unit converter and network model.
//!
//! The converter is a voltage source `e_m` behind the series impedance
//! `r_c + j x_c`, connected at the PCC to an infinite bus through
//! `r_g + j x_g`. All quantities are expressed in the converter's rotating
//! dq frame. The frame angle relative to the infinite bus is
//! `delta = theta - theta_e`, and the infinite bus seen from that frame is
//! `v_e * (cos(-delta), sin(-delta))`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{ensure, ConfigError};
use crate::scalar::Scalar;

/// A dq-frame phasor.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dq<T> {
    pub d: T,
    pub q: T,
}

pub type DqVoltage<T> = Dq<T>;
pub type DqCurrent<T> = Dq<T>;

impl<T: Scalar> Dq<T> {
    #[inline]
    pub fn new(d: T, q: T) -> Self {
        Self { d, q }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn polar(magnitude: T, angle: T) -> Self {
        Self::new(magnitude * angle.cos(), magnitude * angle.sin())
    }

    #[inline]
    pub fn magnitude(self) -> T {
        self.d.hypot(self.q)
    }

    #[inline]
    pub fn angle(self) -> T {
        self.q.atan2(self.d)
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.d * other.d + self.q * other.q
    }

    #[inline]
    pub fn scale(self, k: T) -> Self {
        Self::new(self.d * k, self.q * k)
    }

    /// Complex product `(r + j x) * self`.
    #[inline]
    pub fn times_impedance(self, r: T, x: T) -> Self {
        Self::new(r * self.d - x * self.q, r * self.q + x * self.d)
    }

    /// Rotates the phasor by `angle` (multiplication by `e^{j angle}`).
    #[inline]
    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.d - s * self.q, s * self.d + c * self.q)
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl<T: Scalar> Add for Dq<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl<T: Scalar> Sub for Dq<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl<T: Scalar> Neg for Dq<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.d, -self.q)
    }
}

impl<T: Scalar> Mul<T> for Dq<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        self.scale(k)
    }
}

/// Electrical and control constants of the converter, in per unit on the
/// converter rating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams<T> {
    /// Apparent power base (MVA).
    pub s_rated: T,
    /// AC voltage base (kV).
    pub v_ac_rated: T,
    /// Nominal frequency (Hz).
    pub f_nom: T,
    /// Nominal angular frequency (rad/s).
    pub omega_b: T,
    pub r_c: T,
    pub x_c: T,
    /// Virtual reactance added to `x_c` when computing current setpoints.
    pub x_v: T,
    /// Current limit magnitude.
    pub i_max: T,
    pub k_cc_p: T,
    /// Current-controller integral gain (pu/s).
    pub k_cc_i: T,
    /// Modulated-voltage magnitude setpoint.
    pub e_m0: T,
}

impl<T: Scalar> Default for ConverterParams<T> {
    fn default() -> Self {
        Self::with_frequency(T::lit(50.0))
    }
}

impl<T: Scalar> ConverterParams<T> {
    fn with_frequency(f_nom: T) -> Self {
        Self {
            s_rated: T::lit(100.0),
            v_ac_rated: T::lit(220.0),
            f_nom,
            omega_b: T::two() * T::PI() * f_nom,
            r_c: T::lit(0.005),
            x_c: T::lit(0.15),
            x_v: T::zero(),
            i_max: T::lit(1.2),
            k_cc_p: T::lit(1.0027),
            k_cc_i: T::lit(1074.3),
            e_m0: T::lit(1.0057),
        }
    }

    /// Reactance used by the quasi-static setpoint model, `x_c + x_v`.
    #[inline]
    pub fn x_cv(&self) -> T {
        self.x_c + self.x_v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("converter.x_c", self.x_c),
            ("converter.i_max", self.i_max),
            ("converter.omega_b", self.omega_b),
            ("converter.e_m0", self.e_m0),
        ];
        for (field, v) in positive {
            ensure(v > T::zero(), field, || format!("must be > 0, got {v}"))?;
        }
        ensure(self.x_cv() > T::zero(), "converter.x_v", || {
            format!("x_c + x_v must be > 0, got {}", self.x_cv())
        })?;
        ensure(self.r_c >= T::zero(), "converter.r_c", || {
            format!("must be >= 0, got {}", self.r_c)
        })?;
        ensure(
            self.k_cc_p > T::zero() && self.k_cc_i >= T::zero(),
            "converter.k_cc_p",
            || {
                format!(
                    "current-controller gains must be positive, got {} / {}",
                    self.k_cc_p, self.k_cc_i
                )
            },
        )
    }
}

/// Bolted three-phase fault on the grid branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultEvent<T> {
    pub t_apply: T,
    pub t_clear: T,
    /// Electrical distance of the fault from the PCC as a fraction of the
    /// grid branch (0 = at the PCC).
    pub location_fraction: T,
}

impl<T: Scalar> Default for FaultEvent<T> {
    fn default() -> Self {
        Self {
            t_apply: T::one(),
            t_clear: T::lit(1.15),
            location_fraction: T::zero(),
        }
    }
}

impl<T: Scalar> FaultEvent<T> {
    pub fn duration(&self) -> T {
        self.t_clear - self.t_apply
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.t_apply >= T::zero(), "fault.t_apply", || {
            format!("must be >= 0, got {}", self.t_apply)
        })?;
        ensure(self.t_clear > self.t_apply, "fault.t_clear", || {
            format!("t_clear > t_apply required, got {} <= {}", self.t_clear, self.t_apply)
        })?;
        ensure(
            self.location_fraction >= T::zero() && self.location_fraction <= T::one(),
            "fault.location_fraction",
            || format!("must lie in [0, 1], got {}", self.location_fraction),
        )
    }
}

/// Step change of the active-power setpoint, used for small-signal runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetpointStep<T> {
    pub t: T,
    pub delta_p: T,
}

/// Infinite-bus grid, operating point and disturbance script.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScenario<T> {
    pub r_g: T,
    pub x_g: T,
    pub v_e: T,
    /// Infinite-bus frequency (pu).
    pub omega_e: T,
    /// Active-power setpoint and initial injection at the PCC.
    pub p_g0: T,
    /// Expected PCC voltage magnitude at the initial operating point.
    pub v_g0: T,
    pub fault: Option<FaultEvent<T>>,
    pub setpoint_step: Option<SetpointStep<T>>,
}

impl<T: Scalar> Default for GridScenario<T> {
    fn default() -> Self {
        Self {
            r_g: T::lit(0.01),
            x_g: T::lit(0.1),
            v_e: T::one(),
            omega_e: T::one(),
            p_g0: T::lit(0.7),
            v_g0: T::one(),
            fault: Some(FaultEvent::default()),
            setpoint_step: None,
        }
    }
}

impl<T: Scalar> GridScenario<T> {
    /// Active-power setpoint in force at time `t`.
    pub fn p_setpoint(&self, t: T) -> T {
        match self.setpoint_step {
            Some(step) if t >= step.t => self.p_g0 + step.delta_p,
            _ => self.p_g0,
        }
    }

    pub fn validate(&self, params: &ConverterParams<T>) -> Result<(), ConfigError> {
        ensure(self.x_g >= T::zero(), "grid.x_g", || {
            format!("must be >= 0, got {}", self.x_g)
        })?;
        ensure(self.r_g >= T::zero(), "grid.r_g", || {
            format!("must be >= 0, got {}", self.r_g)
        })?;
        ensure(self.v_e > T::zero(), "grid.v_e", || {
            format!("must be > 0, got {}", self.v_e)
        })?;
        ensure(self.omega_e > T::zero(), "grid.omega_e", || {
            format!("must be > 0, got {}", self.omega_e)
        })?;
        ensure(self.v_g0 > T::zero(), "grid.v_g0", || {
            format!("must be > 0, got {}", self.v_g0)
        })?;
        let bound = params.i_max * self.v_g0;
        ensure(self.p_g0.abs() <= bound, "grid.p_g0", || {
            format!("|p_g0| must not exceed i_max * v_g0 = {bound}, got {}", self.p_g0)
        })?;
        if let Some(fault) = &self.fault {
            fault.validate()?;
        }
        Ok(())
    }
}

/// Series branch current and current-controller integrator states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElectricalState<T> {
    pub i: DqCurrent<T>,
    pub xi: Dq<T>,
}

/// Unsaturated current references from the quasi-static model,
/// `i_q = (v_gd - e_m0) / x_cv` and `i_d = (0 - v_gq) / x_cv`, with the
/// modulated-voltage setpoint aligned with the d axis.
pub fn current_setpoints<T: Scalar>(v_g: DqVoltage<T>, params: &ConverterParams<T>) -> DqCurrent<T> {
    let x_cv = params.x_cv();
    Dq::new(-v_g.q / x_cv, (v_g.d - params.e_m0) / x_cv)
}

/// Conventional current saturation with equal d/q priority.
///
/// Returns the limited reference and the ratio `K_CL = |unsat| / |sat|`,
/// which is 1 whenever the limit is inactive.
pub fn csa_limit<T: Scalar>(i_ref_unsat: DqCurrent<T>, i_max: T) -> (DqCurrent<T>, T) {
    let magnitude = i_ref_unsat.magnitude();
    if magnitude <= i_max || magnitude == T::zero() {
        (i_ref_unsat, T::one())
    } else {
        let mut scale = i_max / magnitude;
        let mut limited = i_ref_unsat.scale(scale);
        // Rounding can leave the scaled magnitude an ulp above the limit.
        while limited.magnitude() > i_max {
            scale = scale * (T::one() - T::epsilon());
            limited = i_ref_unsat.scale(scale);
        }
        (limited, magnitude / i_max)
    }
}

/// Synchronous-frame PI current controller with voltage feed-forward and
/// `x_c` cross-coupling decoupling. Returns the modulated-voltage command and
/// the integrator derivatives.
pub fn current_controller<T: Scalar>(
    state: &ElectricalState<T>,
    i_ref: DqCurrent<T>,
    v_g: DqVoltage<T>,
    omega: T,
    params: &ConverterParams<T>,
) -> (DqVoltage<T>, Dq<T>) {
    let err = i_ref - state.i;
    let decouple = omega * params.x_c;
    let e_cmd = Dq::new(
        v_g.d + params.k_cc_p * err.d + params.k_cc_i * state.xi.d - decouple * state.i.q,
        v_g.q + params.k_cc_p * err.q + params.k_cc_i * state.xi.q + decouple * state.i.d,
    );
    (e_cmd, err)
}

/// Infinite-bus voltage expressed in the converter frame.
#[inline]
pub fn infinite_bus_dq<T: Scalar>(delta: T, v_e: T) -> DqVoltage<T> {
    Dq::polar(v_e, -delta)
}

/// Effective grid-branch impedance and remote voltage seen by the converter.
#[inline]
fn grid_path<T: Scalar>(delta: T, scenario: &GridScenario<T>, faulted: bool) -> (T, T, DqVoltage<T>) {
    match (faulted, scenario.fault) {
        (true, Some(fault)) => {
            let lambda = fault.location_fraction;
            (lambda * scenario.r_g, lambda * scenario.x_g, Dq::zero())
        }
        _ => (scenario.r_g, scenario.x_g, infinite_bus_dq(delta, scenario.v_e)),
    }
}

/// Algebraic PCC voltage and the remote voltage closing the KVL path (the
/// infinite bus, or the zero-voltage fault node while faulted).
pub fn network_voltages<T: Scalar>(
    state: &ElectricalState<T>,
    delta: T,
    scenario: &GridScenario<T>,
    faulted: bool,
) -> (DqVoltage<T>, DqVoltage<T>) {
    let (r, x, v_rem) = grid_path(delta, scenario, faulted);
    (v_rem + state.i.times_impedance(r, x), v_rem)
}

/// Dynamic-phasor derivative of the series branch current (pu/s).
pub fn electrical_derivatives<T: Scalar>(
    state: &ElectricalState<T>,
    e_m: DqVoltage<T>,
    delta: T,
    omega: T,
    scenario: &GridScenario<T>,
    params: &ConverterParams<T>,
    faulted: bool,
) -> DqCurrent<T> {
    let (r_g, x_g, v_rem) = grid_path(delta, scenario, faulted);
    let r_tot = params.r_c + r_g;
    let x_tot = params.x_c + x_g;
    let gain = params.omega_b / x_tot;
    let i = state.i;
    Dq::new(
        gain * (e_m.d - v_rem.d - r_tot * i.d + omega * x_tot * i.q),
        gain * (e_m.q - v_rem.q - r_tot * i.q - omega * x_tot * i.d),
    )
}

/// Active power `v . i`.
#[inline]
pub fn active_power<T: Scalar>(v: DqVoltage<T>, i: DqCurrent<T>) -> T {
    v.dot(i)
}

/// Reactive power `v_q i_d - v_d i_q`.
#[inline]
pub fn reactive_power<T: Scalar>(v: DqVoltage<T>, i: DqCurrent<T>) -> T {
    v.q * i.d - v.d * i.q
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> ConverterParams<f64> {
        ConverterParams::default()
    }

    #[test]
    fn setpoints_vanish_at_the_voltage_setpoint() {
        let i = current_setpoints(Dq::new(1.0057, 0.0), &params());
        assert_eq!(i, Dq::new(0.0, 0.0));
    }

    #[test]
    fn setpoints_by_substitution() {
        let i = current_setpoints(Dq::new(1.0057, -0.0261), &params());
        assert_abs_diff_eq!(i.d, 0.174, epsilon = 1e-12);
        assert_abs_diff_eq!(i.q, 0.0, epsilon = 1e-12);

        let i = current_setpoints(Dq::new(0.0, 0.0), &params());
        assert_abs_diff_eq!(i.d, 0.0);
        assert_abs_diff_eq!(i.q, -1.0057 / 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(i.q, -6.705, epsilon = 1e-3);
    }

    #[test]
    fn csa_examples() {
        let (i, k) = csa_limit(Dq::new(0.5, 0.5), 1.2);
        assert_eq!(i, Dq::new(0.5, 0.5));
        assert_eq!(k, 1.0);

        let (i, k) = csa_limit(Dq::new(1.0, 1.0), 1.2);
        assert_abs_diff_eq!(i.d, 0.848528, epsilon = 1e-6);
        assert_abs_diff_eq!(i.q, 0.848528, epsilon = 1e-6);
        assert_abs_diff_eq!(k, 1.178511, epsilon = 1e-6);

        let (i, k) = csa_limit(Dq::new(0.0, -1.0057 / 0.15), 1.2);
        assert_abs_diff_eq!(i.d, 0.0);
        assert_abs_diff_eq!(i.q, -1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(k, 5.587, epsilon = 1e-3);

        let (i, k) = csa_limit(Dq::new(0.0, 0.0), 1.2);
        assert_eq!(i, Dq::zero());
        assert_eq!(k, 1.0);
    }

    #[test]
    fn controller_tracking_and_decoupling() {
        let p = params();
        let st = ElectricalState::default();
        let (e, dxi) = current_controller(&st, Dq::zero(), Dq::new(1.0, 0.0), 1.0, &p);
        assert_eq!(e, Dq::new(1.0, 0.0));
        assert_eq!(dxi, Dq::zero());

        let st = ElectricalState {
            i: Dq::new(1.0, 0.0),
            xi: Dq::zero(),
        };
        let (e, _) = current_controller(&st, Dq::new(1.0, 0.0), Dq::new(1.0, 0.0), 1.0, &p);
        assert_abs_diff_eq!(e.d, 1.0);
        assert_abs_diff_eq!(e.q, 0.15, epsilon = 1e-15);
    }

    #[test]
    fn network_examples() {
        let grid = GridScenario::<f64>::default();
        let st = ElectricalState::default();
        let (v_g, v_rem) = network_voltages(&st, 0.0, &grid, false);
        assert_eq!(v_g, Dq::new(1.0, 0.0));
        assert_eq!(v_rem, v_g);

        let st = ElectricalState {
            i: Dq::new(0.3, -1.1),
            xi: Dq::zero(),
        };
        let (v_g, _) = network_voltages(&st, 0.7, &grid, true);
        assert_eq!(v_g, Dq::zero());
    }

    #[test]
    fn fault_at_pcc_current_slew() {
        let grid = GridScenario::<f64>::default();
        let p = params();
        let st = ElectricalState::default();
        let di = electrical_derivatives(&st, Dq::new(1.0057, 0.0), 0.2, 1.0, &grid, &p, true);
        assert_abs_diff_eq!(di.d, p.omega_b * 1.0057 / 0.15, epsilon = 1e-9);
        assert_abs_diff_eq!(di.d, 2106.0, epsilon = 1.0);
        assert_eq!(di.q, 0.0);

        let v_e = infinite_bus_dq(0.2, 1.0);
        let di = electrical_derivatives(&st, v_e, 0.2, 1.0, &grid, &p, false);
        assert_eq!(di, Dq::zero());
    }

    #[test]
    fn validation_names_fields() {
        let mut p = params();
        p.x_c = 0.0;
        assert_eq!(p.validate().unwrap_err().field, "converter.x_c");
        let f = FaultEvent::<f64> {
            t_clear: 0.5,
            ..FaultEvent::default()
        };
        assert_eq!(f.validate().unwrap_err().field, "fault.t_clear");
        let g = GridScenario::<f64> {
            p_g0: 1.3,
            ..GridScenario::default()
        };
        assert_eq!(g.validate(&params()).unwrap_err().field, "grid.p_g0");
    }
}
