//! Transient-stability simulation of grid-forming voltage-source converters
//! connected to an infinite bus.
//!
//! The model, controls, simulator and analysis tools are generic over the
//! floating-point type through [`Scalar`]; the aliases below fix it to `f64`.

pub mod analysis;
pub mod cli;
pub mod control;
pub mod error;
pub mod export;
pub mod model;
pub mod ode;
pub mod scalar;
pub mod scenario;
pub mod sim;

pub use analysis::{
    cct_search, closed_loop_tf_response, design_ip, design_vsm, pdelta, sweep, sweep_cases, AxisValue, CctBound,
    CctBounds, DesignSpec, Enhancement, PdeltaMode, SweepAxis,
};
pub use control::{FlcAntiWindup, PfrSignal, StrategyKind};
pub use error::{ConfigError, ExportError, ScenarioError, SimError};
pub use scalar::Scalar;
pub use scenario::{load_scenario, parse_scenario};
pub use sim::{classify, init_steady_state, simulate, Verdict, VerdictReason};

pub type ConverterParams = model::ConverterParams<f64>;
pub type GridScenario = model::GridScenario<f64>;
pub type FaultEvent = model::FaultEvent<f64>;
pub type SetpointStep = model::SetpointStep<f64>;
pub type SyncStrategyConfig = control::SyncStrategyConfig<f64>;
pub type FlcConfig = control::FlcConfig<f64>;
pub type PfrConfig = control::PfrConfig<f64>;
pub type PllGains = control::PllGains<f64>;
pub type SystemConfig = sim::SystemConfig<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type SimState = sim::SimState<f64>;
pub type Trajectory = sim::Trajectory<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type CctResult = analysis::CctResult<f64>;
pub type PdeltaCurve = analysis::PdeltaCurve<f64>;
pub type PdeltaInputs = analysis::PdeltaInputs<f64>;
