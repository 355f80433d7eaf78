//! Command-line entry points.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    cct_search, design_ip, design_vsm, pdelta, sweep, sweep_cases, zeta_from_damping, zeta_from_kp, AxisValue,
    CctBounds, DesignSpec, PdeltaInputs, PdeltaMode, SweepAxis, SweepCase,
};
use crate::error::{ScenarioError, SimError};
use crate::export::{
    cct_line, export_pdelta, export_trajectory, fmt_sig9, pdelta_csv, probe_log, render_table, sweep_tables,
};
use crate::scalar::Scalar;
use crate::scenario::{dump_scenario, load_scenario, Scenario};
use crate::sim::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "gfmsim",
    version,
    about = "Transient stability of grid-forming converters on an infinite bus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and export its trajectory.
    Simulate(SimulateArgs),
    /// Critical clearing time by bisection on the fault duration.
    Cct(CctArgs),
    /// CCT table over one or two parameter axes.
    Sweep(SweepArgs),
    /// Damping and gain design from the second-order rules.
    Design(DesignArgs),
    /// Sample a power-angle characteristic.
    Pdelta(PdeltaArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file, or a name in `scenarios/`.
    #[arg(long)]
    scenario: String,
    /// Replace a value, as `section.key=value` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Run in single precision.
    #[arg(long)]
    f32: bool,
    /// Suppress informational output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Trajectory CSV path.
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Bisection resolution (s).
    #[arg(long)]
    resolution: Option<f64>,
    /// Lower search bound on the fault duration (s).
    #[arg(long)]
    t_lo: Option<f64>,
    /// Upper search bound on the fault duration (s).
    #[arg(long)]
    t_hi: Option<f64>,
}

#[derive(Debug, Args)]
struct CctArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    bounds: BoundArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Base scenario; optional when the first axis is `scenario`.
    #[arg(long)]
    scenario: Option<String>,
    /// Replace a value, as `section.key=value` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Swept parameter: scenario, strategy, t_wd, d_gfm, h_gfm, k_p, x_g, use_vapc, flc, enhancement.
    #[arg(long)]
    axis: String,
    /// Comma-separated values of the first axis.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Optional second axis.
    #[arg(long, requires = "values2")]
    axis2: Option<String>,
    /// Comma-separated values of the second axis.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values2: Vec<String>,
    #[command(flatten)]
    bounds: BoundArgs,
    /// Machine-readable CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Inertia constant H (s).
    #[arg(long)]
    h: f64,
    /// Target damping ratio.
    #[arg(long)]
    zeta: Option<f64>,
    /// Converter reactance (pu).
    #[arg(long)]
    xc: f64,
    /// Base angular frequency (rad/s).
    #[arg(long, default_value_t = 100.0 * std::f64::consts::PI)]
    omega_b: f64,
    /// Invert: damping ratio of this VSM damping coefficient.
    #[arg(long)]
    d: Option<f64>,
    /// Invert: damping ratio of this IP proportional gain.
    #[arg(long)]
    kp: Option<f64>,
}

#[derive(Debug, Args)]
struct PdeltaArgs {
    /// Scenario supplying the parameters (defaults when absent).
    #[arg(long)]
    scenario: Option<String>,
    /// Replace a value, as `section.key=value` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// unsaturated, saturated or vapc.
    #[arg(long, default_value = "saturated")]
    mode: String,
    /// Number of angles on [0, π].
    #[arg(long, default_value_t = 181)]
    points: usize,
    /// Curve CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long)]
    quiet: bool,
}

/// Terminal error with its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Self {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Config(_) => EXIT_INVALID,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<crate::error::ConfigError> for Failure {
    fn from(e: crate::error::ConfigError) -> Self {
        Self {
            code: EXIT_INVALID,
            message: e.to_string(),
        }
    }
}

impl From<crate::error::ExportError> for Failure {
    fn from(e: crate::error::ExportError) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` and runs the subcommand, returning the process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{rendered}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) if a.scenario.f32 => cmd_simulate::<f32>(&a, out),
        Command::Simulate(a) => cmd_simulate::<f64>(&a, out),
        Command::Cct(a) if a.scenario.f32 => cmd_cct::<f32>(&a, out),
        Command::Cct(a) => cmd_cct::<f64>(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Design(a) => cmd_design(&a, out),
        Command::Pdelta(a) => cmd_pdelta(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

/// Loads the scenario; `None` when only the resolved configuration was requested.
fn load<T: Scalar>(args: &ScenarioArgs, out: &mut dyn Write) -> Result<Option<Scenario<T>>, Failure> {
    let sc = load_scenario::<T>(&args.scenario, &args.overrides)?;
    if args.print_config {
        write!(out, "{}", dump_scenario(&sc))?;
        return Ok(None);
    }
    Ok(Some(sc))
}

fn cmd_simulate<T: Scalar>(args: &SimulateArgs, out: &mut dyn Write) -> Outcome {
    let Some(sc) = load::<T>(&args.scenario, out)? else {
        return Ok(());
    };
    let (traj, verdict) = simulate(&sc.sys, &sc.sim)?;
    export_trajectory(&traj, &args.out)?;
    let d0 = traj.delta[0];
    let excursion = traj.delta.iter().fold(T::zero(), |m, &d| m.max((d - d0).abs()));
    writeln!(
        out,
        "verdict: {} ({}); max angle excursion {} deg; {} samples written to {}",
        if verdict.stable { "stable" } else { "unstable" },
        verdict.reason.as_str(),
        fmt_sig9(excursion.to_degrees().to_f64_lossy()),
        traj.len(),
        args.out.display()
    )?;
    Ok(())
}

fn bounds<T: Scalar>(base: CctBounds<T>, args: &BoundArgs) -> Result<CctBounds<T>, Failure> {
    let b = CctBounds {
        t_lo: args.t_lo.map_or(base.t_lo, T::lit),
        t_hi: args.t_hi.map_or(base.t_hi, T::lit),
        resolution: args.resolution.map_or(base.resolution, T::lit),
    };
    b.validate()?;
    Ok(b)
}

fn cmd_cct<T: Scalar>(args: &CctArgs, out: &mut dyn Write) -> Outcome {
    let Some(sc) = load::<T>(&args.scenario, out)? else {
        return Ok(());
    };
    let b = bounds(sc.cct, &args.bounds)?;
    let r = cct_search(&sc.sys, &sc.sim, &b)?;
    writeln!(out, "{}", cct_line(&r))?;
    if !args.scenario.quiet {
        write!(out, "{}", probe_log(&r))?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Outcome {
    let mut bases: Vec<(Vec<String>, Scenario<f64>)> = Vec::new();
    let mut names = Vec::new();
    let mut axes: Vec<(SweepAxis, Vec<AxisValue<f64>>)> = Vec::new();
    let axis_list: Vec<(&str, &[String])> = std::iter::once((args.axis.as_str(), args.values.as_slice()))
        .chain(args.axis2.as_deref().map(|a| (a, args.values2.as_slice())))
        .collect();
    for (k, (axis, values)) in axis_list.iter().enumerate() {
        names.push(axis.to_string());
        if *axis == "scenario" {
            if k != 0 {
                return Err(crate::error::ConfigError::new("axis2", "`scenario` must be the first axis").into());
            }
            for v in values.iter() {
                bases.push((vec![v.clone()], load_scenario(v, &args.overrides)?));
            }
        } else {
            let a: SweepAxis = axis.parse()?;
            let parsed = values.iter().map(|v| a.parse_value(v)).collect::<Result<Vec<_>, _>>()?;
            axes.push((a, parsed));
        }
    }
    if args.axis != "scenario" {
        let name = args.scenario.as_deref().ok_or_else(|| {
            crate::error::ConfigError::new("scenario", "--scenario is required unless the first axis is `scenario`")
        })?;
        bases.push((Vec::new(), load_scenario(name, &args.overrides)?));
    }
    let first = bases.first().map(|(_, s)| s.cct).unwrap_or_default();
    let b = bounds(first, &args.bounds)?;
    let mut cases: Vec<SweepCase<f64>> = Vec::new();
    for (labels, sc) in &bases {
        for mut c in sweep_cases(&sc.sys, &sc.sim, &axes)? {
            let mut l = labels.clone();
            l.append(&mut c.labels);
            c.labels = l;
            cases.push(c);
        }
    }
    let rows = sweep(&cases, &b);
    let (table, csv) = sweep_tables(&names, &rows);
    if !args.quiet {
        write!(out, "{table}")?;
    }
    match &args.out {
        Some(path) => std::fs::write(path, &csv).map_err(|source| crate::error::ExportError {
            path: path.clone(),
            source,
        })?,
        None if args.quiet => write!(out, "{csv}")?,
        None => {}
    }
    if rows.iter().any(|r| r.result.is_err()) {
        return Err(Failure {
            code: EXIT_FAILURE,
            message: "one or more sweep cells failed".to_string(),
        });
    }
    Ok(())
}

fn cmd_design(args: &DesignArgs, out: &mut dyn Write) -> Outcome {
    let spec = DesignSpec {
        h_gfm: args.h,
        zeta: args.zeta.unwrap_or(0.0),
        x_c: args.xc,
        omega_b: args.omega_b,
    };
    spec.validate()?;
    let mut rows = vec![vec![
        "omega_n".to_string(),
        format!("{:.2}", spec.omega_n()),
        "rad/s".to_string(),
    ]];
    if let Some(zeta) = args.zeta {
        let vsm = design_vsm(&spec)?;
        let ip = design_ip(&spec)?;
        rows.push(vec!["zeta".to_string(), format!("{zeta}"), String::new()]);
        rows.push(vec!["D_GFM".to_string(), format!("{:.1}", vsm.d_gfm), "pu".to_string()]);
        rows.push(vec![
            "D_GFM (rounded)".to_string(),
            format!("{:.0}", vsm.d_gfm),
            "pu".to_string(),
        ]);
        rows.push(vec!["K_P".to_string(), format!("{:.5}", ip.k_p), "pu".to_string()]);
        rows.push(vec![
            "overshoot".to_string(),
            format!("{:.1}", 100.0 * crate::analysis::overshoot(zeta)),
            "%".to_string(),
        ]);
    }
    if let Some(d) = args.d {
        let z = zeta_from_damping(d, args.h, args.xc, args.omega_b);
        rows.push(vec![format!("zeta(D_GFM={d})"), format!("{z:.4}"), String::new()]);
    }
    if let Some(kp) = args.kp {
        let z = zeta_from_kp(kp, args.h, args.xc, args.omega_b);
        rows.push(vec![format!("zeta(K_P={kp})"), format!("{z:.4}"), String::new()]);
    }
    if args.zeta.is_none() && args.d.is_none() && args.kp.is_none() {
        return Err(crate::error::ConfigError::new("zeta", "one of --zeta, --d or --kp is required").into());
    }
    writeln!(
        out,
        "Design sheet: H = {} s, x_c = {} pu, omega_b = {} rad/s",
        args.h,
        args.xc,
        fmt_sig9(args.omega_b)
    )?;
    let headers = ["quantity".to_string(), "value".to_string(), "unit".to_string()];
    write!(out, "{}", render_table(&headers, &rows))?;
    Ok(())
}

fn cmd_pdelta(args: &PdeltaArgs, out: &mut dyn Write) -> Outcome {
    let mode: PdeltaMode = args.mode.parse()?;
    let sc = match &args.scenario {
        Some(name) => load_scenario::<f64>(name, &args.overrides)?,
        None => crate::scenario::parse_scenario(&crate::scenario::apply_overrides("", &args.overrides)?)?,
    };
    let inputs = PdeltaInputs::from_config(&sc.sys.converter, &sc.sys.grid);
    let curve = pdelta(&inputs, mode, args.points)?;
    let summary = format!(
        "mode {}: delta_a = {} deg, p_max1 = {} pu, p_max2 = {} pu",
        mode.as_str(),
        curve.delta_a.map_or("none".to_string(), |d| fmt_sig9(d.to_degrees())),
        fmt_sig9(curve.p_max1),
        fmt_sig9(curve.p_max2)
    );
    match &args.out {
        Some(path) => {
            export_pdelta(&curve, path)?;
            if !args.quiet {
                writeln!(out, "{summary}")?;
            }
        }
        None => write!(out, "{}", pdelta_csv(&curve))?,
    }
    Ok(())
}
