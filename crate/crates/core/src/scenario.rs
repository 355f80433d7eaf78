//! TOML scenario files: parsing with defaults, field-level validation,
//! dotted-key overrides and a fully resolved dump.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{design_ip, design_vsm, CctBounds, DesignSpec};
use crate::control::{FlcAntiWindup, FlcConfig, PfrSignal, StrategyKind, SyncStrategyConfig};
use crate::error::{ConfigError, ScenarioError};
use crate::model::{ConverterParams, FaultEvent, GridScenario, SetpointStep};
use crate::scalar::Scalar;
use crate::sim::{SimConfig, SystemConfig};

/// A fully resolved and validated study case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario<T> {
    pub sys: SystemConfig<T>,
    pub sim: SimConfig<T>,
    pub cct: CctBounds<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConverterSection {
    s_rated: Option<f64>,
    v_ac_rated: Option<f64>,
    f_nom: Option<f64>,
    omega_b: Option<f64>,
    r_c: Option<f64>,
    x_c: Option<f64>,
    x_v: Option<f64>,
    i_max: Option<f64>,
    k_cc_p: Option<f64>,
    k_cc_i: Option<f64>,
    e_m0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    r_g: Option<f64>,
    x_g: Option<f64>,
    v_e: Option<f64>,
    omega_e: Option<f64>,
    p_g0: Option<f64>,
    v_g0: Option<f64>,
    step_t: Option<f64>,
    step_delta_p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategySection {
    kind: Option<String>,
    h_gfm: Option<f64>,
    d_gfm: Option<f64>,
    k_p: Option<f64>,
    t_wd: Option<f64>,
    zeta: Option<f64>,
    omega_0: Option<f64>,
    use_vapc: Option<bool>,
    pfr_signal: Option<String>,
    k_p_pll: Option<f64>,
    k_i_pll: Option<f64>,
    dw_pll_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PfrSection {
    k_pfr: Option<f64>,
    t_pfr: Option<f64>,
    dp_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlcSection {
    enabled: Option<bool>,
    dw_max: Option<f64>,
    v_a: Option<f64>,
    v_b: Option<f64>,
    anti_windup: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultSection {
    enabled: Option<bool>,
    t_apply: Option<f64>,
    t_clear: Option<f64>,
    location_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    dt: Option<f64>,
    t_end: Option<f64>,
    record_stride: Option<usize>,
    delta_limit: Option<f64>,
    settle_band: Option<f64>,
    settle_window: Option<f64>,
    angle_band_deg: Option<f64>,
    omega_min: Option<f64>,
    omega_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CctSection {
    t_lo: Option<f64>,
    t_hi: Option<f64>,
    resolution: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    converter: ConverterSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    strategy: StrategySection,
    #[serde(default)]
    pfr: PfrSection,
    #[serde(default)]
    flc: FlcSection,
    #[serde(default)]
    fault: FaultSection,
    #[serde(default)]
    sim: SimSection,
    #[serde(default)]
    cct: CctSection,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

fn parse_error(text: &str, err: toml::de::Error) -> ScenarioError {
    let message = err.message().trim().to_string();
    match err.span() {
        Some(span) => {
            let (line, col) = line_col(text, span.start);
            ScenarioError::Parse(format!("line {line}, column {col}: {message}"))
        }
        None => ScenarioError::Parse(message),
    }
}

fn or<T: Scalar>(value: Option<f64>, default: T) -> T {
    value.map_or(default, T::lit)
}

fn finite(section: &str, pairs: &[(&str, Option<f64>)]) -> Result<(), ConfigError> {
    for (key, value) in pairs {
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(ConfigError::new(
                    format!("{section}.{key}"),
                    format!("must be finite, got {v}"),
                ));
            }
        }
    }
    Ok(())
}

impl ScenarioFile {
    fn check_finite(&self) -> Result<(), ConfigError> {
        let c = &self.converter;
        finite(
            "converter",
            &[
                ("s_rated", c.s_rated),
                ("v_ac_rated", c.v_ac_rated),
                ("f_nom", c.f_nom),
                ("omega_b", c.omega_b),
                ("r_c", c.r_c),
                ("x_c", c.x_c),
                ("x_v", c.x_v),
                ("i_max", c.i_max),
                ("k_cc_p", c.k_cc_p),
                ("k_cc_i", c.k_cc_i),
                ("e_m0", c.e_m0),
            ],
        )?;
        let g = &self.grid;
        finite(
            "grid",
            &[
                ("r_g", g.r_g),
                ("x_g", g.x_g),
                ("v_e", g.v_e),
                ("omega_e", g.omega_e),
                ("p_g0", g.p_g0),
                ("v_g0", g.v_g0),
                ("step_t", g.step_t),
                ("step_delta_p", g.step_delta_p),
            ],
        )?;
        let s = &self.strategy;
        finite(
            "strategy",
            &[
                ("h_gfm", s.h_gfm),
                ("d_gfm", s.d_gfm),
                ("k_p", s.k_p),
                ("t_wd", s.t_wd),
                ("zeta", s.zeta),
                ("omega_0", s.omega_0),
                ("k_p_pll", s.k_p_pll),
                ("k_i_pll", s.k_i_pll),
                ("dw_pll_max", s.dw_pll_max),
            ],
        )?;
        let p = &self.pfr;
        finite("pfr", &[("k_pfr", p.k_pfr), ("t_pfr", p.t_pfr), ("dp_max", p.dp_max)])?;
        let f = &self.flc;
        finite("flc", &[("dw_max", f.dw_max), ("v_a", f.v_a), ("v_b", f.v_b)])?;
        let f = &self.fault;
        finite(
            "fault",
            &[
                ("t_apply", f.t_apply),
                ("t_clear", f.t_clear),
                ("location_fraction", f.location_fraction),
            ],
        )?;
        let s = &self.sim;
        finite(
            "sim",
            &[
                ("dt", s.dt),
                ("t_end", s.t_end),
                ("delta_limit", s.delta_limit),
                ("settle_band", s.settle_band),
                ("settle_window", s.settle_window),
                ("angle_band_deg", s.angle_band_deg),
                ("omega_min", s.omega_min),
                ("omega_max", s.omega_max),
            ],
        )?;
        let c = &self.cct;
        finite(
            "cct",
            &[("t_lo", c.t_lo), ("t_hi", c.t_hi), ("resolution", c.resolution)],
        )
    }

    fn resolve<T: Scalar>(&self) -> Result<Scenario<T>, ConfigError> {
        self.check_finite()?;

        let c = &self.converter;
        let d = ConverterParams::<T>::default();
        let f_nom = or(c.f_nom, d.f_nom);
        let converter = ConverterParams {
            s_rated: or(c.s_rated, d.s_rated),
            v_ac_rated: or(c.v_ac_rated, d.v_ac_rated),
            f_nom,
            omega_b: c.omega_b.map_or(T::two() * T::PI() * f_nom, T::lit),
            r_c: or(c.r_c, d.r_c),
            x_c: or(c.x_c, d.x_c),
            x_v: or(c.x_v, d.x_v),
            i_max: or(c.i_max, d.i_max),
            k_cc_p: or(c.k_cc_p, d.k_cc_p),
            k_cc_i: or(c.k_cc_i, d.k_cc_i),
            e_m0: or(c.e_m0, d.e_m0),
        };
        converter.validate()?;

        let g = &self.grid;
        let d = GridScenario::<T>::default();
        let setpoint_step = match (g.step_t, g.step_delta_p) {
            (None, None) => None,
            (Some(t), Some(dp)) => Some(SetpointStep {
                t: T::lit(t),
                delta_p: T::lit(dp),
            }),
            (None, Some(_)) => return Err(ConfigError::new("grid.step_t", "required with grid.step_delta_p")),
            (Some(_), None) => return Err(ConfigError::new("grid.step_delta_p", "required with grid.step_t")),
        };
        let f = &self.fault;
        let fd = FaultEvent::<T>::default();
        let fault = if f.enabled.unwrap_or(true) {
            let fault = FaultEvent {
                t_apply: or(f.t_apply, fd.t_apply),
                t_clear: or(f.t_clear, fd.t_clear),
                location_fraction: or(f.location_fraction, fd.location_fraction),
            };
            fault.validate()?;
            Some(fault)
        } else {
            None
        };
        let grid = GridScenario {
            r_g: or(g.r_g, d.r_g),
            x_g: or(g.x_g, d.x_g),
            v_e: or(g.v_e, d.v_e),
            omega_e: or(g.omega_e, d.omega_e),
            p_g0: or(g.p_g0, d.p_g0),
            v_g0: or(g.v_g0, d.v_g0),
            fault,
            setpoint_step,
        };
        grid.validate(&converter)?;

        let s = &self.strategy;
        let kind: StrategyKind = match &s.kind {
            Some(k) => k.parse()?,
            None => StrategyKind::VsmPll,
        };
        let mut strategy = SyncStrategyConfig::<T>::new(kind);
        if kind == StrategyKind::VsmWashout && s.t_wd.is_none() {
            return Err(ConfigError::new("strategy.t_wd", "required when kind = vsm_washout"));
        }
        strategy.h_gfm = or(s.h_gfm, strategy.h_gfm);
        strategy.t_wd = or(s.t_wd, strategy.t_wd);
        strategy.omega_0 = or(s.omega_0, strategy.omega_0);
        strategy.use_vapc = s.use_vapc.unwrap_or(false);
        strategy.pfr_signal = match s.pfr_signal.as_deref() {
            None | Some("converter") => PfrSignal::Converter,
            Some("pll") => PfrSignal::Pll,
            Some(other) => {
                return Err(ConfigError::new(
                    "strategy.pfr_signal",
                    format!("expected `converter` or `pll`, got `{other}`"),
                ))
            }
        };
        strategy.pll.k_p = or(s.k_p_pll, strategy.pll.k_p);
        strategy.pll.k_i = or(s.k_i_pll, strategy.pll.k_i);
        strategy.pll.dw_max = or(s.dw_pll_max, strategy.pll.dw_max);
        strategy.d_gfm = or(s.d_gfm, strategy.d_gfm);
        strategy.k_p = or(s.k_p, strategy.k_p);
        if let Some(zeta) = s.zeta {
            let tuned = if kind == StrategyKind::IpControl {
                s.k_p.is_some()
            } else {
                s.d_gfm.is_some()
            };
            if tuned {
                let other = if kind == StrategyKind::IpControl {
                    "k_p"
                } else {
                    "d_gfm"
                };
                return Err(ConfigError::new(
                    "strategy.zeta",
                    format!("conflicts with strategy.{other}"),
                ));
            }
            let spec = DesignSpec {
                h_gfm: strategy.h_gfm,
                zeta: T::lit(zeta),
                x_c: converter.x_c,
                omega_b: converter.omega_b,
            };
            if kind == StrategyKind::IpControl {
                strategy.k_p = design_ip(&spec)
                    .map_err(|e| ConfigError::new("strategy.zeta", e.message))?
                    .k_p;
            } else {
                strategy.d_gfm = design_vsm(&spec)
                    .map_err(|e| ConfigError::new("strategy.zeta", e.message))?
                    .d_gfm;
            }
        }
        let p = &self.pfr;
        strategy.pfr.k_pfr = or(p.k_pfr, strategy.pfr.k_pfr);
        strategy.pfr.t_pfr = or(p.t_pfr, strategy.pfr.t_pfr);
        strategy.pfr.dp_max = or(p.dp_max, strategy.pfr.dp_max);

        let f = &self.flc;
        let fd = FlcConfig::<T>::default();
        let anti_windup = match f.anti_windup.as_deref() {
            None | Some("hold") => FlcAntiWindup::Hold,
            Some("reset") => FlcAntiWindup::Reset,
            Some(other) => {
                return Err(ConfigError::new(
                    "flc.anti_windup",
                    format!("expected `hold` or `reset`, got `{other}`"),
                ))
            }
        };
        strategy.flc = f.enabled.unwrap_or(false).then(|| FlcConfig {
            dw_max: or(f.dw_max, fd.dw_max),
            v_a: or(f.v_a, fd.v_a),
            v_b: or(f.v_b, fd.v_b),
            anti_windup,
        });
        strategy.validate()?;

        let s = &self.sim;
        let sd = SimConfig::<T>::for_grid(&grid);
        let id = sd.instability;
        let sim = SimConfig {
            dt: or(s.dt, sd.dt),
            t_end: or(s.t_end, sd.t_end),
            record_stride: s.record_stride.unwrap_or(sd.record_stride),
            instability: crate::sim::InstabilityCriteria {
                delta_limit: or(s.delta_limit, id.delta_limit),
                settle_band: or(s.settle_band, id.settle_band),
                settle_window: or(s.settle_window, id.settle_window),
                angle_band: s.angle_band_deg.map_or(id.angle_band, |deg| T::lit(deg).to_radians()),
                omega_min: or(s.omega_min, id.omega_min),
                omega_max: or(s.omega_max, id.omega_max),
                blowup: id.blowup,
            },
        };
        sim.validate(&grid)?;

        let c = &self.cct;
        let cd = CctBounds::<T>::default();
        let cct = CctBounds {
            t_lo: or(c.t_lo, cd.t_lo),
            t_hi: or(c.t_hi, cd.t_hi),
            resolution: or(c.resolution, cd.resolution),
        };
        cct.validate()?;

        Ok(Scenario {
            sys: SystemConfig {
                converter,
                grid,
                strategy,
            },
            sim,
            cct,
        })
    }

    fn from_scenario<T: Scalar>(sc: &Scenario<T>) -> Self {
        let f = |x: T| Some(x.to_f64_lossy());
        let c = &sc.sys.converter;
        let g = &sc.sys.grid;
        let s = &sc.sys.strategy;
        let i = &sc.sim.instability;
        let flc = s.flc.unwrap_or_default();
        let fault = g.fault.unwrap_or_default();
        Self {
            converter: ConverterSection {
                s_rated: f(c.s_rated),
                v_ac_rated: f(c.v_ac_rated),
                f_nom: f(c.f_nom),
                omega_b: f(c.omega_b),
                r_c: f(c.r_c),
                x_c: f(c.x_c),
                x_v: f(c.x_v),
                i_max: f(c.i_max),
                k_cc_p: f(c.k_cc_p),
                k_cc_i: f(c.k_cc_i),
                e_m0: f(c.e_m0),
            },
            grid: GridSection {
                r_g: f(g.r_g),
                x_g: f(g.x_g),
                v_e: f(g.v_e),
                omega_e: f(g.omega_e),
                p_g0: f(g.p_g0),
                v_g0: f(g.v_g0),
                step_t: g.setpoint_step.and_then(|st| f(st.t)),
                step_delta_p: g.setpoint_step.and_then(|st| f(st.delta_p)),
            },
            strategy: StrategySection {
                kind: Some(s.kind.as_str().to_string()),
                h_gfm: f(s.h_gfm),
                d_gfm: f(s.d_gfm),
                k_p: f(s.k_p),
                t_wd: f(s.t_wd),
                zeta: None,
                omega_0: f(s.omega_0),
                use_vapc: Some(s.use_vapc),
                pfr_signal: Some(
                    match s.pfr_signal {
                        PfrSignal::Converter => "converter",
                        PfrSignal::Pll => "pll",
                    }
                    .to_string(),
                ),
                k_p_pll: f(s.pll.k_p),
                k_i_pll: f(s.pll.k_i),
                dw_pll_max: f(s.pll.dw_max),
            },
            pfr: PfrSection {
                k_pfr: f(s.pfr.k_pfr),
                t_pfr: f(s.pfr.t_pfr),
                dp_max: f(s.pfr.dp_max),
            },
            flc: FlcSection {
                enabled: Some(s.flc.is_some()),
                dw_max: f(flc.dw_max),
                v_a: f(flc.v_a),
                v_b: f(flc.v_b),
                anti_windup: Some(
                    match flc.anti_windup {
                        FlcAntiWindup::Hold => "hold",
                        FlcAntiWindup::Reset => "reset",
                    }
                    .to_string(),
                ),
            },
            fault: FaultSection {
                enabled: Some(g.fault.is_some()),
                t_apply: f(fault.t_apply),
                t_clear: f(fault.t_clear),
                location_fraction: f(fault.location_fraction),
            },
            sim: SimSection {
                dt: f(sc.sim.dt),
                t_end: f(sc.sim.t_end),
                record_stride: Some(sc.sim.record_stride),
                delta_limit: f(i.delta_limit),
                settle_band: f(i.settle_band),
                settle_window: f(i.settle_window),
                angle_band_deg: f(i.angle_band.to_degrees()),
                omega_min: f(i.omega_min),
                omega_max: f(i.omega_max),
            },
            cct: CctSection {
                t_lo: f(sc.cct.t_lo),
                t_hi: f(sc.cct.t_hi),
                resolution: f(sc.cct.resolution),
            },
        }
    }
}

/// Parses and validates scenario text; missing keys take the defaults.
pub fn parse_scenario<T: Scalar>(text: &str) -> Result<Scenario<T>, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    Ok(file.resolve()?)
}

/// Applies `section.key=value` overrides to scenario text.
///
/// Values are read as TOML literals; anything that is not a valid literal is
/// taken as a bare string.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String, ScenarioError> {
    if overrides.is_empty() {
        return Ok(text.to_string());
    }
    let mut table: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| ScenarioError::Parse(format!("override `{item}` is not of the form section.key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| ScenarioError::Parse(format!("override key `{path}` is not of the form section.key")))?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_string(), value);
            }
            _ => return Err(ScenarioError::Parse(format!("`{section}` is not a section"))),
        }
    }
    toml::to_string(&table).map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Renders every resolved value as a scenario file.
pub fn dump_scenario<T: Scalar>(scenario: &Scenario<T>) -> String {
    toml::to_string(&ScenarioFile::from_scenario(scenario)).expect("scenario sections serialize")
}

/// Finds a scenario by path, or by name in the `scenarios/` directory.
pub fn resolve_scenario_path(name: &str) -> PathBuf {
    let direct = PathBuf::from(name);
    if direct.is_file() {
        return direct;
    }
    let file = if name.ends_with(".toml") {
        name.to_string()
    } else {
        format!("{name}.toml")
    };
    let candidates = [
        PathBuf::from(&file),
        Path::new("scenarios").join(&file),
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../scenarios")
            .join(&file),
    ];
    candidates.into_iter().find(|p| p.is_file()).unwrap_or(direct)
}

/// Reads, overrides and parses a scenario file.
pub fn load_scenario<T: Scalar>(name: &str, overrides: &[String]) -> Result<Scenario<T>, ScenarioError> {
    let path = resolve_scenario_path(name);
    let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Read { path, source })?;
    parse_scenario(&apply_overrides(&text, overrides)?)
}
