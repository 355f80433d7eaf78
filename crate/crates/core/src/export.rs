//! CSV exports and aligned text tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{CctBound, CctResult, PdeltaCurve, SweepRow};
use crate::error::ExportError;
use crate::scalar::Scalar;
use crate::sim::Trajectory;

/// Header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "t,delta_rad,omega_pu,p_g_pu,q_g_pu,v_g_pu,i_g_pu,p_virt_pu,gamma1,k_cl";

/// Formats with 9 significant digits in the style of C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (8 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn f<T: Scalar>(x: T) -> String {
    fmt_sig9(x.to_f64_lossy())
}

/// Renders a trajectory as CSV text.
pub fn trajectory_csv<T: Scalar>(traj: &Trajectory<T>) -> String {
    let mut out = String::with_capacity(traj.len() * 120);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for k in 0..traj.len() {
        let fields = [
            f(traj.t[k]),
            f(traj.delta[k]),
            f(traj.omega[k]),
            f(traj.p_g[k]),
            f(traj.q_g[k]),
            f(traj.v_g_mag[k]),
            f(traj.i_mag[k]),
            f(traj.p_virt[k]),
            u8::from(traj.gamma1[k]).to_string(),
            f(traj.k_cl[k]),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<(), ExportError> {
    fs::write(path, text).map_err(|source| ExportError {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the trajectory CSV; an empty trajectory is refused.
pub fn export_trajectory<T: Scalar>(traj: &Trajectory<T>, path: &Path) -> Result<(), ExportError> {
    if traj.is_empty() {
        return Err(ExportError {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty trajectory"),
        });
    }
    write_file(path, &trajectory_csv(traj))
}

/// Renders a P–δ curve as CSV text.
pub fn pdelta_csv<T: Scalar>(curve: &PdeltaCurve<T>) -> String {
    let mut out = String::from("delta_rad,delta_deg,p_pu,k_cl\n");
    for k in 0..curve.delta_grid.len() {
        let d = curve.delta_grid[k];
        let _ = writeln!(
            out,
            "{},{},{},{}",
            f(d),
            f(d.to_degrees()),
            f(curve.p[k]),
            f(curve.k_cl[k])
        );
    }
    out
}

pub fn export_pdelta<T: Scalar>(curve: &PdeltaCurve<T>, path: &Path) -> Result<(), ExportError> {
    write_file(path, &pdelta_csv(curve))
}

/// Left-aligned first column, right-aligned others, two spaces apart.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (c, cell) in row.iter().enumerate().take(cols) {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (c, w) in width.iter().enumerate() {
            let cell = cells.get(c).map_or("", |x| x.as_str());
            if c > 0 {
                s.push_str("  ");
            }
            if c == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "{cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    let total: usize = width.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

/// Milliseconds with the bound qualifier (`>`/`<`) when the bracket is open.
pub fn cct_cell<T: Scalar>(r: &CctResult<T>) -> String {
    let ms = (r.cct.to_f64_lossy() * 1000.0).round() as i64;
    match r.bound {
        CctBound::Bracketed => ms.to_string(),
        CctBound::AboveUpper => format!(">{ms}"),
        CctBound::BelowLower => format!("<{ms}"),
    }
}

/// One-line summary of a CCT search.
pub fn cct_line<T: Scalar>(r: &CctResult<T>) -> String {
    let s = |x: Option<T>| x.map_or("-".to_string(), |v| fmt_sig9(v.to_f64_lossy()));
    let qualifier = match r.bound {
        CctBound::Bracketed => "",
        CctBound::AboveUpper => " (upper bound stable, CCT exceeds search range)",
        CctBound::BelowLower => " (lower bound unstable, CCT below search range)",
    };
    format!(
        "CCT = {} s (bracket [{}, {}] s, resolution {} s, {} probes){}",
        fmt_sig9(r.cct.to_f64_lossy()),
        s(r.stable_t),
        s(r.unstable_t),
        fmt_sig9(r.resolution.to_f64_lossy()),
        r.probes.len(),
        qualifier
    )
}

/// Probe log, one line per simulation in evaluation order.
pub fn probe_log<T: Scalar>(r: &CctResult<T>) -> String {
    let mut out = String::new();
    for (k, p) in r.probes.iter().enumerate() {
        let _ = writeln!(
            out,
            "probe {:>2}: fault {:>6} ms -> {} ({})",
            k + 1,
            (p.duration.to_f64_lossy() * 1000.0).round() as i64,
            if p.verdict.stable { "stable" } else { "unstable" },
            p.verdict.reason.as_str()
        );
    }
    out
}

/// Sweep result as an aligned table and as CSV.
pub fn sweep_tables<T: Scalar>(axis_names: &[String], rows: &[SweepRow<T>]) -> (String, String) {
    let mut headers = axis_names.to_vec();
    headers.extend(["cct_ms".to_string(), "bracket_ms".to_string(), "probes".to_string()]);
    let mut csv = axis_names.join(",");
    csv.push_str(",cct_s,stable_s,unstable_s,bound,probes,error\n");
    let ms = |x: Option<T>| {
        x.map_or("-".to_string(), |v| {
            ((v.to_f64_lossy() * 1000.0).round() as i64).to_string()
        })
    };
    let s = |x: Option<T>| x.map_or(String::new(), |v| fmt_sig9(v.to_f64_lossy()));
    let mut table_rows = Vec::with_capacity(rows.len());
    for row in rows {
        let mut cells = row.labels.clone();
        let mut line = row.labels.join(",");
        match &row.result {
            Ok(r) => {
                cells.push(cct_cell(r));
                cells.push(format!("[{}, {}]", ms(r.stable_t), ms(r.unstable_t)));
                cells.push(r.probes.len().to_string());
                let bound = match r.bound {
                    CctBound::Bracketed => "bracketed",
                    CctBound::AboveUpper => "above_upper",
                    CctBound::BelowLower => "below_lower",
                };
                let _ = writeln!(
                    line,
                    ",{},{},{},{},{},",
                    f(r.cct),
                    s(r.stable_t),
                    s(r.unstable_t),
                    bound,
                    r.probes.len()
                );
            }
            Err(e) => {
                cells.extend(["failed".to_string(), e.to_string(), "-".to_string()]);
                let msg = e.to_string().replace(['"', ','], " ");
                let _ = writeln!(line, ",,,,failed,0,{msg}");
            }
        }
        table_rows.push(cells);
        csv.push_str(&line);
    }
    (render_table(&headers, &table_rows), csv)
}
