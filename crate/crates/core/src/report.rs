//! CSV emission for run traces, convergence studies and timing tables.

use std::io::{self, Write};

use crate::newton::LevelRecord;

pub const HEADER: &str = "level,n_dofs,lambda,err_lambda,err_h1,resi,theta,time_ms";
pub const BENCH_HEADER: &str = "level,n_dofs,time_multigrid_ms,time_direct_ms";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// One CSV line per level; absent optional values are empty fields.
pub fn write_trace<W: Write>(mut w: W, records: &[LevelRecord]) -> io::Result<()> {
    writeln!(w, "{HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:e},{},{:.3}",
            r.level,
            r.n_dofs,
            r.lambda,
            opt_sci(r.err_lambda),
            opt_sci(r.err_h1),
            r.resi,
            opt(r.theta),
            r.time_ms
        )?;
    }
    Ok(())
}

/// Fitted orders appended after a study trace, separated by a blank line.
pub fn write_slopes<W: Write>(mut w: W, slopes: &[(&str, Option<f64>)]) -> io::Result<()> {
    writeln!(w)?;
    writeln!(w, "quantity,slope")?;
    for (name, s) in slopes {
        writeln!(w, "{name},{}", opt(*s))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub level: usize,
    pub n_dofs: usize,
    pub time_multigrid_ms: f64,
    /// `None` when the direct method hit the dof cap or was not requested.
    pub time_direct_ms: Option<f64>,
}

pub fn write_bench<W: Write>(mut w: W, rows: &[BenchRow]) -> io::Result<()> {
    writeln!(w, "{BENCH_HEADER}")?;
    for r in rows {
        let direct = r.time_direct_ms.map_or_else(|| "-".to_string(), |t| format!("{t:.3}"));
        writeln!(w, "{},{},{:.3},{}", r.level, r.n_dofs, r.time_multigrid_ms, direct)?;
    }
    Ok(())
}

/// Least-squares slope of `log(err)` against `log(h)`, over the pairs with positive
/// finite error. `None` with fewer than two usable points.
pub fn convergence_slope(h: &[f64], err: &[Option<f64>]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter_map(|(&h, e)| e.filter(|e| *e > 0.0 && e.is_finite()).map(|e| (h.ln(), e.ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
