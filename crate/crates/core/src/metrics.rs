//! Per-epoch quality metrics, the stopping test and the CSV log format.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::Dft2;
use crate::grid::ComplexField;
use crate::scalar::Real;
use crate::simulate::Dataset;
use crate::surrogate::{
    exit_misfit, region_gradient, revised_exit_wave_frozen, PhaseCache,
};

pub const CSV_HEADER: &str = "epoch,residual,error,grad_criterion,wall_ms";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    /// `Φ(z)`.
    pub residual: f64,
    /// `‖|z| − |z*|‖₂`; `None` without ground truth.
    pub error: Option<f64>,
    /// `(1/(N·m)) Σ_k ‖∇Φ_k(P_k z)‖₂`.
    pub grad_criterion: f64,
    pub wall_ms: f64,
}

impl MetricRow {
    pub fn is_finite(&self) -> bool {
        self.residual.is_finite()
            && self.error.is_none_or(f64::is_finite)
            && self.grad_criterion.is_finite()
            && self.wall_ms.is_finite()
    }
}

/// `‖|z| − |z*|‖₂`.
pub fn magnitude_error<R: Real>(z: &ComplexField<R>, truth: &ComplexField<R>) -> Result<f64> {
    z.ensure_same_shape(truth, "iterate vs ground truth")?;
    let s: f64 = z
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| {
            let d = (a.norm() - b.norm()).as_f64();
            d * d
        })
        .sum();
    Ok(s.sqrt())
}

/// Metrics at `z`, using a fresh phase cache.
pub fn compute_metrics<R: Real>(z: &ComplexField<R>, data: &Dataset<R>) -> Result<MetricRow> {
    let m = data.probe_size();
    let cache = PhaseCache::new(data.regions().len(), m);
    compute_metrics_with(z, data, &cache, &Dft2::square(m))
}

/// Metrics at `z`, reading (not updating) the solver's phase cache.
pub fn compute_metrics_with<R: Real>(
    z: &ComplexField<R>,
    data: &Dataset<R>,
    phases: &PhaseCache<R>,
    dft: &Dft2<R>,
) -> Result<MetricRow> {
    if z.shape() != (data.object_size(), data.object_size()) {
        return Err(Error::Dimension(format!(
            "iterate is {}x{}, dataset object is {n}x{n}",
            z.width(),
            z.height(),
            n = data.object_size()
        )));
    }
    let regions = data.regions();
    let parts: Vec<(R, R)> = regions
        .par_iter()
        .enumerate()
        .map(|(k, region)| {
            let z_k = z.extract_region(region)?;
            let revised = revised_exit_wave_frozen(
                &z_k,
                &data.probe,
                &data.amplitudes()[k],
                phases.slice(k),
                dft,
            )?;
            let phi = exit_misfit(&z_k, &data.probe, &revised)?;
            let g = region_gradient(&z_k, &data.probe, &revised)?.norm();
            Ok((phi, g))
        })
        .collect::<Result<_>>()?;
    let mut residual = R::zero();
    let mut grad_sum = R::zero();
    for (phi, g) in parts {
        residual += phi;
        grad_sum += g;
    }
    let scale = (regions.len() * data.probe_size()) as f64;
    let error = match &data.ground_truth {
        Some(truth) => Some(magnitude_error(z, truth)?),
        None => None,
    };
    Ok(MetricRow {
        epoch: 0,
        residual: residual.as_f64(),
        error,
        grad_criterion: grad_sum.as_f64() / scale,
        wall_ms: 0.0,
    })
}

/// Stopping test: `grad_criterion < tol`.
pub fn check_stop(row: &MetricRow, tol: f64) -> bool {
    row.grad_criterion < tol
}

fn fmt_value(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

/// One CSV line (no trailing newline). A missing error is an empty field.
pub fn format_row(row: &MetricRow) -> String {
    let mut s = format!("{},", row.epoch);
    fmt_value(&mut s, row.residual);
    s.push(',');
    if let Some(e) = row.error {
        fmt_value(&mut s, e);
    }
    s.push(',');
    fmt_value(&mut s, row.grad_criterion);
    s.push(',');
    fmt_value(&mut s, row.wall_ms);
    s
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for row in rows {
        s.push_str(&format_row(row));
        s.push('\n');
    }
    s
}

pub fn parse_row(line: &str) -> Result<MetricRow> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 5 {
        return Err(Error::Format(format!("expected 5 CSV fields, got {}", fields.len())));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Format(format!("bad number {s:?}: {e}")))
    };
    Ok(MetricRow {
        epoch: fields[0]
            .parse()
            .map_err(|e| Error::Format(format!("bad epoch {:?}: {e}", fields[0])))?,
        residual: num(fields[1])?,
        error: if fields[2].is_empty() { None } else { Some(num(fields[2])?) },
        grad_criterion: num(fields[3])?,
        wall_ms: num(fields[4])?,
    })
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        other => return Err(Error::Format(format!("unexpected CSV header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(parse_row).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> MetricRow {
        MetricRow {
            epoch: 3,
            residual: 0.1 + 0.2,
            error: Some(1.0 / 3.0),
            grad_criterion: 2.5e-7,
            wall_ms: 12.0,
        }
    }

    #[test]
    fn stop_is_strict() {
        let mut r = row();
        r.grad_criterion = 0.0;
        assert!(check_stop(&r, 1e-4));
        r.grad_criterion = 1e-4;
        assert!(!check_stop(&r, 1e-4));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rows = vec![row(), row()];
        rows[1].epoch = 4;
        rows[1].error = None;
        rows[1].residual = f64::MIN_POSITIVE;
        let text = rows_to_csv(&rows);
        assert!(text.starts_with("epoch,residual,error,grad_criterion,wall_ms\n"));
        assert_eq!(parse_csv(&text).unwrap(), rows);
        assert_eq!(format_row(&rows[0]).split(',').nth(1).unwrap(), "3.0000000000000004e-1");
    }

    #[test]
    fn bad_csv_rejected() {
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,2,3\n")).is_err());
    }
}
