use std::io::Write;

/// Header of `metrics.csv`.
pub const METRICS_HEADER: &str = "step,loss,interior,boundary,re,re0,seconds";

/// One evaluation of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub interior: f64,
    pub boundary: f64,
    pub re: f64,
    /// Relative error at the initial time, parabolic problems only.
    pub re0: Option<f64>,
    /// Cumulative training wall-clock, evaluation excluded.
    pub seconds: f64,
}

/// 10 significant digits in scientific notation.
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.9e}")
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.step,
            fmt_sig(self.loss),
            fmt_sig(self.interior),
            fmt_sig(self.boundary),
            fmt_sig(self.re),
            self.re0.map(fmt_sig).unwrap_or_default(),
            fmt_sig(self.seconds),
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}
