use std::io::Write;

use super::{MetricSeries, SweepRow};
use crate::error::Result;

pub const SERIES_HEADER: [&str; 6] = [
    "t",
    "f_av_mean",
    "f_av_stderr",
    "c_mean",
    "c_stderr",
    "werner_dev_mean",
];

pub const SWEEP_HEADER: [&str; 6] = ["axis_value", "t_opt", "f_peak", "f_stderr", "c_peak", "c_stderr"];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_series_csv<W: Write>(series: &MetricSeries, w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SERIES_HEADER)?;
    for i in 0..series.len() {
        out.write_record(&[
            series.times[i].to_string(),
            series.f_mean[i].to_string(),
            series.f_stderr[i].to_string(),
            series.c_mean[i].to_string(),
            series.c_stderr[i].to_string(),
            series.werner_mean[i].to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record(&[
            r.axis_value.to_string(),
            r.t_opt.to_string(),
            r.f_peak.to_string(),
            r.f_stderr.to_string(),
            r.c_peak.to_string(),
            r.c_stderr.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
