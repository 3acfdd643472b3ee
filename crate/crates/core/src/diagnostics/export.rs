//! CSV writers for traces. Floats are written in shortest round-trip form,
//! so parsing a cell back yields the identical `f64`.

use std::io::Write;

use crate::error::{Error, Result};

use super::stats::qq_export;
use super::TraceBuffer;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// `step,task,g_sq,g0_sq,gs_minus_g_norm,gf_norm,triggered_s,triggered_f,cached`
pub fn write_scalars_csv<W: Write>(trace: &TraceBuffer, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "step",
        "task",
        "g_sq",
        "g0_sq",
        "gs_minus_g_norm",
        "gf_norm",
        "triggered_s",
        "triggered_f",
        "cached",
    ])
    .map_err(csv_err)?;
    for r in &trace.scalars {
        w.write_record([
            r.step.to_string(),
            r.task.to_string(),
            opt(r.g_sq),
            opt(r.g0_sq),
            opt(r.sharp_increment),
            opt(r.gf_norm),
            (r.triggered_s as u8).to_string(),
            (r.triggered_f as u8).to_string(),
            (r.cached as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,task,series,distance`
pub fn write_distances_csv<W: Write>(trace: &TraceBuffer, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "task", "series", "distance"])
        .map_err(csv_err)?;
    for d in &trace.distances {
        w.write_record([
            d.step.to_string(),
            d.task.to_string(),
            d.series.name().to_string(),
            fmt_f64(d.distance),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `series,sample_q,normal_q` for `‖g‖²` and `‖g₀‖²`. A series with too few
/// or constant samples is skipped.
pub fn write_qq_csv<W: Write>(trace: &TraceBuffer, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "sample_q", "normal_q"])
        .map_err(csv_err)?;
    let columns: [(&str, Vec<f64>); 2] = [
        (
            "g_sq",
            trace.scalars.iter().filter_map(|r| r.g_sq).collect(),
        ),
        (
            "g0_sq",
            trace.scalars.iter().filter_map(|r| r.g0_sq).collect(),
        ),
    ];
    for (name, values) in columns {
        let Ok(pairs) = qq_export(&values) else {
            continue;
        };
        for (s, t) in pairs {
            w.write_record([name.to_string(), fmt_f64(s), fmt_f64(t)])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `pair,task,epoch,bin_lo,bin_hi,count`
pub fn write_ratio_hist_csv<W: Write>(trace: &TraceBuffer, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair", "task", "epoch", "bin_lo", "bin_hi", "count"])
        .map_err(csv_err)?;
    for ((pair, task, epoch), h) in &trace.ratios {
        for (i, c) in h.counts.iter().enumerate() {
            let (lo, hi) = h.bin_edges(i);
            w.write_record([
                pair.name().to_string(),
                task.to_string(),
                epoch.to_string(),
                fmt_f64(lo),
                fmt_f64(hi),
                c.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{StepContext, TraceConfig};
    use crate::numcore::ParamVector;
    use crate::optim::GradientBundle;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn writers_emit_headers() {
        let mut t = TraceBuffer::new(TraceConfig {
            window: 1,
            ..Default::default()
        })
        .unwrap();
        for j in 0..12 {
            let g = ParamVector::new(vec![j as f64, 1.0]).unwrap();
            let b = GradientBundle {
                g: Some(g.clone()),
                g_s: Some(g.scale(1.1)),
                ..Default::default()
            };
            t.record_step(
                &b,
                StepContext {
                    step: j,
                    ..Default::default()
                },
            )
            .unwrap();
        }
        let mut buf = Vec::new();
        write_scalars_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("step,task,g_sq,"));
        assert_eq!(s.lines().count(), 13);

        let mut buf = Vec::new();
        write_distances_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 12);

        let mut buf = Vec::new();
        write_qq_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("series,sample_q,normal_q"));
        assert_eq!(s.lines().count(), 13);

        let mut buf = Vec::new();
        write_ratio_hist_csv(&t, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("pair,task,epoch,bin_lo,bin_hi,count"));
    }
}
