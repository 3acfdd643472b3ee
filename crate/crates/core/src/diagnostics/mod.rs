//! Gradient-landscape instrumentation: correction ratios, k-step gradient
//! distances, per-step scalar traces and Q-Q exports.
//!
//! Everything here observes [`GradientBundle`]s after the fact; nothing
//! feeds back into the optimizer.

mod export;
mod stats;

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::numcore::ParamVector;
use crate::optim::GradientBundle;

pub use export::{
    fmt_f64, write_distances_csv, write_qq_csv, write_ratio_hist_csv, write_scalars_csv,
};
pub use stats::{kstep_distance, median, qq_export};

/// Guard added to denominators in [`correction_ratio`].
pub const RATIO_EPS: f64 = 1e-12;

pub const DEFAULT_WINDOW: usize = 5;

/// Elementwise `ln |mᵢ / (nᵢ + ε)|`. A zero numerator is replaced by ε so
/// that every entry stays finite.
pub fn correction_ratio(m: &ParamVector, n: &ParamVector) -> Result<Vec<f64>> {
    if m.dim() != n.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: n.dim(),
        });
    }
    Ok(m.iter()
        .zip(n.iter())
        .map(|(&mi, &ni)| {
            let num = if mi == 0.0 { RATIO_EPS } else { mi };
            let den = ni + RATIO_EPS;
            let den = if den == 0.0 { RATIO_EPS } else { den };
            (num / den).abs().ln()
        })
        .collect())
}

/// Vector series tracked for k-step distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Series {
    G,
    G0,
    Gvs,
    Gvf,
}

impl Series {
    pub const ALL: [Series; 4] = [Series::G, Series::G0, Series::Gvs, Series::Gvf];

    pub fn name(self) -> &'static str {
        match self {
            Series::G => "g",
            Series::G0 => "g0",
            Series::Gvs => "g_vs",
            Series::Gvf => "g_vf",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Pairs whose correction ratios are histogrammed: `(g_s − g, g)` and
/// `(g_f, g_s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RatioPair {
    SharpVsGrad,
    FlatVsSharp,
}

impl RatioPair {
    pub fn name(self) -> &'static str {
        match self {
            RatioPair::SharpVsGrad => "gs_minus_g__g",
            RatioPair::FlatVsSharp => "gf__gs",
        }
    }
}

/// Where a recorded step sits in the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepContext {
    pub step: u64,
    pub task: u32,
    pub epoch: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarRow {
    pub step: u64,
    pub task: u32,
    pub g_sq: Option<f64>,
    pub g0_sq: Option<f64>,
    pub sharp_increment: Option<f64>,
    pub gf_norm: Option<f64>,
    pub triggered_s: bool,
    pub triggered_f: bool,
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceRow {
    pub step: u64,
    pub task: u32,
    pub series: Series,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct TraceConfig {
    /// Distance lag w.
    pub window: usize,
    pub ratio_bins: usize,
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Feed the distance series only from steps that refreshed a cached
    /// direction, so all four series share the same time base.
    pub cache_steps_only: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            window: DEFAULT_WINDOW,
            ratio_bins: 40,
            ratio_lo: -20.0,
            ratio_hi: 5.0,
            cache_steps_only: false,
        }
    }
}

/// Fixed-range histogram. Out-of-range values land in the edge bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; bins.max(1)],
        }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let t = (v - self.lo) / (self.hi - self.lo) * bins as f64;
        let idx = if t.is_nan() {
            0
        } else {
            t.floor().clamp(0.0, (bins - 1) as f64) as usize
        };
        self.counts[idx] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * i as f64, self.lo + w * (i + 1) as f64)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-run trace of gradient statistics. Single owner.
#[derive(Clone, Debug)]
pub struct TraceBuffer {
    cfg: TraceConfig,
    rings: [VecDeque<ParamVector>; 4],
    pub scalars: Vec<ScalarRow>,
    pub distances: Vec<DistanceRow>,
    /// Ratio histograms keyed by (pair, task, epoch); coordinates are pooled
    /// over all steps of an epoch.
    pub ratios: BTreeMap<(RatioPair, u32, u32), Histogram>,
    records: u64,
}

impl TraceBuffer {
    pub fn new(cfg: TraceConfig) -> Result<Self> {
        if cfg.window < 1 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        if !(cfg.ratio_hi > cfg.ratio_lo) || cfg.ratio_bins == 0 {
            return Err(Error::invalid(
                "ratio_bins",
                "need at least one bin over a non-empty range",
            ));
        }
        Ok(TraceBuffer {
            cfg,
            rings: Default::default(),
            scalars: Vec::new(),
            distances: Vec::new(),
            ratios: BTreeMap::new(),
            records: 0,
        })
    }

    pub fn window(&self) -> usize {
        self.cfg.window
    }

    /// Number of steps recorded so far.
    pub fn records(&self) -> u64 {
        self.records
    }

    /// Number of samples currently held for `series`.
    pub fn held(&self, series: Series) -> usize {
        self.rings[series.index()].len()
    }

    fn push(&mut self, series: Series, v: &ParamVector, ctx: StepContext) -> Result<()> {
        let w = self.cfg.window;
        let ring = &mut self.rings[series.index()];
        if ring.len() == w {
            let old = ring.pop_front().expect("ring holds w entries");
            let distance = v.distance(&old)?;
            self.distances.push(DistanceRow {
                step: ctx.step,
                task: ctx.task,
                series,
                distance,
            });
        }
        ring.push_back(v.clone());
        Ok(())
    }

    fn add_ratios(
        &mut self,
        pair: RatioPair,
        m: &ParamVector,
        n: &ParamVector,
        ctx: StepContext,
    ) -> Result<()> {
        let ratios = correction_ratio(m, n)?;
        let (lo, hi, bins) = (self.cfg.ratio_lo, self.cfg.ratio_hi, self.cfg.ratio_bins);
        let h = self
            .ratios
            .entry((pair, ctx.task, ctx.epoch))
            .or_insert_with(|| Histogram::new(lo, hi, bins));
        for r in ratios {
            h.add(r);
        }
        Ok(())
    }

    /// Appends every member present in `bundle`.
    pub fn record_step(&mut self, bundle: &GradientBundle, ctx: StepContext) -> Result<()> {
        self.records += 1;
        if !self.cfg.cache_steps_only || bundle.cached() {
            let members = [
                (Series::G, &bundle.g),
                (Series::G0, &bundle.g_0),
                (Series::Gvs, &bundle.g_vs),
                (Series::Gvf, &bundle.g_vf),
            ];
            for (series, member) in members {
                if let Some(v) = member {
                    self.push(series, v, ctx)?;
                }
            }
        }

        if let (Some(g), Some(gs)) = (&bundle.g, &bundle.g_s) {
            let inc = match &bundle.sharp_increment {
                Some(inc) => inc.clone(),
                None => gs.sub(g)?,
            };
            self.add_ratios(RatioPair::SharpVsGrad, &inc, g, ctx)?;
        }
        if let (Some(gf), Some(gs)) = (&bundle.g_f, &bundle.g_s) {
            self.add_ratios(RatioPair::FlatVsSharp, gf, gs, ctx)?;
        }

        self.scalars.push(ScalarRow {
            step: ctx.step,
            task: ctx.task,
            g_sq: bundle.g.as_ref().map(ParamVector::sq_norm),
            g0_sq: bundle.g_0.as_ref().map(ParamVector::sq_norm),
            sharp_increment: bundle.sharp_increment_norm(),
            gf_norm: bundle.g_f.as_ref().map(ParamVector::l2_norm),
            triggered_s: bundle.triggered_s,
            triggered_f: bundle.triggered_f,
            cached: bundle.cached(),
        });
        Ok(())
    }

    /// Distances recorded for one series, in step order.
    pub fn distances_of(&self, series: Series) -> Vec<f64> {
        self.distances
            .iter()
            .filter(|d| d.series == series)
            .map(|d| d.distance)
            .collect()
    }

    /// Median k-step distance of `series`, `None` before the window fills.
    pub fn median_distance(&self, series: Series) -> Option<f64> {
        median(&self.distances_of(series))
    }
}
