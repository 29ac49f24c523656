//! Method comparison reports: one CSV row per (method, interval) pair,
//! aggregated over a shared set of seeds.
//!
//! Rows hold exactly what the CSV stores. Every real is quantized through
//! the 9-significant-digit formatter at construction, so emitting and
//! re-parsing a report reproduces it field for field.

use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::metrics::{endpoint_rel_err, psnr, rasterize, ssim, RASTER_EXTENT};
use crate::numfmt::g9;
use crate::plan::{flop_account, CostModel, StageConfig, StepPlan};
use crate::runner::{run_accelerated, Method};
use crate::trajectory::Trajectory;

pub const REPORT_HEADER: &str =
    "method,N,full_steps,speedup,endpoint_rel_err,feature_mae,psnr_db,ssim";

/// One comparison row. Construction quantizes the real-valued fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub n: usize,
    pub full_steps: usize,
    pub speedup: f64,
    pub endpoint_rel_err: f64,
    pub feature_mae: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

fn q(x: f64) -> f64 {
    g9(x).parse().expect("g9 output parses as f64")
}

impl ReportRow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        method: impl Into<String>,
        n: usize,
        full_steps: usize,
        speedup: f64,
        endpoint_rel_err: f64,
        feature_mae: f64,
        psnr_db: f64,
        ssim: f64,
    ) -> Result<Self> {
        let method = method.into();
        if method.is_empty() || method.contains(',') || method.contains('\n') {
            return Err(Error::Validation(format!(
                "method label `{method}` cannot be stored in a CSV cell"
            )));
        }
        Ok(ReportRow {
            method,
            n,
            full_steps,
            speedup: q(speedup),
            endpoint_rel_err: q(endpoint_rel_err),
            feature_mae: q(feature_mae),
            psnr_db: q(psnr_db),
            ssim: q(ssim),
        })
    }

    fn emit(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.n,
            self.full_steps,
            g9(self.speedup),
            g9(self.endpoint_rel_err),
            g9(self.feature_mae),
            g9(self.psnr_db),
            g9(self.ssim)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Report { rows }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn emit(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.emit());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == REPORT_HEADER => {}
            other => {
                return Err(Error::Format(format!(
                    "report must start with `{REPORT_HEADER}`, got `{}`",
                    other.unwrap_or("")
                )))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Format(format!(
                    "report row {} has {} fields, expected 8",
                    i + 1,
                    fields.len()
                )));
            }
            let int = |j: usize| -> Result<usize> {
                fields[j].parse().map_err(|_| {
                    Error::Format(format!("report row {}: bad integer `{}`", i + 1, fields[j]))
                })
            };
            let real = |j: usize| -> Result<f64> {
                fields[j].parse().map_err(|_| {
                    Error::Format(format!("report row {}: bad number `{}`", i + 1, fields[j]))
                })
            };
            rows.push(ReportRow::new(
                fields[0],
                int(1)?,
                int(2)?,
                real(3)?,
                real(4)?,
                real(5)?,
                real(6)?,
                real(7)?,
            )?);
        }
        Ok(Report { rows })
    }
}

/// Runs `f` over the items on up to `jobs` threads and returns the results
/// in item order. The first failing item's error wins, also in item order.
fn over_items<I, T, F>(items: &[I], jobs: usize, f: F) -> Result<Vec<T>>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> Result<T> + Sync,
{
    let mut slots: Vec<Option<Result<T>>> = Vec::with_capacity(items.len());
    slots.resize_with(items.len(), || None);
    let chunk = items.len().div_ceil(jobs.max(1)).max(1);
    let f = &f;
    std::thread::scope(|scope| {
        for (item_chunk, slot_chunk) in items.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (item, slot) in item_chunk.iter().zip(slot_chunk.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot is filled"))
        .collect()
}

struct SeedOutcome {
    endpoint_err: f64,
    feature_mae: f64,
    endpoint: Vec<f64>,
}

fn evaluate_seed(
    backbone: &Backbone,
    plan: &StepPlan,
    method: &Method,
    reference: &Trajectory,
    seed: u64,
) -> Result<SeedOutcome> {
    let run = run_accelerated(backbone, plan, method, seed)?;
    let endpoint_err = endpoint_rel_err(run.endpoint(), reference.endpoint())?;
    let predicted: Vec<usize> = (0..plan.steps()).filter(|&s| !plan.is_full(s)).collect();
    let feature_mae = if predicted.is_empty() {
        0.0
    } else {
        let sum: f64 = predicted
            .iter()
            .map(|&s| run.feature(s).mean_abs_diff(reference.feature(s)))
            .sum::<Result<f64>>()?;
        sum / predicted.len() as f64
    };
    Ok(SeedOutcome {
        endpoint_err,
        feature_mae,
        endpoint: run.endpoint().to_vec(),
    })
}

/// Evaluates every method at every interval over the shared seeds and
/// assembles the comparison table. Endpoint error and feature MAE are
/// averaged over seeds against each seed's fully computed run; PSNR and
/// SSIM compare the rasterized endpoint cloud against the fully computed
/// cloud. Counting and speedup come from the plan, with the full method
/// accounted as the all-full baseline.
pub fn compare(
    backbone: &Backbone,
    methods: &[Method],
    ns: &[usize],
    seeds: &[u64],
    stages: StageConfig,
    cost: &CostModel,
    jobs: usize,
) -> Result<Report> {
    if methods.is_empty() {
        return Err(Error::Validation("compare needs at least one method".into()));
    }
    if ns.is_empty() {
        return Err(Error::Validation("compare needs at least one interval".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Validation("compare needs at least one seed".into()));
    }
    if jobs == 0 {
        return Err(Error::Validation("jobs must be positive".into()));
    }
    let steps = backbone.steps();
    let references = over_items(seeds, jobs, |&seed| backbone.record(seed))?;
    let full_grid = rasterize(
        &references.iter().map(|t| t.endpoint().to_vec()).collect::<Vec<_>>(),
        RASTER_EXTENT,
    )?;
    let tasks: Vec<(u64, &Trajectory)> =
        seeds.iter().copied().zip(references.iter()).collect();
    let mut rows = Vec::with_capacity(methods.len() * ns.len());
    for method in methods {
        for &n in ns {
            let plan = StepPlan::build(steps, n, stages)?;
            let accounted = match method {
                Method::Full => StepPlan::all_full(steps)?,
                _ => plan.clone(),
            };
            let acct = flop_account(&accounted, cost)?;
            let outcomes = over_items(&tasks, jobs, |&(seed, reference)| {
                evaluate_seed(backbone, &plan, method, reference, seed)
            })?;
            let mean_err =
                outcomes.iter().map(|o| o.endpoint_err).sum::<f64>() / outcomes.len() as f64;
            let mean_mae =
                outcomes.iter().map(|o| o.feature_mae).sum::<f64>() / outcomes.len() as f64;
            let grid = rasterize(
                &outcomes.iter().map(|o| o.endpoint.clone()).collect::<Vec<_>>(),
                RASTER_EXTENT,
            )?;
            rows.push(ReportRow::new(
                method.label(),
                n,
                acct.full_steps,
                acct.speedup,
                mean_err,
                mean_mae,
                psnr(&grid, &full_grid)?,
                ssim(&grid, &full_grid)?,
            )?);
        }
    }
    Ok(Report::new(rows))
}
