//! Declarative experiment runner.
//!
//! A run writes `results.csv` (or `results.json`), `manifest.json`, and one
//! tab-separated plot file per curve into the output directory. All
//! randomness comes from [`derive_stream`] keyed by the experiment kind, so
//! results do not depend on the worker count.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    AuditSection, AuditTest, BoundsSection, CompareSection, ConstantEstimator, ConstantSection, DriftExample,
    ExperimentConfig, ExperimentKind, GridConfig, ProbabilitySection, ProviderChoice, SamplePathsSection,
};

use crate::asymptotics::{
    approx_locally_stationary, approx_nonstationary, ChainProvider, ClosedFormProvider, ConstantProvider,
    EstimatingProvider,
};
use crate::conjunction::{
    audit_borell, audit_piterbarg_decay, audit_slepian, compare_with_asymptotic, default_grid,
    estimate_conjunction_ladder, estimate_conjunction_prob, estimate_double_event, estimate_nested_refinement,
    ProbEstimate, Verdict,
};
use crate::constants::{
    closed_forms_n1, estimate_discrete_zero, estimate_piterbarg, estimate_window_constant, pickands_bounds,
    pickands_from_rungs, pickands_rungs, piterbarg_lower_bound, ConstantEstimate, DriftSpec, PiterbargVariant,
    StepRule,
};
use crate::error::{Error, Result};
use crate::parallel::reduce_replications;
use crate::process::{variance_profile, CoordinateSpec, ThresholdFamily, VectorProcessSpec};
use crate::rng::{derive_stream, RngStream};
use crate::sampler::{SampleGrid, SamplerScratch, VectorSampler};
use crate::stats::MeanVar;

const Z95: f64 = 1.959963984540054;

/// Largest raw path dump written by `sample_paths`.
const RAW_LIMIT_BYTES: u64 = 1 << 30;

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment_id: String,
    pub kind: String,
    pub estimator: String,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub lower_ci: Option<f64>,
    pub upper_ci: Option<f64>,
    pub grid_step: Option<f64>,
    #[serde(rename = "R")]
    pub replications: Option<u64>,
    pub seed_tag: String,
    pub verdict: String,
    pub notes: String,
}

impl ResultRecord {
    fn new(estimator: &str, seed_tag: &str) -> Self {
        Self {
            experiment_id: String::new(),
            kind: String::new(),
            estimator: estimator.to_string(),
            value: None,
            se: None,
            lower_ci: None,
            upper_ci: None,
            grid_step: None,
            replications: None,
            seed_tag: seed_tag.to_string(),
            verdict: String::new(),
            notes: String::new(),
        }
    }

    fn estimate(mut self, value: f64, se: f64) -> Self {
        self.value = Some(value);
        self.se = Some(se);
        self.lower_ci = Some(value - Z95 * se);
        self.upper_ci = Some(value + Z95 * se);
        self
    }

    fn budget(mut self, grid_step: f64, replications: u64) -> Self {
        self.grid_step = Some(grid_step);
        self.replications = Some(replications);
        self
    }

    fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v.to_string();
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        let note = note.into();
        if !self.notes.is_empty() {
            self.notes.push_str("; ");
        }
        self.notes.push_str(&note);
        self
    }

    fn from_constant(estimator: &str, seed_tag: &str, est: &ConstantEstimate) -> Self {
        let mut rec = Self::new(estimator, seed_tag)
            .estimate(est.value, est.se)
            .budget(est.grid_step, est.replications)
            .note(format!("window=[{}, {}]", -est.window_s.0 + 0.0, est.window_s.1));
        for n in &est.notes {
            rec = rec.note(n.clone());
        }
        rec
    }

    fn from_prob(estimator: &str, seed_tag: &str, est: &ProbEstimate) -> Self {
        let mut rec = Self::new(estimator, seed_tag).budget(est.grid_step, est.replications);
        rec.value = Some(est.value);
        rec.se = Some(est.se);
        rec.lower_ci = Some((est.value - Z95 * est.se).max(0.0));
        rec.upper_ci = Some((est.value + Z95 * est.se).min(1.0));
        rec = rec.note(format!("hits={}", est.hits));
        for n in &est.notes {
            rec = rec.note(n.clone());
        }
        rec
    }

    fn failure(estimator: &str, seed_tag: &str, err: &Error) -> Self {
        let mut rec = Self::new(estimator, seed_tag);
        rec.verdict = "error".into();
        rec.notes = err.to_string();
        rec
    }

    pub fn is_error(&self) -> bool {
        self.verdict == "error"
    }

    pub fn is_fail(&self) -> bool {
        self.verdict == "fail"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultsFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsManifest {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub results_file: String,
    pub plot_files: Vec<String>,
    pub records: Vec<ResultRecord>,
}

impl ResultsManifest {
    pub fn has_errors(&self) -> bool {
        self.records.iter().any(ResultRecord::is_error)
    }

    pub fn has_failures(&self) -> bool {
        self.records.iter().any(ResultRecord::is_fail)
    }
}

/// Tab-separated `x / y / se` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub columns: [String; 3],
    pub rows: Vec<[f64; 3]>,
}

impl PlotData {
    fn new(name: impl Into<String>, x: &str, y: &str) -> Self {
        Self {
            name: name.into(),
            columns: [x.to_string(), y.to_string(), "se".to_string()],
            rows: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<String> {
        let file = format!("{}.tsv", self.name);
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&file))?);
        writeln!(w, "{}", self.columns.join("\t"))?;
        for [x, y, se] in &self.rows {
            writeln!(w, "{x}\t{y}\t{se}")?;
        }
        w.flush()?;
        Ok(file)
    }
}

#[derive(Default)]
struct Output {
    records: Vec<ResultRecord>,
    plots: Vec<PlotData>,
}

impl Output {
    fn push(&mut self, rec: ResultRecord) {
        self.records.push(rec);
    }
}

/// Runs `config`, writes the results into `out_dir`, and returns the manifest.
/// Configuration problems abort with [`Error::Config`]; estimator failures
/// become records with verdict `error`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, format: ResultsFormat) -> Result<ResultsManifest> {
    config.validate()?;
    let started = Instant::now();
    let kind = config.kind.as_str();
    let stream = derive_stream(config.master_seed, kind, 0)?;
    let tag = format!("{kind}:0");
    let mut out = Output::default();
    match config.kind {
        ExperimentKind::SamplePaths => {
            let s = config.sample_paths.as_ref().expect("validated");
            run_sample_paths(config, s, stream, &tag, out_dir, &mut out)?;
        }
        ExperimentKind::Constant => {
            let s = config.constant.as_ref().expect("validated");
            run_constant(s, stream, &tag, &mut out)?;
        }
        ExperimentKind::Probability => {
            let s = config.probability.as_ref().expect("validated");
            run_probability(config, s, stream, &tag, &mut out)?;
        }
        ExperimentKind::Compare => {
            let s = config.compare.as_ref().expect("validated");
            run_compare(config, s, stream, &tag, &mut out)?;
        }
        ExperimentKind::Audit => {
            let s = config.audit.as_ref().expect("validated");
            run_audit(config, s, stream, &tag, &mut out)?;
        }
        ExperimentKind::BoundsTable => {
            let s = config.bounds_table.clone().unwrap_or_default();
            for rec in bounds_records(&s)? {
                out.push(rec);
            }
        }
    }
    for rec in &mut out.records {
        rec.experiment_id = config.experiment_id.clone();
        rec.kind = kind.to_string();
    }

    std::fs::create_dir_all(out_dir)?;
    let results_file = match format {
        ResultsFormat::Csv => {
            write_results_csv(&out.records, &out_dir.join("results.csv"))?;
            "results.csv"
        }
        ResultsFormat::Json => {
            let text = serde_json::to_string_pretty(&out.records).map_err(std::io::Error::other)?;
            std::fs::write(out_dir.join("results.json"), text + "\n")?;
            "results.json"
        }
    };
    let plot_files = out.plots.iter().map(|p| p.write(out_dir)).collect::<Result<Vec<_>>>()?;
    let manifest = ResultsManifest {
        experiment_id: config.experiment_id.clone(),
        kind: config.kind,
        config_hash: config.hash(),
        master_seed: config.master_seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: started.elapsed().as_secs_f64(),
        results_file: results_file.to_string(),
        plot_files,
        records: out.records,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

pub fn write_results_csv(records: &[ResultRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    if records.is_empty() {
        w.write_record([
            "experiment_id",
            "kind",
            "estimator",
            "value",
            "se",
            "lower_ci",
            "upper_ci",
            "grid_step",
            "R",
            "seed_tag",
            "verdict",
            "notes",
        ])
        .map_err(csv_error)?;
    }
    for rec in records {
        w.serialize(rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Turns estimator errors into a failure record; configuration errors pass.
fn record_or_fail(out: &mut Output, estimator: &str, tag: &str, result: Result<()>) -> Result<()> {
    match result {
        Ok(()) => Ok(()),
        Err(e @ Error::Config { .. }) => Err(e),
        Err(e) => {
            log::warn!("{estimator} failed: {e}");
            out.push(ResultRecord::failure(estimator, tag, &e));
            Ok(())
        }
    }
}

fn grid_for(spec: &VectorProcessSpec, grid: &GridConfig, u: f64, key: &str) -> Result<SampleGrid> {
    match grid.step {
        None => default_grid(spec, u),
        Some(step) => {
            let origin = grid.origin.unwrap_or(0.0);
            let end = grid.end.unwrap_or(spec.horizon_t);
            if !(step > 0.0) {
                return Err(Error::config(format!("{key}.grid.step"), "must be positive"));
            }
            SampleGrid::covering(origin, end, step).map_err(|e| Error::config(format!("{key}.grid"), e.to_string()))
        }
    }
}

fn required<'a, T>(value: &'a Option<T>, key: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::config(key, "required for this estimator"))
}

fn run_sample_paths(
    config: &ExperimentConfig,
    s: &SamplePathsSection,
    stream: RngStream,
    tag: &str,
    out_dir: &Path,
    out: &mut Output,
) -> Result<()> {
    let spec = config.process("sample_paths.process", &s.process)?;
    let grid = grid_for(spec, &s.grid, 1.0, "sample_paths")?;
    let result = (|| {
        let sampler = VectorSampler::new(spec, &grid)?;
        let (n, m) = (spec.dim(), grid.count);
        let second = reduce_replications(
            s.replications,
            || (SamplerScratch::default(), vec![0.0; n * m]),
            |(scratch, paths): &mut (SamplerScratch, Vec<f64>), acc: &mut Vec<MeanVar>, r| {
                if acc.is_empty() {
                    acc.resize(n * m, MeanVar::default());
                }
                let mut rng = stream.rng_for(r);
                sampler.fill(&mut rng, paths, scratch);
                for (a, x) in acc.iter_mut().zip(paths.iter()) {
                    a.push(x * x);
                }
            },
            |total, part| {
                if total.is_empty() {
                    *total = part;
                } else {
                    for (t, p) in total.iter_mut().zip(&part) {
                        t.merge(p);
                    }
                }
            },
        );
        for (i, coord) in spec.coords.iter().enumerate() {
            let mut plot = PlotData::new(format!("variance_coord{i}"), "t", "variance");
            for (j, t) in grid.nodes().enumerate() {
                let mv = second[i * m + j];
                plot.rows.push([t, mv.mean, mv.std_error()]);
            }
            out.plots.push(plot);
            let mut probes = vec![0, m / 2, m - 1];
            probes.dedup();
            for j in probes {
                let t = grid.node(j);
                let mv = second[i * m + j];
                let theory = coord_variance(coord, t);
                let ok = (mv.mean - theory).abs() <= 5.0 * mv.std_error().max(1e-12);
                out.push(
                    ResultRecord::new("variance", tag)
                        .estimate(mv.mean, mv.std_error())
                        .budget(grid.step, s.replications)
                        .verdict(if ok { Verdict::Pass } else { Verdict::Fail })
                        .note(format!("coord={i} t={t} theory={theory}")),
                );
            }
        }
        if s.write_raw {
            let bytes = (n * m) as u64 * s.replications * 8;
            if bytes > RAW_LIMIT_BYTES {
                return Err(Error::Capacity(format!(
                    "raw dump of {bytes} bytes exceeds {RAW_LIMIT_BYTES}"
                )));
            }
            let batch = sampler.batch(s.replications as usize, stream);
            let file = std::fs::File::create(out_dir.join("paths.gpb"))?;
            batch.write_raw(std::io::BufWriter::new(file))?;
        }
        Ok(())
    })();
    if s.write_raw {
        std::fs::create_dir_all(out_dir)?;
    }
    record_or_fail(out, "variance", tag, result)
}

fn coord_variance(coord: &CoordinateSpec, t: f64) -> f64 {
    coord.std_dev(t).powi(2)
}

fn step_rule(s: &ConstantSection) -> StepRule {
    match (s.step, s.steps_per_window) {
        (Some(step), _) => StepRule::Fixed(step),
        (None, Some(k)) => StepRule::PerWindow(k),
        (None, None) => StepRule::default_for(s.kappa),
    }
}

fn run_constant(s: &ConstantSection, stream: RngStream, tag: &str, out: &mut Output) -> Result<()> {
    let n = s.c.len();
    let drift = s.drift.clone().unwrap_or_else(|| DriftSpec::zero(n, s.kappa));
    let rule = step_rule(s);
    let name = match s.estimator {
        ConstantEstimator::Window => "window",
        ConstantEstimator::Pickands => "slope",
        ConstantEstimator::Piterbarg => "piterbarg",
        ConstantEstimator::DiscreteZero => "discrete_zero",
        ConstantEstimator::ClosedForm => "closed_form",
    };
    let result = match s.estimator {
        ConstantEstimator::Window => {
            let window = *required(&s.window, "constant.window")?;
            estimate_window_constant(
                &s.c,
                s.kappa,
                &drift,
                window,
                rule.step(window.0 + window.1),
                s.replications,
                stream,
            )
            .map(|est| out.push(ResultRecord::from_constant("window", tag, &est)))
        }
        ConstantEstimator::Pickands => {
            let ladder = s.s_ladder.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
            (|| {
                if ladder.len() < 3 {
                    return Err(Error::config("constant.s_ladder", "needs at least 3 rungs"));
                }
                let rungs = pickands_rungs(&s.c, s.kappa, &ladder, rule, s.replications, stream)?;
                let mut plot = PlotData::new("pickands_rungs", "S", "H(S)");
                for (k, (est, &sv)) in rungs.iter().zip(&ladder).enumerate() {
                    plot.rows.push([sv, est.value, est.se]);
                    out.push(ResultRecord::from_constant("window", &format!("{tag}/rung{k}"), est));
                }
                out.plots.push(plot);
                let slope = pickands_from_rungs(&ladder, &rungs);
                out.push(ResultRecord::from_constant("slope", tag, &slope));
                Ok(())
            })()
        }
        ConstantEstimator::Piterbarg => {
            let ladder = s.s_ladder.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0, 16.0]);
            let variant = s.variant.unwrap_or(PiterbargVariant::TwoSided);
            estimate_piterbarg(&s.c, s.kappa, &drift, variant, &ladder, rule, s.replications, stream).map(|est| {
                let mut plot = PlotData::new("piterbarg_rungs", "S", "H(S)");
                for r in &est.rungs {
                    plot.rows.push([r.x, r.value, r.se]);
                }
                out.plots.push(plot);
                out.push(ResultRecord::from_constant("piterbarg", tag, &est));
            })
        }
        ConstantEstimator::DiscreteZero => {
            let ladder = required(&s.u_ladder, "constant.u_ladder")?;
            estimate_discrete_zero(&s.c, s.kappa, ladder, s.horizon, s.replications, stream).map(|est| {
                let mut plot = PlotData::new("discrete_zero_rungs", "u", "H(u)");
                for (k, r) in est.rungs.iter().enumerate() {
                    plot.rows.push([r.x, r.value, r.se]);
                    out.push(
                        ResultRecord::new("discrete_zero_rung", &format!("{tag}/rung{k}"))
                            .estimate(r.value, r.se)
                            .budget(r.x, s.replications),
                    );
                }
                out.plots.push(plot);
                out.push(ResultRecord::from_constant("discrete_zero", tag, &est));
            })
        }
        ConstantEstimator::ClosedForm => {
            let window = s.window.map(|w| w.0 + w.1);
            (|| {
                if n != 1 {
                    return Err(Error::Unsupported(format!("closed forms need one coordinate, got {n}")));
                }
                let value = closed_forms_n1(s.c[0], s.kappa, window)?;
                let mut rec = ResultRecord::new("closed_form", tag).estimate(value, 0.0);
                rec.lower_ci = Some(value);
                rec.upper_ci = Some(value);
                out.push(rec);
                Ok(())
            })()
        }
    };
    record_or_fail(out, name, tag, result)
}

fn family_or_uniform(family: &Option<ThresholdFamily>, n: usize) -> ThresholdFamily {
    family.clone().unwrap_or_else(|| ThresholdFamily::uniform(n))
}

fn run_probability(
    config: &ExperimentConfig,
    s: &ProbabilitySection,
    stream: RngStream,
    tag: &str,
    out: &mut Output,
) -> Result<()> {
    let spec = config.process("probability.process", &s.process)?;
    if let Some(th) = &s.thresholds {
        if th.len() != spec.dim() {
            return Err(Error::config(
                "probability.thresholds",
                format!("expected {} values", spec.dim()),
            ));
        }
        let u_ref = th.iter().copied().fold(1.0, f64::max);
        let grid = grid_for(spec, &s.grid, u_ref, "probability")?;
        let direct_stream = stream.fork("direct", 0);
        let result = estimate_conjunction_prob(spec, th, &grid, s.replications, direct_stream)
            .map(|est| out.push(ResultRecord::from_prob("direct", &format!("{tag}/direct"), &est)));
        record_or_fail(out, "direct", tag, result)?;
        if let Some(levels) = s.refine_levels {
            let result = estimate_nested_refinement(spec, th, &grid, levels, s.replications, stream.fork("nested", 0))
                .map(|ests| {
                    let mut plot = PlotData::new("nested_refinement", "grid_step", "p");
                    for (k, est) in ests.iter().enumerate() {
                        plot.rows.push([est.grid_step, est.value, est.se]);
                        out.push(
                            ResultRecord::from_prob("nested", &format!("{tag}/nested"), est).note(format!("level={k}")),
                        );
                    }
                    out.plots.push(plot);
                });
            record_or_fail(out, "nested", tag, result)?;
        }
    }
    if let Some(ladder) = &s.u_ladder {
        let family = family_or_uniform(&s.family, spec.dim());
        let u_max = ladder.iter().copied().fold(1.0, f64::max);
        let grid = grid_for(spec, &s.grid, u_max, "probability")?;
        let result =
            estimate_conjunction_ladder(spec, &family, ladder, &grid, s.replications, stream.fork("ladder", 0)).map(
                |ests| {
                    let mut plot = PlotData::new("probability_ladder", "u", "p");
                    for (&u, est) in ladder.iter().zip(&ests) {
                        plot.rows.push([u, est.value, est.se]);
                        out.push(
                            ResultRecord::from_prob("ladder", &format!("{tag}/ladder"), est).note(format!("u={u}")),
                        );
                    }
                    out.plots.push(plot);
                },
            );
        record_or_fail(out, "ladder", tag, result)?;
    }
    Ok(())
}

fn regime_name<T: Serialize>(regime: &T) -> String {
    match serde_json::to_value(regime) {
        Ok(serde_json::Value::String(s)) => s,
        _ => "asymptotic".into(),
    }
}

fn run_compare(
    config: &ExperimentConfig,
    s: &CompareSection,
    stream: RngStream,
    tag: &str,
    out: &mut Output,
) -> Result<()> {
    let spec = config.process("compare.process", &s.process)?;
    let family = family_or_uniform(&s.family, spec.dim());
    if family.dim() != spec.dim() {
        return Err(Error::config(
            "compare.family",
            format!("expected {} coordinates", spec.dim()),
        ));
    }
    let u_max = s.u_ladder.iter().copied().fold(1.0, f64::max);
    let grid = grid_for(spec, &s.grid, u_max, "compare")?;
    let provider: Box<dyn ConstantProvider> = match s.provider {
        ProviderChoice::ClosedForm => Box::new(ClosedFormProvider),
        ProviderChoice::Estimating => Box::new(ChainProvider(vec![
            Box::new(ClosedFormProvider),
            Box::new(EstimatingProvider::new(
                s.budget.clone().unwrap_or_default(),
                stream.fork("provider", 0),
            )),
        ])),
    };
    let all_ns = spec
        .coords
        .iter()
        .all(|c| matches!(c, CoordinateSpec::NonStationary(_)));
    let result = (|| {
        let profile = if all_ns {
            Some(variance_profile(spec, s.scan_step.unwrap_or(spec.horizon_t / 1000.0))?)
        } else {
            None
        };
        let empirical = estimate_conjunction_ladder(
            spec,
            &family,
            &s.u_ladder,
            &grid,
            s.replications,
            stream.fork("empirical", 0),
        )?;
        let mut plot = PlotData::new("compare_ratio", "u", "ratio");
        for (&u, emp) in s.u_ladder.iter().zip(&empirical) {
            let approx = match &profile {
                Some(p) => approx_nonstationary(spec, u, p, provider.as_ref())?,
                None => approx_locally_stationary(spec, &family, u, provider.as_ref())?,
            };
            let regime = regime_name(&approx.regime);
            out.push(ResultRecord::from_prob("empirical", &format!("{tag}/empirical"), emp).note(format!("u={u}")));
            let mut rec = ResultRecord::new(&regime, tag).note(format!("u={u}"));
            rec.value = Some(approx.value_at_u);
            for n in &approx.notes {
                rec = rec.note(n.clone());
            }
            out.push(rec);
            let ratio = compare_with_asymptotic(emp, &approx)?;
            let mut rec = ResultRecord::new("ratio", tag)
                .budget(ratio.grid_step, ratio.replications)
                .note(format!("u={u}"));
            rec.value = ratio.ratio;
            rec.lower_ci = Some(ratio.lower_ci);
            rec.upper_ci = Some(ratio.upper_ci);
            if let Some(r) = ratio.ratio {
                let se = (ratio.upper_ci - ratio.lower_ci) / (2.0 * Z95);
                rec.se = Some(se);
                plot.rows.push([u, r, se]);
            } else {
                rec = rec.note("no hits; upper_ci is the rule-of-three bound");
            }
            if let Some((lo, hi)) = s.band {
                let v = match ratio.ratio {
                    Some(r) if r >= lo && r <= hi => Verdict::Pass,
                    Some(_) => Verdict::Fail,
                    None => Verdict::Inconclusive,
                };
                rec = rec.verdict(v).note(format!("band=[{lo}, {hi}]"));
            }
            out.push(rec);
        }
        out.plots.push(plot);
        Ok(())
    })();
    record_or_fail(out, "compare", tag, result)
}

fn run_audit(
    config: &ExperimentConfig,
    s: &AuditSection,
    stream: RngStream,
    tag: &str,
    out: &mut Output,
) -> Result<()> {
    let spec = config.process("audit.process", &s.process)?;
    match s.test {
        AuditTest::Slepian => {
            let spec_b = config.process("audit.process_b", s.process_b.as_deref().unwrap_or_default())?;
            let th = required(&s.thresholds, "audit.thresholds")?;
            let u_ref = th.iter().copied().fold(1.0, f64::max);
            let grid = grid_for(spec, &s.grid, u_ref, "audit")?;
            let result = audit_slepian(spec, spec_b, th, &grid, s.replications, stream).map(|rep| {
                out.push(ResultRecord::from_prob("slepian_a", tag, &rep.p_a));
                out.push(ResultRecord::from_prob("slepian_b", tag, &rep.p_b));
                let se = rep.p_a.se.hypot(rep.p_b.se);
                out.push(
                    ResultRecord::new("slepian", tag)
                        .estimate(rep.p_a.value - rep.p_b.value, se)
                        .budget(grid.step, s.replications)
                        .verdict(rep.verdict)
                        .note("value = P_A - P_B; pass if <= 3 pooled se"),
                );
            });
            record_or_fail(out, "slepian", tag, result)
        }
        AuditTest::Borell => {
            let ladder = required(&s.u_ladder, "audit.u_ladder")?;
            let u_max = ladder.iter().copied().fold(1.0, f64::max);
            let grid = grid_for(spec, &s.grid, u_max, "audit")?;
            let result = audit_borell(spec, ladder, &grid, s.replications, stream).map(|reports| {
                for rep in reports {
                    out.push(
                        ResultRecord::from_prob("borell", tag, &rep.empirical_at_u)
                            .verdict(rep.verdict)
                            .note(format!(
                                "u={} bound={:e} tau_sq={} mu_hat={}",
                                rep.u, rep.bound_at_u, rep.tau_sq, rep.mu_hat
                            )),
                    );
                }
            });
            record_or_fail(out, "borell", tag, result)
        }
        AuditTest::PiterbargDecay => {
            let ladder = required(&s.u_ladder, "audit.u_ladder")?;
            let u_max = ladder.iter().copied().fold(1.0, f64::max);
            let grid = grid_for(spec, &s.grid, u_max, "audit")?;
            let result = audit_piterbarg_decay(spec, ladder, &grid, s.replications, stream).map(|rep| {
                let mut plot = PlotData::new("piterbarg_decay", "u", "ratio");
                for p in &rep.points {
                    plot.rows.push([p.u, p.ratio, p.ratio_se]);
                    out.push(
                        ResultRecord::new("decay_ratio", tag)
                            .estimate(p.ratio, p.ratio_se)
                            .budget(grid.step, s.replications)
                            .note(format!("u={} hits={}", p.u, p.estimate.hits)),
                    );
                }
                out.plots.push(plot);
                let mut rec = ResultRecord::new("piterbarg_decay", tag)
                    .budget(grid.step, s.replications)
                    .verdict(rep.verdict)
                    .note(format!("tau_sq={} mes={}", rep.tau_sq, rep.measure));
                for n in rep.notes {
                    rec = rec.note(n);
                }
                out.push(rec);
            });
            record_or_fail(out, "piterbarg_decay", tag, result)
        }
        AuditTest::DoubleEvent => {
            let u = *required(&s.u, "audit.u")?;
            let window = *required(&s.s, "audit.s")?;
            let offsets = required(&s.offsets, "audit.offsets")?;
            let result = estimate_double_event(spec, u, window, offsets, s.replications, stream).map(|ests| {
                let mut plot = PlotData::new("double_event", "t0", "p");
                let mut monotone = true;
                for (k, (&t0, est)) in offsets.iter().zip(&ests).enumerate() {
                    plot.rows.push([t0, est.value, est.se]);
                    if k > 0 {
                        let prev = &ests[k - 1];
                        monotone &= est.value <= prev.value + 3.0 * est.se.hypot(prev.se);
                    }
                    out.push(ResultRecord::from_prob("double_event", tag, est).note(format!("t0={t0} S={window}")));
                }
                out.plots.push(plot);
                out.push(
                    ResultRecord::new("double_event_decay", tag)
                        .verdict(if monotone { Verdict::Pass } else { Verdict::Fail })
                        .note("non-increasing in t0 up to 3 pooled se"),
                );
            });
            record_or_fail(out, "double_event", tag, result)
        }
    }
}

/// One row of the bounds table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: usize,
    pub kappa: f64,
    pub quantity: String,
    pub lower: f64,
    pub upper: Option<f64>,
    pub notes: String,
}

/// Pickands bounds for unit `C` over `n_range × kappas`, then Piterbarg lower
/// bounds for each drift example (using the Pickands lower bound for `H`).
pub fn emit_bounds_table(n_range: (usize, usize), kappas: &[f64], drifts: &[DriftExample]) -> Result<Vec<BoundsRow>> {
    let mut rows = Vec::new();
    for &kappa in kappas {
        for n in n_range.0..=n_range.1 {
            let b = pickands_bounds(&vec![1.0; n], kappa)?;
            rows.push(BoundsRow {
                n,
                kappa,
                quantity: "pickands_bounds".into(),
                lower: b.lower,
                upper: b.upper,
                notes: String::new(),
            });
        }
    }
    for d in drifts {
        for &kappa in kappas {
            for n in n_range.0..=n_range.1 {
                let h = pickands_bounds(&vec![1.0; n], kappa)?.lower;
                let drift = DriftSpec {
                    exponent: kappa,
                    d_lower: vec![d.d_lower; n],
                    d_upper: vec![d.d_upper; n],
                };
                let lower = piterbarg_lower_bound(kappa, &drift, d.variant, h)?;
                rows.push(BoundsRow {
                    n,
                    kappa,
                    quantity: "piterbarg_lower_bound".into(),
                    lower,
                    upper: None,
                    notes: format!(
                        "{} d_lower={} d_upper={}",
                        regime_name(&d.variant),
                        d.d_lower,
                        d.d_upper
                    ),
                });
            }
        }
    }
    Ok(rows)
}

fn bounds_records(s: &BoundsSection) -> Result<Vec<ResultRecord>> {
    let rows =
        emit_bounds_table(s.n_range, &s.kappas, &s.drifts).map_err(|e| Error::config("bounds_table", e.to_string()))?;
    Ok(rows
        .into_iter()
        .map(|row| {
            let mut rec = ResultRecord::new(&row.quantity, "").note(format!("n={} kappa={}", row.n, row.kappa));
            rec.lower_ci = Some(row.lower);
            rec.upper_ci = row.upper;
            if let Some(up) = row.upper {
                rec = rec.verdict(if row.lower <= up { Verdict::Pass } else { Verdict::Fail });
            }
            if !row.notes.is_empty() {
                rec = rec.note(row.notes);
            }
            rec
        })
        .collect())
}

/// Output directory: the explicit override, else the config's, else `out/<id>`.
pub fn resolve_out_dir(config: &ExperimentConfig, cli_override: Option<&Path>) -> PathBuf {
    cli_override
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&config.experiment_id))
}
