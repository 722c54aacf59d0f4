use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::FileConfig;
use super::stats::{exponent_regression, ErrorEstimate, Regression, CSV_HEADER};
use crate::decoders::DecoderKind;
use crate::ensemble::{concentration_diagnostic, sample_codewords, ConcentrationReport};
use crate::error::{Error, Result};
use crate::exponents::{exponent_pair, zero_rate_closed_forms, ContinuousMapping, ExponentOptions, ZeroRateForms};
use crate::simulation::{sample_source, Simulator, SystemConfig};

/// Number of source words and codewords sampled by the up-front class-G check.
pub const DIAGNOSTIC_SAMPLES: usize = 200;

/// A Monte Carlo sweep over block lengths.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    /// System template; its `n` is replaced by each entry of `n_list`.
    pub system: SystemConfig,
    pub n_list: Vec<usize>,
    pub trials: u64,
    pub decoders: Vec<DecoderKind>,
    pub seed: u64,
    pub fixed_codebook: bool,
    pub out_dir: Option<PathBuf>,
    /// Exponent predictions for the summary; `None` skips them.
    pub predictions: Option<(ContinuousMapping, ExponentOptions)>,
}

impl ExperimentPlan {
    pub fn from_config(cfg: &FileConfig, seed: u64) -> Result<Self> {
        let predictions = if cfg.exponents.predict {
            Some((cfg.continuous_mapping()?, cfg.exponents.options.clone()))
        } else {
            None
        };
        let plan = Self {
            system: cfg.system(cfg.n)?,
            n_list: cfg.lengths(),
            trials: cfg.trials,
            decoders: cfg.decoders.clone(),
            seed,
            fixed_codebook: cfg.fixed_codebook,
            out_dir: None,
            predictions,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "n_list must be non-empty and strictly ascending, got {:?}",
                self.n_list
            )));
        }
        if self.decoders.is_empty() {
            return Err(Error::InvalidParameter("no decoder requested".into()));
        }
        let mut d = self.decoders.clone();
        d.sort();
        d.dedup();
        if d.len() != self.decoders.len() {
            return Err(Error::InvalidParameter("decoder list has duplicates".into()));
        }
        for &n in &self.n_list {
            self.system_at(n)?;
        }
        Ok(())
    }

    pub fn system_at(&self, n: usize) -> Result<SystemConfig> {
        let mut s = self.system.clone();
        s.n = n;
        s.validate()?;
        Ok(s)
    }
}

/// Why a decoder cannot run on a system; `None` when it can.
pub fn skip_reason(system: &SystemConfig, decoder: DecoderKind) -> Option<String> {
    match decoder {
        DecoderKind::ExactMl => {
            let words = (system.source.len() as f64).powi(system.n as i32);
            (words > system.brute_force_cap as f64).then(|| {
                format!("|X|^n = {words} exceeds the brute-force cap {}", system.brute_force_cap)
            })
        }
        DecoderKind::ApproxMl => {
            (!system.channel_positive()).then(|| "channel has zero transition probabilities".to_string())
        }
        _ => None,
    }
}

/// Master seed of the cell at length `n`.
pub fn cell_seed(seed: u64, n: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n as u64);
    rng.next_u64()
}

/// `trials` independent trials of one decoder at length `n`; decoders that cannot run
/// at this length return the corresponding cap or positivity error.
pub fn estimate_error_rate(plan: &ExperimentPlan, decoder: DecoderKind, n: usize, seed: u64) -> Result<ErrorEstimate> {
    let system = plan.system_at(n)?;
    if let Some(reason) = skip_reason(&system, decoder) {
        return Err(match decoder {
            DecoderKind::ExactMl => Error::CapExceeded(reason),
            _ => Error::NotPositive(reason),
        });
    }
    let mut sim = Simulator::new(system, vec![decoder], seed)?;
    if plan.fixed_codebook {
        sim = sim.with_fixed_codebook()?;
    }
    let errors = sim.count_errors(plan.trials)?;
    ErrorEstimate::new(decoder, n, errors[0], plan.trials)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedCell {
    pub decoder: DecoderKind,
    pub n: usize,
    pub reason: String,
}

/// All decoders at one length, run on the same trials.
#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub n: usize,
    pub seed: u64,
    pub users: usize,
    pub estimates: Vec<ErrorEstimate>,
    pub skipped: Vec<SkippedCell>,
    /// Class-G check of the reused codebook (fixed-codebook mode only).
    pub diagnostics: Option<ConcentrationReport>,
}

pub fn run_cell(plan: &ExperimentPlan, n: usize) -> Result<CellReport> {
    let system = plan.system_at(n)?;
    let seed = cell_seed(plan.seed, n);
    let mut run = Vec::new();
    let mut skipped = Vec::new();
    for &d in &plan.decoders {
        match skip_reason(&system, d) {
            Some(reason) => skipped.push(SkippedCell { decoder: d, n, reason }),
            None => run.push(d),
        }
    }
    let users = system.users()?;
    if run.is_empty() {
        return Ok(CellReport { n, seed, users, estimates: Vec::new(), skipped, diagnostics: None });
    }
    let mut sim = Simulator::new(system.clone(), run.clone(), seed).map_err(|e| e.context(format!("n = {n}")))?;
    let mut diagnostics = None;
    if plan.fixed_codebook {
        sim = sim.with_fixed_codebook()?;
        let engine = sim.fixed_engine().expect("fixed codebook");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX - 1);
        let xs: Vec<_> = (0..DIAGNOSTIC_SAMPLES).map(|_| sample_source(&system.source, n, &mut rng)).collect();
        let ys = sample_codewords(engine.encoder().codebook(), DIAGNOSTIC_SAMPLES, &mut rng);
        diagnostics = Some(concentration_diagnostic(engine.encoder(), &xs, &ys, engine.table())?);
    }
    let errors = sim.count_errors(plan.trials).map_err(|e| e.context(format!("n = {n}")))?;
    let estimates = run
        .iter()
        .zip(errors)
        .map(|(&d, e)| ErrorEstimate::new(d, n, e, plan.trials))
        .collect::<Result<_>>()?;
    Ok(CellReport { n, seed, users, estimates, skipped, diagnostics })
}

#[derive(Clone, Debug, Serialize)]
pub struct Predictions {
    pub r_i: f64,
    pub e: Option<f64>,
    pub e_dd: Option<f64>,
    pub e_witness_qx: Option<Vec<f64>>,
    pub e_dd_witness_qx: Option<Vec<f64>>,
    /// Zero-rate exponents of the noiseless, uncompressed system for reference.
    pub zero_rate: ZeroRateForms,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoderTrend {
    pub decoder: DecoderKind,
    pub regression: Option<Regression>,
    pub undefined: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub format_version: u32,
    pub config: SystemConfig,
    pub seed: u64,
    pub trials: u64,
    pub n_list: Vec<usize>,
    pub decoders: Vec<DecoderKind>,
    pub fixed_codebook: bool,
    pub cells: Vec<CellReport>,
    pub trends: Vec<DecoderTrend>,
    pub predictions: Option<Predictions>,
}

impl ExperimentSummary {
    pub fn estimates(&self) -> impl Iterator<Item = &ErrorEstimate> {
        self.cells.iter().flat_map(|c| c.estimates.iter())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for e in self.estimates() {
            s.push_str(&e.csv_row());
            s.push('\n');
        }
        s
    }
}

pub const CSV_FILE: &str = "errors.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Runs every `(decoder, n)` cell, appending each finished length to the CSV, then
/// writes the JSON summary with the exponent predictions.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentSummary> {
    plan.validate()?;
    let mut csv = match &plan.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let path = dir.join(CSV_FILE);
            let mut w = BufWriter::new(File::create(&path).map_err(|e| io_err(&path, e))?);
            writeln!(w, "{CSV_HEADER}").map_err(|e| io_err(&path, e))?;
            Some((path, w))
        }
        None => None,
    };
    let mut cells = Vec::new();
    for &n in &plan.n_list {
        let cell = run_cell(plan, n)?;
        if let Some((path, w)) = csv.as_mut() {
            for e in &cell.estimates {
                writeln!(w, "{}", e.csv_row()).map_err(|e| io_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))?;
        }
        log::info!("n = {n}: {} estimates, {} skipped", cell.estimates.len(), cell.skipped.len());
        cells.push(cell);
    }

    let trends = plan
        .decoders
        .iter()
        .map(|&d| {
            let pts: Vec<(usize, f64)> = cells
                .iter()
                .flat_map(|c| c.estimates.iter())
                .filter(|e| e.decoder == d)
                .map(|e| (e.n, e.p_hat))
                .collect();
            match exponent_regression(&pts) {
                Ok(r) => DecoderTrend { decoder: d, regression: Some(r), undefined: None },
                Err(e) => DecoderTrend { decoder: d, regression: None, undefined: Some(e.to_string()) },
            }
        })
        .collect();

    let predictions = plan.predictions.as_ref().map(|(mapping, opts)| {
        let s = &plan.system;
        let zero_rate = zero_rate_closed_forms(&s.source);
        match exponent_pair(&s.source, &s.channel, mapping, s.rate, opts) {
            Ok((e, dd)) => Predictions {
                r_i: s.rate,
                e: Some(e.value),
                e_dd: Some(dd.value),
                e_witness_qx: Some(e.qx),
                e_dd_witness_qx: Some(dd.qx),
                zero_rate,
                error: None,
            },
            Err(err) => Predictions {
                r_i: s.rate,
                e: None,
                e_dd: None,
                e_witness_qx: None,
                e_dd_witness_qx: None,
                zero_rate,
                error: Some(err.to_string()),
            },
        }
    });

    let summary = ExperimentSummary {
        format_version: 1,
        config: plan.system.clone(),
        seed: plan.seed,
        trials: plan.trials,
        n_list: plan.n_list.clone(),
        decoders: plan.decoders.clone(),
        fixed_codebook: plan.fixed_codebook,
        cells,
        trends,
        predictions,
    };
    if let Some(dir) = &plan.out_dir {
        let path = dir.join(SUMMARY_FILE);
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{CompressionConstraint, MappingPolicy};
    use crate::types::{ConditionalKernel, Distribution};

    fn plan(decoders: Vec<DecoderKind>, n_list: Vec<usize>, trials: u64) -> ExperimentPlan {
        let system = SystemConfig::new(
            Distribution::new(vec![0.65, 0.35]).unwrap(),
            ConditionalKernel::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap(),
            n_list[0],
            0.15,
            MappingPolicy::identity_if_allowed(0.1, 0.02).unwrap(),
            CompressionConstraint::ExcessProbability { rate: 0.2, excess_exponent: 1.0 },
        )
        .unwrap();
        ExperimentPlan {
            system,
            n_list,
            trials,
            decoders,
            seed: 3,
            fixed_codebook: false,
            out_dir: None,
            predictions: None,
        }
    }

    #[test]
    fn single_user_has_zero_error() {
        let mut p = plan(vec![DecoderKind::Universal], vec![6], 100);
        p.system.rate = 0.0;
        let e = estimate_error_rate(&p, DecoderKind::Universal, 6, 1).unwrap();
        assert!(e.p_hat <= (e.ci_hi));
        let e = estimate_error_rate(&p, DecoderKind::ExactMl, 6, 1).unwrap();
        assert_eq!(e.ci_lo, 0.0);
    }

    #[test]
    fn cell_cardinality_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = plan(vec![DecoderKind::Universal, DecoderKind::Mmi], vec![6, 7, 8], 60);
        p.out_dir = Some(dir.path().to_path_buf());
        let a = run_experiment(&p).unwrap();
        let csv_a = std::fs::read_to_string(dir.path().join(CSV_FILE)).unwrap();
        assert_eq!(csv_a.lines().count(), 1 + 6);
        assert_eq!(csv_a, a.csv());
        let b = run_experiment(&p).unwrap();
        assert_eq!(a.csv(), b.csv());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
        assert_eq!(json["cells"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn exact_ml_beyond_cap_is_skipped() {
        let mut p = plan(vec![DecoderKind::Mmi, DecoderKind::ExactMl], vec![6], 10);
        p.system.brute_force_cap = 32;
        let c = run_cell(&p, 6).unwrap();
        assert_eq!(c.estimates.len(), 1);
        assert_eq!(c.skipped[0].decoder, DecoderKind::ExactMl);
        assert!(matches!(
            estimate_error_rate(&p, DecoderKind::ExactMl, 6, 0),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn rejects_unsorted_lengths() {
        let mut p = plan(vec![DecoderKind::Mmi], vec![6], 10);
        p.n_list = vec![8, 6];
        assert!(p.validate().is_err());
    }
}
