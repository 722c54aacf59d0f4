//! Memoryless source and channel sampling and the enrollment/identification trial.
//!
//! A trial draws `M` source words, enrolls their encodings, picks a user uniformly,
//! passes that user's original source word through the channel, and asks every
//! requested decoder for the index. Indices are zero-based.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoders::{
    decode_approx_ml, decode_exact_ml, decode_mmi, decode_universal, tie_rank, DecoderContext,
    DecoderKind, GammaMemo, MatchScope,
};
use crate::ensemble::{
    build_registry, Codebook, CompressionConstraint, Encoded, EncoderTable, EncodingKind,
    LossyEncoder, MappingPolicy, SelectionContext, TypeRegistry, DEFAULT_BRUTE_FORCE_CAP,
    DEFAULT_MAX_WORDS_PER_TYPE,
};
use crate::error::{Error, Result};
use crate::exponents::DEFAULT_INNER_TOL;
use crate::types::{ConditionalKernel, Distribution, Symbol};

/// Default cap on the number of enrolled users `M`.
pub const DEFAULT_MAX_USERS: u64 = 1 << 20;

/// Everything that defines the identification system.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemConfig {
    pub source: Distribution,
    pub channel: ConditionalKernel,
    pub n: usize,
    /// Identification rate `R_I` in nats per symbol.
    pub rate: f64,
    pub k_y: usize,
    pub policy: MappingPolicy,
    pub constraint: CompressionConstraint,
    pub max_users: u64,
    pub max_words_per_type: u64,
    pub brute_force_cap: u64,
    pub match_scope: MatchScope,
    pub inner_tol: f64,
}

impl SystemConfig {
    pub fn new(
        source: Distribution,
        channel: ConditionalKernel,
        n: usize,
        rate: f64,
        policy: MappingPolicy,
        constraint: CompressionConstraint,
    ) -> Result<Self> {
        let k_y = source.len();
        let cfg = Self {
            source,
            channel,
            n,
            rate,
            k_y,
            policy,
            constraint,
            max_users: DEFAULT_MAX_USERS,
            max_words_per_type: DEFAULT_MAX_WORDS_PER_TYPE,
            brute_force_cap: DEFAULT_BRUTE_FORCE_CAP,
            match_scope: MatchScope::default(),
            inner_tol: DEFAULT_INNER_TOL,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel.k_in() != self.source.len() {
            return Err(Error::DimensionMismatch("channel input alphabet differs from the source".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if !(self.rate >= 0.0) || !self.rate.is_finite() {
            return Err(Error::InvalidParameter(format!("R_I = {}", self.rate)));
        }
        if self.k_y == 0 {
            return Err(Error::InvalidParameter("|Y| must be positive".into()));
        }
        self.policy.validate()?;
        self.constraint.validate()?;
        self.users().map(|_| ())
    }

    /// `M = ceil(exp(n R_I))`, at least 1.
    pub fn users(&self) -> Result<usize> {
        let m = ((self.n as f64 * self.rate).exp() * (1.0 - 1e-12)).ceil().max(1.0);
        if m > self.max_users as f64 {
            return Err(Error::CapExceeded(format!(
                "M = {m} enrolled users exceeds the cap {}",
                self.max_users
            )));
        }
        Ok(m as usize)
    }

    /// Every `W(z|x) > 0`.
    pub fn channel_positive(&self) -> bool {
        self.channel.is_strictly_positive()
    }

    pub fn selection_context(&self) -> SelectionContext<'_> {
        SelectionContext {
            source: &self.source,
            k_y: self.k_y,
            policy: &self.policy,
            constraint: &self.constraint,
            channel: Some(&self.channel),
        }
    }

    pub fn build_registry(&self) -> Result<Arc<TypeRegistry>> {
        Ok(Arc::new(build_registry(self.n, &self.selection_context())?))
    }
}

/// `n` i.i.d. draws from `G`.
pub fn sample_source<R: Rng + ?Sized>(source: &Distribution, n: usize, rng: &mut R) -> Vec<Symbol> {
    let d = WeightedIndex::new(source.probs()).expect("validated distribution");
    (0..n).map(|_| d.sample(rng) as Symbol).collect()
}

/// Per-row samplers of a channel.
#[derive(Clone, Debug)]
pub struct ChannelSampler {
    rows: Vec<WeightedIndex<f64>>,
}

impl ChannelSampler {
    pub fn new(channel: &ConditionalKernel) -> Self {
        let rows = channel.rows().map(|r| WeightedIndex::new(r).expect("validated kernel")).collect();
        Self { rows }
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x: &[Symbol], rng: &mut R) -> Vec<Symbol> {
        x.iter().map(|&a| self.rows[a as usize].sample(rng) as Symbol).collect()
    }
}

/// Componentwise independent channel use.
pub fn transmit<R: Rng + ?Sized>(channel: &ConditionalKernel, x: &[Symbol], rng: &mut R) -> Vec<Symbol> {
    ChannelSampler::new(channel).transmit(x, rng)
}

/// `ln G^n(x)`.
pub fn ln_source_prob(source: &Distribution, x: &[Symbol]) -> f64 {
    x.iter().map(|&a| source.probs()[a as usize].ln()).sum()
}

/// `ln W^n(z|x)`.
pub fn ln_channel_prob(channel: &ConditionalKernel, x: &[Symbol], z: &[Symbol]) -> f64 {
    x.iter().zip(z).map(|(&a, &c)| channel.get(a as usize, c as usize).ln()).sum()
}

/// RNG of trial `trial` under `master`: an independent ChaCha stream per trial.
pub fn trial_rng(master: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng
}

/// One decoder's answer in a trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecoderOutcome {
    pub decoder: DecoderKind,
    pub index: usize,
    pub correct: bool,
    pub tie: bool,
    /// The chosen candidate's metric (decoder orientation).
    pub metric: Option<f64>,
    /// Set when no candidate was feasible and the index is a keyed uniform guess.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub users: usize,
    pub true_index: usize,
    /// The original source word that was sent through the channel.
    pub source_word: Vec<Symbol>,
    /// Its enrolled encoding.
    pub enrolled_word: Vec<Symbol>,
    pub query: Vec<Symbol>,
    /// The true user's encoding was the error word.
    pub error_word_hit: bool,
    /// Number of enrolled rows that are error words.
    pub error_rows: usize,
    pub outcomes: Vec<DecoderOutcome>,
}

impl TrialOutcome {
    pub fn outcome(&self, d: DecoderKind) -> Option<&DecoderOutcome> {
        self.outcomes.iter().find(|o| o.decoder == d)
    }
}

/// Encoder state shared by the trials that use one codebook.
pub struct TrialEngine {
    encoder: LossyEncoder,
    table: Option<EncoderTable>,
    memo: Arc<GammaMemo>,
}

impl TrialEngine {
    /// Tabulates the encoder when exact ML is requested.
    pub fn new(cfg: &SystemConfig, codebook: Codebook, decoders: &[DecoderKind], memo: Arc<GammaMemo>) -> Result<Self> {
        if codebook.n() != cfg.n {
            return Err(Error::DimensionMismatch("codebook length differs from the config".into()));
        }
        let encoder = LossyEncoder::new(codebook);
        let table = if decoders.contains(&DecoderKind::ExactMl) {
            Some(encoder.tabulate(cfg.brute_force_cap)?)
        } else {
            None
        };
        Ok(Self { encoder, table, memo })
    }

    pub fn encoder(&self) -> &LossyEncoder {
        &self.encoder
    }

    pub fn table(&self) -> Option<&EncoderTable> {
        self.table.as_ref()
    }
}

/// Keyed uniform choice among all `users` candidates.
fn uniform_guess(users: usize, z: &[Symbol], tie_seed: u64) -> usize {
    (0..users).min_by_key(|&m| (tie_rank(tie_seed, m, z), m)).unwrap_or(0)
}

/// Runs one enrollment/identification round with an explicit RNG and tie-break key.
pub fn run_trial<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    engine: &TrialEngine,
    decoders: &[DecoderKind],
    rng: &mut R,
    tie_seed: u64,
    trial: u64,
) -> Result<TrialOutcome> {
    let users = cfg.users()?;
    let sampler = ChannelSampler::new(&cfg.channel);
    let xs: Vec<Vec<Symbol>> = (0..users).map(|_| sample_source(&cfg.source, cfg.n, rng)).collect();
    let rows: Vec<Encoded> = xs
        .iter()
        .map(|x| engine.encoder.encode(x))
        .collect::<Result<_>>()
        .map_err(|e| e.context(format!("trial {trial}: enrollment")))?;
    let m = rng.random_range(0..users);
    let z = sampler.transmit(&xs[m], rng);
    let ctx = DecoderContext { codebook: engine.encoder.codebook(), source: &cfg.source, channel: &cfg.channel };
    let mut outcomes = Vec::with_capacity(decoders.len());
    for &d in decoders {
        let res = match d {
            DecoderKind::Universal => decode_universal(&z, &rows, &ctx, cfg.match_scope),
            DecoderKind::Mmi => decode_mmi(&z, &rows, cfg.k_y, cfg.channel.k_out()),
            DecoderKind::ApproxMl => decode_approx_ml(&z, &rows, &ctx, &engine.memo, cfg.inner_tol),
            DecoderKind::ExactMl => {
                let table = engine.table.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("exact ML requested without a tabulated encoder".into())
                })?;
                decode_exact_ml(&z, &rows, &ctx, table, tie_seed)
            }
        };
        let outcome = match res {
            Ok(dec) => DecoderOutcome {
                decoder: d,
                index: dec.index,
                correct: dec.index == m,
                tie: dec.tie,
                metric: Some(dec.metrics[dec.index]),
                failure: None,
            },
            Err(Error::DecodeFailure(msg)) => {
                let guess = uniform_guess(users, &z, tie_seed);
                DecoderOutcome {
                    decoder: d,
                    index: guess,
                    correct: guess == m,
                    tie: users > 1,
                    metric: None,
                    failure: Some(msg),
                }
            }
            Err(e) => return Err(e.context(format!("trial {trial}: decoder {d}"))),
        };
        outcomes.push(outcome);
    }
    Ok(TrialOutcome {
        trial,
        users,
        true_index: m,
        source_word: xs[m].clone(),
        enrolled_word: rows[m].word.clone(),
        query: z,
        error_word_hit: rows[m].kind == EncodingKind::ErrorWord,
        error_rows: rows.iter().filter(|r| r.kind == EncodingKind::ErrorWord).count(),
        outcomes,
    })
}

/// Trial-loop driver: fresh codebook per trial (ensemble average) or one fixed draw.
pub struct Simulator {
    cfg: SystemConfig,
    registry: Arc<TypeRegistry>,
    decoders: Vec<DecoderKind>,
    memo: Arc<GammaMemo>,
    fixed: Option<TrialEngine>,
    master_seed: u64,
}

impl Simulator {
    pub fn new(cfg: SystemConfig, decoders: Vec<DecoderKind>, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        if decoders.contains(&DecoderKind::ApproxMl) && !cfg.channel_positive() {
            return Err(Error::NotPositive(
                "approx_ml needs W(z|x) > 0 for every (x, z); drop it from the decoder list".into(),
            ));
        }
        let registry = cfg.build_registry()?;
        Ok(Self { cfg, registry, decoders, memo: Arc::new(GammaMemo::new()), fixed: None, master_seed })
    }

    /// Draws one codebook from the master seed and reuses it for every trial.
    pub fn with_fixed_codebook(mut self) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(u64::MAX);
        let cb = Codebook::sample(self.registry.clone(), &mut rng, self.cfg.max_words_per_type)?;
        self.fixed = Some(TrialEngine::new(&self.cfg, cb, &self.decoders, self.memo.clone())?);
        Ok(self)
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn registry(&self) -> &Arc<TypeRegistry> {
        &self.registry
    }

    pub fn decoders(&self) -> &[DecoderKind] {
        &self.decoders
    }

    pub fn fixed_engine(&self) -> Option<&TrialEngine> {
        self.fixed.as_ref()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Trial `t`; depends only on `(master_seed, t)` and the codebook mode.
    pub fn trial(&self, t: u64) -> Result<TrialOutcome> {
        let mut rng = trial_rng(self.master_seed, t);
        match &self.fixed {
            Some(engine) => {
                let tie_seed = rng.next_u64();
                run_trial(&self.cfg, engine, &self.decoders, &mut rng, tie_seed, t)
            }
            None => {
                let cb = Codebook::sample(self.registry.clone(), &mut rng, self.cfg.max_words_per_type)?;
                let engine = TrialEngine::new(&self.cfg, cb, &self.decoders, self.memo.clone())?;
                let tie_seed = rng.next_u64();
                run_trial(&self.cfg, &engine, &self.decoders, &mut rng, tie_seed, t)
            }
        }
    }

    /// Trials `0..count` in parallel, returned in trial order.
    pub fn run(&self, count: u64) -> Result<Vec<TrialOutcome>> {
        (0..count).into_par_iter().map(|t| self.trial(t)).collect()
    }

    /// Per-decoder error counts over trials `0..count`, without keeping the records.
    pub fn count_errors(&self, count: u64) -> Result<Vec<u64>> {
        let k = self.decoders.len();
        (0..count)
            .into_par_iter()
            .map(|t| {
                self.trial(t).map(|o| o.outcomes.iter().map(|d| (!d.correct) as u64).collect::<Vec<_>>())
            })
            .try_reduce(|| vec![0; k], |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()))
    }
}
