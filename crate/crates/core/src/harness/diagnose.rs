use rand::RngCore;
use serde::Serialize;

use super::kn::{kn_diagnostic, KnReport};
use crate::decoders::DecoderContext;
use crate::ensemble::{concentration_diagnostic, sample_codewords, Codebook, ConcentrationReport, LossyEncoder};
use crate::error::Result;
use crate::simulation::{sample_source, trial_rng, ChannelSampler, SystemConfig};

#[derive(Clone, Debug, Serialize)]
pub struct KnSweep {
    pub draws: usize,
    pub violations: usize,
    /// Largest `K_n / bound` over the draws.
    pub max_ratio: f64,
    pub reports: Vec<KnReport>,
}

/// `K_n` on independent ensemble draws: each draw samples a codebook, enrolls `M`
/// users, transmits one of them and evaluates `K_n(z)`.
pub fn kn_sweep(system: &SystemConfig, draws: usize, seed: u64) -> Result<KnSweep> {
    let registry = system.build_registry()?;
    let users = system.users()?;
    let sampler = ChannelSampler::new(&system.channel);
    let mut reports = Vec::with_capacity(draws);
    for d in 0..draws {
        let mut rng = trial_rng(seed, d as u64);
        let cb = Codebook::sample(registry.clone(), &mut rng, system.max_words_per_type)?;
        let enc = LossyEncoder::new(cb);
        let table = enc.tabulate(system.brute_force_cap)?;
        let xs: Vec<_> = (0..users).map(|_| sample_source(&system.source, system.n, &mut rng)).collect();
        let rows = xs.iter().map(|x| enc.encode(x)).collect::<Result<Vec<_>>>()?;
        let m = (rng.next_u64() % users as u64) as usize;
        let z = sampler.transmit(&xs[m], &mut rng);
        let ctx = DecoderContext { codebook: enc.codebook(), source: &system.source, channel: &system.channel };
        reports.push(kn_diagnostic(&rows, &z, &ctx, &table, rng.next_u64())?);
    }
    Ok(KnSweep {
        draws,
        violations: reports.iter().filter(|r| !r.holds).count(),
        max_ratio: reports.iter().map(|r| r.k_n / r.bound).fold(0.0, f64::max),
        reports,
    })
}

/// Class-G concentration of one codebook draw on `samples` source words (and, in the
/// brute-force regime, on `samples` codewords).
pub fn concentration_check(system: &SystemConfig, samples: usize, seed: u64) -> Result<ConcentrationReport> {
    let registry = system.build_registry()?;
    let mut rng = trial_rng(seed, 0);
    let cb = Codebook::sample(registry, &mut rng, system.max_words_per_type)?;
    let enc = LossyEncoder::new(cb);
    let words = (system.source.len() as f64).powi(system.n as i32);
    let table = if words <= system.brute_force_cap as f64 { Some(enc.tabulate(system.brute_force_cap)?) } else { None };
    let xs: Vec<_> = (0..samples).map(|_| sample_source(&system.source, system.n, &mut rng)).collect();
    let ys = sample_codewords(enc.codebook(), samples, &mut rng);
    concentration_diagnostic(&enc, &xs, &ys, table.as_ref())
}
