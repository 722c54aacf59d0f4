use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use vqid_core::decoders::DecoderKind;
use vqid_core::exponents::{
    exponent_curve, exponent_pair, identification_capacity_curve, zero_rate_closed_forms, ContinuousMapping,
    RateRule,
};
use vqid_core::harness::{
    concentration_check, kn_sweep, resolve_seed, run_experiment, ExperimentPlan, FileConfig,
};
use vqid_core::types::{enumerate_types, sample_from_type_class, type_class_size, EmpiricalType};
use vqid_core::Error;

#[derive(Parser, Debug)]
#[command(name = "vqid", version, about = "Identification with vector-quantized enrollment")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate E(R_I), E_DD(R_I), zero-rate closed forms and capacity curves.
    Exponent(ExponentArgs),
    /// Monte Carlo error rates per decoder and block length.
    Simulate(SimulateArgs),
    /// Ensemble diagnostics.
    Diagnose(DiagnoseArgs),
    /// Type-class utilities.
    Typeclass {
        #[command(subcommand)]
        op: TypeclassOp,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides IDENT_SEED and the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MappingArg {
    /// The configured policy and compression constraint.
    Policy,
    /// `Q_{Y|X} = identity` (no compression).
    Identity,
}

#[derive(Args, Debug)]
struct ExponentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "policy")]
    mapping: MappingArg,
    /// Identification rate; defaults to the configured `rate`.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated decoders: universal, mmi, approx_ml, exact_ml.
    #[arg(long, value_delimiter = ',')]
    decoders: Option<Vec<DecoderKind>>,
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated block lengths.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Draw one codebook and reuse it for every trial.
    #[arg(long)]
    fixed_codebook: bool,
    /// Skip the exponent predictions in the summary.
    #[arg(long)]
    no_predict: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiagnoseKind {
    /// K_n(z) against 1 + n ln(1/G_min) on independent ensemble draws.
    Kn,
    /// Class-G concentration of intersection and preimage sizes.
    Concentration,
    /// The type registry: one-to-one check and repairs.
    Injectivity,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(value_enum)]
    kind: DiagnoseKind,
    #[command(flatten)]
    common: Common,
    /// Block length; defaults to the configured `n`.
    #[arg(long)]
    n: Option<usize>,
    /// Ensemble draws for `kn`.
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Sampled source words for `concentration`.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Subcommand, Debug)]
enum TypeclassOp {
    /// Exact size of the type class with the given counts.
    Count {
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<u32>,
    },
    /// Every type of length n over k symbols with its class size.
    Enumerate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
    /// Uniform draws from a type class.
    Sample {
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<u32>,
        #[arg(long, default_value_t = 1)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Path) -> Result<FileConfig> {
    // An unreadable config file is a configuration error, not an I/O failure of a run.
    FileConfig::load(path)
        .map_err(|e| match e {
            Error::Io(m) => Error::Format(m),
            e => e,
        })
        .context("loading configuration")
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>, file: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(file);
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn exponent(args: ExponentArgs) -> Result<()> {
    let cfg = load_config(&args.common.config)?;
    let mapping = match args.mapping {
        MappingArg::Policy => cfg.continuous_mapping()?,
        MappingArg::Identity => ContinuousMapping::Identity,
    };
    let mut opts = cfg.exponents.options.clone();
    if let Some(s) = args.common.seed {
        opts.seed = s;
    }
    let r_i = args.rate.unwrap_or(cfg.rate);
    if r_i.is_nan() || r_i < 0.0 {
        return Err(Error::InvalidParameter(format!("rate = {r_i}")).into());
    }
    let (e, dd) = exponent_pair(&cfg.source, &cfg.channel, &mapping, r_i, &opts)?;
    let curve = if cfg.exponents.rates.is_empty() {
        None
    } else {
        Some(exponent_curve(&cfg.source, &cfg.channel, &mapping, &cfg.exponents.rates, RateRule::Ensemble, &opts)?)
    };
    let capacity = if cfg.exponents.capacity_rates.is_empty() {
        None
    } else {
        Some(identification_capacity_curve(&cfg.source, &cfg.channel, cfg.k_y(), &cfg.exponents.capacity_rates, &opts)?)
    };
    let report = json!({
        "r_i": r_i,
        "mapping": format!("{:?}", args.mapping).to_lowercase(),
        "e": e.value,
        "e_dd": dd.value,
        "gap": e.value - dd.value,
        "zero_rate": zero_rate_closed_forms(&cfg.source),
        "exponent": e,
        "exponent_dd": dd,
        "curve": curve,
        "capacity": capacity,
    });
    emit(&report, args.common.out.as_deref(), "exponent.json")
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load_config(&args.common.config)?;
    if let Some(d) = args.decoders {
        cfg.decoders = d;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(n) = args.n {
        cfg.n_list = n;
    }
    cfg.fixed_codebook |= args.fixed_codebook;
    if args.no_predict {
        cfg.exponents.predict = false;
    }
    cfg.validate()?;
    let seed = resolve_seed(cfg.seed, args.common.seed)?;
    let mut plan = ExperimentPlan::from_config(&cfg, seed)?;
    plan.out_dir = args.common.out.clone();
    let summary = run_experiment(&plan)?;
    print!("{}", summary.csv());
    for c in &summary.cells {
        for s in &c.skipped {
            eprintln!("skipped {} at n = {}: {}", s.decoder, s.n, s.reason);
        }
    }
    if let Some(p) = &summary.predictions {
        match (p.e, p.e_dd) {
            (Some(e), Some(dd)) => eprintln!("predicted E({}) = {e:.6}, E_DD = {dd:.6}", p.r_i),
            _ => eprintln!("exponent prediction failed: {}", p.error.as_deref().unwrap_or("unknown")),
        }
    }
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let cfg = load_config(&args.common.config)?;
    let system = cfg.system(args.n.unwrap_or(cfg.n))?;
    let seed = resolve_seed(cfg.seed, args.common.seed)?;
    let out = args.common.out.as_deref();
    match args.kind {
        DiagnoseKind::Kn => {
            let sweep = kn_sweep(&system, args.draws, seed)?;
            emit(&sweep, out, "kn.json")?;
            if sweep.violations > 0 {
                bail!("K_n bound violated on {} of {} draws", sweep.violations, sweep.draws);
            }
        }
        DiagnoseKind::Concentration => {
            let report = concentration_check(&system, args.samples, seed)?;
            emit(&report, out, "concentration.json")?;
        }
        DiagnoseKind::Injectivity => {
            let reg = system.build_registry()?;
            let report = json!({
                "n": reg.n(),
                "injective": reg.is_injective(),
                "types": reg.entries().len(),
                "identity_types": reg.entries().iter().filter(|e| e.identity).count(),
                "repairs": reg.repairs(),
                "notes": reg.notes(),
            });
            emit(&report, out, "injectivity.json")?;
        }
    }
    Ok(())
}

fn typeclass(op: TypeclassOp) -> Result<()> {
    match op {
        TypeclassOp::Count { counts } => {
            let t = EmpiricalType::new(counts)?;
            let size = type_class_size(&t);
            println!("{}", json!({ "counts": t.counts(), "size": size.exact.to_string(), "ln_size": size.ln }));
        }
        TypeclassOp::Enumerate { n, k } => {
            for t in enumerate_types(n, k)? {
                let size = type_class_size(&t);
                println!("{}", json!({ "counts": t.counts(), "size": size.exact.to_string() }));
            }
        }
        TypeclassOp::Sample { counts, draws, seed } => {
            let t = EmpiricalType::new(counts)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..draws {
                let s: String = sample_from_type_class(&t, &mut rng).iter().map(|c| c.to_string()).collect();
                println!("{s}");
            }
        }
    }
    Ok(())
}

/// 2: configuration, 3: infeasibility, 4: cap exceeded, 1: anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else { return 1 };
    match e {
        Error::InvalidDistribution(_) | Error::DimensionMismatch(_) | Error::InvalidParameter(_) | Error::Format(_) => 2,
        Error::Infeasible(_)
        | Error::InjectivityRepair(_)
        | Error::NotPositive(_)
        | Error::UnregisteredType(_)
        | Error::DecodeFailure(_) => 3,
        Error::CapExceeded(_) => 4,
        Error::Io(_) | Error::NonConvergence { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let res = match cli.command {
        Command::Exponent(a) => exponent(a),
        Command::Simulate(a) => simulate(a),
        Command::Diagnose(a) => diagnose(a),
        Command::Typeclass { op } => typeclass(op),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
