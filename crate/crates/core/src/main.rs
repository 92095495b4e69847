use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use thermo_diffuse_core::conditioning::{count_parameters, EncoderKind, InitScheme};
use thermo_diffuse_core::harness::{
    self, interface_overhead, DataKind, DeficitOptions, EnergyModel, ExperimentReport,
    GenDataOptions, HarnessConfig, InterfaceOptions, LangevinOptions, ProductionOptions,
    SkipSweepOptions, TrainSweepOptions, DEFAULT_LAMBDA_MAX,
};
use thermo_diffuse_core::rng::SEED_ENV;
use thermo_diffuse_core::Error;

#[derive(Parser, Debug)]
#[command(name = "thermo-diffuse", version, about = "Coupled Langevin substrate experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Units per block (default 128; 4 for langevin-check).
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Skip-coupling rank (default 16; restricts skip-sweep to one rank).
    #[arg(long, global = true)]
    rank: Option<usize>,
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Target samples (default 64; pairs written by gen-data default 320).
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true, default_value_t = 0.1)]
    j2: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    kbt: f64,
    #[arg(long, global = true, default_value_t = 0.0)]
    j4: f64,
    /// Largest Gram-coupling eigenvalue of generated weights; 0 keeps raw N(0, 1/D).
    #[arg(long, global = true, default_value_t = DEFAULT_LAMBDA_MAX)]
    lambda_max: f64,
    /// TDIF manifest of trained weights/activations.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Report directory (gen-data: data directory, default ./data).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Run independent grid cells concurrently.
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncoderArg {
    Linear,
    Mlp,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Spectral,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Random,
    Correlated,
    Spectral,
}

#[derive(Args, Debug)]
struct InterfaceArgs {
    #[arg(long, default_value_t = 256)]
    n_train: usize,
    #[arg(long, default_value_t = 64)]
    n_test: usize,
    /// Latent rank of synthetic activations.
    #[arg(long, default_value_t = 4)]
    activation_rank: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Spectral)]
    init: InitArg,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    max_iterations: usize,
    /// Add transfer-network biases (16 + D parameters).
    #[arg(long)]
    use_bias: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Oracle recovery and decoder shift per skip rank.
    SkipSweep {
        #[arg(long, value_delimiter = ',')]
        ranks: Option<Vec<usize>>,
    },
    /// Naive-versus-oracle bias deficit.
    Deficit {
        #[arg(long, default_value_t = 6.0)]
        decades: f64,
    },
    /// Conditioning sweep over bottleneck sizes and encoder kinds.
    TrainInterface {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
        ks: Vec<usize>,
        #[arg(long, value_enum, default_value_t = EncoderArg::Both)]
        encoder: EncoderArg,
        #[command(flatten)]
        iface: InterfaceArgs,
    },
    /// Oracle, skip-only and full-pipeline conditioning regimes.
    ProductionTest {
        /// Bottleneck size.
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, value_enum, default_value_t = EncoderArg::Linear)]
        encoder: EncoderArg,
        #[command(flatten)]
        iface: InterfaceArgs,
        /// Also write the trained interface as TDIF tensors plus a manifest.
        #[arg(long)]
        save_interface: Option<PathBuf>,
    },
    /// Langevin moments against the exact equilibrium, and mixing in D.
    LangevinCheck {
        #[arg(long, default_value_t = 1 << 20)]
        n_samples: usize,
        #[arg(long, default_value_t = 64)]
        replicas: usize,
        #[arg(long, default_value_t = 1.0)]
        mobility: f64,
        /// dt·μ·λ_max(M).
        #[arg(long, default_value_t = 0.01)]
        step_fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        mixing_dims: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        mixing_trials: usize,
        #[arg(long)]
        no_mixing: bool,
    },
    /// Energy-accounting chain.
    Energy {
        /// Defaults to --dim, else 128.
        #[arg(long)]
        n_units: Option<usize>,
        #[arg(long, default_value_t = 400)]
        n_steps: usize,
        #[arg(long, default_value_t = 2.0)]
        units_multiplier: f64,
        #[arg(long, default_value_t = 4.141e-21)]
        kbt_joules: f64,
        #[arg(long, default_value_t = 8e-3)]
        gpu_joules: f64,
        #[arg(long, default_value_t = 1e3)]
        adc_dac_derating: f64,
        #[arg(long, default_value_t = 1e3)]
        extra_derating: f64,
        /// Defaults to the (k=4, D=64) interface size over the host network MACs.
        #[arg(long)]
        overhead_fraction: Option<f64>,
    },
    /// Write synthetic weights and activations as TDIF plus a manifest.
    GenData {
        #[arg(long, value_enum, default_value_t = KindArg::Correlated)]
        kind: KindArg,
        #[arg(long, default_value_t = 4)]
        activation_rank: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 6.0)]
        decades: f64,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn interface_options(a: &InterfaceArgs, rank: Option<usize>) -> InterfaceOptions {
    InterfaceOptions {
        skip_rank: rank.unwrap_or(16),
        n_train: a.n_train,
        n_test: a.n_test,
        activation_rank: a.activation_rank,
        noise: a.noise,
        init: match a.init {
            InitArg::Spectral => InitScheme::Spectral,
            InitArg::Random => InitScheme::Random,
        },
        learning_rate: a.lr,
        max_iterations: a.max_iterations,
        use_bias: a.use_bias,
    }
}

fn emit(report: &ExperimentReport, g: &Global) -> Result<(), Failure> {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    match g.format {
        Format::Csv => print!("{}", report.table.to_csv()?),
        Format::Json => println!("{}", report.to_json()?),
    }
    if let Some(out) = &g.out {
        let dir = report.write_to(out)?;
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(m) = &g.manifest {
        if !m.is_file() {
            return Err(Failure::Usage(format!("manifest not found: {}", m.display())));
        }
    }
    let default_dim = match cli.command {
        Command::LangevinCheck { .. } => 4,
        _ => 128,
    };
    let mut h = HarnessConfig {
        dim: g.dim.unwrap_or(default_dim),
        seed: g.seed,
        samples: g.samples.unwrap_or(64),
        j2: g.j2,
        kbt: g.kbt,
        j4: g.j4,
        lambda_max: g.lambda_max,
        manifest: g.manifest.clone(),
        parallel: g.parallel,
    };
    let report = match &cli.command {
        Command::SkipSweep { ranks } => {
            let ranks = match (ranks, g.rank) {
                (Some(r), _) => r.clone(),
                (None, Some(k)) => vec![k],
                (None, None) => SkipSweepOptions::default().ranks,
            };
            harness::run_experiment_a(&h, &SkipSweepOptions { ranks })?
        }
        Command::Deficit { decades } => harness::run_deficit(&h, &DeficitOptions { decades: *decades })?,
        Command::TrainInterface { ks, encoder, iface } => {
            let kinds = match encoder {
                EncoderArg::Linear => vec![EncoderKind::Linear],
                EncoderArg::Mlp => vec![EncoderKind::Mlp],
                EncoderArg::Both => vec![EncoderKind::Linear, EncoderKind::Mlp],
            };
            let opts = TrainSweepOptions {
                ks: ks.clone(),
                kinds,
                interface: interface_options(iface, g.rank),
            };
            harness::run_experiment_b(&h, &opts)?
        }
        Command::ProductionTest {
            k,
            encoder,
            iface,
            save_interface,
        } => {
            let encoder = match encoder {
                EncoderArg::Linear => EncoderKind::Linear,
                EncoderArg::Mlp => EncoderKind::Mlp,
                EncoderArg::Both => {
                    return Err(Failure::Usage("production-test takes --encoder linear or mlp".into()))
                }
            };
            let opts = ProductionOptions {
                k: *k,
                encoder,
                interface: interface_options(iface, g.rank),
            };
            let (report, trained) = harness::run_experiment_c(&h, &opts)?;
            if let Some(dir) = save_interface {
                let path = harness::save_interface(&trained, dir)?;
                eprintln!("wrote {}", path.display());
            }
            report
        }
        Command::LangevinCheck {
            n_samples,
            replicas,
            mobility,
            step_fraction,
            mixing_dims,
            mixing_trials,
            no_mixing,
        } => {
            let opts = LangevinOptions {
                n_samples: *n_samples,
                n_replicas: *replicas,
                mobility: *mobility,
                step_fraction: *step_fraction,
                skip_rank: g.rank.unwrap_or(2),
                mixing_dims: if *no_mixing { Vec::new() } else { mixing_dims.clone() },
                mixing_trials: *mixing_trials,
                ..LangevinOptions::default()
            };
            harness::run_langevin_check(&h, &opts)?
        }
        Command::Energy {
            n_units,
            n_steps,
            units_multiplier,
            kbt_joules,
            gpu_joules,
            adc_dac_derating,
            extra_derating,
            overhead_fraction,
        } => {
            let model = EnergyModel {
                kbt_joules: *kbt_joules,
                n_units: n_units.or(g.dim).unwrap_or(128),
                n_steps: *n_steps,
                units_multiplier: *units_multiplier,
                gpu_joules_per_step: *gpu_joules,
                adc_dac_derating: *adc_dac_derating,
                extra_system_derating: *extra_derating,
                interface_overhead_fraction: overhead_fraction
                    .unwrap_or_else(|| interface_overhead(count_parameters(4, 64, false))),
            };
            harness::run_energy(&model)?
        }
        Command::GenData {
            kind,
            activation_rank,
            noise,
            decades,
        } => {
            h.samples = g.samples.unwrap_or(320);
            let opts = GenDataOptions {
                kind: match kind {
                    KindArg::Random => DataKind::Random,
                    KindArg::Correlated => DataKind::Correlated,
                    KindArg::Spectral => DataKind::Spectral,
                },
                out: g.out.clone().unwrap_or_else(|| PathBuf::from("data")),
                activation_rank: *activation_rank,
                noise: *noise,
                decades: *decades,
            };
            let report = harness::gen_data(&h, &opts)?;
            match g.format {
                Format::Csv => print!("{}", report.table.to_csv()?),
                Format::Json => println!("{}", report.to_json()?),
            }
            return Ok(());
        }
    };
    emit(&report, g)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
