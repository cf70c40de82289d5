//! `hsf`: fragmentation experiments on the detuned Rydberg Ising chain.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hsf_core::dynamics::Propagator;
use hsf_core::model::EffectiveMode;
use hsf_core::{RegimeTag, RootTemplate};

use config::{
    ConfigError, Experiment, ExperimentConfig, FragmentConfig, FssConfig, GridKind, InteractionSpec, ModelConfig,
    Observable, OutputConfig, QuenchConfig, RootSpec, SectorsConfig, SpectrumConfig, SweepConfig, TimeGrid, TimeUnit,
    WindowSpec, OUT_DIR_ENV,
};
use run::Failure;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "hsf", version, about = "Hilbert-space fragmentation in detuned Rydberg chains")]
struct Cli {
    /// Output directory when the config does not set one.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    /// Prefix for output file names.
    #[arg(long, global = true)]
    prefix: Option<String>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Validate and print the resolved config without running.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run { config: PathBuf },
    /// Symmetry-sector partition of the chain.
    Sectors {
        #[arg(long = "L", visible_alias = "length")]
        length: usize,
        #[arg(long, default_value = "nn")]
        regime: RegimeTag,
        /// Decompose every sector into Krylov fragments.
        #[arg(long)]
        fragments: bool,
    },
    /// Krylov fragment generated by a root state.
    Fragment {
        #[command(flatten)]
        root: RootArgs,
        #[arg(long, default_value = "nn")]
        regime: RegimeTag,
        #[arg(long)]
        cap: Option<usize>,
        /// Omit basis and edges from the JSON dump.
        #[arg(long)]
        summary_only: bool,
    },
    /// Eigenvalues, gap ratios and eigenstate entanglement of a fragment.
    Spectrum {
        #[command(flatten)]
        root: RootArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// `full` or `mid:N`.
        #[arg(long, default_value = "full")]
        window: WindowSpec,
        #[arg(long)]
        inversion: bool,
        #[arg(long)]
        entropy: bool,
        #[arg(long)]
        cut: Option<usize>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
    /// Quench dynamics from a product state.
    Quench {
        #[command(flatten)]
        root: RootArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "log")]
        grid: GridKind,
        #[arg(long, default_value_t = 0.1)]
        t_start: f64,
        #[arg(long, default_value_t = 40.0)]
        t_stop: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, value_enum, default_value = "jp")]
        unit: TimeUnit,
        #[arg(long, value_enum, default_value = "auto")]
        propagator: PropagatorArg,
        #[arg(long)]
        cut: Option<usize>,
        /// Also evolve under the full driven Ising Hamiltonian.
        #[arg(long)]
        compare_exact: bool,
        #[arg(long, default_value_t = 3)]
        exact_cutoff: usize,
    },
    /// Disorder-averaged diagnostics over lengths and position-disorder widths.
    DisorderSweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "z3-hole")]
        template: RootTemplate,
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        realizations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        cutoff: usize,
        #[arg(long)]
        no_r: bool,
        #[arg(long)]
        no_entropy: bool,
    },
    /// Finite-size scaling collapse of a stored sweep.
    Fss {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "entropy-variance")]
        observable: Observable,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.001, 0.05])]
        critical_range: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.3, 3.0])]
        nu_range: Vec<f64>,
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long, default_value_t = 4)]
        refinements: usize,
        /// Collapse raw values instead of values per site.
        #[arg(long)]
        no_per_site: bool,
    },
}

#[derive(Args)]
struct RootArgs {
    /// Root bitstring, site 1 first.
    #[arg(long, visible_alias = "init", conflicts_with = "root_template")]
    root: Option<String>,
    /// cluster-block, cluster-block-odd, neel3-magnon or z3-hole.
    #[arg(long)]
    root_template: Option<RootTemplate>,
    #[arg(long = "L", visible_alias = "length")]
    length: Option<usize>,
}

impl From<RootArgs> for RootSpec {
    fn from(a: RootArgs) -> Self {
        RootSpec { bits: a.root, template: a.root_template, length: a.length }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 5.0)]
    delta_over_omega: f64,
    #[arg(long, default_value_t = 0.5)]
    v_over_delta: f64,
    /// `nn`, `vdw[:cutoff]` or `range:v1,v2,...` in units of V.
    #[arg(long, default_value = "nn")]
    interaction: InteractionSpec,
    /// Inferred from the interaction when absent.
    #[arg(long)]
    regime: Option<RegimeTag>,
    #[arg(long, value_enum, default_value = "numeric-sw")]
    effective: EffectiveArg,
}

impl From<ModelArgs> for ModelConfig {
    fn from(a: ModelArgs) -> Self {
        ModelConfig {
            omega: a.omega,
            delta_over_omega: a.delta_over_omega,
            v_over_delta: a.v_over_delta,
            interaction: a.interaction,
            regime: a.regime,
            effective: match a.effective {
                EffectiveArg::Analytic => EffectiveMode::Analytic,
                EffectiveArg::NumericSw => EffectiveMode::NumericSw,
            },
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EffectiveArg {
    Analytic,
    NumericSw,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropagatorArg {
    Auto,
    Eigen,
    Krylov,
}

fn regime_only(regime: RegimeTag) -> ModelConfig {
    ModelConfig { regime: Some(regime), ..ModelConfig::default() }
}

fn build_config(command: Command) -> Result<ExperimentConfig, ConfigError> {
    let (experiment, model) = match command {
        Command::Run { config } => return ExperimentConfig::load(&config),
        Command::Sectors { length, regime, fragments } => {
            (Experiment::Sectors(SectorsConfig { length, fragments }), regime_only(regime))
        }
        Command::Fragment { root, regime, cap, summary_only } => (
            Experiment::Fragment(FragmentConfig { root: root.into(), cap, dump_basis: !summary_only }),
            regime_only(regime),
        ),
        Command::Spectrum { root, model, window, inversion, entropy, cut, bins } => (
            Experiment::Spectrum(SpectrumConfig { root: root.into(), window, inversion, entropy, cut, bins }),
            model.into(),
        ),
        Command::Quench {
            root,
            model,
            grid,
            t_start,
            t_stop,
            points,
            unit,
            propagator,
            cut,
            compare_exact,
            exact_cutoff,
        } => (
            Experiment::Quench(QuenchConfig {
                root: root.into(),
                times: TimeGrid { kind: grid, start: t_start, stop: t_stop, points, unit },
                propagator: match propagator {
                    PropagatorArg::Auto => Propagator::Auto,
                    PropagatorArg::Eigen => Propagator::Eigen,
                    PropagatorArg::Krylov => Propagator::Krylov,
                },
                cut,
                compare_exact,
                exact_cutoff,
            }),
            model.into(),
        ),
        Command::DisorderSweep {
            model,
            template,
            lengths,
            widths,
            realizations,
            seed,
            window,
            cutoff,
            no_r,
            no_entropy,
        } => (
            Experiment::DisorderSweep(SweepConfig {
                template,
                lengths,
                widths,
                realizations,
                seed,
                window,
                cutoff,
                r: !no_r,
                entropy: !no_entropy,
            }),
            model.into(),
        ),
        Command::Fss { input, observable, critical_range, nu_range, grid, refinements, no_per_site } => (
            Experiment::Fss(FssConfig {
                input,
                observable,
                critical_range: (critical_range[0], critical_range[1]),
                nu_range: (nu_range[0], nu_range[1]),
                grid,
                refinements,
                per_site: !no_per_site,
            }),
            ModelConfig::default(),
        ),
    };
    Ok(ExperimentConfig { note: None, experiment, model, output: OutputConfig::default(), jobs: None })
}

fn execute(cli: Cli) -> Result<Vec<String>, Failure> {
    let mut config = build_config(cli.command)?;
    if let Some(prefix) = cli.prefix {
        config.output.prefix = prefix;
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    let resolved = config.resolve(cli.out_dir.as_deref())?;
    if cli.dry_run {
        return Ok(vec![serde_json::to_string_pretty(&resolved).map_err(anyhow::Error::from)?]);
    }
    if let Some(jobs) = resolved.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(anyhow::Error::from)?;
    }
    run::run(&resolved)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
