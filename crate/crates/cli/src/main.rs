use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use giht::objective::estimate_restricted_spectrum;
use giht::synth::generate;
use giht::{GroupLayout, IhtConfig, Projector, SogBudget, StepRule, SynthInstance, SynthSpec};
use giht_cli::{
    exit_code, read_vector, run_phase_transition, solve_instance, sparse_entries, write_phase_csv,
    PhaseGrid, ProjectionReport,
};

#[derive(Parser)]
#[command(
    name = "giht",
    version,
    about = "Group-sparse iterative hard thresholding experiments"
)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a vector onto a group-sparse set.
    Project(ProjectArgs),
    /// Run IHT on a saved or freshly generated instance.
    Solve(SolveArgs),
    /// Success rates over an (n, kappa) grid.
    PhaseTransition(PhaseArgs),
    /// Restricted eigenvalue estimates of a generated design.
    RscCheck(RscArgs),
    /// IHT with the sparse-overlapping-group projector.
    SogDemo(SogArgs),
    /// Generate an instance and save it to a directory.
    Gen(GenArgs),
}

#[derive(Args)]
struct ProjectArgs {
    /// One value per line.
    #[arg(long)]
    input: PathBuf,
    /// Layout JSON: {"p": .., "groups": [[..], ..]}.
    #[arg(long)]
    layout: PathBuf,
    /// Group budget.
    #[arg(long, conflicts_with_all = ["k1", "k2"])]
    k: Option<usize>,
    /// SoG group budget.
    #[arg(long, requires = "k2")]
    k1: Option<usize>,
    /// SoG per-group coordinate budget.
    #[arg(long, requires = "k1")]
    k2: Option<usize>,
    /// Exact projection for disjoint layouts.
    #[arg(long, conflicts_with = "bruteforce")]
    exact: bool,
    /// Exhaustive projection for small layouts.
    #[arg(long)]
    bruteforce: bool,
    /// Largest group count the exhaustive projection accepts.
    #[arg(long, default_value_t = giht::groups::DEFAULT_ENUM_GUARD)]
    guard: usize,
}

#[derive(Args, Clone)]
struct SpecArgs {
    #[arg(long, default_value_t = 100)]
    num_groups: usize,
    #[arg(long, default_value_t = 25)]
    group_size: usize,
    #[arg(long, default_value_t = 5)]
    overlap: usize,
    #[arg(long, default_value_t = 10)]
    k_star: usize,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_lambda: f64,
    #[arg(long, default_value_t = 800)]
    n: usize,
    /// Conjugate the covariance by a random rotation.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = false)]
    rotate: bool,
    #[arg(long, env = "GIHT_SEED", default_value_t = 0)]
    seed: u64,
}

impl SpecArgs {
    fn spec(&self, k2_star: Option<usize>) -> SynthSpec {
        SynthSpec {
            num_groups: self.num_groups,
            group_size: self.group_size,
            overlap: self.overlap,
            k_star: self.k_star,
            k2_star,
            kappa: self.kappa,
            noise_lambda: self.noise_lambda,
            n: self.n,
            rotate: self.rotate,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ProjectorKind {
    Greedy,
    Exact,
    Bruteforce,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Group budget; defaults to 2 k_star.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "greedy")]
    projector: ProjectorKind,
    /// `auto` (1/4L), `inverse-curvature` (1/L), `restricted-curvature[:TRIALS]`
    /// (1/L over sampled k-group supports), or a positive number.
    #[arg(long, default_value = "auto", value_parser = parse_step)]
    step: StepRule,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Refit on the selected support after every projection.
    #[arg(long, alias = "fc")]
    full_corrections: bool,
}

impl ConfigArgs {
    fn config(&self, projector: Projector, seed: u64) -> IhtConfig {
        IhtConfig {
            step: self.step,
            max_iters: self.max_iters,
            tol: self.tol,
            full_corrections: self.full_corrections,
            seed,
            ..IhtConfig::new(projector)
        }
    }

    fn projector(&self, k_star: usize) -> Projector {
        let k = self.k.unwrap_or(2 * k_star);
        match self.projector {
            ProjectorKind::Greedy => Projector::Greedy { k },
            ProjectorKind::Exact => Projector::ExactDisjoint { k },
            ProjectorKind::Bruteforce => Projector::bruteforce(k),
        }
    }
}

const DEFAULT_CURVATURE_TRIALS: usize = 20;

fn parse_step(s: &str) -> Result<StepRule, String> {
    match s {
        "auto" => Ok(StepRule::Auto),
        "inverse-curvature" => Ok(StepRule::InverseCurvature),
        "restricted-curvature" => Ok(StepRule::RestrictedCurvature {
            trials: DEFAULT_CURVATURE_TRIALS,
        }),
        _ => {
            if let Some(n) = s.strip_prefix("restricted-curvature:") {
                return match n.parse::<usize>() {
                    Ok(trials) if trials > 0 => Ok(StepRule::RestrictedCurvature { trials }),
                    _ => Err(format!(
                        "expected a positive trial count after ':', got {n:?}"
                    )),
                };
            }
            match s.parse::<f64>() {
                Ok(eta) if eta > 0.0 && eta.is_finite() => Ok(StepRule::Fixed(eta)),
                _ => Err(format!(
                    "expected auto, inverse-curvature, restricted-curvature[:TRIALS] or a positive number, got {s:?}"
                )),
            }
        }
    }
}

#[derive(Args)]
struct Outputs {
    /// Trace CSV destination; stdout when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Summary JSON destination; stderr when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Final iterate, one value per line.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance directory written by `gen`; spec flags are ignored when set.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: Outputs,
}

#[derive(Args)]
struct PhaseArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000])]
    n_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 50.0, 100.0])]
    kappa_list: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Relative error counted as a success.
    #[arg(long, default_value_t = 1e-3)]
    success_tol: f64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RscArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Groups per sampled support.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
}

#[derive(Args)]
struct SogArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Nonzeros per active group.
    #[arg(long)]
    k2_star: usize,
    /// Group budget; defaults to 2 k_star.
    #[arg(long)]
    k1: Option<usize>,
    /// Per-group budget; defaults to 2 k2_star.
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long, default_value = "auto", value_parser = parse_step)]
    step: StepRule,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Refit on the selected support after every projection
    #[arg(long, alias = "fc")]
    full_corrections: bool,
    #[command(flatten)]
    out: Outputs,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// Nonzeros per active group, for SoG signals.
    #[arg(long)]
    k2_star: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn write_json<T: Serialize>(
    value: &T,
    path: Option<&Path>,
    default: &mut dyn Write,
) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            let mut f = create(p)?;
            serde_json::to_writer_pretty(&mut f, value)?;
            writeln!(f)?;
        }
        None => {
            serde_json::to_writer_pretty(&mut *default, value)?;
            writeln!(default)?;
        }
    }
    Ok(())
}

fn project(args: &ProjectArgs) -> anyhow::Result<()> {
    let g = read_vector(
        File::open(&args.input).with_context(|| format!("cannot open {}", args.input.display()))?,
    )
    .with_context(|| format!("in {}", args.input.display()))?;
    let layout: GroupLayout = serde_json::from_reader(
        File::open(&args.layout)
            .with_context(|| format!("cannot open {}", args.layout.display()))?,
    )
    .with_context(|| format!("in {}", args.layout.display()))?;
    let projector = match (args.k, args.k1, args.k2) {
        (Some(k), None, None) if args.bruteforce => Projector::Bruteforce {
            k,
            guard: args.guard,
        },
        (Some(k), None, None) if args.exact => Projector::ExactDisjoint { k },
        (Some(k), None, None) => Projector::Greedy { k },
        (None, Some(k1), Some(k2)) if !args.exact && !args.bruteforce => {
            Projector::Sog(SogBudget { k1, k2 })
        }
        (None, Some(_), Some(_)) => bail!("--k1/--k2 only apply to the greedy SoG projection"),
        _ => bail!("give either --k or both --k1 and --k2"),
    };
    let outcome = projector.project(&g, &layout)?;
    let report = ProjectionReport {
        projector,
        u: sparse_entries(&outcome.u),
        selected_groups: outcome.selected.group_ids,
        selection_order: outcome.selection_order,
        gains: outcome.gains,
        within_group_support: outcome.within_group_support,
    };
    write_json(&report, None, &mut io::stdout().lock())
}

fn finish_solve(
    inst: &SynthInstance,
    config: &IhtConfig,
    out: &Outputs,
    extra: impl FnOnce(&giht_cli::SolveReport) -> serde_json::Value,
) -> anyhow::Result<()> {
    let (w, trace, report) = solve_instance(inst, config)?;
    match &out.trace {
        Some(p) => trace.write_csv(create(p)?)?,
        None => trace.write_csv(io::stdout().lock())?,
    }
    if let Some(p) = &out.weights {
        let mut f = create(p)?;
        for v in &w {
            writeln!(f, "{v}")?;
        }
        f.flush()?;
    }
    let mut summary = serde_json::to_value(&report)?;
    if let (Some(obj), serde_json::Value::Object(more)) = (summary.as_object_mut(), extra(&report))
    {
        obj.extend(more);
    }
    write_json(&summary, out.summary.as_deref(), &mut io::stderr().lock())
}

fn solve(args: &SolveArgs) -> anyhow::Result<()> {
    let inst = match &args.instance {
        Some(dir) => SynthInstance::load(dir)
            .with_context(|| format!("cannot load instance {}", dir.display()))?,
        None => generate(&args.spec.spec(None))?,
    };
    let config = args
        .config
        .config(args.config.projector(inst.spec.k_star), inst.spec.seed);
    finish_solve(&inst, &config, &args.out, |_| serde_json::json!({}))
}

fn phase_transition(args: &PhaseArgs) -> anyhow::Result<()> {
    let base = args.spec.spec(None);
    let grid = PhaseGrid {
        config: args
            .config
            .config(args.config.projector(base.k_star), base.seed),
        base,
        ns: args.n_list.clone(),
        kappas: args.kappa_list.clone(),
        trials: args.trials,
        success_tol: args.success_tol,
    };
    let cells = run_phase_transition(&grid)?;
    match &args.out {
        Some(p) => write_phase_csv(&cells, create(p)?)?,
        None => write_phase_csv(&cells, io::stdout().lock())?,
    }
    Ok(())
}

fn rsc_check(args: &RscArgs) -> anyhow::Result<()> {
    let inst = generate(&args.spec.spec(None))?;
    let est = estimate_restricted_spectrum(
        &inst.problem,
        &inst.layout,
        args.k,
        args.trials,
        inst.spec.seed,
    )?;
    let mut out = serde_json::to_value(est)?;
    out["kappa_hat"] = serde_json::json!(est.kappa_hat());
    write_json(&out, None, &mut io::stdout().lock())
}

fn sog_demo(args: &SogArgs) -> anyhow::Result<()> {
    let inst = generate(&args.spec.spec(Some(args.k2_star)))?;
    let budget = SogBudget {
        k1: args.k1.unwrap_or(2 * args.spec.k_star),
        k2: args.k2.unwrap_or(2 * args.k2_star),
    };
    let config = IhtConfig {
        step: args.step,
        max_iters: args.max_iters,
        tol: args.tol,
        full_corrections: args.full_corrections,
        seed: inst.spec.seed,
        ..IhtConfig::new(Projector::Sog(budget))
    };
    finish_solve(
        &inst,
        &config,
        &args.out,
        |_| serde_json::json!({ "k1": budget.k1, "k2": budget.k2 }),
    )
}

fn gen(args: &GenArgs) -> anyhow::Result<()> {
    let inst = generate(&args.spec.spec(args.k2_star))?;
    inst.save(&args.out)
        .with_context(|| format!("cannot write instance to {}", args.out.display()))?;
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if cli.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()?;
    match &cli.command {
        Command::Project(a) => project(a),
        Command::Solve(a) => solve(a),
        Command::PhaseTransition(a) => phase_transition(a),
        Command::RscCheck(a) => rsc_check(a),
        Command::SogDemo(a) => sog_demo(a),
        Command::Gen(a) => gen(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
