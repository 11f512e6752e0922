use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use matcomp::completability::{completable_closure, uniqueness_certificate, Verdict};
use matcomp::completion::{minor_closure_with, MinorClosureOptions, Provenance};
use matcomp::experiments::{
    completable_count_curve, ingest_ratings, rcore_curve, sweep_density, sweep_regular, variance_heatmap,
    write_closure_counts, write_core_curve, write_frequencies, write_matrix, write_records, CheckConfig,
    ClosurePipeline, DensitySweep, RegularFamily, RegularSweep, SweepResult,
};
use matcomp::graph::{
    edge_connectivity_at_least, find_a_biclique_on, k_core, rank_r_sparse, SearchBudget, SparsityVerdict,
};
use matcomp::jacobian::{PrimeChoice, RankBackend, DEFAULT_MODP_SAMPLES};
use matcomp::random_masks::{monotone_order, regular_plus_order, rowwise_regular_order, sample_biregular, sample_er};
use matcomp::rank_one::{estimate_entry, predict_variance};
use matcomp::{Mask, NoiseModel, PartialMatrix, Position};

#[derive(Parser)]
#[command(name = "matcomp", version, about = "Low-rank matrix completability, completion and mask experiments")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Wall-clock budget in milliseconds for searches that can blow up.
    #[arg(long = "budget-ms", global = true)]
    budget_ms: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Condition frequencies along random monotone orderings.
    SweepDensity(SweepDensityArgs),
    /// Completability around 2rn edges of the regular families.
    SweepRegular(SweepRegularArgs),
    /// Sizes of the r-cores of a ratings file.
    Rcore(RcoreArgs),
    /// Positions completable within each r-core of a ratings file.
    ClosureCurve(ClosureCurveArgs),
    /// Rank-one variance heatmap as an m x n CSV.
    Heatmap(HeatmapArgs),
    /// Sample a random mask.
    Genmask(GenmaskArgs),
    /// Finitely completable closure of a mask.
    Closure(ClosureArgs),
    /// Minor closure of a partial matrix.
    Complete(CompleteArgs),
    /// Combinatorial checks on a mask.
    Graph(GraphArgs),
    /// Rank-one estimation.
    #[command(subcommand)]
    Rank1(Rank1Command),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Svd,
    Modp,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrimeArg {
    Auto,
    Mersenne,
}

#[derive(Args)]
struct BackendOpts {
    #[arg(long, value_enum, default_value = "svd")]
    backend: BackendArg,
    /// Prime for the modp backend.
    #[arg(long, value_enum, default_value = "auto")]
    prime: PrimeArg,
}

impl BackendOpts {
    fn backend(&self) -> RankBackend {
        match self.backend {
            BackendArg::Svd => RankBackend::FloatSvd,
            BackendArg::Modp => RankBackend::ModP {
                prime: match self.prime {
                    PrimeArg::Auto => PrimeChoice::Auto,
                    PrimeArg::Mersenne => PrimeChoice::Mersenne61,
                },
                samples: DEFAULT_MODP_SAMPLES,
            },
        }
    }
}

#[derive(Args)]
struct SweepDensityArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rank: usize,
    /// Edge counts: `a,b,c` or `start:stop:step`.
    #[arg(long)]
    counts: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Skip the minor-closure conditions.
    #[arg(long)]
    no_minor: bool,
    /// Node budget per biclique search.
    #[arg(long)]
    node_budget: Option<u64>,
    /// Also write per-trial records here.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Include wall-time columns in the records.
    #[arg(long)]
    timings: bool,
    /// Allow n > 50.
    #[arg(long)]
    full_scale: bool,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    RegularPlus,
    Rowwise,
    Both,
}

#[derive(Args)]
struct SweepRegularArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rank: usize,
    /// Offsets from 2rn: `a,b,c` or `start:stop[:step]`.
    #[arg(long, allow_hyphen_values = true)]
    offsets: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_enum, default_value = "both")]
    family: FamilyArg,
    /// Also run the minor-closure conditions.
    #[arg(long)]
    minor: bool,
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    full_scale: bool,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Args)]
struct RcoreArgs {
    /// Ratings file with `user item [value ...]` lines.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value_t = 100)]
    r_max: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Closure,
    ClosureThenMinor,
    ClosureAndMinor,
}

#[derive(Args)]
struct ClosureCurveArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// Ranks: `a,b,c` or `start:stop[:step]`.
    #[arg(long)]
    ranks: String,
    #[arg(long, value_enum, default_value = "closure")]
    pipeline: PipelineArg,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    mask: PathBuf,
    /// Per-entry variances; defaults to a uniform `--sigma-sq`.
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    sigma_sq: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Er,
    Biregular,
    RegularPlus,
    Rowwise,
    Monotone,
}

#[derive(Args)]
struct GenmaskArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: usize,
    /// Probability for `er`.
    #[arg(long)]
    p: Option<f64>,
    /// Row degree for `biregular`.
    #[arg(long)]
    d: Option<usize>,
    /// Column degree for `biregular`.
    #[arg(long)]
    d_prime: Option<usize>,
    /// Rank for the regular families.
    #[arg(long)]
    rank: Option<usize>,
    /// Offset from 2rn for the regular families.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0)]
    offset: i64,
    /// Edge count for `monotone`.
    #[arg(long)]
    edges: Option<usize>,
}

#[derive(Args)]
struct ClosureArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    rank: usize,
    /// Report a single position (1-based) instead of the whole closure.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    entry: Option<Vec<usize>>,
    /// Also run the uniqueness certificate.
    #[arg(long)]
    certify: bool,
    #[command(flatten)]
    backend: BackendOpts,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rank: usize,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    node_budget: Option<u64>,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    kcore: Option<usize>,
    #[arg(long, num_args = 2, value_names = ["D1", "D2"])]
    biclique: Option<Vec<usize>>,
    #[arg(long)]
    connectivity: Option<usize>,
    #[arg(long)]
    sparse: Option<usize>,
    /// Work budget for the sparsity search.
    #[arg(long, default_value_t = 1 << 22)]
    sparse_budget: u64,
}

#[derive(Subcommand)]
enum Rank1Command {
    /// Estimate one entry from noisy rank-one data.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, num_args = 2, value_names = ["I", "J"], required = true)]
        entry: Vec<usize>,
    },
    /// Predicted log-variance of the best estimate.
    Variance {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        entry: Option<Vec<usize>>,
        /// Emit an m x n CSV over all positions.
        #[arg(long)]
        all_missing: bool,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_mask(path: &Path) -> Result<Mask> {
    Mask::parse(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_noise(path: &Path) -> Result<NoiseModel> {
    NoiseModel::parse(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn position(entry: &[usize], mask: &Mask) -> Result<Position> {
    let (i, j) = (entry[0], entry[1]);
    if i == 0 || j == 0 || i > mask.rows() || j > mask.cols() {
        bail!("entry ({i}, {j}) outside {}x{} (indices are 1-based)", mask.rows(), mask.cols());
    }
    Ok(Position::one_based(i, j))
}

/// Parses `a,b,c` or `start:stop[:step]` (inclusive).
fn parse_list(text: &str) -> Result<Vec<i64>> {
    if text.contains(':') {
        let parts: Vec<i64> = text
            .split(':')
            .map(|t| t.trim().parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad range '{text}'"))?;
        let (start, stop, step) = match parts[..] {
            [a, b] => (a, b, 1),
            [a, b, s] if s > 0 => (a, b, s),
            _ => bail!("range must be start:stop[:step] with positive step"),
        };
        Ok((start..=stop).step_by(step as usize).collect())
    } else {
        text.split(',')
            .map(|t| t.trim().parse::<i64>().with_context(|| format!("bad number '{t}'")))
            .collect()
    }
}

fn parse_counts(text: &str) -> Result<Vec<usize>> {
    parse_list(text)?
        .into_iter()
        .map(|x| usize::try_from(x).with_context(|| format!("negative count {x}")))
        .collect()
}

fn check_config(cli: &Cli, r: usize, backend: RankBackend, minor: bool, node_budget: Option<u64>) -> CheckConfig {
    CheckConfig {
        r,
        backend,
        minor_closure: minor,
        node_budget,
        time_budget: cli.budget_ms.map(Duration::from_millis),
    }
}

fn write_sweep(cli: &Cli, res: &SweepResult, records: &Option<PathBuf>, timings: bool) -> Result<()> {
    write_frequencies(&res.rows, output(&cli.out)?)?;
    if let Some(path) = records {
        write_records(&res.records, timings, output(&Some(path.clone()))?)?;
    }
    for (rec, broken) in res.violations() {
        log::error!("trial {} at {} edges breaks {:?}", rec.trial, rec.edges, broken);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SweepDensity(a) => {
            if a.n.max(a.m) > 50 && !a.full_scale {
                bail!("dimensions above 50 need --full-scale");
            }
            let cfg = DensitySweep {
                m: a.m,
                n: a.n,
                edge_counts: parse_counts(&a.counts)?,
                trials: a.trials,
                seed_base: cli.seed,
                checks: check_config(cli, a.rank, a.backend.backend(), !a.no_minor, a.node_budget),
            };
            let res = sweep_density(&cfg)?;
            write_sweep(cli, &res, &a.records, a.timings)
        }
        Command::SweepRegular(a) => {
            if a.n > 50 && !a.full_scale {
                bail!("n above 50 needs --full-scale");
            }
            let families = match a.family {
                FamilyArg::RegularPlus => vec![RegularFamily::RegularPlus],
                FamilyArg::Rowwise => vec![RegularFamily::Rowwise],
                FamilyArg::Both => vec![RegularFamily::RegularPlus, RegularFamily::Rowwise],
            };
            let cfg = RegularSweep {
                n: a.n,
                offsets: parse_list(&a.offsets)?,
                trials: a.trials,
                seed_base: cli.seed,
                families,
                checks: check_config(cli, a.rank, a.backend.backend(), a.minor, None),
            };
            let res = sweep_regular(&cfg)?;
            write_sweep(cli, &res, &a.records, a.timings)
        }
        Command::Rcore(a) => {
            let table = ingest_ratings(&a.ratings)?;
            eprintln!("{} users, {} items, {} ratings", table.mask.rows(), table.mask.cols(), table.mask.len());
            write_core_curve(&rcore_curve(&table.mask, a.r_max), output(&cli.out)?)?;
            Ok(())
        }
        Command::ClosureCurve(a) => {
            let table = ingest_ratings(&a.ratings)?;
            let ranks = parse_counts(&a.ranks)?;
            let pipeline = match a.pipeline {
                PipelineArg::Closure => ClosurePipeline::Closure,
                PipelineArg::ClosureThenMinor => ClosurePipeline::ClosureThenMinor,
                PipelineArg::ClosureAndMinor => ClosurePipeline::ClosureAndMinor,
            };
            let rows = completable_count_curve(
                &table.mask,
                &ranks,
                a.backend.backend(),
                pipeline,
                cli.budget_ms.map(Duration::from_millis),
                cli.seed,
            );
            write_closure_counts(&rows, output(&cli.out)?)?;
            Ok(())
        }
        Command::Heatmap(a) => {
            let mask = read_mask(&a.mask)?;
            let noise = match &a.noise {
                Some(p) => read_noise(p)?.restrict_to(&mask)?,
                None => NoiseModel::uniform(&mask, a.sigma_sq)?,
            };
            write_matrix(&variance_heatmap(&mask, &noise)?, output(&cli.out)?)?;
            Ok(())
        }
        Command::Genmask(a) => {
            let m = a.m.unwrap_or(a.n);
            let need = |x: Option<usize>, name: &str| x.with_context(|| format!("--{name} is required for this model"));
            let mask = match a.model {
                ModelArg::Er => sample_er(m, a.n, a.p.context("--p is required for er")?, cli.seed)?,
                ModelArg::Biregular => sample_biregular(m, a.n, need(a.d, "d")?, need(a.d_prime, "d-prime")?, cli.seed)?,
                ModelArg::Monotone => monotone_order(m, a.n, cli.seed).prefix(need(a.edges, "edges")?),
                ModelArg::RegularPlus | ModelArg::Rowwise => {
                    if m != a.n {
                        bail!("regular families are square");
                    }
                    let r = need(a.rank, "rank")?;
                    let order = match a.model {
                        ModelArg::RegularPlus => regular_plus_order(a.n, r, cli.seed)?,
                        _ => rowwise_regular_order(a.n, r, cli.seed)?,
                    };
                    order
                        .prefix_at_offset(a.offset)
                        .with_context(|| format!("offset {} out of range", a.offset))?
                }
            };
            output(&cli.out)?.write_all(mask.to_text().as_bytes())?;
            Ok(())
        }
        Command::Closure(a) => {
            let mask = read_mask(&a.mask)?;
            let mut out = output(&cli.out)?;
            let res = completable_closure(&mask, a.rank, a.backend.backend(), cli.seed)?;
            if let Some(entry) = &a.entry {
                let p = position(entry, &mask)?;
                let (i, j) = p.to_one_based();
                writeln!(out, "{i} {j} {}", if res.closure.contains(p) { "COMPLETABLE" } else { "NOT_COMPLETABLE" })?;
            } else {
                out.write_all(res.closure.to_text().as_bytes())?;
                writeln!(out, "# backend {} rank {} resamples {}", res.backend.name(), res.rank, res.resamples)?;
                writeln!(out, "# i j member residual")?;
                for probe in &res.probes {
                    let (i, j) = probe.position.to_one_based();
                    let resid = probe.residual.map_or("NA".into(), |x| format!("{x:.3e}"));
                    writeln!(out, "# {i} {j} {} {resid}", probe.member as u8)?;
                }
            }
            if a.certify {
                let cert = uniqueness_certificate(&mask, a.rank, cli.seed)?;
                let v = match cert.verdict {
                    Verdict::CertifiedUnique => "CERTIFIED_UNIQUE",
                    Verdict::Inconclusive => "INCONCLUSIVE",
                };
                writeln!(out, "# stress rank {} threshold {} {v}", cert.stress_rank, cert.threshold)?;
            }
            Ok(())
        }
        Command::Complete(a) => {
            let data = PartialMatrix::parse(&read(&a.data)?)?;
            let noise = match &a.noise {
                Some(p) => Some(read_noise(p)?.restrict_to(data.mask())?),
                None => None,
            };
            let opts = MinorClosureOptions {
                max_steps: a.max_steps,
                node_budget: a.node_budget,
                deadline: cli.budget_ms.map(|ms| Instant::now() + Duration::from_millis(ms)),
            };
            let res = minor_closure_with(&data, noise.as_ref(), a.rank, &opts)?;
            let mut out = output(&cli.out)?;
            writeln!(out, "{} {}", data.mask().rows(), data.mask().cols())?;
            for (p, v) in res.completed.iter() {
                let (i, j) = p.to_one_based();
                let tag = match res.provenance(p) {
                    Some(Provenance::Reconstructed { step }) => format!("RECONSTRUCTED step={step}"),
                    _ => "OBSERVED".into(),
                };
                let var = res
                    .reconstructions
                    .iter()
                    .find(|r| r.position == p)
                    .and_then(|r| r.variance)
                    .map(|v| format!(" variance={v:.6e}"))
                    .unwrap_or_default();
                writeln!(out, "{i} {j} {v} # {tag}{var}")?;
            }
            writeln!(
                out,
                "# steps {} reconstructed {} exhausted {} singular-skips {}",
                res.steps,
                res.reconstructions.len(),
                res.exhausted_searches,
                res.singular_skips
            )?;
            Ok(())
        }
        Command::Graph(a) => {
            let mask = read_mask(&a.mask)?;
            let view = mask.bipartite();
            let mut out = output(&cli.out)?;
            writeln!(out, "check\tparameters\tresult")?;
            if let Some(k) = a.kcore {
                let core = k_core(&view, k);
                writeln!(
                    out,
                    "kcore\tk={k}\trows={} cols={} entries={}",
                    core.rows.len(),
                    core.cols.len(),
                    core.positions.len()
                )?;
            }
            if let Some(d) = &a.biclique {
                let mut budget = SearchBudget::new(
                    None,
                    cli.budget_ms.map(|ms| Instant::now() + Duration::from_millis(ms)),
                );
                let found = find_a_biclique_on(
                    &view,
                    view.row_vertices(),
                    view.col_vertices(),
                    d[0],
                    d[1],
                    &mut budget,
                    &mut |_| true,
                );
                let text = match found {
                    Ok(Some(b)) => {
                        let one = |v: &[usize]| v.iter().map(|x| (x + 1).to_string()).collect::<Vec<_>>().join(",");
                        format!("rows={} cols={}", one(&b.rows), one(&b.cols))
                    }
                    Ok(None) => "NONE".into(),
                    Err(_) => "BUDGET_EXHAUSTED".into(),
                };
                writeln!(out, "biclique\td1={} d2={}\t{text}", d[0], d[1])?;
            }
            if let Some(r) = a.connectivity {
                writeln!(out, "edge-connectivity\tr={r}\t{}", edge_connectivity_at_least(&view, r))?;
            }
            if let Some(r) = a.sparse {
                let text = match rank_r_sparse(&mask, r, a.sparse_budget, cli.seed) {
                    SparsityVerdict::Verified => "SPARSE".to_string(),
                    SparsityVerdict::Violation(w) => {
                        format!("VIOLATION rows={} cols={} edges={} bound={}", w.rows.len(), w.cols.len(), w.edges, w.bound)
                    }
                    SparsityVerdict::Indeterminate => "INDETERMINATE".into(),
                };
                writeln!(out, "sparsity\tr={r}\t{text}")?;
            }
            Ok(())
        }
        Command::Rank1(Rank1Command::Estimate { data, noise, entry }) => {
            let data = PartialMatrix::parse(&read(data)?)?;
            let noise = read_noise(noise)?.restrict_to(data.mask())?;
            let p = position(entry, data.mask())?;
            let est = estimate_entry(&data, &noise, p)?;
            let mut out = output(&cli.out)?;
            writeln!(out, "i,j,estimate,log_estimate,log_variance,standard_error,circuits,sign_disagreement")?;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                entry[0],
                entry[1],
                est.value,
                est.log_value,
                est.log_variance,
                est.standard_error,
                est.circuits,
                est.sign_disagreement as u8
            )?;
            Ok(())
        }
        Command::Rank1(Rank1Command::Variance {
            mask,
            noise,
            entry,
            all_missing,
        }) => {
            let mask = read_mask(mask)?;
            let noise = read_noise(noise)?.restrict_to(&mask)?;
            let mut out = output(&cli.out)?;
            if *all_missing {
                write_matrix(&variance_heatmap(&mask, &noise)?, out)?;
            } else {
                let entry = entry.as_ref().context("give --entry I J or --all-missing")?;
                let p = position(entry, &mask)?;
                writeln!(out, "{}", predict_variance(&mask, &noise, p)?)?;
            }
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    run(&cli)
}
