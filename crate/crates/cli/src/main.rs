use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bdaepi::config::ConfigFile;
use bdaepi::diag::{ess, quantile_sorted, summarize_latent};
use bdaepi::engine::{chain_rng, run_chains, ChainOutput, Method};
use bdaepi::io::{draw_values, draws_csv, latent_csv, parse_draws_csv, parse_snapshots, snapshots_text, trajectory_csv, DRAW_COLUMNS};
use bdaepi::sim::{disaggregate, gillespie_simulate, sample_observations, subjects_from_counts};
use bdaepi::{Dataset, ModelSpec, PopulationHistory};

const LEVELS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Parser)]
#[command(name = "bdaepi", version, about = "Fit stochastic epidemic models to prevalence counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an epidemic and binomial or negative-binomial prevalence counts.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run MCMC chains on a dataset.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        chains: Option<usize>,
        /// Dataset CSV, overriding `data` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pointwise quantiles of compartment counts from snapshot files.
    Summarize {
        /// Comma-separated grid times; defaults to 50 points spanning the window.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
    },
    /// Effective sample sizes and posterior summaries from draws files.
    Diag {
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        draws: Vec<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Fit { config, seed, chains, data, out } => fit(&config, seed, chains, data, &out),
        Command::Summarize { times, out, snapshots } => summarize(times, out, &snapshots),
        Command::Diag { burn_in, out, draws } => diag(burn_in, out, &draws),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ConfigFile> {
    let mut cfg = ConfigFile::read(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(s) = seed {
        cfg.set("seed", &s.to_string());
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let setup = load_config(config, seed)?.sim_setup()?;
    fs::create_dir_all(out)?;
    let mut rng = chain_rng(setup.seed, 0);
    let window = match (setup.times.first(), setup.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => bail!("no observation times"),
    };
    let events = gillespie_simulate(&setup.model, &setup.schedule, &setup.initial, window, &mut rng)?;
    let history =
        disaggregate(&events, &subjects_from_counts(&setup.initial), setup.model.n_states(), window, &mut rng)?;
    let data = sample_observations(&history, &setup.model, &setup.times, &setup.emission, &mut rng)?;
    write(&out.join("data.csv"), &data.to_csv())?;
    write(&out.join("truth.csv"), &trajectory_csv(&setup.model, window.0, &setup.initial, &events))?;
    write(&out.join("truth_history.txt"), &snapshots_text(&[(0, history)]))?;
    println!("simulated {} events, {} observations -> {}", events.len(), data.len(), out.display());
    Ok(())
}

fn fit(config: &Path, seed: Option<u64>, chains: Option<usize>, data: Option<PathBuf>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    if let Some(c) = chains {
        cfg.set("chains", &c.to_string());
    }
    let run = cfg.run_config()?;
    let population: usize = cfg.required("population")?;
    let data_path = data.or_else(|| cfg.path("data")).context("no dataset: set `data` or pass --data")?;
    let dataset = Dataset::read_csv(&data_path, population)
        .with_context(|| format!("reading dataset {}", data_path.display()))?;
    fs::create_dir_all(out)?;
    eprintln!(
        "fitting {} ({:?}) to {} observations, N = {population}, {} chain(s) x {} iterations",
        run.model.kind,
        run.method,
        dataset.len(),
        run.chains,
        run.iterations
    );
    let outputs = run_chains(&run, &dataset)?;
    let mut snapshots: Vec<PopulationHistory> = Vec::new();
    for o in &outputs {
        write(&out.join(format!("chain{}_draws.csv", o.chain)), &draws_csv(&run.model, o))?;
        if run.method == Method::Bda {
            write(&out.join(format!("chain{}_snapshots.txt", o.chain)), &snapshots_text(&o.snapshots))?;
            snapshots.extend(o.snapshots.iter().map(|(_, h)| h.clone()));
        }
    }
    if !snapshots.is_empty() {
        let refs: Vec<&PopulationHistory> = snapshots.iter().collect();
        let rows = summarize_latent(&refs, &dataset.times, &LEVELS)?;
        write(&out.join("latent.csv"), &latent_csv(&run.model, &rows, &LEVELS))?;
    }
    let summary = chain_summary(&run.model, population, run.burn_in, &outputs);
    write(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn chain_summary(model: &ModelSpec, population: usize, burn_in: usize, outputs: &[ChainOutput]) -> String {
    let mut s = String::new();
    for o in outputs {
        let k = o.counters;
        let _ = writeln!(s, "chain {}: {} iterations in {:.1} s", o.chain, o.draws.len(), o.elapsed.as_secs_f64());
        if k.proposed > 0 {
            let _ = writeln!(
                s,
                "  path updates: {} proposed, {} accepted ({:.3}), {} infeasible",
                k.proposed,
                k.accepted,
                k.rate(),
                k.infeasible
            );
        }
        if k.param_proposed > 0 {
            let _ = writeln!(s, "  parameter moves: {} proposed, acceptance {:.3}", k.param_proposed, k.param_rate());
        }
        if let Some(f) = o.degenerate_fraction {
            let _ = writeln!(s, "  particle filter runs returning -inf: {:.4}", f);
        }
        let lp = &o.logpost[burn_in.min(o.logpost.len())..];
        match ess(lp) {
            Ok(e) if e.constant => {
                let _ = writeln!(s, "  log-posterior ESS: {:.1} (constant trace)", e.ess);
            }
            Ok(e) => {
                let _ = writeln!(s, "  log-posterior ESS: {:.1}", e.ess);
            }
            Err(e) => {
                let _ = writeln!(s, "  log-posterior ESS: unavailable ({e})");
            }
        }
        let kept = o.kept(burn_in);
        if kept.is_empty() {
            continue;
        }
        let mut medians = Vec::new();
        for (k, name) in DRAW_COLUMNS.iter().enumerate() {
            let v: Option<Vec<f64>> = kept.iter().map(|p| draw_values(model, p)[k]).collect();
            if let Some(mut v) = v {
                v.sort_by(f64::total_cmp);
                medians.push(format!("{name} {:.4e}", quantile_sorted(&v, 0.5)));
            }
        }
        let mut r0: Vec<f64> = kept.iter().map(|p| p.r0(population)).collect();
        r0.sort_by(f64::total_cmp);
        medians.push(format!("R0 {:.3}", quantile_sorted(&r0, 0.5)));
        let _ = writeln!(s, "  posterior medians: {}", medians.join(", "));
    }
    s
}

fn summarize(times: Option<Vec<f64>>, out: Option<PathBuf>, files: &[PathBuf]) -> Result<()> {
    let mut histories = Vec::new();
    for f in files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        histories.extend(parse_snapshots(&text).with_context(|| format!("parsing {}", f.display()))?.into_iter().map(|(_, h)| h));
    }
    let Some(first) = histories.first() else {
        bail!("no histories found");
    };
    let model = match first.n_states() {
        3 => ModelSpec::sir(),
        4 => ModelSpec::seir(),
        n => bail!("cannot label histories with {n} states"),
    };
    let (a, b) = first.window();
    let grid = times.unwrap_or_else(|| (0..50).map(|i| a + (b - a) * i as f64 / 49.0).collect());
    let refs: Vec<&PopulationHistory> = histories.iter().collect();
    let rows = summarize_latent(&refs, &grid, &LEVELS)?;
    emit(out, &latent_csv(&model, &rows, &LEVELS))
}

fn diag(burn_in: usize, out: Option<PathBuf>, files: &[PathBuf]) -> Result<()> {
    let mut s = String::from("file,column,mean,sd,q025,q50,q975,ess,constant\n");
    for f in files {
        let text = fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        let rows = parse_draws_csv(&text).with_context(|| format!("parsing {}", f.display()))?;
        let rows = &rows[burn_in.min(rows.len())..];
        let mut columns: Vec<(&str, Vec<f64>)> = vec![("logpost", rows.iter().map(|r| r.logpost).collect())];
        for (k, name) in DRAW_COLUMNS.iter().enumerate() {
            let v: Option<Vec<f64>> = rows.iter().map(|r| r.values[k]).collect();
            if let Some(v) = v.filter(|v| !v.is_empty()) {
                columns.push((name, v));
            }
        }
        for (name, v) in columns {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let (e, flag) = match ess(&v) {
                Ok(e) => (format!("{}", e.ess), e.constant.to_string()),
                Err(_) => ("NA".into(), "NA".into()),
            };
            let _ = writeln!(
                s,
                "{},{name},{mean},{sd},{},{},{},{e},{flag}",
                f.display(),
                quantile_sorted(&sorted, 0.025),
                quantile_sorted(&sorted, 0.5),
                quantile_sorted(&sorted, 0.975)
            );
        }
    }
    emit(out, &s)
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(&p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
