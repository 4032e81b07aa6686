use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use disentangle_core::agent::training_log_csv;
use disentangle_core::circuit::{Circuit, WindowSpec};
use disentangle_core::config::RunConfig;
use disentangle_core::oracle::{pair_region, region_minimum, window_minimum};
use disentangle_core::scan::{best_of_seeds_with, reference_curves, scan_curves, transfer_scan, ScanResult};
use disentangle_core::solver::{ground_state, DEFAULT_TOL};
use disentangle_core::state::site_entropy;
use disentangle_core::textfmt::decimal17;
use disentangle_core::{rng, ARTIFACT_VERSION};

#[derive(Parser)]
#[command(name = "disentangle", version, about = "Phase detection with RL-designed disentangling circuits")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground state energy and target-site entropy.
    Ground {
        #[arg(long)]
        model: String,
        #[arg(long)]
        coupling: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one agent per coupling and keep the best circuits.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Scan two trained circuits across the coupling grid.
    Scan {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Scan trained circuits on longer chains.
    Transfer {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal-disentanglement minima for pair, 3-site and 5-site windows.
    Oracle {
        #[arg(long)]
        model: String,
        #[arg(long)]
        coupling: f64,
        /// Only this window size.
        #[arg(long, value_parser = ["2", "3", "5"])]
        window: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Pair-oracle curve and its 1/λ reindexing (TFIM).
    Duality {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    /// `key = value` file applied over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key (applied last).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// `start:step:stop`
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated chain sizes.
    #[arg(long)]
    sizes: Option<String>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated training seeds (best per side is kept).
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    init_scheme: Option<String>,
    /// off, warm or fresh
    #[arg(long)]
    reopt: Option<String>,
    #[arg(long)]
    circuit_a: Option<PathBuf>,
    #[arg(long)]
    circuit_b: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, extra: &[(&str, String)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags: [(&str, Option<String>); 15] = [
            ("n", self.n.map(|v| v.to_string())),
            ("a", self.a.map(|v| v.to_string())),
            ("b", self.b.map(|v| v.to_string())),
            ("grid", self.grid.clone()),
            ("sizes", self.sizes.clone()),
            ("target", self.target.map(|v| v.to_string())),
            ("radius", self.radius.map(|v| v.to_string())),
            ("layers", self.layers.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("seeds", self.seeds.clone()),
            ("episodes", self.episodes.map(|v| v.to_string())),
            ("init_scheme", self.init_scheme.clone()),
            ("reopt", self.reopt.clone()),
            ("circuit_a", self.circuit_a.as_ref().map(|p| p.display().to_string())),
            ("circuit_b", self.circuit_b.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for (k, v) in extra {
            cfg.set(k, v)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

/// Creates `dir`, refusing a non-empty one unless forced, and records the config.
fn prepare_out(dir: &Path, force: bool, cfg: &RunConfig) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!("{} is not empty; pass --force to overwrite", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir.join("config.txt"), &cfg.to_text())
}

fn write(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_circuit(cfg: &RunConfig, key: &str) -> Result<Circuit> {
    let path = cfg.path(key).with_context(|| format!("`{key}` is required (--{})", key.replace('_', "-")))?;
    let text = fs::read_to_string(path).with_context(|| format!("reading circuit {path}"))?;
    Circuit::from_text(&text).with_context(|| format!("parsing circuit {path}"))
}

fn fmt_crossing(res: &ScanResult) -> String {
    let x = res.crossing.map_or("none".to_string(), |c| format!("{c:.4}"));
    if res.ambiguous {
        format!("{x} (several crossings)")
    } else {
        x
    }
}

fn annotate(res: &mut ScanResult, cfg: &RunConfig, circuit: &Circuit) -> Result<()> {
    let w = circuit.arch.window();
    res.set_meta("version", ARTIFACT_VERSION);
    res.set_meta("radius", w.radius().to_string());
    res.set_meta("layers", (circuit.arch.horizon() / (2 * w.size())).to_string());
    res.set_meta("seeds", format!("{:?}", cfg.seeds()?));
    res.set_meta("init_scheme", cfg.init_scheme()?.label());
    Ok(())
}

fn cmd_ground(cfg: &RunConfig, out: Option<&Path>, force: bool) -> Result<()> {
    let spec = cfg.model_spec()?;
    let target = cfg.usize("target")?;
    let g = ground_state(&spec, DEFAULT_TOL, rng::derive_seed(cfg.u64("seed")?, "solver"))?;
    let s = site_entropy(&g.state, target)?;
    println!(
        "{} N={} coupling={}: energy {} entropy {} ({} solver{})",
        spec.model().name(),
        spec.n_sites(),
        spec.coupling(),
        decimal17(g.energy),
        decimal17(s),
        g.solver,
        if g.is_degenerate() { ", degenerate" } else { "" }
    );
    if let Some(dir) = out {
        prepare_out(dir, force, cfg)?;
        let csv = format!(
            "model,n_sites,coupling,energy,entropy\n{},{},{},{},{}\n",
            spec.model().name(),
            spec.n_sites(),
            decimal17(spec.coupling()),
            decimal17(g.energy),
            decimal17(s)
        );
        write(dir.join("ground.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    let spec = cfg.model_spec()?;
    let window = cfg.window()?;
    let train = cfg.train_config()?;
    let (a, b) = (cfg.f64("a")?, cfg.f64("b")?);
    prepare_out(out, force, cfg)?;
    let pair = best_of_seeds_with(&spec, a, b, cfg.usize("layers")?, window, &train, &cfg.seeds()?, |side, seed, o| {
        let path = out.join(format!("log_{side}_seed{seed}.csv"));
        fs::write(&path, training_log_csv(&o.log))?;
        info!("wrote {}", path.display());
        Ok(())
    })?;
    write(out.join("circuit_a.txt"), &pair.side_a.best.to_text())?;
    write(out.join("circuit_b.txt"), &pair.side_b.best.to_text())?;
    let summary = format!(
        "side,coupling,seed,best_reward,S_RL,S0\na,{},{},{},{},{}\nb,{},{},{},{},{}\n",
        decimal17(a),
        pair.seeds.0,
        decimal17(pair.side_a.best_reward),
        decimal17(pair.side_a.best_entropy),
        decimal17(pair.side_a.s0),
        decimal17(b),
        pair.seeds.1,
        decimal17(pair.side_b.best_reward),
        decimal17(pair.side_b.best_entropy),
        decimal17(pair.side_b.s0),
    );
    write(out.join("summary.csv"), &summary)?;
    println!(
        "coupling {a}: S_RL {:.6} (S0 {:.6}, seed {})\ncoupling {b}: S_RL {:.6} (S0 {:.6}, seed {})",
        pair.side_a.best_entropy, pair.side_a.s0, pair.seeds.0, pair.side_b.best_entropy, pair.side_b.s0, pair.seeds.1
    );
    Ok(())
}

fn cmd_scan(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    let (ca, cb) = (load_circuit(cfg, "circuit_a")?, load_circuit(cfg, "circuit_b")?);
    let grid = cfg.grid()?;
    let reopt = cfg.reopt()?;
    let spec = cfg.model_spec()?;
    prepare_out(out, force, cfg)?;
    let mut res = scan_curves(&spec, &grid, &ca, &cb, &reopt)?;
    annotate(&mut res, cfg, &ca)?;
    write(out.join("scan.csv"), &res.to_csv())?;
    println!("crossing: {}", fmt_crossing(&res));
    Ok(())
}

fn cmd_transfer(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    let (ca, cb) = (load_circuit(cfg, "circuit_a")?, load_circuit(cfg, "circuit_b")?);
    let grid = cfg.grid()?;
    let sizes = cfg.sizes()?;
    let reopt = cfg.reopt()?;
    let spec = cfg.model_spec()?;
    prepare_out(out, force, cfg)?;
    for (n, mut res) in transfer_scan(&spec, &sizes, &grid, &ca, &cb, &reopt)? {
        annotate(&mut res, cfg, &ca)?;
        write(out.join(format!("scan_N{n}.csv")), &res.to_csv())?;
        println!("N={n}: crossing {}", fmt_crossing(&res));
    }
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig, only: Option<&str>, out: Option<&Path>, force: bool) -> Result<()> {
    let spec = cfg.model_spec()?;
    let n = spec.n_sites();
    let target = cfg.usize("target")?;
    let g = ground_state(&spec, DEFAULT_TOL, rng::derive_seed(cfg.u64("seed")?, "solver"))?;
    let mut rows = vec![("1".to_string(), site_entropy(&g.state, target)?)];
    for size in ["2", "3", "5"] {
        if only.is_some_and(|o| o != size) {
            continue;
        }
        let min = match size {
            "2" => region_minimum(&g.state, &pair_region(n, target)?)?,
            "3" => window_minimum(&g.state, &WindowSpec::new(n, target, 1)?)?,
            _ => window_minimum(&g.state, &WindowSpec::new(n, target, 2)?)?,
        };
        rows.push((size.to_string(), min));
    }
    let mut csv = String::from("window,min_entropy\n");
    for (size, v) in &rows {
        let label = if size == "1" { "untouched".to_string() } else { format!("{size} sites") };
        println!("{label}: {}", decimal17(*v));
        csv.push_str(&format!("{size},{}\n", decimal17(*v)));
    }
    if let Some(dir) = out {
        prepare_out(dir, force, cfg)?;
        write(dir.join("oracle.csv"), &csv)?;
    }
    Ok(())
}

fn cmd_duality(cfg: &RunConfig, out: &Path, force: bool) -> Result<()> {
    if cfg.get("model") != "tfim" {
        bail!("duality reference is defined for tfim only");
    }
    let grid = cfg.grid()?;
    let n = cfg.usize("n")?;
    prepare_out(out, force, cfg)?;
    let (direct, dual) = reference_curves(n, &grid)?;
    let mut csv = format!("# version: {ARTIFACT_VERSION}\n# n_sites: {n}\ncoupling,direct,dual\n");
    for i in 0..grid.len() {
        csv.push_str(&format!("{},{},{}\n", decimal17(grid[i]), decimal17(direct[i]), decimal17(dual[i])));
    }
    write(out.join("duality.csv"), &csv)?;
    println!("wrote {} points", grid.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ground { model, coupling, out, common } => {
            let cfg = common.resolve(&[("model", model), ("coupling", coupling.to_string())])?;
            cmd_ground(&cfg, out.as_deref(), common.force)
        }
        Command::Train { out, common } => cmd_train(&common.resolve(&[])?, &out, common.force),
        Command::Scan { out, common } => cmd_scan(&common.resolve(&[])?, &out, common.force),
        Command::Transfer { out, common } => cmd_transfer(&common.resolve(&[])?, &out, common.force),
        Command::Oracle { model, coupling, window, out, common } => {
            let cfg = common.resolve(&[("model", model), ("coupling", coupling.to_string())])?;
            cmd_oracle(&cfg, window.as_deref(), out.as_deref(), common.force)
        }
        Command::Duality { out, common } => cmd_duality(&common.resolve(&[])?, &out, common.force),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
