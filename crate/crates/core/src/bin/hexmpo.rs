use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use hexmpo::bptns::{self, BpOpts, BpRunOpts};
use hexmpo::config::{parse_angle, resolve_lattice, resolve_site, ExperimentConfig, DATA_DIR_ENV};
use hexmpo::error::Error;
use hexmpo::presets::{preset, presets};
use hexmpo::runner::{extrapolate_record, run_config, write_fits, ResultRecord};
use hexmpo::{clifford, exact, linalg};

const CORETYPE_ENV: &str = "OPENBLAS_CORETYPE";

#[derive(Parser)]
#[command(name = "hexmpo", version, about = "Kicked-Ising circuit simulation on heavy-hex lattices")]
struct Cli {
    /// Worker threads for sweep points; overrides the config.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Directory for geometry files and default outputs.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config (TOML or JSON) or a named preset.
    Run {
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Output directory, or a `.json` path naming the record.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List presets, or print one as TOML.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
    /// Closed-form Clifford-point engine.
    #[command(subcommand)]
    Clifford(CliffordCmd),
    /// Dense statevector on small lattices.
    #[command(subcommand)]
    Exact(ExactCmd),
    /// Heisenberg-picture MPO engine.
    #[command(subcommand)]
    Heisenberg(HeisenbergCmd),
    /// Schrodinger-picture MPS engine.
    #[command(subcommand)]
    Mps(MpsCmd),
    /// Belief-propagation tensor network engine.
    #[command(subcommand)]
    Bptns(BptnsCmd),
    /// Fit `value = a ln F + b` across bond dimensions of a result record.
    Extrapolate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to `<input stem>_fits.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fit even when the values are not monotonic in F.
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum CliffordCmd {
    /// Print the depth-D stabilizer of Z_site and its support size per round.
    Stabilizer {
        #[arg(long)]
        site: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value = "eagle127")]
        lattice: String,
        /// Write the support-size table here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Closed-form expectation sweep at Clifford points.
    Run(Sweep),
}

#[derive(Subcommand)]
enum ExactCmd {
    /// Dense statevector sweep; also writes per-site <Z> per depth.
    Run(Sweep),
    /// Dense double-slit table of <X_j> for D = 0..=depth.
    DoubleSlit {
        #[arg(long, value_parser = parse_flux, action = clap::ArgAction::Set)]
        flux: bool,
        #[arg(long, default_value_t = 14)]
        depth: usize,
        #[arg(long, default_value = "twohex21")]
        lattice: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HeisenbergCmd {
    /// Operator evolution; records every depth up to the largest.
    Run {
        #[command(flatten)]
        sweep: Sweep,
        /// Also record the OTOC profile.
        #[arg(long)]
        otoc: bool,
    },
}

#[derive(Subcommand)]
enum MpsCmd {
    /// State evolution, one run per depth.
    Run(Sweep),
    /// `<Z>` on `U^dag(theta_back)^D U(theta)^D` applied to all-up.
    Echo {
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        #[arg(long)]
        depth: usize,
        #[arg(long, allow_hyphen_values = true)]
        theta_back: Option<String>,
        #[arg(long, default_value_t = 256)]
        chi: usize,
        #[arg(long, default_value = "detector")]
        site: String,
        #[arg(long, default_value = "twohex21")]
        lattice: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BptnsCmd {
    /// Stabilizer echo: forward at theta, backward at pi/2, against the
    /// dense state where it fits.
    Echo {
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',', required = true)]
        theta: Vec<String>,
        #[arg(long)]
        depth: Vec<usize>,
        #[arg(long, default_value_t = 128)]
        chi: usize,
        #[arg(long, default_value_t = 15)]
        iters: usize,
        #[arg(long, default_value = "detector")]
        site: String,
        #[arg(long, default_value = "truncate_both")]
        mode: String,
        #[arg(long, default_value = "twohex21")]
        lattice: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Double-slit table of <X_j> from BP-TNS and the dense state.
    DoubleSlit {
        #[arg(long, value_parser = parse_flux, action = clap::ArgAction::Set)]
        flux: bool,
        #[arg(long, default_value_t = 128)]
        chi: usize,
        #[arg(long, default_value_t = 15)]
        iters: usize,
        #[arg(long, default_value_t = 14)]
        depth: usize,
        #[arg(long, default_value = "twohex21")]
        lattice: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Sweep options shared by the engine subcommands. Flags override values
/// from `--config`.
#[derive(Args, Clone, Default)]
struct Sweep {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta_j: Option<String>,
    /// Comma-separated; `0.25pi` style accepted.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    theta_h: Vec<String>,
    /// Largest depth; single-run engines record 1..=D, per-depth engines run D.
    #[arg(long, conflicts_with = "depths")]
    depth: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    depths: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    chi: Vec<usize>,
    #[arg(long)]
    observable: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Output directory, or a `.json` path naming the record.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_flux(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "pi" | "1pi" => Ok(true),
        _ => Err(format!("flux must be 0 or pi, got {s}")),
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Partial(usize),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(code) = ensure_backend() {
        return code;
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(n)) => {
            eprintln!("{n} sweep point(s) failed");
            ExitCode::from(2)
        }
    }
}

/// Re-executes with a safe OpenBLAS kernel set when the backend self-test
/// fails; returns the child's exit code in that case.
fn ensure_backend() -> Option<ExitCode> {
    let err = linalg::backend_self_test().err()?;
    if std::env::var_os(CORETYPE_ENV).is_some() {
        eprintln!("warning: {err}");
        return None;
    }
    log::info!("{err}; re-running with {CORETYPE_ENV}=Haswell");
    let exe = std::env::current_exe().ok()?;
    let status =
        std::process::Command::new(exe).args(std::env::args_os().skip(1)).env(CORETYPE_ENV, "Haswell").status().ok()?;
    Some(ExitCode::from(status.code().unwrap_or(1).clamp(0, 255) as u8))
}

fn dispatch(cli: &Cli) -> Outcome {
    let data = cli.data_dir.as_deref();
    match &cli.cmd {
        Cmd::Run { config, preset: name, out } => {
            let cfg = match (config, name) {
                (Some(p), None) => ExperimentConfig::from_file(p)?,
                (None, Some(n)) => preset(n).with_context(|| format!("unknown preset `{n}`"))?.config,
                _ => return Err(Failure::Config(anyhow::anyhow!("give a config path or --preset"))),
            };
            let cfg = with_out(cfg, out.as_deref())?;
            run_and_report(&cfg, data, cli.workers)
        }
        Cmd::Presets { show: None } => {
            for p in presets() {
                println!("{:<26} {:<8} {}", p.name, p.runtime.to_string(), p.description);
            }
            Ok(())
        }
        Cmd::Presets { show: Some(n) } => {
            let p = preset(n).with_context(|| format!("unknown preset `{n}`"))?;
            print!("{}", toml::to_string(&p.config).context("serializing preset")?);
            Ok(())
        }
        Cmd::Clifford(CliffordCmd::Stabilizer { site, depth, lattice, csv }) => {
            let lat = resolve_lattice(lattice, data)?;
            let s = resolve_site(&lat, site)?;
            println!("{}", clifford::stabilizer(&lat, s, *depth)?.to_compact());
            let sizes = clifford::support_growth(&lat, s, *depth)?;
            let mut table = String::from("depth,support\n");
            for (d, n) in sizes.iter().enumerate() {
                table.push_str(&format!("{d},{n}\n"));
            }
            match csv {
                Some(p) => std::fs::write(p, table).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{table}"),
            }
            Ok(())
        }
        Cmd::Clifford(CliffordCmd::Run(sw)) => sweep(sw, "clifford", None, data, cli.workers),
        Cmd::Exact(ExactCmd::Run(sw)) => {
            let cfg = sweep_config(sw, "exact", None)?;
            let res = run_and_report(&cfg, data, cli.workers);
            write_magnetization(&cfg, data)?;
            res
        }
        Cmd::Exact(ExactCmd::DoubleSlit { flux, depth, lattice, out }) => {
            let lat = resolve_lattice(lattice, data)?;
            let src = lat.label("source").with_context(|| format!("{} has no source label", lat.name))?;
            let t = exact::double_slit_table(&lat, src, *depth, *flux)?;
            let mut csv = String::from("flux,depth,site,exact\n");
            let f = if *flux { "pi" } else { "0" };
            for (d, row) in t.iter().enumerate() {
                for (s, v) in row.iter().enumerate() {
                    csv.push_str(&format!("{f},{d},{s},{v}\n"));
                }
            }
            emit(out.as_deref(), &csv)
        }
        Cmd::Heisenberg(HeisenbergCmd::Run { sweep: sw, otoc }) => {
            let task = otoc.then(|| json!("otoc"));
            sweep(sw, "heisenberg", task, data, cli.workers)
        }
        Cmd::Mps(MpsCmd::Run(sw)) => sweep(sw, "mps", None, data, cli.workers),
        Cmd::Mps(MpsCmd::Echo { theta, depth, theta_back, chi, site, lattice, out }) => {
            let mut v = json!({
                "name": "mps-echo",
                "engine": "mps",
                "task": "echo",
                "lattice": lattice,
                "theta_h": [theta],
                "depths": [depth],
                "chis": [chi],
                "observable": format!("Z:{site}"),
            });
            if let Some(b) = theta_back {
                v["theta_back"] = json!(b);
            }
            let cfg = with_out(from_value(v)?, out.as_deref())?;
            run_and_report(&cfg, data, cli.workers)
        }
        Cmd::Bptns(BptnsCmd::Echo { theta, depth, chi, iters, site, mode, lattice, out }) => {
            let depths: Vec<usize> = if depth.is_empty() { (1..=10).collect() } else { depth.clone() };
            let v = json!({
                "name": "bptns-echo",
                "engine": "bptns",
                "task": "echo",
                "lattice": lattice,
                "theta_h": theta,
                "depths": depths,
                "chis": [chi],
                "observable": format!("Z:{site}"),
                "echo_mode": mode,
                "bp": { "iters": iters },
            });
            let cfg = with_out(from_value(v)?, out.as_deref())?;
            run_and_report(&cfg, data, cli.workers)
        }
        Cmd::Bptns(BptnsCmd::DoubleSlit { flux, chi, iters, depth, lattice, out }) => {
            let lat = resolve_lattice(lattice, data)?;
            let opts = BpRunOpts { bp: BpOpts { iters: *iters, ..Default::default() }, ..BpRunOpts::with_chi(*chi) };
            let t = bptns::double_slit_experiment(&lat, *flux, *depth, &opts)?;
            match out {
                Some(p) => {
                    t.write_csv(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?
                }
                None => t.write_csv(std::io::stdout().lock())?,
            }
            Ok(())
        }
        Cmd::Extrapolate { input, out, force } => {
            let rec = ResultRecord::from_file(input).with_context(|| format!("reading {}", input.display()))?;
            let fits = extrapolate_record(&rec, *force);
            let out = out.clone().unwrap_or_else(|| {
                let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
                input.with_file_name(format!("{stem}_fits.csv"))
            });
            write_fits(&fits, &out)?;
            for f in &fits {
                match (&f.fit, &f.error) {
                    (Some(fit), _) => println!(
                        "theta_h={:.4} depth={} b={:.6} extrapolated={:?} monotonic={}",
                        f.theta_h, f.depth, fit.b, fit.extrapolated, fit.monotonic
                    ),
                    (None, Some(e)) => println!("theta_h={:.4} depth={} no fit: {e}", f.theta_h, f.depth),
                    _ => {}
                }
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn from_value(v: Value) -> anyhow::Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_value(v).context("building config")?;
    Ok(cfg)
}

/// Applies `--out`: a `.json` path sets the output directory and record
/// name, anything else is a directory.
fn with_out(mut cfg: ExperimentConfig, out: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let Some(out) = out else { return Ok(cfg) };
    if out.extension().is_some_and(|e| e == "json") {
        let stem = out.file_stem().and_then(|s| s.to_str()).context("output file name")?;
        cfg.name = stem.to_string();
        cfg.output.dir =
            Some(out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf());
    } else {
        cfg.output.dir = Some(out.to_path_buf());
    }
    Ok(cfg)
}

fn sweep_config(sw: &Sweep, engine: &str, task: Option<Value>) -> anyhow::Result<ExperimentConfig> {
    let mut v = match &sw.config {
        Some(p) => serde_json::to_value(ExperimentConfig::from_file(p)?)?,
        None => json!({ "name": engine }),
    };
    let m: &mut Map<String, Value> = v.as_object_mut().context("config is not a table")?;
    if let Some(e) = m.get("engine").and_then(Value::as_str) {
        if e != engine {
            bail!("config engine `{e}` does not match the `{engine}` command");
        }
    }
    m.insert("engine".into(), json!(engine));
    if let Some(t) = task {
        m.insert("task".into(), t);
    }
    let mut set = |k: &str, val: Value| {
        m.insert(k.into(), val);
    };
    if let Some(n) = &sw.name {
        set("name", json!(n));
    }
    if let Some(l) = &sw.lattice {
        set("lattice", json!(l));
    }
    if let Some(t) = &sw.theta_j {
        parse_angle(t)?;
        set("theta_j", json!(t));
    }
    if !sw.theta_h.is_empty() {
        set("theta_h", json!(sw.theta_h));
    }
    let per_depth = matches!(engine, "mps" | "exact");
    if let Some(d) = sw.depth {
        let ds: Vec<usize> = if per_depth { vec![d] } else { (1..=d).collect() };
        set("depths", json!(ds));
    }
    if !sw.depths.is_empty() {
        set("depths", json!(sw.depths));
    }
    if !sw.chi.is_empty() {
        set("chis", json!(sw.chi));
    }
    if let Some(o) = &sw.observable {
        set("observable", json!(o));
    }
    if let Some(x) = &sw.variant {
        set("variant", json!(x));
    }
    with_out(from_value(v)?, sw.out.as_deref())
}

fn sweep(sw: &Sweep, engine: &str, task: Option<Value>, data: Option<&Path>, workers: Option<usize>) -> Outcome {
    let cfg = sweep_config(sw, engine, task)?;
    run_and_report(&cfg, data, workers)
}

fn run_and_report(cfg: &ExperimentConfig, data: Option<&Path>, workers: Option<usize>) -> Outcome {
    let (rec, path) = run_config(cfg, data, workers)?;
    for p in &rec.points {
        let chi = p.point.chi.map(|c| format!(" chi={c}")).unwrap_or_default();
        let flux = if p.point.flux { " flux=pi" } else { "" };
        if let Some(e) = &p.error {
            println!("theta_h={:.4}{chi}{flux}: FAILED {e}", p.point.theta_h);
            continue;
        }
        for r in p.rows.iter().filter(|r| r.site.is_none() || p.rows.len() <= 20) {
            let site = r.site.map(|s| format!(" site={s}")).unwrap_or_default();
            let reference = r.reference.map(|x| format!(" reference={x:.6}")).unwrap_or_default();
            let f = r.f_cumulative.map(|x| format!(" F={x:.6}")).unwrap_or_default();
            println!(
                "theta_h={:.4}{chi}{flux} D={}{site} value={:.6}{reference}{f}",
                p.point.theta_h, r.depth, r.value
            );
        }
    }
    println!("wrote {} ({} points, {:.1}s)", path.display(), rec.points.len(), rec.wall_seconds);
    if rec.failures > 0 {
        return Err(Failure::Partial(rec.failures));
    }
    Ok(())
}

/// Per-site `<Z>` for each theta and depth of an exact sweep, written next to
/// the record as `<name>_magnetization.csv`.
fn write_magnetization(cfg: &ExperimentConfig, data: Option<&Path>) -> anyhow::Result<()> {
    if cfg.task != hexmpo::config::Task::Expectation {
        return Ok(());
    }
    let lat = cfg.validate(data)?;
    let mut csv = String::from("theta_h,depth,site,z\n");
    for t in &cfg.theta_h {
        for &d in &cfg.depths {
            let spec = hexmpo::circuits::CircuitSpec::new(cfg.theta_j.0, t.0, d).with_variant(cfg.variant);
            let psi = exact::evolve(&exact::StateVector::up(lat.site_count)?, &lat, &spec)?;
            for (s, z) in psi.z_profile().iter().enumerate() {
                csv.push_str(&format!("{},{d},{s},{z}\n", t.0));
            }
        }
    }
    let path = cfg.output_dir(data).join(format!("{}_magnetization.csv", cfg.name));
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
