//! Sweep execution: expands a config into points, runs them on a bounded
//! worker pool, and writes self-describing JSON records and CSV tables.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bptns::{self, BpRunOpts};
use crate::circuits::{build_program, CircuitSpec};
use crate::clifford::{conjugate_circuit, Direction, Pauli};
use crate::config::{resolve_observable, single_site, Engine, ExperimentConfig, Task};
use crate::error::{Error, Result};
use crate::exact::{self, StateVector};
use crate::fidelity::FidelityLog;
use crate::heisenberg::{evolve_operator, HeisenbergOpts};
use crate::lattice::{snake_order, Lattice, SnakeOrder};
use crate::schrodinger::{self, extrapolate_fidelity, ExtrapolationFit, FitPoint, MpsOpts};
use crate::tt::CompressionOpts;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub index: usize,
    pub theta_h: f64,
    pub chi: Option<usize>,
    pub flux: bool,
    /// Set when each depth is a separate run.
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub depth: usize,
    pub site: Option<usize>,
    pub value: f64,
    /// Dense-oracle value where the experiment computes one.
    pub reference: Option<f64>,
    pub f_cumulative: Option<f64>,
    pub max_oee: Option<f64>,
    pub bond: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub f_final: f64,
    pub events: usize,
    pub truncations: usize,
    pub max_epsilon: f64,
    pub degenerate_splits: usize,
}

impl FidelitySummary {
    fn of(log: &FidelityLog) -> Self {
        FidelitySummary {
            f_final: log.f_cumulative(),
            events: log.entries().len(),
            truncations: log.truncations(),
            max_epsilon: log.max_epsilon(),
            degenerate_splits: log.degenerate_splits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocRow {
    pub depth: usize,
    pub site: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: Point,
    pub error: Option<String>,
    pub rows: Vec<Row>,
    pub fidelity: Option<FidelitySummary>,
    pub diagnostics: BTreeMap<String, f64>,
    pub otoc: Vec<OtocRow>,
    pub wall_seconds: f64,
}

impl PointResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub engine_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub lattice: String,
    pub site_count: usize,
    pub points: Vec<PointResult>,
    pub failures: usize,
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }
}

/// Sweep points in a fixed order: theta, then chi, then flux, then depth.
pub fn expand_points(cfg: &ExperimentConfig) -> Vec<Point> {
    let per_depth = matches!(
        (cfg.engine, cfg.task),
        (Engine::Mps, _)
            | (Engine::Exact, Task::Expectation | Task::Echo)
            | (Engine::Bptns, Task::Expectation | Task::Echo)
    );
    let uses_chi = matches!(cfg.engine, Engine::Heisenberg | Engine::Mps | Engine::Bptns);
    let thetas: Vec<f64> =
        if cfg.task == Task::DoubleSlit { vec![FRAC_PI_2] } else { cfg.theta_h.iter().map(|a| a.0).collect() };
    let chis: Vec<Option<usize>> = if uses_chi { cfg.chis.iter().map(|&c| Some(c)).collect() } else { vec![None] };
    let depths: Vec<Option<usize>> = if per_depth { cfg.depths.iter().map(|&d| Some(d)).collect() } else { vec![None] };
    let mut out = Vec::new();
    for &theta_h in &thetas {
        for &chi in &chis {
            for &flux in &cfg.fluxes {
                for &depth in &depths {
                    out.push(Point { index: out.len(), theta_h, chi, flux, depth });
                }
            }
        }
    }
    out
}

fn order_for(lat: &Lattice) -> SnakeOrder {
    snake_order(lat).unwrap_or_else(|_| SnakeOrder::identity(lat.site_count))
}

fn pauli_matrix(p: Pauli) -> Array2<num_complex::Complex64> {
    Array2::from_shape_fn((2, 2), |(i, j)| p.matrix()[i][j])
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    lat: &'a Lattice,
    out_dir: &'a Path,
}

impl Ctx<'_> {
    fn spec(&self, p: &Point, depth: usize) -> Result<CircuitSpec> {
        let bond = if p.flux { self.lat.flux_bond } else { None };
        Ok(CircuitSpec::new(self.cfg.theta_j.0, p.theta_h, depth).with_variant(self.cfg.variant).with_flux(bond))
    }

    fn max_depth(&self) -> usize {
        self.cfg.depths.iter().copied().max().unwrap_or(0)
    }

    fn compression(&self, chi: usize) -> CompressionOpts {
        CompressionOpts { window_sweeps: self.cfg.window_sweeps, ..CompressionOpts::with_chi(chi) }
    }

    fn bp(&self, chi: usize) -> BpRunOpts {
        BpRunOpts { chi, bp: self.cfg.bp, regauge_each_round: true }
    }

    fn write_fidelity(&self, p: &Point, log: &FidelityLog) -> Result<()> {
        if self.cfg.output.fidelity_logs {
            let path = self.out_dir.join(format!("{}_p{:03}_fidelity.csv", self.cfg.name, p.index));
            log.write_csv(BufWriter::new(File::create(path)?))?;
        }
        Ok(())
    }

    fn run_point(&self, p: &Point) -> Result<PointResult> {
        let mut res = PointResult {
            point: p.clone(),
            error: None,
            rows: Vec::new(),
            fidelity: None,
            diagnostics: BTreeMap::new(),
            otoc: Vec::new(),
            wall_seconds: 0.0,
        };
        let cfg = self.cfg;
        let lat = self.lat;
        let n = lat.site_count;
        let obs = || resolve_observable(lat, &cfg.observable);
        match (cfg.engine, cfg.task) {
            (Engine::Heisenberg, task) => {
                let chi = p.chi.unwrap_or(1);
                let opts = HeisenbergOpts {
                    otoc: task == Task::Otoc,
                    ..HeisenbergOpts { compression: self.compression(chi), ..Default::default() }
                };
                let run = evolve_operator(lat, &obs()?, &self.spec(p, self.max_depth())?, &opts)?;
                for &d in &cfg.depths {
                    let r = run.record(d)?;
                    res.rows.push(Row {
                        depth: d,
                        site: None,
                        value: r.expectation,
                        reference: None,
                        f_cumulative: Some(r.f_cumulative),
                        max_oee: r.max_oee,
                        bond: Some(r.chi),
                    });
                    if let Some(prof) = &r.otoc {
                        res.otoc.extend(prof.iter().enumerate().map(|(site, &value)| OtocRow {
                            depth: d,
                            site,
                            value,
                        }));
                    }
                }
                res.diagnostics.insert("chain_sites".into(), run.chain.len() as f64);
                let imag = run.records.iter().map(|r| r.expectation_imag.abs()).fold(0.0, f64::max);
                res.diagnostics.insert("max_imag".into(), imag);
                res.fidelity = Some(FidelitySummary::of(&run.log));
                self.write_fidelity(p, &run.log)?;
            }
            (Engine::Mps, task) => {
                let d = p.depth.unwrap_or(0);
                let (site, letter) = single_site(&obs()?)
                    .ok_or_else(|| Error::InvalidArgument("single-site observable expected".into()))?;
                let mut opts = MpsOpts { compression: self.compression(p.chi.unwrap_or(1)), ..Default::default() };
                if cfg.lightcone {
                    opts = opts.restricted_to(&[site]);
                }
                let run = if task == Task::Echo {
                    schrodinger::echo(lat, p.theta_h, cfg.back_angle(), d, &opts)?
                } else {
                    schrodinger::evolve_state(lat, &self.spec(p, d)?, &opts)?
                };
                let v = run.expect_local(site, &pauli_matrix(letter))?;
                res.rows.push(Row {
                    depth: d,
                    site: Some(site),
                    value: v.re,
                    reference: None,
                    f_cumulative: Some(run.log.f_cumulative()),
                    max_oee: None,
                    bond: Some(run.state.max_bond()),
                });
                res.diagnostics.insert("chain_sites".into(), run.chain.len() as f64);
                res.fidelity = Some(FidelitySummary::of(&run.log));
                self.write_fidelity(p, &run.log)?;
            }
            (Engine::Exact, Task::DoubleSlit) | (Engine::Bptns, Task::DoubleSlit) => {
                let dmax = self.max_depth();
                let (vals, refs) = if cfg.engine == Engine::Bptns {
                    let t = bptns::double_slit_experiment(lat, p.flux, dmax, &self.bp(p.chi.unwrap_or(1)))?;
                    (t.bptns, Some(t.exact))
                } else {
                    let src = lat
                        .label("source")
                        .ok_or_else(|| Error::UnsupportedGeometry(format!("{} has no source label", lat.name)))?;
                    (exact::double_slit_table(lat, src, dmax, p.flux)?, None)
                };
                for &d in &cfg.depths {
                    for s in 0..n {
                        res.rows.push(Row {
                            depth: d,
                            site: Some(s),
                            value: vals[d][s],
                            reference: refs.as_ref().map(|r| r[d][s]),
                            f_cumulative: None,
                            max_oee: None,
                            bond: None,
                        });
                    }
                }
            }
            (Engine::Exact, task) => {
                let d = p.depth.unwrap_or(0);
                let o = obs()?;
                let value = if task == Task::Echo {
                    let site = o.support()[0];
                    exact::forward_backward_z(lat, p.theta_h, cfg.back_angle(), d, site)?
                } else {
                    let psi = exact::evolve(&StateVector::up(n)?, lat, &self.spec(p, d)?)?;
                    psi.expect_pauli(&o)?
                };
                res.rows.push(Row {
                    depth: d,
                    site: None,
                    value,
                    reference: None,
                    f_cumulative: None,
                    max_oee: None,
                    bond: None,
                });
            }
            (Engine::Clifford, _) => {
                let o = obs()?;
                for &d in &cfg.depths {
                    let prog = build_program(&self.spec(p, d)?, lat, &order_for(lat))?;
                    let s = conjugate_circuit(&o, &prog, Direction::Heisenberg)?;
                    let v = s.expect_up();
                    res.rows.push(Row {
                        depth: d,
                        site: None,
                        value: v.re,
                        reference: None,
                        f_cumulative: Some(1.0),
                        max_oee: None,
                        bond: Some(1),
                    });
                    res.diagnostics.insert(format!("weight_d{d}"), s.weight() as f64);
                }
            }
            (Engine::Bptns, task) => {
                let d = p.depth.unwrap_or(0);
                let (site, letter) = single_site(&obs()?)
                    .ok_or_else(|| Error::InvalidArgument("single-site observable expected".into()))?;
                let opts = self.bp(p.chi.unwrap_or(1));
                let (value, reference) = if task == Task::Echo {
                    let v = bptns::echo_tns(lat, p.theta_h, d, site, &opts, cfg.echo_mode)?;
                    let r = if n <= exact::MAX_QUBITS {
                        Some(exact::forward_backward_z(lat, p.theta_h, FRAC_PI_2, d, site)?)
                    } else {
                        None
                    };
                    (v, r)
                } else {
                    let tns = bptns::evolve_tns(lat, &self.spec(p, d)?, &opts)?;
                    let (g, m) = bptns::bp_regauge(&tns, &cfg.bp)?;
                    res.diagnostics.insert("bp_residual".into(), m.final_residual());
                    let single = crate::clifford::PauliString::single(n, site, letter);
                    (bptns::local_expectation(&g, &m, &single)?, None)
                };
                res.rows.push(Row {
                    depth: d,
                    site: Some(site),
                    value,
                    reference,
                    f_cumulative: None,
                    max_oee: None,
                    bond: None,
                });
            }
        }
        Ok(res)
    }
}

/// Runs every point of the sweep with `workers` threads and writes
/// `<name>.json`, `<name>.csv` and, for OTOC runs, `<name>_otoc.csv` into the
/// output directory. Failed points are recorded and the sweep continues.
pub fn run_config(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
    workers: Option<usize>,
) -> Result<(ResultRecord, PathBuf)> {
    let lat = cfg.validate(data_dir)?;
    let out_dir = cfg.output_dir(data_dir);
    std::fs::create_dir_all(&out_dir)?;
    let workers = workers.unwrap_or(cfg.workers).max(1);
    let points = expand_points(cfg);
    let ctx = Ctx { cfg, lat: &lat, out_dir: &out_dir };
    let t0 = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    log::info!("{}: {} points on {} workers", cfg.name, points.len(), workers);
    let results: Vec<PointResult> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let t = Instant::now();
                let out = catch_unwind(AssertUnwindSafe(|| ctx.run_point(p)));
                let mut r = match out {
                    Ok(Ok(r)) => r,
                    Ok(Err(e)) => failed(p, e.to_string()),
                    Err(panic) => failed(p, panic_text(&panic)),
                };
                r.wall_seconds = t.elapsed().as_secs_f64();
                match &r.error {
                    Some(e) => log::warn!("point {} failed: {e}", p.index),
                    None => log::info!("point {} done in {:.2}s", p.index, r.wall_seconds),
                }
                r
            })
            .collect()
    });
    let record = ResultRecord {
        engine_version: ENGINE_VERSION.into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        lattice: lat.name.clone(),
        site_count: lat.site_count,
        failures: results.iter().filter(|r| !r.ok()).count(),
        points: results,
        wall_seconds: t0.elapsed().as_secs_f64(),
    };
    let json = out_dir.join(format!("{}.json", cfg.name));
    serde_json::to_writer_pretty(BufWriter::new(File::create(&json)?), &record)?;
    write_table(&record, &out_dir.join(format!("{}.csv", cfg.name)))?;
    if record.points.iter().any(|p| !p.otoc.is_empty()) {
        write_otoc(&record, &out_dir.join(format!("{}_otoc.csv", cfg.name)))?;
    }
    Ok((record, json))
}

fn failed(p: &Point, msg: String) -> PointResult {
    PointResult {
        point: p.clone(),
        error: Some(msg),
        rows: Vec::new(),
        fidelity: None,
        diagnostics: BTreeMap::new(),
        otoc: Vec::new(),
        wall_seconds: 0.0,
    }
}

fn panic_text(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".into()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn write_table(rec: &ResultRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "point",
        "theta_h",
        "chi",
        "flux",
        "depth",
        "site",
        "value",
        "reference",
        "f_cumulative",
        "max_oee",
        "bond",
        "error",
    ])
    .map_err(csv_err)?;
    for p in &rec.points {
        let head = [
            p.point.index.to_string(),
            p.point.theta_h.to_string(),
            opt(&p.point.chi),
            (if p.point.flux { "pi" } else { "0" }).to_string(),
        ];
        if let Some(e) = &p.error {
            let mut row = head.to_vec();
            row.extend([
                opt(&p.point.depth),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ]);
            w.write_record(&row).map_err(csv_err)?;
        }
        for r in &p.rows {
            let mut row = head.to_vec();
            row.extend([
                r.depth.to_string(),
                opt(&r.site),
                r.value.to_string(),
                opt(&r.reference),
                opt(&r.f_cumulative),
                opt(&r.max_oee),
                opt(&r.bond),
                String::new(),
            ]);
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_otoc(rec: &ResultRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["point", "theta_h", "chi", "depth", "site", "otoc"]).map_err(csv_err)?;
    for p in &rec.points {
        for o in &p.otoc {
            w.write_record([
                p.point.index.to_string(),
                p.point.theta_h.to_string(),
                opt(&p.point.chi),
                o.depth.to_string(),
                o.site.to_string(),
                o.value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub theta_h: f64,
    pub flux: bool,
    pub depth: usize,
    pub site: Option<usize>,
    pub fit: Option<ExtrapolationFit>,
    pub error: Option<String>,
}

/// Fits `value = a ln F + b` across bond dimensions for every
/// `(theta_h, flux, depth, site)` group of a record.
pub fn extrapolate_record(rec: &ResultRecord, force: bool) -> Vec<FitRow> {
    type Key = (u64, bool, usize, Option<usize>);
    let mut groups: BTreeMap<Key, Vec<FitPoint>> = BTreeMap::new();
    for p in rec.points.iter().filter(|p| p.ok()) {
        let Some(chi) = p.point.chi else { continue };
        for r in &p.rows {
            if let Some(f) = r.f_cumulative {
                groups.entry((p.point.theta_h.to_bits(), p.point.flux, r.depth, r.site)).or_default().push(FitPoint {
                    chi,
                    fidelity: f,
                    value: r.value,
                });
            }
        }
    }
    groups
        .into_iter()
        .map(|((t, flux, depth, site), pts)| {
            let (fit, error) = match extrapolate_fidelity(&pts, force) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            FitRow { theta_h: f64::from_bits(t), flux, depth, site, fit, error }
        })
        .collect()
}

pub fn write_fits(rows: &[FitRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["theta_h", "flux", "depth", "site", "a", "b", "extrapolated", "residual", "monotonic", "error"])
        .map_err(csv_err)?;
    for r in rows {
        let (a, b, x, res, mono) = match &r.fit {
            Some(f) => (
                f.a.to_string(),
                f.b.to_string(),
                opt(&f.extrapolated),
                f.residual.to_string(),
                f.monotonic.to_string(),
            ),
            None => Default::default(),
        };
        w.write_record([
            r.theta_h.to_string(),
            (if r.flux { "pi" } else { "0" }).to_string(),
            r.depth.to_string(),
            opt(&r.site),
            a,
            b,
            x,
            res,
            mono,
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Angle;

    fn base(engine: Engine, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_str_any(
            r#"
            name = "t"
            engine = "heisenberg"
            theta_h = [0.7]
            depths = [1, 2]
            chis = [4]
            "#,
            None,
        )
        .unwrap();
        cfg.engine = engine;
        cfg.output.dir = Some(dir.to_path_buf());
        cfg
    }

    #[test]
    fn clifford_endpoints_through_heisenberg() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(Engine::Heisenberg, dir.path());
        cfg.lattice = "eagle127".into();
        cfg.observable = "Z:62".into();
        cfg.theta_h = vec![Angle(0.0), Angle(FRAC_PI_2)];
        cfg.chis = vec![1];
        cfg.depths = vec![3];
        let (rec, path) = run_config(&cfg, None, None).unwrap();
        assert!(path.is_file());
        assert_eq!(rec.points.len(), 2);
        assert_eq!(rec.failures, 0);
        for p in &rec.points {
            let r = &p.rows[0];
            assert!(r.value == 1.0 || r.value.abs() < 1e-12, "{r:?}");
            assert_eq!(r.f_cumulative, Some(1.0));
        }
        let back = ResultRecord::from_file(&path).unwrap();
        assert_eq!(back.config, cfg);
        assert_eq!(back.config_hash, cfg.hash());
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(Engine::Mps, dir.path());
        cfg.chis = vec![2, 8];
        let a = run_config(&cfg, None, Some(2)).unwrap().0;
        let b = run_config(&cfg, None, Some(2)).unwrap().0;
        assert_eq!(a.points.len(), 4);
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(x.rows, y.rows);
            assert_eq!(x.fidelity, y.fidelity);
        }
    }

    #[test]
    fn engines_agree_on_small_lattice() {
        let dir = tempfile::tempdir().unwrap();
        let mut vals = Vec::new();
        for engine in [Engine::Exact, Engine::Heisenberg, Engine::Mps, Engine::Bptns] {
            let mut cfg = base(engine, dir.path());
            cfg.name = format!("{engine}");
            cfg.lattice = "hex12".into();
            cfg.chis = vec![64];
            cfg.depths = vec![2];
            let rec = run_config(&cfg, None, None).unwrap().0;
            assert_eq!(rec.failures, 0, "{engine}: {:?}", rec.points[0].error);
            vals.push(rec.points[0].rows[0].value);
        }
        assert!(vals.iter().all(|v| (v - vals[0]).abs() < 1e-8), "{vals:?}");
    }

    #[test]
    fn failed_points_do_not_stop_the_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(Engine::Bptns, dir.path());
        cfg.task = Task::Echo;
        cfg.echo_mode = crate::bptns::EchoMode::TruncateForward;
        cfg.chis = vec![2];
        cfg.depths = vec![1];
        cfg.theta_h = vec![Angle(0.7), Angle(1.0)];
        let rec = run_config(&cfg, None, None).unwrap().0;
        assert_eq!(rec.failures, 0);
        let mut cfg = base(Engine::Bptns, dir.path());
        cfg.task = Task::DoubleSlit;
        cfg.lattice = "eagle127".into();
        let rec = run_config(&cfg, None, None).unwrap().0;
        assert_eq!(rec.points.len(), 1);
        assert!(rec.points[0].error.as_ref().unwrap().contains("source"));
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(rec.failures, 1);
    }

    #[test]
    fn extrapolates_across_chi() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(Engine::Mps, dir.path());
        cfg.depths = vec![4];
        cfg.chis = vec![2, 4, 8, 16];
        let rec = run_config(&cfg, None, None).unwrap().0;
        let fits = extrapolate_record(&rec, true);
        assert_eq!(fits.len(), 1);
        let f = fits[0].fit.as_ref().unwrap();
        assert_eq!(f.points.len(), 3);
        write_fits(&fits, &dir.path().join("fits.csv")).unwrap();
    }
}
