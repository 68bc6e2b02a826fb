//! Experiment configuration files (TOML or JSON) and their validation.

use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::bptns::{BpOpts, EchoMode};
use crate::circuits::Variant;
use crate::clifford::{quarter_turns, stabilizer, Observable, Pauli, PauliString};
use crate::error::{Error, Result};
use crate::heisenberg::modified_operator;
use crate::lattice::Lattice;

/// Environment variable naming the data directory (geometry files and the
/// default output location).
pub const DATA_DIR_ENV: &str = "HEXMPO_DATA_DIR";

/// An angle in radians. Configs may write radians (`0.7`) or multiples of
/// pi (`"0.25pi"`, `"-pi/2"`, `"pi"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle(pub f64);

pub fn parse_angle(text: &str) -> Result<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    let bad = || Error::InvalidArgument(format!("cannot read angle `{text}`"));
    let coeff = |c: &str| -> Result<f64> {
        match c {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            c => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad()),
        }
    };
    let v = if let Some((head, den)) = t.split_once("pi/") {
        let d: f64 = den.parse().map_err(|_| bad())?;
        coeff(head)? * PI / d
    } else if let Some(head) = t.strip_suffix("pi") {
        coeff(head)? * PI
    } else {
        t.parse::<f64>().map_err(|_| bad())?
    };
    if !v.is_finite() {
        return Err(bad());
    }
    Ok(v)
}

impl std::str::FromStr for Angle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_angle(s).map(Angle)
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Angle(x)),
            Raw::Text(t) => parse_angle(&t).map(Angle).map_err(serde::de::Error::custom),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Heisenberg,
    Mps,
    Bptns,
    Exact,
    Clifford,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Engine::Heisenberg => "heisenberg",
            Engine::Mps => "mps",
            Engine::Bptns => "bptns",
            Engine::Exact => "exact",
            Engine::Clifford => "clifford",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// `<O>` after each listed depth.
    #[default]
    Expectation,
    /// Out-of-time-order profiles of the evolved observable.
    Otoc,
    /// Stabilizer echo (graph state) or echo observable (MPS, exact).
    Echo,
    /// X-magnetization after a Z flip at the source site.
    DoubleSlit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub engine: Engine,
    #[serde(default)]
    pub task: Task,
    /// `eagle127`, `twohex21`, `hex12`, `file:<path>`, or a geometry file
    /// name inside the data directory.
    #[serde(default = "default_lattice")]
    pub lattice: String,
    #[serde(default = "default_theta_j")]
    pub theta_j: Angle,
    pub theta_h: Vec<Angle>,
    pub depths: Vec<usize>,
    #[serde(default = "default_chis")]
    pub chis: Vec<usize>,
    #[serde(default)]
    pub variant: Variant,
    /// Each entry runs the sweep with (`true`) or without the lattice's flux
    /// bond negated.
    #[serde(default = "default_fluxes")]
    pub fluxes: Vec<bool>,
    /// `Z:62`, `X:3,Z:5`, `stabilizer:<site>:<D>`, `modified:<site>:<D>`;
    /// sites may be lattice labels.
    #[serde(default = "default_observable")]
    pub observable: String,
    /// Backward angle of echo runs; `theta_h` is the forward angle.
    /// Defaults to the Clifford point pi/2.
    #[serde(default)]
    pub theta_back: Option<Angle>,
    #[serde(default)]
    pub echo_mode: EchoMode,
    /// Restrict state simulations to the observable's causal cone.
    #[serde(default = "yes")]
    pub lightcone: bool,
    #[serde(default)]
    pub window_sweeps: bool,
    #[serde(default)]
    pub bp: BpOpts,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Defaults to `<data dir>/results`, or `results` without a data dir.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write a fidelity-log CSV per sweep point.
    #[serde(default)]
    pub fidelity_logs: bool,
}

fn default_lattice() -> String {
    "twohex21".into()
}
fn default_theta_j() -> Angle {
    Angle(-PI / 2.0)
}
fn default_chis() -> Vec<usize> {
    vec![64]
}
fn default_fluxes() -> Vec<bool> {
    vec![false]
}
fn default_observable() -> String {
    "Z:detector".into()
}
fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

/// Resolves a site token: an index or a lattice label.
pub fn resolve_site(lat: &Lattice, tok: &str) -> Result<usize> {
    let tok = tok.trim();
    let site = match tok.parse::<usize>() {
        Ok(s) => s,
        Err(_) => lat.label(tok).ok_or_else(|| {
            Error::InvalidArgument(format!("`{tok}` is neither a site index nor a label of {}", lat.name))
        })?,
    };
    if site >= lat.site_count {
        return Err(Error::InvalidArgument(format!("site {site} outside {}", lat.name)));
    }
    Ok(site)
}

/// Parses an observable descriptor against a lattice.
pub fn resolve_observable(lat: &Lattice, desc: &str) -> Result<PauliString> {
    let parts: Vec<&str> = desc.trim().split(':').collect();
    match parts.as_slice() {
        ["stabilizer", site, depth] | ["modified", site, depth] => {
            let s = resolve_site(lat, site)?;
            let d: usize = depth.parse().map_err(|_| Error::InvalidArgument(format!("bad depth in `{desc}`")))?;
            if parts[0] == "stabilizer" {
                stabilizer(lat, s, d)
            } else {
                modified_operator(lat, s, d)
            }
        }
        _ => {
            // `P:site` terms; swap labels for indices before parsing
            let mut terms = Vec::new();
            for term in desc.split(',') {
                let (p, site) = term
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidArgument(format!("observable term `{term}` needs `P:site`")))?;
                terms.push(format!("{p}:{}", resolve_site(lat, site)?));
            }
            let obs: Observable = terms.join(",").parse()?;
            let mut seen = BTreeSet::new();
            if obs.0.iter().any(|(s, _)| !seen.insert(*s)) {
                return Err(Error::InvalidArgument(format!("observable `{desc}` repeats a site")));
            }
            obs.to_string_on(lat.site_count)
        }
    }
}

/// Single-site observable `(site, letter)`, as the state engines need.
pub fn single_site(p: &PauliString) -> Option<(usize, Pauli)> {
    match p.support().as_slice() {
        [s] if p.phase() == 0 => Some((*s, p.letter(*s))),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_str_any(text: &str, hint: Option<&Path>) -> Result<Self> {
        let json = match hint.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") => true,
            Some("toml") => false,
            _ => text.trim_start().starts_with('{'),
        };
        if json {
            serde_json::from_str(text).map_err(|e| cfg_err(format!("line {}", e.line()), e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| {
                let at = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_else(|| "document".into());
                cfg_err(at, e.message().to_string())
            })
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path.display().to_string(), e.to_string()))?;
        let cfg = Self::from_str_any(&text, Some(path))?;
        Ok(cfg)
    }

    pub fn lattice_in(&self, data_dir: Option<&Path>) -> Result<Lattice> {
        resolve_lattice(&self.lattice, data_dir).map_err(|e| cfg_err("lattice", e.to_string()))
    }

    /// Checks every field; errors carry the offending field path.
    pub fn validate(&self, data_dir: Option<&Path>) -> Result<Lattice> {
        if self.name.trim().is_empty() || self.name.contains(['/', '\\']) {
            return Err(cfg_err("name", "must be a non-empty file stem"));
        }
        if self.theta_h.is_empty() {
            return Err(cfg_err("theta_h", "sweep grid is empty"));
        }
        for (i, t) in self.theta_h.iter().enumerate() {
            if !t.0.is_finite() {
                return Err(cfg_err(format!("theta_h[{i}]"), "angle is not finite"));
            }
        }
        if !self.theta_j.0.is_finite() {
            return Err(cfg_err("theta_j", "angle is not finite"));
        }
        if self.depths.is_empty() {
            return Err(cfg_err("depths", "sweep grid is empty"));
        }
        if self.chis.is_empty() {
            return Err(cfg_err("chis", "sweep grid is empty"));
        }
        if let Some(i) = self.chis.iter().position(|&c| c == 0) {
            return Err(cfg_err(format!("chis[{i}]"), "bond dimension must be positive"));
        }
        if self.fluxes.is_empty() {
            return Err(cfg_err("fluxes", "sweep grid is empty"));
        }
        if self.workers == 0 {
            return Err(cfg_err("workers", "must be at least 1"));
        }
        if self.bp.iters == 0 {
            return Err(cfg_err("bp.iters", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.bp.damping) {
            return Err(cfg_err("bp.damping", "must lie in [0, 1)"));
        }
        if let Some(t) = self.theta_back {
            if !t.0.is_finite() {
                return Err(cfg_err("theta_back", "angle is not finite"));
            }
        }
        let lat = self.lattice_in(data_dir)?;
        if self.fluxes.contains(&true) && lat.flux_bond.is_none() {
            return Err(cfg_err("fluxes", format!("{} has no flux bond", lat.name)));
        }
        use Engine::*;
        use Task::*;
        let ok = matches!(
            (self.engine, self.task),
            (Heisenberg, Expectation | Otoc)
                | (Mps, Expectation | Echo)
                | (Exact, Expectation | Echo | DoubleSlit)
                | (Clifford, Expectation)
                | (Bptns, Expectation | Echo | DoubleSlit)
        );
        if !ok {
            return Err(cfg_err("task", format!("engine {} does not run {:?}", self.engine, self.task)));
        }
        if self.task != DoubleSlit {
            let obs = resolve_observable(&lat, &self.observable).map_err(|e| cfg_err("observable", e.to_string()))?;
            let single = single_site(&obs);
            if matches!(self.engine, Mps | Bptns) && single.is_none() {
                return Err(cfg_err("observable", "state engines measure single-site observables"));
            }
            if self.task == Echo && single.map(|(_, p)| p) != Some(Pauli::Z) {
                return Err(cfg_err("observable", "echo runs measure a single Z"));
            }
        }
        if self.task != Echo && self.theta_back.is_some() {
            return Err(cfg_err("theta_back", "only echo runs have a backward angle"));
        }
        if self.engine == Bptns && self.theta_back.is_some_and(|t| (t.0 - FRAC_PI_2).abs() > 1e-12) {
            return Err(cfg_err("theta_back", "BP-TNS echo runs backward at pi/2 only"));
        }
        if matches!(self.engine, Exact) && lat.site_count > crate::exact::MAX_QUBITS {
            return Err(cfg_err("lattice", format!("{} sites exceed the dense limit", lat.site_count)));
        }
        if self.engine == Clifford {
            for (i, t) in self.theta_h.iter().enumerate() {
                quarter_turns(t.0).map_err(|e| cfg_err(format!("theta_h[{i}]"), e.to_string()))?;
            }
            quarter_turns(self.theta_j.0).map_err(|e| cfg_err("theta_j", e.to_string()))?;
        }
        Ok(lat)
    }

    pub fn back_angle(&self) -> f64 {
        self.theta_back.map_or(FRAC_PI_2, |a| a.0)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn output_dir(&self, data_dir: Option<&Path>) -> PathBuf {
        match (&self.output.dir, data_dir) {
            (Some(d), _) => d.clone(),
            (None, Some(base)) => base.join("results"),
            (None, None) => PathBuf::from("results"),
        }
    }
}

/// Built-in names, `file:<path>`, or `<data dir>/<name>[.json]`.
pub fn resolve_lattice(spec: &str, data_dir: Option<&Path>) -> Result<Lattice> {
    match Lattice::from_name(spec) {
        Err(Error::UnsupportedGeometry(_)) if data_dir.is_some() => {
            let dir = data_dir.unwrap();
            for cand in [dir.join(spec), dir.join(format!("{spec}.json"))] {
                if cand.is_file() {
                    return Lattice::from_file(&cand);
                }
            }
            Err(Error::UnsupportedGeometry(format!("{spec} (not built in, not found in {})", dir.display())))
        }
        other => other,
    }
}

/// The data directory from the environment, if set.
pub fn data_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_eagle_127, build_two_hexagon_21};

    #[test]
    fn angles() {
        let close = |s: &str, v: f64| assert!((parse_angle(s).unwrap() - v).abs() < 1e-15, "{s}");
        close("0.7", 0.7);
        close("0.25pi", PI / 4.0);
        close("-pi/2", -PI / 2.0);
        close("pi", PI);
        close("-0.5 pi", -PI / 2.0);
        close("2*pi", 2.0 * PI);
        close("3pi/4", 0.75 * PI);
        assert!(parse_angle("quarter").is_err());
        assert!(parse_angle("inf").is_err());
    }

    const TOML: &str = r#"
        name = "demo"
        engine = "heisenberg"
        lattice = "eagle127"
        theta_h = [0, "0.5pi"]
        depths = [3]
        chis = [1]
        observable = "Z:62"
    "#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_str_any(TOML, None).unwrap();
        assert_eq!(cfg.theta_h[1].0, PI / 2.0);
        assert_eq!(cfg.theta_j.0, -PI / 2.0);
        assert_eq!(cfg.workers, 1);
        let lat = cfg.validate(None).unwrap();
        assert_eq!(lat.site_count, 127);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn field_paths_in_errors() {
        let mut cfg = ExperimentConfig::from_str_any(TOML, None).unwrap();
        cfg.chis = vec![4, 0];
        assert!(matches!(cfg.validate(None), Err(Error::Config { path, .. }) if path == "chis[1]"));
        cfg.chis = vec![4];
        cfg.theta_h.push(Angle(f64::NAN));
        assert!(matches!(cfg.validate(None), Err(Error::Config { path, .. }) if path == "theta_h[2]"));
        let bad = TOML.replace("depths = [3]", "depths = [3]\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_str_any(&bad, None), Err(Error::Config { .. })));
        let mut cfg = ExperimentConfig::from_str_any(TOML, None).unwrap();
        cfg.engine = Engine::Clifford;
        cfg.theta_h = vec![Angle(0.7)];
        assert!(matches!(cfg.validate(None), Err(Error::Config { path, .. }) if path == "theta_h[0]"));
        cfg.engine = Engine::Exact;
        assert!(matches!(cfg.validate(None), Err(Error::Config { path, .. }) if path == "lattice"));
    }

    #[test]
    fn observables() {
        let lat = build_two_hexagon_21();
        let p = resolve_observable(&lat, "Z:detector").unwrap();
        assert_eq!(single_site(&p), Some((6, Pauli::Z)));
        let p = resolve_observable(&lat, "X:0,Z:source").err();
        assert!(p.is_some());
        let eagle = build_eagle_127();
        let w = resolve_observable(&eagle, "stabilizer:13:5").unwrap();
        assert_eq!(w.weight(), 10);
        assert!(resolve_observable(&eagle, "Z:200").is_err());
    }

    #[test]
    fn data_dir_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let g = build_two_hexagon_21().to_geometry();
        std::fs::write(dir.path().join("mine.json"), serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(resolve_lattice("mine", Some(dir.path())).unwrap().site_count, 21);
        assert!(resolve_lattice("mine", None).is_err());
    }
}
