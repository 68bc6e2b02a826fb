//! Pure-state evolution as a matrix product state, forward-backward echo
//! runs, and extrapolation of expectation values in `log F`.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use ndarray::{array, Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::chain::{angle_key, ChainEvolver};
use crate::circuits::{build_program, rx, rzz, CircuitProgram, CircuitSpec, Step, Variant};
use crate::error::{Error, Result};
use crate::fidelity::FidelityLog;
use crate::lattice::{lightcone_of, snake_order, Edge, Lattice, LightconeMode, SnakeOrder};
use crate::tt::{CompressionOpts, TensorTrain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `|up...up>`
    #[default]
    Up,
    /// `|+...+>`
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpsOpts {
    pub compression: CompressionOpts,
    pub initial: InitialState,
    /// Observable sites whose causal cone bounds the simulated region.
    pub restrict_to: Option<Vec<usize>>,
}

impl Default for MpsOpts {
    fn default() -> Self {
        MpsOpts { compression: CompressionOpts::default(), initial: InitialState::Up, restrict_to: None }
    }
}

impl MpsOpts {
    pub fn with_chi(chi: usize) -> Self {
        MpsOpts { compression: CompressionOpts::with_chi(chi), ..Default::default() }
    }

    pub fn restricted_to(mut self, sites: &[usize]) -> Self {
        self.restrict_to = Some(sites.to_vec());
        self
    }
}

#[derive(Debug, Clone)]
pub struct StateRun {
    pub chain: Vec<usize>,
    pub site_count: usize,
    pub state: TensorTrain,
    pub log: FidelityLog,
    /// Norm removed by renormalization after each round.
    pub norms: Vec<f64>,
    pub round_seconds: Vec<f64>,
}

fn order_for(lat: &Lattice) -> SnakeOrder {
    snake_order(lat).unwrap_or_else(|_| SnakeOrder::identity(lat.site_count))
}

struct StateEvolver {
    ev: ChainEvolver,
    norms: Vec<f64>,
    seconds: Vec<f64>,
}

impl StateEvolver {
    fn new(lat: &Lattice, sites: Vec<usize>, opts: &MpsOpts) -> Result<Self> {
        let order = order_for(lat);
        let sites = ChainEvolver::arrange(sites, &order);
        let h = 1.0 / 2f64.sqrt();
        let local = match opts.initial {
            InitialState::Up => Array1::from(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            InitialState::Right => Array1::from(vec![C64::new(h, 0.0), C64::new(h, 0.0)]),
        };
        let tt = TensorTrain::product(&vec![local; sites.len()])?;
        let ev = ChainEvolver::new(sites, &order, tt, opts.compression)?;
        Ok(StateEvolver { ev, norms: Vec::new(), seconds: Vec::new() })
    }

    fn apply_step(&mut self, step: &Step, sign: f64) -> Result<()> {
        match step {
            Step::Zz { layer, angles } => {
                let bonds: Vec<(Edge, u64)> = layer
                    .bonds
                    .iter()
                    .zip(angles)
                    .filter(|(&(a, b), &t)| t != 0.0 && self.ev.contains(a) && self.ev.contains(b))
                    .map(|(&e, &t)| (e, angle_key(sign * t)))
                    .collect();
                if !bonds.is_empty() {
                    self.ev.apply_bonds(&bonds, &|k| rzz(f64::from_bits(k)))?;
                }
            }
            Step::Rx { angles } => {
                for (s, &t) in angles.iter().enumerate() {
                    if t != 0.0 && self.ev.contains(s) {
                        self.ev.apply_site(s, &rx(sign * t))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn apply_product(&mut self, steps: &[Step]) -> Result<()> {
        for st in steps.iter().rev() {
            self.apply_step(st, 1.0)?;
        }
        Ok(())
    }

    fn apply_product_dagger(&mut self, steps: &[Step]) -> Result<()> {
        for st in steps {
            self.apply_step(st, -1.0)?;
        }
        Ok(())
    }

    fn end_round(&mut self, t0: Instant) -> Result<()> {
        let n = self.ev.tt.renormalize()?;
        self.norms.push(n);
        self.ev.log.mark_round();
        self.seconds.push(t0.elapsed().as_secs_f64());
        Ok(())
    }

    fn run_forward(&mut self, prog: &CircuitProgram) -> Result<()> {
        for _ in 0..prog.depth {
            let t0 = Instant::now();
            self.apply_product(&prog.round.steps)?;
            self.end_round(t0)?;
        }
        if !prog.tail.is_empty() {
            let t0 = Instant::now();
            self.apply_product(&prog.tail)?;
            self.end_round(t0)?;
        }
        Ok(())
    }

    fn run_backward(&mut self, prog: &CircuitProgram) -> Result<()> {
        if !prog.tail.is_empty() {
            let t0 = Instant::now();
            self.apply_product_dagger(&prog.tail)?;
            self.end_round(t0)?;
        }
        for _ in 0..prog.depth {
            let t0 = Instant::now();
            self.apply_product_dagger(&prog.round.steps)?;
            self.end_round(t0)?;
        }
        Ok(())
    }

    fn finish(self, site_count: usize) -> StateRun {
        StateRun {
            chain: self.ev.sites().to_vec(),
            site_count,
            state: self.ev.tt,
            log: self.ev.log,
            norms: self.norms,
            round_seconds: self.seconds,
        }
    }
}

fn region(lat: &Lattice, opts: &MpsOpts, rounds: usize, mode: LightconeMode) -> Vec<usize> {
    match &opts.restrict_to {
        Some(obs) => lightcone_of(lat, obs, rounds, mode).into_iter().collect(),
        None => (0..lat.site_count).collect(),
    }
}

fn mode_of(spec: &CircuitSpec) -> LightconeMode {
    match spec.variant {
        Variant::NonCommuting => LightconeMode::NonCommuting,
        _ => LightconeMode::Standard,
    }
}

/// `U^D` applied to the initial state, compressed after every gate and
/// renormalized after every round.
pub fn evolve_state(lat: &Lattice, spec: &CircuitSpec, opts: &MpsOpts) -> Result<StateRun> {
    let prog = build_program(spec, lat, &order_for(lat))?;
    let mut se = StateEvolver::new(lat, region(lat, opts, spec.depth + prog.tail.len(), mode_of(spec)), opts)?;
    se.run_forward(&prog)?;
    Ok(se.finish(lat.site_count))
}

/// `U^dag(theta_back)^D U(theta_fwd)^D |up...up>` at `theta_J = -pi/2`.
pub fn echo(lat: &Lattice, theta_fwd: f64, theta_back: f64, depth: usize, opts: &MpsOpts) -> Result<StateRun> {
    let order = order_for(lat);
    let fwd = build_program(&CircuitSpec::new(-FRAC_PI_2, theta_fwd, depth), lat, &order)?;
    let bwd = build_program(&CircuitSpec::new(-FRAC_PI_2, theta_back, depth), lat, &order)?;
    let mut se = StateEvolver::new(lat, region(lat, opts, 2 * depth, LightconeMode::Standard), opts)?;
    se.run_forward(&fwd)?;
    se.run_backward(&bwd)?;
    Ok(se.finish(lat.site_count))
}

/// Stabilizer echo: forward at `theta`, backward at the Clifford angle.
pub fn forward_backward(lat: &Lattice, theta: f64, depth: usize, opts: &MpsOpts) -> Result<StateRun> {
    echo(lat, theta, FRAC_PI_2, depth, opts)
}

impl StateRun {
    /// `<m>` for a 2x2 matrix on `site`; sites outside the simulated region
    /// are evaluated on the untouched initial product state.
    pub fn expect_local(&self, site: usize, m: &Array2<C64>) -> Result<C64> {
        let p = self
            .chain
            .iter()
            .position(|&s| s == site)
            .ok_or_else(|| Error::InvalidArgument(format!("site {site} outside the simulated region")))?;
        let mut t = self.state.clone();
        t.canonicalize(p)?;
        let a = t.tensor(p);
        let (l, _, r) = a.dim();
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for i in 0..l {
            for j in 0..r {
                let v = [a[[i, 0, j]], a[[i, 1, j]]];
                den += v[0].norm_sqr() + v[1].norm_sqr();
                for x in 0..2 {
                    for y in 0..2 {
                        num += v[x].conj() * m[[x, y]] * v[y];
                    }
                }
            }
        }
        Ok(num / den)
    }

    pub fn expect_z(&self, site: usize) -> Result<f64> {
        let z = array![[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]];
        Ok(self.expect_local(site, &z)?.re)
    }

    pub fn expect_x(&self, site: usize) -> Result<f64> {
        let x = array![[C64::new(0.0, 0.0), C64::new(1.0, 0.0)], [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]];
        Ok(self.expect_local(site, &x)?.re)
    }

    /// Dense state on all lattice sites, bit `s` for site `s`. Only for
    /// unrestricted runs of at most 24 sites.
    pub fn to_statevector(&self) -> Result<crate::exact::StateVector> {
        if self.chain.len() != self.site_count {
            return Err(Error::InvalidArgument("restricted run has no full state".into()));
        }
        let v = self.state.to_dense();
        let n = self.site_count;
        let mut amps = vec![C64::new(0.0, 0.0); v.len()];
        for (idx, z) in v.iter().enumerate() {
            let mut x = 0usize;
            for (p, &s) in self.chain.iter().enumerate() {
                if (idx >> (n - 1 - p)) & 1 == 1 {
                    x |= 1 << s;
                }
            }
            amps[x] = *z;
        }
        crate::exact::StateVector::from_amps(amps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub chi: usize,
    pub fidelity: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationFit {
    /// The points the fit used: the three largest bond dimensions.
    pub points: Vec<FitPoint>,
    pub a: f64,
    pub b: f64,
    /// `b`, unless the values are non-monotonic in chi and the fit was not
    /// forced.
    pub extrapolated: Option<f64>,
    pub residual: f64,
    pub monotonic: bool,
    pub forced: bool,
}

impl ExtrapolationFit {
    /// Standard error of `b` for independent noise of deviation `sigma`.
    pub fn b_stderr(&self, sigma: f64) -> f64 {
        let n = self.points.len() as f64;
        let xs: Vec<f64> = self.points.iter().map(|p| p.fidelity.ln()).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        sigma * (1.0 / n + mean * mean / sxx).sqrt()
    }
}

/// Least-squares fit `value = a log F + b` over the three largest-chi points.
pub fn extrapolate_fidelity(points: &[FitPoint], force: bool) -> Result<ExtrapolationFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("extrapolation needs 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|p| !(p.fidelity > 0.0 && p.fidelity <= 1.0) || !p.value.is_finite()) {
        return Err(Error::InvalidArgument(format!("fidelity {} outside (0, 1]", p.fidelity)));
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.chi);
    let pts = pts[pts.len() - 3..].to_vec();
    let xs: Vec<f64> = pts.iter().map(|p| p.fidelity.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.value).collect();
    let xm = xs.iter().sum::<f64>() / 3.0;
    let ym = ys.iter().sum::<f64>() / 3.0;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("fit points share one fidelity".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let a = sxy / sxx;
    let b = ym - a * xm;
    let residual = xs.iter().zip(&ys).map(|(x, y)| (y - a * x - b).powi(2)).sum::<f64>().sqrt();
    let monotonic = ys.windows(2).all(|w| w[1] >= w[0]) || ys.windows(2).all(|w| w[1] <= w[0]);
    if !monotonic {
        log::warn!("values are non-monotonic in chi; extrapolation {}", if force { "forced" } else { "withheld" });
    }
    Ok(ExtrapolationFit {
        points: pts,
        a,
        b,
        extrapolated: if monotonic || force { Some(b) } else { None },
        residual,
        monotonic,
        forced: force,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{self, StateVector};
    use crate::lattice::{build_single_hexagon_12, build_two_hexagon_21};
    use std::f64::consts::PI;

    #[test]
    fn diagonal_circuit_stays_product() {
        let lat = build_two_hexagon_21();
        let run = evolve_state(&lat, &CircuitSpec::new(-PI / 2.0, 0.0, 5), &MpsOpts::with_chi(4)).unwrap();
        assert_eq!(run.state.max_bond(), 1);
        assert_eq!(run.log.f_cumulative(), 1.0);
        assert!((run.expect_z(6).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_state() {
        let lat = build_single_hexagon_12();
        let spec = CircuitSpec::new(-0.4, 0.7, 3);
        let run = evolve_state(&lat, &spec, &MpsOpts::with_chi(64)).unwrap();
        let psi = exact::evolve(&StateVector::up(12).unwrap(), &lat, &spec).unwrap();
        let ov = psi.inner(&run.to_statevector().unwrap());
        assert!(ov.norm_sqr() > 1.0 - 1e-10);
        assert!(run.norms.iter().all(|n| (n - 1.0).abs() < 1e-10));
    }

    #[test]
    fn forward_backward_clifford_is_exact() {
        let lat = build_two_hexagon_21();
        let run = forward_backward(&lat, PI / 2.0, 4, &MpsOpts::with_chi(1024)).unwrap();
        assert_eq!(run.state.max_bond(), 1);
        assert!((run.expect_z(6).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_matches_dense() {
        let lat = build_single_hexagon_12();
        let run = forward_backward(&lat, 0.0, 1, &MpsOpts::with_chi(64)).unwrap();
        let d = exact::forward_backward_z(&lat, 0.0, PI / 2.0, 1, 0).unwrap();
        assert!((run.expect_z(0).unwrap() - d).abs() < 1e-10);
    }

    #[test]
    fn restriction_is_exact() {
        let lat = build_two_hexagon_21();
        let spec = CircuitSpec::new(-PI / 2.0, 0.9, 2);
        let run = evolve_state(&lat, &spec, &MpsOpts::with_chi(256).restricted_to(&[6])).unwrap();
        assert!(run.chain.len() < 21);
        let d = exact::z_expectation(&lat, &spec, 6).unwrap();
        assert!((run.expect_z(6).unwrap() - d).abs() < 1e-10);
    }

    #[test]
    fn flat_spectrum_truncation_loses_fidelity() {
        let lat = build_two_hexagon_21();
        let run = evolve_state(&lat, &CircuitSpec::new(-PI / 2.0, PI / 2.0, 4), &MpsOpts::with_chi(4)).unwrap();
        assert!(run.log.f_cumulative() < 0.5);
        assert!(run.log.degenerate_splits > 0);
    }

    fn pts(fs: &[f64], vs: &[f64]) -> Vec<FitPoint> {
        fs.iter().zip(vs).enumerate().map(|(i, (&f, &v))| FitPoint { chi: 16 << i, fidelity: f, value: v }).collect()
    }

    #[test]
    fn recovers_line() {
        let fs = [0.2, 0.5, 0.7, 0.9];
        let vs: Vec<f64> = fs.iter().map(|f: &f64| 0.3 * f.ln() + 0.8).collect();
        let fit = extrapolate_fidelity(&pts(&fs, &vs), false).unwrap();
        assert!((fit.a - 0.3).abs() < 1e-12 && (fit.b - 0.8).abs() < 1e-12);
        assert_eq!(fit.extrapolated, Some(fit.b));
        assert_eq!(fit.points.len(), 3);
        assert_eq!(fit.points[0].chi, 32);
    }

    #[test]
    fn constant_values() {
        let fit = extrapolate_fidelity(&pts(&[0.3, 0.6, 0.8], &[0.42; 3]), false).unwrap();
        assert_eq!(fit.a, 0.0);
        assert!((fit.b - 0.42).abs() < 1e-15);
    }

    #[test]
    fn non_monotonic_is_flagged() {
        let p = pts(&[0.3, 0.6, 0.8], &[0.5, 0.7, 0.6]);
        let fit = extrapolate_fidelity(&p, false).unwrap();
        assert!(!fit.monotonic);
        assert_eq!(fit.extrapolated, None);
        let forced = extrapolate_fidelity(&p, true).unwrap();
        assert_eq!(forced.extrapolated, Some(forced.b));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(extrapolate_fidelity(&pts(&[0.3, 0.6], &[0.1, 0.2]), false).is_err());
        assert!(extrapolate_fidelity(&pts(&[0.0, 0.6, 0.7], &[0.1, 0.2, 0.3]), false).is_err());
        assert!(extrapolate_fidelity(&pts(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]), false).is_err());
    }

    #[test]
    fn noisy_fit_within_error_propagation() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let sigma = 1e-3;
        let noise = Normal::new(0.0, sigma).unwrap();
        let fs = [0.4, 0.6, 0.85];
        let mut devs = Vec::new();
        let mut se = 0.0;
        for _ in 0..400 {
            let vs: Vec<f64> = fs.iter().map(|f: &f64| -0.2 * f.ln() + 0.5 + noise.sample(&mut rng)).collect();
            let fit = extrapolate_fidelity(&pts(&fs, &vs), true).unwrap();
            se = fit.b_stderr(sigma);
            devs.push(fit.b - 0.5);
        }
        let rms = (devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64).sqrt();
        assert!(rms > 0.8 * se && rms < 1.2 * se, "rms {rms} vs predicted {se}");
    }
}
