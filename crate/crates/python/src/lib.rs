//! Python bindings: lattice queries, the engines at single points, and the
//! config runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hexmpo::bptns::{echo_tns, BpRunOpts, EchoMode};
use hexmpo::circuits::CircuitSpec;
use hexmpo::clifford::stabilizer;
use hexmpo::config::{parse_angle, resolve_lattice, resolve_observable, resolve_site, ExperimentConfig};
use hexmpo::error::Error;
use hexmpo::heisenberg::{evolve_operator, HeisenbergOpts};
use hexmpo::lattice::{lightcone_of, Lattice, LightconeMode};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::UnsupportedGeometry(_) | Error::NonClifford(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn lattice(name: &str) -> PyResult<Lattice> {
    resolve_lattice(name, hexmpo::config::data_dir_from_env().as_deref()).map_err(err)
}

/// Angle in radians from a number or text such as `"0.25pi"`.
#[pyfunction]
fn angle(text: &str) -> PyResult<f64> {
    parse_angle(text).map_err(err)
}

/// `(site_count, edges)` of a named or file-backed lattice.
#[pyfunction]
#[pyo3(signature = (name="eagle127"))]
fn lattice_edges(name: &str) -> PyResult<(usize, Vec<(usize, usize)>)> {
    let lat = lattice(name)?;
    Ok((lat.site_count, lat.edges.clone()))
}

/// Sites of the lightcone of `site` after `depth` rounds.
#[pyfunction]
#[pyo3(signature = (site, depth, lattice_name="eagle127", non_commuting=false))]
fn lightcone(site: &str, depth: usize, lattice_name: &str, non_commuting: bool) -> PyResult<Vec<usize>> {
    let lat = lattice(lattice_name)?;
    let s = resolve_site(&lat, site).map_err(err)?;
    let mode = if non_commuting { LightconeMode::NonCommuting } else { LightconeMode::Standard };
    Ok(lightcone_of(&lat, &[s], depth, mode).into_iter().collect())
}

/// Compact form of the depth-`depth` stabilizer grown from `Z_site`.
#[pyfunction]
#[pyo3(signature = (site, depth, lattice_name="eagle127"))]
fn clifford_stabilizer(site: &str, depth: usize, lattice_name: &str) -> PyResult<String> {
    let lat = lattice(lattice_name)?;
    let s = resolve_site(&lat, site).map_err(err)?;
    Ok(stabilizer(&lat, s, depth).map_err(err)?.to_compact())
}

/// Per-depth `(expectation, F_D, max_oee)` from the operator engine.
#[pyfunction]
#[pyo3(signature = (observable, theta_h, depth, chi, lattice_name="eagle127", theta_j=-std::f64::consts::FRAC_PI_2))]
fn heisenberg(
    py: Python<'_>,
    observable: &str,
    theta_h: f64,
    depth: usize,
    chi: usize,
    lattice_name: &str,
    theta_j: f64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let lat = lattice(lattice_name)?;
    let obs = resolve_observable(&lat, observable).map_err(err)?;
    let spec = CircuitSpec::new(theta_j, theta_h, depth);
    let run = py.detach(|| evolve_operator(&lat, &obs, &spec, &HeisenbergOpts::with_chi(chi))).map_err(err)?;
    Ok(run.records.iter().map(|r| (r.expectation, r.f_cumulative, r.max_oee.unwrap_or(0.0))).collect())
}

/// Dense `<Z_site>` after `depth` rounds.
#[pyfunction]
#[pyo3(signature = (site, theta_h, depth, lattice_name="twohex21", theta_j=-std::f64::consts::FRAC_PI_2))]
fn exact_z(py: Python<'_>, site: &str, theta_h: f64, depth: usize, lattice_name: &str, theta_j: f64) -> PyResult<f64> {
    let lat = lattice(lattice_name)?;
    let s = resolve_site(&lat, site).map_err(err)?;
    py.detach(|| hexmpo::exact::z_expectation(&lat, &CircuitSpec::new(theta_j, theta_h, depth), s)).map_err(err)
}

/// BP-TNS stabilizer echo: forward at `theta`, backward at pi/2.
#[pyfunction]
#[pyo3(signature = (theta, depth, chi=128, site="detector", lattice_name="twohex21"))]
fn bptns_echo(py: Python<'_>, theta: f64, depth: usize, chi: usize, site: &str, lattice_name: &str) -> PyResult<f64> {
    let lat = lattice(lattice_name)?;
    let s = resolve_site(&lat, site).map_err(err)?;
    py.detach(|| echo_tns(&lat, theta, depth, s, &BpRunOpts::with_chi(chi), EchoMode::TruncateBoth)).map_err(err)
}

/// Names of the built-in presets.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    hexmpo::presets::presets().iter().map(|p| p.name).collect()
}

/// Runs a config file (TOML or JSON); returns `(record JSON, record path)`.
#[pyfunction]
#[pyo3(signature = (path, workers=None))]
fn run_config(py: Python<'_>, path: PathBuf, workers: Option<usize>) -> PyResult<(String, PathBuf)> {
    let cfg = ExperimentConfig::from_file(&path).map_err(err)?;
    let data = hexmpo::config::data_dir_from_env();
    let (rec, out) = py.detach(|| hexmpo::runner::run_config(&cfg, data.as_deref(), workers)).map_err(err)?;
    let json = serde_json::to_string(&rec).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((json, out))
}

/// Whether the BLAS/LAPACK backend passes its self-test.
#[pyfunction]
fn backend_ok() -> bool {
    hexmpo::linalg::backend_self_test().is_ok()
}

#[pymodule]
fn hexmpo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", hexmpo::runner::ENGINE_VERSION)?;
    m.add_function(wrap_pyfunction!(angle, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_edges, m)?)?;
    m.add_function(wrap_pyfunction!(lightcone, m)?)?;
    m.add_function(wrap_pyfunction!(clifford_stabilizer, m)?)?;
    m.add_function(wrap_pyfunction!(heisenberg, m)?)?;
    m.add_function(wrap_pyfunction!(exact_z, m)?)?;
    m.add_function(wrap_pyfunction!(bptns_echo, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(backend_ok, m)?)?;
    Ok(())
}
