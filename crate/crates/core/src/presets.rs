//! Named desk-scale experiment configurations.

use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeClass {
    Seconds,
    Minutes,
    Hours,
}

impl std::fmt::Display for RuntimeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RuntimeClass::Seconds => "seconds",
            RuntimeClass::Minutes => "minutes",
            RuntimeClass::Hours => "hours",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Rough single-worker wall time on a desk machine.
    pub runtime: RuntimeClass,
    pub config: ExperimentConfig,
}

const THETA_GRID: &str =
    r#"theta_h = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, "0.5pi"]"#;

fn table() -> Vec<(&'static str, &'static str, RuntimeClass, String)> {
    use RuntimeClass::*;
    vec![
        (
            "weight10-depth5",
            "Weight-10 stabilizer of Z_13 after five Clifford rounds, swept over theta_h at depth 5",
            Minutes,
            format!(
                r#"engine = "heisenberg"
lattice = "eagle127"
observable = "stabilizer:weight10_source:5"
depths = [5]
chis = [64]
{THETA_GRID}"#
            ),
        ),
        (
            "weight17-depth5",
            "Weight-17 stabilizer of Z_58 after five Clifford rounds, swept over theta_h at depth 5",
            Minutes,
            format!(
                r#"engine = "heisenberg"
lattice = "eagle127"
observable = "stabilizer:weight17_source:5"
depths = [5]
chis = [64]
{THETA_GRID}"#
            ),
        ),
        (
            "modified-weight17",
            "Weight-17 stabilizer with an extra final R_X layer, depth 5",
            Minutes,
            format!(
                r#"engine = "heisenberg"
lattice = "eagle127"
variant = "extra_final_rx"
observable = "modified:weight17_source:5"
depths = [5]
chis = [64]
{THETA_GRID}"#
            ),
        ),
        (
            "z62-depth-sweep",
            "<Z_62> for depths 1 to 10 over the theta_h grid",
            Hours,
            format!(
                r#"engine = "heisenberg"
lattice = "eagle127"
observable = "Z:center"
depths = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
chis = [64]
{THETA_GRID}"#
            ),
        ),
        (
            "oee-growth-commuting",
            "Operator entanglement growth of Z_62 at theta_J = -pi/2",
            Minutes,
            r#"engine = "heisenberg"
lattice = "eagle127"
observable = "Z:center"
theta_h = [0.3, 0.7, 1.2]
depths = [1, 2, 3, 4, 5, 6, 7]
chis = [128]"#
                .into(),
        ),
        (
            "oee-growth-quarter-zz",
            "Operator entanglement growth of Z_62 at theta_J = -pi/4",
            Minutes,
            r#"engine = "heisenberg"
lattice = "eagle127"
observable = "Z:center"
theta_j = "-0.25pi"
theta_h = [0.3, 0.7, 1.2]
depths = [1, 2, 3, 4, 5, 6, 7]
chis = [128]"#
                .into(),
        ),
        (
            "oee-growth-noncommuting",
            "Operator entanglement growth of Z_62 with R_X after every ZZ layer",
            Minutes,
            r#"engine = "heisenberg"
lattice = "eagle127"
variant = "non_commuting"
observable = "Z:center"
theta_h = [0.3, 0.7, 1.2]
depths = [1, 2, 3, 4, 5, 6, 7]
chis = [128]"#
                .into(),
        ),
        (
            "fig3c-otoc-deskscale",
            "OTOC profile of Z_62 for D <= 7 at theta_h = 0.7",
            Seconds,
            r#"engine = "heisenberg"
task = "otoc"
lattice = "eagle127"
observable = "Z:center"
theta_h = [0.7]
depths = [1, 2, 3, 4, 5, 6, 7]
chis = [64]"#
                .into(),
        ),
        (
            "fig4-stabilizer-echo",
            "Forward-backward stabilizer echo on the two-hexagon lattice, BP-TNS against the dense state",
            Hours,
            r#"engine = "bptns"
task = "echo"
lattice = "twohex21"
observable = "Z:detector"
theta_h = [1.2, 1.4, 1.5]
depths = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
chis = [128]"#
                .into(),
        ),
        (
            "fig5-double-slit",
            "Double-slit <X_j> tables with and without flux, BP-TNS and dense",
            Hours,
            r#"engine = "bptns"
task = "double_slit"
lattice = "twohex21"
theta_h = ["0.5pi"]
depths = [14]
chis = [128]
fluxes = [false, true]"#
                .into(),
        ),
        (
            "fig5-double-slit-exact",
            "Double-slit <X_j> tables with and without flux from the dense state only",
            Seconds,
            r#"engine = "exact"
task = "double_slit"
lattice = "twohex21"
theta_h = ["0.5pi"]
depths = [14]
fluxes = [false, true]"#
                .into(),
        ),
        (
            "extrapolation-demo",
            "<Z_62> at chi 16 to 128 for fidelity extrapolation",
            Minutes,
            r#"engine = "heisenberg"
lattice = "eagle127"
observable = "Z:center"
theta_h = [0.7]
depths = [1, 2, 3, 4, 5, 6, 7]
chis = [16, 32, 64, 128]"#
                .into(),
        ),
        (
            "clifford-z62",
            "Closed-form <Z_62> at the Clifford endpoints up to depth 20",
            Seconds,
            r#"engine = "clifford"
lattice = "eagle127"
observable = "Z:center"
theta_h = [0.0, "0.5pi"]
depths = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20]"#
                .into(),
        ),
        (
            "dense-check",
            "Dense statevector <Z_detector> on the two-hexagon lattice for D <= 4",
            Seconds,
            r#"engine = "exact"
lattice = "twohex21"
observable = "Z:detector"
theta_h = [0.3, 0.7, 1.2]
depths = [1, 2, 3, 4]"#
                .into(),
        ),
    ]
}

/// All presets, in a fixed order.
pub fn presets() -> Vec<Preset> {
    table()
        .into_iter()
        .map(|(name, description, runtime, body)| {
            let text = format!("name = \"{name}\"\n{body}\n");
            let config = ExperimentConfig::from_str_any(&text, None).unwrap_or_else(|e| panic!("preset {name}: {e}"));
            Preset { name, description, runtime, config }
        })
        .collect()
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_least_nine_and_all_valid() {
        let all = presets();
        assert!(all.len() >= 9);
        for p in &all {
            p.config.validate(None).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(p.config.name, p.name);
        }
        let names: std::collections::BTreeSet<_> = all.iter().map(|p| p.name).collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn lookup() {
        assert_eq!(preset("fig3c-otoc-deskscale").unwrap().config.depths, (1..=7).collect::<Vec<_>>());
        assert!(preset("nope").is_none());
    }
}
