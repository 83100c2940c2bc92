//! Experiment configurations shipped with the binary.

use crate::RunError;

pub const PRESETS: &[(&str, &str)] = &[
    ("case1_flat", include_str!("../presets/case1_flat.toml")),
    ("case2_sqrt", include_str!("../presets/case2_sqrt.toml")),
    ("case2_critical_log", include_str!("../presets/case2_critical_log.toml")),
    ("case3_linear", include_str!("../presets/case3_linear.toml")),
    ("rwa_single_atom", include_str!("../presets/rwa_single_atom.toml")),
    ("appendixA_sigma_x", include_str!("../presets/appendixA_sigma_x.toml")),
];

pub fn get(name: &str) -> Result<&'static str, RunError> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        RunError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })
}
