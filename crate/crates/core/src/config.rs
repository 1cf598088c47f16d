//! Run configuration: versioned TOML with nested sections. Unknown keys are
//! rejected so that a misspelled tolerance cannot silently fall back to a
//! default.

use crate::error::{Error, Result};
use crate::model::{KahlerModel, Potential, ScalarRep, SpherePoly};
use crate::poly::ZPoly;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub j: Vec<u8>,
    pub k: Vec<u8>,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereTerm {
    pub x1: u8,
    pub x2: u8,
    pub x3: u8,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "fock" | "radial-bergman" | "sphere"
    pub kind: String,
    pub energy: f64,
    /// base point (re, im) per complex coordinate
    pub z: Vec<[f64; 2]>,
    /// potential perturbation terms (fock: must be empty; radial: diagonal)
    #[serde(default)]
    pub potential_terms: Vec<PolyTerm>,
    /// polynomial Hamiltonian terms in (z, z̄); defaults to |z|^2
    #[serde(default)]
    pub hamiltonian_terms: Vec<PolyTerm>,
    /// ambient sphere Hamiltonian terms; defaults to the height function
    #[serde(default)]
    pub sphere_terms: Vec<SphereTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub k_ladder: Vec<u32>,
    #[serde(default = "default_mollifier_t")]
    pub mollifier_t: Vec<f64>,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_quadrature_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
    #[serde(default = "default_return_tol")]
    pub return_tol: f64,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// negative control: feed a non-symplectic fixture through the identity
    /// suites, which must then fail with a named invariant
    #[serde(default)]
    pub inject_nonsymplectic: bool,
}

fn default_mollifier_t() -> Vec<f64> {
    vec![5.0, 10.0, 20.0, 40.0]
}
fn default_n_max() -> u32 {
    32
}
fn default_quadrature_order() -> usize {
    40
}
fn default_ode_tol() -> f64 {
    1e-10
}
fn default_return_tol() -> f64 {
    1e-9
}
fn default_tail_tol() -> f64 {
    1e-10
}
fn default_t_max() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unrecognized schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.run.k_ladder.is_empty() {
            return Err(Error::Config("k_ladder must be nonempty".into()));
        }
        if self.run.k_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("k_ladder must be strictly increasing".into()));
        }
        for (name, v) in [
            ("ode_tol", self.run.ode_tol),
            ("return_tol", self.run.return_tol),
            ("tail_tol", self.run.tail_tol),
            ("t_max", self.run.t_max),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.run.mollifier_t.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::Config("mollifier_t entries must be positive".into()));
        }
        if self.run.quadrature_order < 8 {
            return Err(Error::Config("quadrature_order must be at least 8".into()));
        }
        match self.model.kind.as_str() {
            "fock" | "radial-bergman" | "sphere" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown model kind '{other}' (expected fock | radial-bergman | sphere)"
                )))
            }
        }
        if self.model.z.is_empty() {
            return Err(Error::Config("base point z must be given".into()));
        }
        Ok(())
    }

    pub fn base_point(&self) -> Vec<Complex64> {
        self.model
            .z
            .iter()
            .map(|p| Complex64::new(p[0], p[1]))
            .collect()
    }

    /// Builds the configured model.
    pub fn build_model(&self) -> Result<KahlerModel> {
        let m = self.model.z.len();
        match self.model.kind.as_str() {
            "sphere" => {
                if m != 1 {
                    return Err(Error::Config("sphere model requires m = 1".into()));
                }
                let sp = if self.model.sphere_terms.is_empty() {
                    SpherePoly::height()
                } else {
                    SpherePoly {
                        terms: self
                            .model
                            .sphere_terms
                            .iter()
                            .map(|t| ((t.x1, t.x2, t.x3), t.c))
                            .collect(),
                    }
                };
                KahlerModel::sphere(sp, self.model.energy)
            }
            kind => {
                let h = if self.model.hamiltonian_terms.is_empty() {
                    ZPoly::norm_squared(m)
                } else {
                    let mut p = ZPoly::zero(m);
                    for t in &self.model.hamiltonian_terms {
                        p.add_term(&t.j, &t.k, Complex64::new(t.c, 0.0));
                    }
                    p
                };
                let pot = if self.model.potential_terms.is_empty() {
                    Potential::flat(m)
                } else {
                    let terms: Vec<(Vec<u8>, Vec<u8>, f64)> = self
                        .model
                        .potential_terms
                        .iter()
                        .map(|t| (t.j.clone(), t.k.clone(), t.c))
                        .collect();
                    Potential::series(m, &terms)?
                };
                if kind == "fock" && !self.model.potential_terms.is_empty() {
                    return Err(Error::Config(
                        "fock models use the flat potential; move terms to radial-bergman".into(),
                    ));
                }
                KahlerModel::new(m, pot, ScalarRep::Poly(h), self.model.energy, 50.0)
            }
        }
    }

    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
schema_version = 1

[model]
kind = "sphere"
energy = 0.0
z = [[1.0, 0.0]]

[run]
k_ladder = [16, 32, 64]
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::parse(GOOD).unwrap();
        assert_eq!(cfg.run.n_max, 32);
        let model = cfg.build_model().unwrap();
        assert_eq!(model.m, 1);
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let bad = GOOD.replace("[run]", "[run]\node_tolerance = 1e-9");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn bad_versions_and_ladders_rejected() {
        let bad = GOOD.replace("schema_version = 1", "schema_version = 9");
        assert!(RunConfig::parse(&bad).is_err());
        let bad = GOOD.replace("[16, 32, 64]", "[16, 16]");
        assert!(RunConfig::parse(&bad).is_err());
        let bad = GOOD.replace("\"sphere\"", "\"torus\"");
        assert!(RunConfig::parse(&bad).is_err());
    }
}
