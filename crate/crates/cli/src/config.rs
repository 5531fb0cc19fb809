//! Suite configuration: TOML with exact rational literals.

use std::collections::BTreeSet;

use locfloer::exact::{to_f64, Rational};
use locfloer::field::{field_suite, Polynomial};
use locfloer::genfunc::ComplementRecipe;
use locfloer::germ::SymplecticGerm;
use locfloer::linalg::block_diagonal;
use locfloer::symplectic::{make_block_path, parse_rational, BlockSpec, SymplecticPath};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: impl Into<String>, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.to_string() }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Coefficient primes for homology; the rationals are always included.
    #[serde(default = "default_primes")]
    pub primes: Vec<u32>,
    /// Periods of the twisted products built in the generating-function checks.
    #[serde(default = "default_primes")]
    pub dold_periods: Vec<u32>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub homology: HomologyConfig,
    #[serde(default)]
    pub cz: CzConfig,
    #[serde(default)]
    pub fields: Vec<FieldDecl>,
    #[serde(default)]
    pub germs: Vec<GermDecl>,
    #[serde(default)]
    pub smith: Vec<SmithDecl>,
    #[serde(default)]
    pub supertrace: Vec<SupertraceDecl>,
    #[serde(default)]
    pub tower: Vec<TowerDecl>,
}

fn default_primes() -> Vec<u32> {
    vec![2, 3]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_turns")]
    pub turns: String,
    #[serde(default = "default_recipe")]
    pub recipe: String,
}

fn default_turns() -> String {
    "1/5".into()
}

fn default_recipe() -> String {
    "reference".into()
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { turns: default_turns(), recipe: default_recipe() }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HomologyConfig {
    pub r0: Option<usize>,
    pub epsilon: Option<String>,
    pub max_doublings: Option<usize>,
    /// Check every nondegenerate quadratic up to this dimension.
    #[serde(default)]
    pub normalization_max_dim: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CzConfig {
    #[serde(default)]
    pub paths: Vec<PathDecl>,
    #[serde(default)]
    pub random_paths: usize,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: usize,
    /// Iterates for the sign grid over the declared paths.
    #[serde(default)]
    pub iterates: Vec<u32>,
    #[serde(default)]
    pub chain_multisets: usize,
    #[serde(default = "default_chain_blocks")]
    pub chain_max_blocks: usize,
    #[serde(default = "default_chain_k")]
    pub chain_max_k: u32,
    #[serde(default)]
    pub fixedless_max_order: usize,
    #[serde(default)]
    pub fixedless_max_dim: usize,
}

fn default_max_blocks() -> usize {
    4
}

fn default_chain_blocks() -> usize {
    3
}

fn default_chain_k() -> u32 {
    6
}

impl Default for CzConfig {
    fn default() -> Self {
        CzConfig {
            paths: Vec::new(),
            random_paths: 0,
            max_blocks: default_max_blocks(),
            iterates: Vec::new(),
            chain_multisets: 0,
            chain_max_blocks: default_chain_blocks(),
            chain_max_k: default_chain_k(),
            fixedless_max_order: 0,
            fixedless_max_dim: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PathDecl {
    pub name: String,
    pub blocks: Vec<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermDecl {
    pub coeff: String,
    pub powers: Vec<u32>,
}

/// A polynomial field; without `terms` the name refers to the built-in suite.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDecl {
    pub name: String,
    pub dim: Option<usize>,
    pub terms: Option<Vec<TermDecl>>,
    pub radius: Option<String>,
    pub expect_betti: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TwistDecl {
    pub a: String,
    pub b: String,
    #[serde(default = "one")]
    pub dim_half: usize,
}

fn one() -> usize {
    1
}

/// A germ: the time-one map of a block path, or a twist map.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GermDecl {
    pub name: String,
    pub blocks: Option<Vec<String>>,
    pub twist: Option<TwistDecl>,
    pub radius: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SmithDecl {
    pub field: Option<String>,
    pub germ: Option<String>,
    /// `reflection:<axis>` for fields, `dold` for germs.
    pub action: String,
    pub p: Vec<u32>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SupertraceDecl {
    pub germ: String,
    pub k: usize,
    /// Coefficient fields; `0` is the rationals.
    pub p: Vec<u32>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TowerDecl {
    pub germ: String,
    pub p: u32,
    pub levels: u32,
}

/// A resolved field declaration.
#[derive(Clone, Debug)]
pub struct NamedField {
    pub name: String,
    pub field: Polynomial,
    pub expect_betti: Option<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct NamedGerm {
    pub name: String,
    pub germ: SymplecticGerm,
    /// The block path when the germ is linear, for index bookkeeping.
    pub path: Option<SymplecticPath>,
}

impl SuiteConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: SuiteConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Ok((Self::parse(&text)?, text))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for &p in &self.primes {
            check_prime("primes", p)?;
        }
        for &p in &self.dold_periods {
            if p < 2 {
                return Err(invalid("dold_periods", format!("period {p} must be at least 2")));
            }
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be positive"));
        }
        rational("calibration.turns", &self.calibration.turns)?;
        self.recipe()?;
        if let Some(e) = &self.homology.epsilon {
            rational("homology.epsilon", e)?;
        }
        for p in &self.cz.paths {
            path_from(&format!("cz.paths.{}", p.name), &p.blocks)?;
        }
        let fields = self.resolve_fields()?;
        let germs = self.resolve_germs()?;
        let has_field = |n: &str| fields.iter().any(|f| f.name == n);
        let has_germ = |n: &str| germs.iter().any(|g| g.name == n);
        for (i, s) in self.smith.iter().enumerate() {
            let key = format!("smith[{i}]");
            match (&s.field, &s.germ) {
                (Some(f), None) if has_field(f) => {
                    let axis = s.action.strip_prefix("reflection:").ok_or_else(|| invalid(&key, format!("action `{}` is not `reflection:<axis>`", s.action)))?;
                    axis.parse::<usize>().map_err(|_| invalid(&key, format!("bad axis `{axis}`")))?;
                }
                (None, Some(g)) if has_germ(g) => {
                    if s.action != "dold" {
                        return Err(invalid(&key, format!("germ action `{}` must be `dold`", s.action)));
                    }
                }
                _ => return Err(invalid(&key, "needs exactly one declared `field` or `germ`")),
            }
            for &p in &s.p {
                check_prime(&key, p)?;
            }
        }
        for (i, s) in self.supertrace.iter().enumerate() {
            let key = format!("supertrace[{i}]");
            if !has_germ(&s.germ) {
                return Err(invalid(&key, format!("unknown germ `{}`", s.germ)));
            }
            if s.k < 2 {
                return Err(invalid(&key, "k must be at least 2"));
            }
            for &p in &s.p {
                if p != 0 {
                    check_prime(&key, p)?;
                }
            }
        }
        for (i, t) in self.tower.iter().enumerate() {
            let key = format!("tower[{i}]");
            if !has_germ(&t.germ) {
                return Err(invalid(&key, format!("unknown germ `{}`", t.germ)));
            }
            check_prime(&key, t.p)?;
        }
        Ok(())
    }

    pub fn recipe(&self) -> Result<ComplementRecipe, ConfigError> {
        match self.calibration.recipe.as_str() {
            "reference" => Ok(ComplementRecipe::Reference),
            "averaged" => Ok(ComplementRecipe::Averaged),
            other => Err(invalid("calibration.recipe", format!("unknown recipe `{other}`"))),
        }
    }

    pub fn turns(&self) -> Rational {
        parse_rational(&self.calibration.turns).expect("validated")
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.homology.epsilon.as_deref().map(|e| to_f64(&parse_rational(e).expect("validated")))
    }

    pub fn resolve_fields(&self) -> Result<Vec<NamedField>, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for decl in &self.fields {
            let key = format!("fields.{}", decl.name);
            if !seen.insert(decl.name.clone()) {
                return Err(invalid(key, "declared twice"));
            }
            let radius = match &decl.radius {
                Some(r) => Some(positive(&format!("{key}.radius"), r)?),
                None => None,
            };
            let (field, builtin_betti) = match &decl.terms {
                None => {
                    let entry = field_suite().into_iter().find(|e| e.name == decl.name).ok_or_else(|| invalid(&key, "no terms and no built-in field of this name"))?;
                    (entry.field, Some(entry.betti))
                }
                Some(terms) => {
                    let dim = decl.dim.ok_or_else(|| invalid(&key, "custom fields need `dim`"))?;
                    let mut parsed = Vec::new();
                    for (i, t) in terms.iter().enumerate() {
                        if t.powers.len() != dim {
                            return Err(invalid(format!("{key}.terms[{i}]"), format!("{} powers for dimension {dim}", t.powers.len())));
                        }
                        parsed.push((to_f64(&rational(&format!("{key}.terms[{i}].coeff"), &t.coeff)?), t.powers.clone()));
                    }
                    (Polynomial::new(dim, 1.0, parsed), None)
                }
            };
            let field = match radius {
                Some(r) => field.with_radius(r),
                None => field,
            };
            out.push(NamedField { name: decl.name.clone(), field, expect_betti: decl.expect_betti.clone().or(builtin_betti) });
        }
        Ok(out)
    }

    pub fn resolve_germs(&self) -> Result<Vec<NamedGerm>, ConfigError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for decl in &self.germs {
            let key = format!("germs.{}", decl.name);
            if !seen.insert(decl.name.clone()) {
                return Err(invalid(key, "declared twice"));
            }
            let radius = match &decl.radius {
                Some(r) => positive(&format!("{key}.radius"), r)?,
                None => 1.0,
            };
            let named = match (&decl.blocks, &decl.twist) {
                (Some(blocks), None) => {
                    let path = path_from(&key, blocks)?;
                    let specs = path.blocks().expect("block path").to_vec();
                    let a = block_diagonal(&specs.iter().map(|b| b.matrix_at(1.0)).collect::<Vec<_>>());
                    let germ = SymplecticGerm::linear(a, radius).map_err(|e| invalid(&key, e))?;
                    NamedGerm { name: decl.name.clone(), germ, path: Some(path) }
                }
                (None, Some(t)) => {
                    let a = to_f64(&rational(&format!("{key}.twist.a"), &t.a)?);
                    let b = to_f64(&rational(&format!("{key}.twist.b"), &t.b)?);
                    if t.dim_half == 0 {
                        return Err(invalid(&key, "dim_half must be positive"));
                    }
                    NamedGerm { name: decl.name.clone(), germ: SymplecticGerm::twist(t.dim_half, a, b, radius), path: None }
                }
                _ => return Err(invalid(key, "needs exactly one of `blocks` and `twist`")),
            };
            out.push(named);
        }
        Ok(out)
    }
}

fn check_prime(key: &str, p: u32) -> Result<(), ConfigError> {
    if [2, 3, 5, 7].contains(&p) {
        Ok(())
    } else {
        Err(invalid(key, format!("unsupported prime {p}; use 2, 3, 5 or 7")))
    }
}

fn rational(key: &str, s: &str) -> Result<Rational, ConfigError> {
    parse_rational(s).map_err(|e| invalid(key, e))
}

fn positive(key: &str, s: &str) -> Result<f64, ConfigError> {
    let v = to_f64(&rational(key, s)?);
    if v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, "must be positive"))
    }
}

pub fn path_from(key: &str, blocks: &[String]) -> Result<SymplecticPath, ConfigError> {
    let specs = blocks
        .iter()
        .map(|b| b.parse::<BlockSpec>().map_err(|e| invalid(key, e)))
        .collect::<Result<Vec<_>, _>>()?;
    make_block_path(specs).map_err(|e| invalid(key, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use locfloer::field::ScalarField;

    #[test]
    fn minimal_config_needs_only_a_seed() {
        let c = SuiteConfig::parse("seed = 7").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.primes, vec![2, 3]);
        assert!(SuiteConfig::parse("primes = [2]").is_err());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = SuiteConfig::parse("seed = 1\nbogus_key = 3").unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
        let err = SuiteConfig::parse("seed = 1\n[[germs]]\nname = \"g\"\nblocks = [\"rotation:1/5\"]\nshape = 2").unwrap_err().to_string();
        assert!(err.contains("shape"), "{err}");
    }

    #[test]
    fn fields_resolve_by_name_or_terms() {
        let text = r#"
seed = 1
[[fields]]
name = "monkey-saddle"
[[fields]]
name = "cubic"
dim = 1
terms = [{ coeff = "1/3", powers = [3] }]
expect_betti = [0, 0]
"#;
        let fields = SuiteConfig::parse(text).unwrap().resolve_fields().unwrap();
        assert_eq!(fields[0].expect_betti, Some(vec![0, 2, 0]));
        assert_eq!(fields[1].field.value(&[1.0]), 1.0 / 3.0);
        let bad = "seed = 1\n[[fields]]\nname = \"nope\"";
        assert!(SuiteConfig::parse(bad).unwrap_err().to_string().contains("fields.nope"));
    }

    #[test]
    fn references_must_resolve() {
        let text = "seed = 1\n[[supertrace]]\ngerm = \"missing\"\nk = 2\np = [2]";
        assert!(SuiteConfig::parse(text).unwrap_err().to_string().contains("supertrace[0]"));
        let text = "seed = 1\n[[germs]]\nname = \"t\"\ntwist = { a = \"1/2\", b = \"1/10\" }\n[[tower]]\ngerm = \"t\"\np = 4\nlevels = 1";
        assert!(SuiteConfig::parse(text).unwrap_err().to_string().contains("prime"));
    }

    #[test]
    fn germs_from_blocks_are_linear() {
        let text = "seed = 1\n[[germs]]\nname = \"h\"\nblocks = [\"positive-hyperbolic:2\"]";
        let g = &SuiteConfig::parse(text).unwrap().resolve_germs().unwrap()[0];
        assert!(g.germ.is_linear());
        assert!((g.germ.linearization()[(0, 0)] - 2.0).abs() < 1e-12);
    }
}
