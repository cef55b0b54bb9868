//! TOML experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;

use elliptic_lab::geometry::PolygonalDomain;
use elliptic_lab::norms::{default_p_min, NormParams};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("criterion `{0}` is not declared in [criteria]")]
    MissingCriterion(String),
    #[error("section [{0}] is required for this subcommand")]
    MissingSection(&'static str),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub output: Option<String>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub whitney: WhitneySpec,
    /// Lower bound on `p`; defaults to `(d-1)/(d-1+s)`.
    #[serde(default)]
    pub p_min: Option<f64>,
    pub garding: Option<GardingSpec>,
    pub perturb: Option<PerturbSpec>,
    pub norms: Option<NormsSpec>,
    pub poincare: Option<PoincareSpec>,
    pub caccioppoli: Option<CaccioppoliSpec>,
    pub newton: Option<NewtonSpec>,
    pub duality: Option<DualitySpec>,
    #[serde(default)]
    pub criteria: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub vertices: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhitneySpec {
    pub c1: f64,
    pub c2: f64,
}

impl Default for WhitneySpec {
    fn default() -> Self {
        Self { c1: 1.0, c2: 4.0 * 2f64.sqrt() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GardingSpec {
    pub spacing: f64,
    /// `"domain"` (quotient by the polynomial kernel) or `"whole_space"` (padded box).
    #[serde(default = "default_form")]
    pub form: String,
    #[serde(default = "default_box_factor")]
    pub box_factor: f64,
    #[serde(default)]
    pub tensor: Vec<TensorCase>,
    #[serde(default)]
    pub rho: Vec<f64>,
    #[serde(default)]
    pub rho_endpoints: Vec<f64>,
    #[serde(default)]
    pub bfs_spacings: Vec<f64>,
    #[serde(default)]
    pub bfs_rho: f64,
}

fn default_form() -> String {
    "domain".into()
}

fn default_box_factor() -> f64 {
    4.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorCase {
    pub name: String,
    /// Known constant; the row is then judged by `lambda_tol`.
    #[serde(default)]
    pub expected: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub spacing: f64,
    pub whitney_depth: u32,
    pub probe_trials: usize,
    pub tol: f64,
    pub max_terms: usize,
    pub reference: String,
    pub perturbation: String,
    pub epsilons: Vec<f64>,
    /// `(p, s)` pairs.
    pub points: Vec<[f64; 2]>,
    pub lattice: Option<LatticeSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub problem: String,
    pub reference: String,
    pub perturbation: String,
    pub epsilon: f64,
    pub spacing: f64,
    pub whitney_depth: u32,
    pub probe_trials: usize,
    pub s_range: [f64; 2],
    pub inv_p_range: [f64; 2],
    pub n: usize,
}

impl LatticeSpec {
    /// `(s, 1/p)` points, `1/p` varying slowest.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let at = |r: [f64; 2], i: usize| {
            if self.n <= 1 {
                0.5 * (r[0] + r[1])
            } else {
                r[0] + (r[1] - r[0]) * i as f64 / (self.n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                out.push((at(self.s_range, i), at(self.inv_p_range, j)));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsSpec {
    pub raster: usize,
    pub mesh_spacing: f64,
    pub depths: Vec<u32>,
    pub lattice_p: Vec<f64>,
    pub lattice_s: Vec<f64>,
    pub bracket_fields: usize,
    pub l2_fields: usize,
    pub quasi_pairs: usize,
    pub quasi: [f64; 2],
    pub holder_pairs: usize,
    pub holder_points: Vec<[f64; 2]>,
    pub embedding_fields: usize,
    /// `[q, sigma, r, omega]`.
    pub embedding_pairs: Vec<[f64; 4]>,
    pub sequence_fields: usize,
    /// `[p0, s0, p1, s1, t]`.
    pub sequence: [f64; 5],
    pub growth_params: [f64; 2],
    pub growth_radii: Vec<f64>,
    pub growth_point: [f64; 2],
    pub besov_panels: usize,
    pub besov_levels: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareSpec {
    pub spacings: Vec<f64>,
    pub fields: usize,
    pub p: f64,
    pub s: f64,
    pub modes: usize,
    pub boundary_arrays: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaccioppoliSpec {
    pub tensor: String,
    pub spacings: Vec<f64>,
    pub fields: usize,
    pub centers: Vec<[f64; 2]>,
    pub radius: f64,
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSpec {
    pub tensor: String,
    pub spacing: f64,
    pub paddings: Vec<f64>,
    pub fields: usize,
    pub whitney_depth: u32,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySpec {
    pub tensors: Vec<String>,
    pub spacing: f64,
    pub whitney_depth: u32,
    pub trials: usize,
    pub probe_trials: usize,
    pub points: Vec<[f64; 2]>,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), source: e })?;
        Self::from_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.domain()?;
        let mut pairs: Vec<[f64; 2]> = Vec::new();
        if let Some(p) = &self.perturb {
            pairs.extend(&p.points);
            if let Some(l) = &p.lattice {
                pairs.extend(l.points().into_iter().map(|(s, ip)| [1.0 / ip, s]));
            }
        }
        if let Some(n) = &self.norms {
            pairs.extend(&n.holder_points);
            pairs.push(n.quasi);
            pairs.push(n.growth_params);
            for &p in &n.lattice_p {
                for &s in &n.lattice_s {
                    pairs.push([p, s]);
                }
            }
        }
        if let Some(n) = &self.newton {
            pairs.extend(&n.points);
        }
        if let Some(d) = &self.duality {
            pairs.extend(&d.points);
        }
        for [p, s] in pairs {
            self.params(p, s)?;
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<PolygonalDomain, ConfigError> {
        match (&self.domain.preset, &self.domain.vertices) {
            (Some(name), None) => match name.as_str() {
                "unit_square" => Ok(PolygonalDomain::unit_square()),
                "l_shape" => Ok(PolygonalDomain::l_shape()),
                other => Err(ConfigError::Invalid(format!("unknown domain preset `{other}`"))),
            },
            (None, Some(v)) => PolygonalDomain::from_pairs(v).map_err(|e| ConfigError::Invalid(e.to_string())),
            _ => Err(ConfigError::Invalid("domain needs exactly one of `preset` or `vertices`".into())),
        }
    }

    pub fn p_min(&self, s: f64) -> f64 {
        self.p_min.unwrap_or_else(|| default_p_min(s))
    }

    pub fn params(&self, p: f64, s: f64) -> Result<NormParams, ConfigError> {
        NormParams::with_p_min(p, s, self.p_min(s)).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn criterion(&self, group: &str, name: &str) -> Result<f64, ConfigError> {
        self.criteria
            .get(group)
            .and_then(|g| g.get(name))
            .copied()
            .ok_or_else(|| ConfigError::MissingCriterion(format!("{group}.{name}")))
    }
}
