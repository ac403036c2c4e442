//! Run configuration: a human-editable TOML document describing the
//! system, the β schedule, an optional perturbation family, and default
//! run parameters.
//!
//! Numeric map fields accept either plain floats or exact fraction
//! strings ("1/3"), and β values accept a `{ coefficient, log_base,
//! offset }` form so targets like 2·log 3 stay exact. Level families can
//! be written out map by map or through the `full_base` / `base` +
//! `digits` shorthands.

use crate::error::{NifsError, Result};
use crate::geom::BoxRegion;
use crate::ifs::{
    Continuation, LevelFamily, MapDescriptor, SystemDescriptor, SystemLimits,
};
use crate::perturb::{GammaFamily, ScaleRule};
use crate::pressure::{BetaFn, BetaSchedule, BetaSpec};
use crate::{gamma::GammaShape, ifs::TailSpec};
use serde::{Deserialize, Serialize};

/// Float or exact fraction string ("1/3").
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Float(f64),
    Frac(String),
}

impl Num {
    pub fn value(&self) -> Result<f64> {
        match self {
            Num::Float(v) => Ok(*v),
            Num::Frac(s) => {
                let parts: Vec<&str> = s.split('/').collect();
                let parse = |x: &str| {
                    x.trim().parse::<f64>().map_err(|_| {
                        NifsError::Config(format!("cannot parse number {x:?}"))
                    })
                };
                match parts.as_slice() {
                    [a] => parse(a),
                    [a, b] => {
                        let d = parse(b)?;
                        if d == 0.0 {
                            return Err(NifsError::Config(format!("zero denominator in {s:?}")));
                        }
                        Ok(parse(a)? / d)
                    }
                    _ => Err(NifsError::Config(format!("cannot parse fraction {s:?}"))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub rule: String,
    #[serde(default)]
    pub period: Option<usize>,
}

impl ContinuationConfig {
    fn build(&self) -> Result<Continuation> {
        match self.rule.as_str() {
            "constant" => Ok(Continuation::Constant),
            "periodic" => Ok(Continuation::Periodic {
                period: self.period.ok_or_else(|| {
                    NifsError::Config("periodic continuation needs a period".into())
                })?,
            }),
            other => Err(NifsError::Config(format!("unknown continuation rule {other:?}"))),
        }
    }

    fn from(c: Continuation) -> Self {
        match c {
            Continuation::Constant => ContinuationConfig { rule: "constant".into(), period: None },
            Continuation::Periodic { period } => {
                ContinuationConfig { rule: "periodic".into(), period: Some(period) }
            }
        }
    }
}

fn default_continuation() -> ContinuationConfig {
    ContinuationConfig { rule: "constant".into(), period: None }
}

/// One level family: shorthand bases or explicit maps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelConfig {
    /// All q branches of x ↦ (x+a)/q, a = 0..q−1 (1-D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_base: Option<u32>,
    /// Base-q branches restricted to the listed digits (1-D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digits: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maps: Option<Vec<MapDescriptor>>,
}

impl LevelConfig {
    fn build(&self, dimension: usize) -> Result<LevelFamily> {
        let base_maps = |q: u32, digits: &[u32]| -> Result<LevelFamily> {
            if dimension != 1 {
                return Err(NifsError::Config("base shorthands are 1-D only".into()));
            }
            if q < 2 {
                return Err(NifsError::Config("base must be ≥ 2".into()));
            }
            let maps = digits
                .iter()
                .map(|&a| {
                    if a >= q {
                        return Err(NifsError::Config(format!("digit {a} outside base {q}")));
                    }
                    Ok(MapDescriptor::Linear {
                        ratio: 1.0 / q as f64,
                        offset: vec![a as f64 / q as f64],
                        orth: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LevelFamily { maps })
        };
        match (&self.full_base, &self.base, &self.digits, &self.maps) {
            (Some(q), None, None, None) => {
                let digits: Vec<u32> = (0..*q).collect();
                base_maps(*q, &digits)
            }
            (None, Some(q), Some(ds), None) => base_maps(*q, ds),
            (None, None, None, Some(maps)) => Ok(LevelFamily { maps: maps.clone() }),
            _ => Err(NifsError::Config(
                "a level needs exactly one of full_base, base+digits, or maps".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    pub lo: Vec<Num>,
    pub hi: Vec<Num>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainConfig>,
    #[serde(default = "default_continuation")]
    pub continuation: ContinuationConfig,
    pub levels: Vec<LevelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<SystemLimits>,
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemDescriptor> {
        let domain = match &self.domain {
            None => BoxRegion::unit(self.dimension),
            Some(d) => BoxRegion::new(
                d.lo.iter().map(Num::value).collect::<Result<Vec<_>>>()?,
                d.hi.iter().map(Num::value).collect::<Result<Vec<_>>>()?,
            ),
        };
        let prefix = self
            .levels
            .iter()
            .map(|l| l.build(self.dimension))
            .collect::<Result<Vec<_>>>()?;
        SystemDescriptor::new(
            self.dimension,
            domain,
            prefix,
            self.continuation.build()?,
            self.limits.unwrap_or_default(),
        )
    }

    /// Explicit-map representation of a built system (used when a
    /// perturbed system is written back to disk).
    pub fn from_system(system: &SystemDescriptor) -> Self {
        SystemConfig {
            dimension: system.dimension,
            domain: Some(DomainConfig {
                lo: system.domain.lo.iter().map(|&v| Num::Float(v)).collect(),
                hi: system.domain.hi.iter().map(|&v| Num::Float(v)).collect(),
            }),
            continuation: ContinuationConfig::from(system.continuation),
            levels: system
                .prefix
                .iter()
                .map(|f| LevelConfig {
                    full_base: None,
                    base: None,
                    digits: None,
                    maps: Some(f.maps.clone()),
                })
                .collect(),
            limits: Some(system.limits),
        }
    }
}

/// β value: a float, a fraction string, or coefficient·ln(log_base)+offset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaValue {
    Structured {
        log_base: f64,
        #[serde(default = "one")]
        coefficient: f64,
        #[serde(default)]
        offset: f64,
    },
    Plain(Num),
}

fn one() -> f64 {
    1.0
}

impl BetaValue {
    fn value(&self) -> Result<f64> {
        match self {
            BetaValue::Plain(n) => n.value(),
            BetaValue::Structured { log_base, coefficient, offset } => {
                if !(*log_base > 0.0) {
                    return Err(NifsError::Config("log_base must be positive".into()));
                }
                Ok(coefficient * log_base.ln() + offset)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaConfig {
    pub variant: String,
    #[serde(default = "default_continuation")]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub values: Vec<BetaValue>,
    #[serde(default)]
    pub levels: Vec<BetaFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_tail: Option<TailSpec>,
}

impl BetaConfig {
    pub fn build(&self) -> Result<BetaSchedule> {
        let continuation = self.continuation.build()?;
        let tail = self.reference_tail.clone().unwrap_or_else(|| TailSpec::constant(0));
        match self.variant.as_str() {
            "constant_per_level" => {
                let values =
                    self.values.iter().map(BetaValue::value).collect::<Result<Vec<_>>>()?;
                BetaSchedule::new(BetaSpec::ConstantPerLevel { values, continuation }, tail)
            }
            "tail_dependent" => BetaSchedule::new(
                BetaSpec::TailDependent { levels: self.levels.clone(), continuation },
                tail,
            ),
            other => Err(NifsError::Config(format!("unknown beta variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaConfig {
    pub shapes: Vec<Vec<GammaShape>>,
    #[serde(default = "default_continuation")]
    pub continuation: ContinuationConfig,
    pub scale: ScaleRule,
    #[serde(default)]
    pub anchor: f64,
    /// Explicit truncation level for slowly decaying scale rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<usize>,
}

impl GammaConfig {
    pub fn build(&self) -> Result<GammaFamily> {
        Ok(GammaFamily {
            shapes: self.shapes.clone(),
            continuation: self.continuation.build()?,
            scale: self.scale,
            anchor: self.anchor,
        })
    }
}

/// Default run parameters; command-line flags override them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    pub horizon: usize,
    pub n_min: usize,
    pub tol: f64,
    pub seed: u64,
    pub t_max: Option<f64>,
    pub t_grid: Vec<f64>,
    pub mc_samples: u32,
    pub per_parent_cap: usize,
    pub moran_levels: usize,
    pub moran_n1: usize,
    /// Explicit horizon schedule; still certified against the growth
    /// rules. Overrides moran_levels/moran_n1 when set.
    pub moran_supplied: Option<Vec<usize>>,
    pub sample_count: usize,
    pub ahlfors_horizon: usize,
    pub ball_centers: usize,
    pub ball_radii: usize,
    pub cover_from_n: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            horizon: 24,
            n_min: 4,
            tol: 1e-6,
            seed: 0,
            t_max: None,
            t_grid: Vec::new(),
            mc_samples: 4096,
            per_parent_cap: 4096,
            moran_levels: 3,
            moran_n1: 2,
            moran_supplied: None,
            sample_count: 10_000,
            ahlfors_horizon: 12,
            ball_centers: 256,
            ball_radii: 24,
            cover_from_n: 10,
        }
    }
}

impl Params {
    /// t grid for verification sweeps: configured, or 9 points on [0, t_max].
    pub fn resolve_t_grid(&self, dimension: usize) -> Vec<f64> {
        if !self.t_grid.is_empty() {
            return self.t_grid.clone();
        }
        let t_max = self.t_max.unwrap_or(dimension as f64);
        (0..=8).map(|i| t_max * i as f64 / 8.0).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub beta: BetaConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaConfig>,
    #[serde(default)]
    pub params: Params,
}

impl RunConfig {
    pub fn from_str_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NifsError::Config(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let cfg = Self::from_str_toml(&text)?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| NifsError::Config(format!("config serialize error: {e}")))
    }
}
