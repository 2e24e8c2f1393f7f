use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Activation, MlpSpec};
use crate::capacitor::{ConstraintConfig, PNorm, PointCounts};
use crate::error::{Error, Result};
use crate::optimizer::{AdamConfig, LrSchedule, QpgdConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Truth,
    Naive,
    Qpgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

macro_rules! text_enum {
    ($ty:ty, $($name:literal => $variant:expr),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!("unknown {} '{other}'", stringify!($ty).to_lowercase()))),
                }
            }
        }
    };
}

text_enum!(Mode, "truth" => Mode::Truth, "naive" => Mode::Naive, "qpgd" => Mode::Qpgd);
text_enum!(Scale, "desk" => Scale::Desk, "full" => Scale::Full);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    pub scale: Scale,
    pub seed: u64,
    pub epochs: u64,
    /// Naive-loss warm start before the filtered phase (qpgd mode only).
    pub pretrain: bool,
    /// Defaults to `δ²`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_threshold: Option<f64>,
    pub pretrain_cap: u64,
    pub log_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub gamma0: f64,
    pub halving_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpgdSection {
    pub c: f64,
    pub eps_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_clip: Option<f64>,
    pub use_adam: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub interior: usize,
    pub grounded: usize,
    pub top: usize,
    /// Seed of the shared ground-truth run.
    pub truth_seed: u64,
    /// Evaluation grid resolution per axis.
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// Norm exponent; `inf` selects the max norm.
    pub p: f64,
    pub z: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    /// Point table of measurement locations, optionally with labels; the
    /// default layout is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub network: NetworkSection,
    pub schedule: ScheduleSection,
    pub qpgd: QpgdSection,
    pub points: PointsSection,
    pub constraint: ConstraintSection,
    #[serde(default)]
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn preset(scale: Scale) -> Self {
        let (hidden, epochs, interval, counts) = match scale {
            Scale::Desk => (vec![32; 3], 4_000, 667, PointCounts::DESK),
            Scale::Full => (vec![64; 4], 40_000, 6_667, PointCounts::FULL),
        };
        let adam = AdamConfig::default();
        RunConfig {
            run: RunSection {
                mode: Mode::Qpgd,
                scale,
                seed: 7,
                epochs,
                pretrain: true,
                pretrain_threshold: None,
                pretrain_cap: 2_000,
                log_every: 500,
            },
            network: NetworkSection { hidden, activation: "gelu".into() },
            schedule: ScheduleSection { gamma0: 4e-3, halving_interval: interval },
            qpgd: QpgdSection {
                c: 1.0,
                eps_alpha: 1e-12,
                alpha_clip: None,
                use_adam: true,
                beta1: adam.beta1,
                beta2: adam.beta2,
                adam_eps: adam.eps,
            },
            points: PointsSection {
                interior: counts.interior,
                grounded: counts.grounded,
                top: counts.top,
                truth_seed: 2024,
                grid: 200,
            },
            constraint: ConstraintSection { p: 2.0, z: 1.0, delta: 0.1 },
            paths: PathsSection::default(),
        }
    }

    pub fn desk() -> Self {
        Self::preset(Scale::Desk)
    }

    pub fn full() -> Self {
        Self::preset(Scale::Full)
    }

    /// Parse a possibly partial TOML document on top of the preset named by
    /// its `run.scale` (or by `scale` when given).
    pub fn from_toml(text: &str, scale: Option<Scale>) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let file_scale =
            file.get("run").and_then(|r| r.get("scale")).and_then(|s| s.as_str()).map(Scale::from_str).transpose()?;
        let mut preset = Self::preset(scale.or(file_scale).unwrap_or(Scale::Desk));
        if let Some(s) = scale {
            preset.run.scale = s;
        }
        let mut base = toml::Table::try_from(&preset).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, file);
        if let Some(s) = scale {
            if let Some(toml::Value::Table(run)) = base.get_mut("run") {
                run.insert("scale".into(), toml::Value::String(s.to_string()));
            }
        }
        let cfg: RunConfig =
            toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, scale: Option<Scale>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?, scale)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.qpgd_config().validate()?;
        self.schedule().validate()?;
        self.constraint()?;
        if self.run.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.points.interior == 0 || self.points.grounded == 0 || self.points.top == 0 || self.points.grid < 2 {
            return Err(Error::Config("point counts must be positive and the grid at least 2".into()));
        }
        if let Some(t) = self.run.pretrain_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("pretrain_threshold must be non-negative, got {t}")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<MlpSpec> {
        MlpSpec::planar(self.network.hidden.clone(), self.network.activation.parse::<Activation>()?)
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { gamma0: self.schedule.gamma0, halving_interval: self.schedule.halving_interval }
    }

    pub fn qpgd_config(&self) -> QpgdConfig {
        let q = &self.qpgd;
        QpgdConfig {
            c: q.c,
            eps_alpha: q.eps_alpha,
            alpha_clip: q.alpha_clip,
            use_adam: q.use_adam,
            adam: AdamConfig { beta1: q.beta1, beta2: q.beta2, eps: q.adam_eps },
        }
    }

    pub fn constraint(&self) -> Result<ConstraintConfig> {
        let c = &self.constraint;
        let p = if c.p == f64::INFINITY { PNorm::Infinity } else { PNorm::Finite(c.p).validate()? };
        if !(c.z > 0.0) || !(c.delta > 0.0) {
            return Err(Error::Config("z and delta must be positive".into()));
        }
        Ok(ConstraintConfig { p, z: c.z, delta: c.delta })
    }

    pub fn counts(&self) -> PointCounts {
        PointCounts { interior: self.points.interior, grounded: self.points.grounded, top: self.points.top }
    }

    pub fn pretrain_threshold(&self) -> f64 {
        self.run.pretrain_threshold.unwrap_or(self.constraint.delta * self.constraint.delta)
    }

    /// SHA-256 of the canonical configuration, output and truth paths excluded.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths.out = None;
        c.paths.truth = None;
        sha256_hex(c.to_toml().as_bytes())
    }

    /// The configuration of the shared ground-truth run for this one.
    pub fn truth_config(&self) -> RunConfig {
        let mut t = self.clone();
        t.run.mode = Mode::Truth;
        t.run.seed = self.points.truth_seed;
        t.run.pretrain = false;
        t.paths = PathsSection::default();
        t
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Identifies the geometry and plate voltages that every checkpoint of a
/// comparable run shares.
pub fn domain_digest() -> String {
    sha256_hex(b"two-plate capacitor; x in [-1,1]; upper -sin(pi x)+0.2; lower exp(-(x+0.5)^2/0.2)(1-x^2)-1; sides grounded; V0 1")
}

/// One CLI override per configuration key; unset fields leave the value alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub epochs: Option<u64>,
    pub pretrain: Option<bool>,
    pub pretrain_threshold: Option<f64>,
    pub pretrain_cap: Option<u64>,
    pub log_every: Option<u64>,
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<String>,
    pub gamma0: Option<f64>,
    pub halving_interval: Option<u64>,
    pub c: Option<f64>,
    pub eps_alpha: Option<f64>,
    pub alpha_clip: Option<f64>,
    pub use_adam: Option<bool>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_eps: Option<f64>,
    pub interior: Option<usize>,
    pub grounded: Option<usize>,
    pub top: Option<usize>,
    pub truth_seed: Option<u64>,
    pub grid: Option<usize>,
    pub p: Option<f64>,
    pub z: Option<f64>,
    pub delta: Option<f64>,
    pub out: Option<String>,
    pub truth: Option<String>,
    pub measurements: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut cfg.run.mode, &self.mode);
        set(&mut cfg.run.seed, &self.seed);
        set(&mut cfg.run.epochs, &self.epochs);
        set(&mut cfg.run.pretrain, &self.pretrain);
        if self.pretrain_threshold.is_some() {
            cfg.run.pretrain_threshold = self.pretrain_threshold;
        }
        set(&mut cfg.run.pretrain_cap, &self.pretrain_cap);
        set(&mut cfg.run.log_every, &self.log_every);
        set(&mut cfg.network.hidden, &self.hidden);
        set(&mut cfg.network.activation, &self.activation);
        set(&mut cfg.schedule.gamma0, &self.gamma0);
        set(&mut cfg.schedule.halving_interval, &self.halving_interval);
        set(&mut cfg.qpgd.c, &self.c);
        set(&mut cfg.qpgd.eps_alpha, &self.eps_alpha);
        if self.alpha_clip.is_some() {
            cfg.qpgd.alpha_clip = self.alpha_clip;
        }
        set(&mut cfg.qpgd.use_adam, &self.use_adam);
        set(&mut cfg.qpgd.beta1, &self.beta1);
        set(&mut cfg.qpgd.beta2, &self.beta2);
        set(&mut cfg.qpgd.adam_eps, &self.adam_eps);
        set(&mut cfg.points.interior, &self.interior);
        set(&mut cfg.points.grounded, &self.grounded);
        set(&mut cfg.points.top, &self.top);
        set(&mut cfg.points.truth_seed, &self.truth_seed);
        set(&mut cfg.points.grid, &self.grid);
        set(&mut cfg.constraint.p, &self.p);
        set(&mut cfg.constraint.z, &self.z);
        set(&mut cfg.constraint.delta, &self.delta);
        if self.out.is_some() {
            cfg.paths.out = self.out.clone();
        }
        if self.truth.is_some() {
            cfg.paths.truth = self.truth.clone();
        }
        if self.measurements.is_some() {
            cfg.paths.measurements = self.measurements.clone();
        }
        cfg.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_settings() {
        let full = RunConfig::full();
        assert_eq!(full.spec().unwrap().describe(), "2 64,64,64,64 1 gelu");
        assert_eq!((full.run.epochs, full.schedule.halving_interval, full.schedule.gamma0), (40_000, 6_667, 4e-3));
        let desk = RunConfig::desk();
        assert_eq!(desk.spec().unwrap().describe(), "2 32,32,32 1 gelu");
        assert_eq!(
            (desk.points.interior, desk.points.grounded, desk.points.top, desk.run.epochs),
            (2000, 100, 50, 4000)
        );
        assert_eq!(desk.pretrain_threshold(), 0.1 * 0.1);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = RunConfig::full();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml(), None).unwrap(), cfg);
        let partial = RunConfig::from_toml("[run]\nscale = \"full\"\n[qpgd]\nc = 10.0\n", None).unwrap();
        assert_eq!(partial.network.hidden, vec![64; 4]);
        assert_eq!(partial.qpgd.c, 10.0);
        let forced = RunConfig::from_toml("[qpgd]\nc = 10.0\n", Some(Scale::Full)).unwrap();
        assert_eq!((forced.run.scale, forced.run.epochs), (Scale::Full, 40_000));
        assert!(matches!(RunConfig::from_toml("[qpgd]\ncc = 1.0\n", None), Err(Error::Config(_))));
        let inf = RunConfig::from_toml("[constraint]\np = inf\n", None).unwrap();
        assert_eq!(inf.constraint().unwrap().p, PNorm::Infinity);
    }

    #[test]
    fn digest_ignores_output_locations() {
        let a = RunConfig::desk();
        let mut b = a.clone();
        b.paths.out = Some("elsewhere".into());
        b.paths.truth = Some("truth.txt".into());
        assert_eq!(a.digest(), b.digest());
        b.paths.measurements = Some("m.txt".into());
        assert_ne!(a.digest(), b.digest());
        b.paths.measurements = None;
        b.qpgd.c = 10.0;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = RunConfig::desk();
        let o = Overrides { c: Some(10.0), hidden: Some(vec![8, 8]), mode: Some(Mode::Naive), ..Default::default() };
        o.apply(&mut cfg).unwrap();
        assert_eq!((cfg.qpgd.c, cfg.network.hidden.clone(), cfg.run.mode), (10.0, vec![8, 8], Mode::Naive));
        assert!(Overrides { c: Some(-1.0), ..Default::default() }.apply(&mut cfg).is_err());
        assert!(Overrides { activation: Some("relu".into()), ..Default::default() }
            .apply(&mut RunConfig::desk())
            .is_err());
    }
}
