//! Run configuration: `key = value` lines, command-line overrides, and the
//! hash stamped on every artifact.

use std::collections::BTreeMap;
use std::path::PathBuf;

use flatcircle_core::construction::{base_map, AnchorConfig, Budgets, Params};
use flatcircle_core::rotation::{from_continued_fraction, return_times, GOLDEN, SILVER};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Target rotation number as written in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSpec {
    Named(String),
    /// Continued fraction whose last term repeats.
    Terms(Vec<u64>),
    Value(f64),
}

impl RhoSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("cf:") {
            let terms = rest
                .split(',')
                .map(|t| t.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Config(format!("bad continued fraction {s:?}")))?;
            return Ok(RhoSpec::Terms(terms));
        }
        match s {
            "golden" | "silver" => Ok(RhoSpec::Named(s.to_string())),
            _ => s
                .parse()
                .map(RhoSpec::Value)
                .map_err(|_| CliError::Config(format!("bad rho {s:?}"))),
        }
    }

    pub fn value(&self) -> Result<f64, CliError> {
        match self {
            RhoSpec::Named(n) if n == "golden" => Ok(GOLDEN),
            RhoSpec::Named(_) => Ok(SILVER),
            RhoSpec::Terms(t) => Ok(from_continued_fraction(t)?),
            RhoSpec::Value(v) => Ok(*v),
        }
    }

    fn canonical(&self) -> String {
        match self {
            RhoSpec::Named(n) => n.clone(),
            RhoSpec::Terms(t) => {
                let t: Vec<String> = t.iter().map(|x| x.to_string()).collect();
                format!("cf:{}", t.join(","))
            }
            RhoSpec::Value(v) => format!("{v:?}"),
        }
    }
}

/// `ε` as a decimal or as `sqrt<a>/<b>`.
fn parse_eps(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || CliError::Config(format!("bad eps {s:?}"));
    if let Some(rest) = s.strip_prefix("sqrt") {
        let (a, b) = rest.split_once('/').ok_or_else(bad)?;
        let a: f64 = a.parse().map_err(|_| bad())?;
        let b: f64 = b.parse().map_err(|_| bad())?;
        return Ok(a.sqrt() / b);
    }
    s.parse().map_err(|_| bad())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rho: RhoSpec,
    pub eps_spec: String,
    pub eps: f64,
    pub l: f64,
    pub stages: usize,
    pub max_hit: Option<usize>,
    pub enclosure_iters: Option<usize>,
    pub compare_iters: Option<usize>,
    pub samples: usize,
    pub iters: Option<usize>,
    pub seed: u64,
    pub anchored: bool,
    pub anchor_p: f64,
    pub anchor_k: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho: RhoSpec::Named("golden".into()),
            eps_spec: "sqrt2/8".into(),
            eps: 2f64.sqrt() / 8.0,
            l: 0.75,
            stages: 4,
            max_hit: None,
            enclosure_iters: None,
            compare_iters: None,
            samples: 2000,
            iters: None,
            seed: 0,
            anchored: false,
            anchor_p: 0.0,
            anchor_k: 0.5,
            out: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line, applied over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub stages: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub iters: Option<usize>,
    pub max_hit: Option<usize>,
    pub anchored: bool,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad value for {key}: {v:?}")))
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "rho" => c.rho = RhoSpec::parse(v)?,
                "eps" => {
                    c.eps = parse_eps(v)?;
                    c.eps_spec = v.to_string();
                }
                "l" => c.l = num(k, v)?,
                "stages" => c.stages = num(k, v)?,
                "max_hit" => c.max_hit = Some(num(k, v)?),
                "enclosure_iters" => c.enclosure_iters = Some(num(k, v)?),
                "compare_iters" => c.compare_iters = Some(num(k, v)?),
                "samples" => c.samples = num(k, v)?,
                "iters" => c.iters = Some(num(k, v)?),
                "seed" => c.seed = num(k, v)?,
                "anchored" => c.anchored = num(k, v)?,
                "anchor_p" => c.anchor_p = num(k, v)?,
                "anchor_k" => c.anchor_k = num(k, v)?,
                "out" => c.out = PathBuf::from(v),
                other => return Err(CliError::Config(format!("line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(c)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.stages {
            self.stages = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.iters {
            self.iters = Some(v);
        }
        if let Some(v) = o.max_hit {
            self.max_hit = Some(v);
        }
        if o.anchored {
            self.anchored = true;
        }
    }

    pub fn anchor(&self) -> Result<Option<AnchorConfig>, CliError> {
        if self.anchored {
            Ok(Some(AnchorConfig::new(self.anchor_p, self.anchor_k)?))
        } else {
            Ok(None)
        }
    }

    /// Re-checks the preconditions of the construction.
    pub fn validate(&self) -> Result<(), CliError> {
        let rho = self.rho.value()?;
        return_times(rho, 1)?;
        if self.stages == 0 {
            return Err(CliError::Config("stages must be at least 1".into()));
        }
        base_map(self.eps, self.l, self.anchor()?.as_ref())?;
        Ok(())
    }

    pub fn params(&self) -> Result<Params, CliError> {
        let rho = self.rho.value()?;
        let mut p = Params::new(self.eps, rho, self.l, self.stages);
        if let Some(a) = self.anchor()? {
            p = p.anchored(a);
        }
        let b: &mut Budgets = &mut p.budgets;
        if let Some(v) = self.max_hit {
            b.max_hit = v;
        }
        if let Some(v) = self.enclosure_iters {
            b.enclosure_iters = v;
        }
        if let Some(v) = self.compare_iters {
            b.compare_iters = v;
        }
        Ok(p)
    }

    /// Sorted `key=value` lines of every setting that affects results.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("default".to_string(), |x| x.to_string());
        let mut m = BTreeMap::new();
        m.insert("rho", self.rho.canonical());
        m.insert("eps", self.eps_spec.clone());
        m.insert("l", format!("{:?}", self.l));
        m.insert("stages", self.stages.to_string());
        m.insert("max_hit", opt(self.max_hit));
        m.insert("enclosure_iters", opt(self.enclosure_iters));
        m.insert("compare_iters", opt(self.compare_iters));
        m.insert("samples", self.samples.to_string());
        m.insert("iters", opt(self.iters));
        m.insert("seed", self.seed.to_string());
        m.insert("anchored", self.anchored.to_string());
        if self.anchored {
            m.insert("anchor_p", format!("{:?}", self.anchor_p));
            m.insert("anchor_k", format!("{:?}", self.anchor_k));
        }
        m.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn header(&self) -> String {
        format!("config {}", self.hash())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_run() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.rho.value().unwrap(), GOLDEN);
        assert_eq!(c.eps, 2f64.sqrt() / 8.0);
        assert_eq!((c.l, c.stages), (0.75, 4));
        c.validate().unwrap();
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = RunConfig::parse("# reference\nrho = cf:2\neps = 0.1 # small\nl=0.6\nstages = 2\nseed = 9\n").unwrap();
        assert!((c.rho.value().unwrap() - SILVER).abs() < 1e-15);
        assert_eq!((c.eps, c.l, c.stages, c.seed), (0.1, 0.6, 2, 9));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::parse("colour = red"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("stages = two"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("stages"), Err(CliError::Config(_))));
    }

    #[test]
    fn short_flat_interval_fails_validation() {
        let c = RunConfig::parse("l = 0.5").unwrap();
        assert!(matches!(
            c.validate(),
            Err(CliError::Core(flatcircle_core::Error::LengthTooSmall { .. }))
        ));
    }

    #[test]
    fn hash_follows_results_not_output_location() {
        let a = RunConfig::parse("seed = 1").unwrap();
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.apply(&Overrides {
            seed: Some(2),
            ..Default::default()
        });
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn anchored_params_carry_the_anchor() {
        let mut c = RunConfig::parse("stages = 2\nanchor_k = 0.7").unwrap();
        c.apply(&Overrides {
            anchored: true,
            ..Default::default()
        });
        let p = c.params().unwrap();
        assert_eq!(p.anchor.unwrap().k, 0.7);
        assert_eq!(p.budgets, Budgets::anchored(GOLDEN));
    }
}
