//! Plain-text `key = value` run configuration.
//!
//! Blank lines and anything after `#` are ignored. List values are comma
//! separated and may be wrapped in brackets. Unknown and repeated keys are
//! errors so that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bridge::BridgeSampler;
use crate::emission::{Emission, EmissionKind};
use crate::engine::{Method, PmmhSettings, RunConfig, DEFAULT_INIT_ATTEMPTS};
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::params::{BetaPrior, DirichletPrior, GammaPrior, Params, PriorSpec};
use crate::pmmh::PathSim;
use crate::sim::{EpochSchedule, Rates};

pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "emission",
    "data",
    "population",
    "iterations",
    "burn_in",
    "thin",
    "subjects_per_iter",
    "bridge_sampler",
    "seed",
    "chains",
    "method",
    "init_attempts",
    "nb.pilot",
    "prior.beta.shape",
    "prior.beta.rate",
    "prior.gamma.shape",
    "prior.gamma.rate",
    "prior.mu.shape",
    "prior.mu.rate",
    "prior.rho.a",
    "prior.rho.b",
    "prior.phi.shape",
    "prior.phi.rate",
    "prior.p0.alpha",
    "init.beta",
    "init.gamma",
    "init.mu",
    "init.rho",
    "init.phi",
    "init.p0",
    "pmmh.particles",
    "pmmh.step",
    "pmmh.path_sim",
    "pmmh.pilot",
    "pmmh.scale",
    "sim.initial",
    "sim.epochs",
    "sim.beta",
    "sim.gamma",
    "sim.mu",
    "sim.rho",
    "sim.phi",
    "sim.times",
    "sim.start",
    "sim.end",
    "sim.every",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: Vec<Entry>,
    base_dir: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected 'key = value', got '{content}'") })?;
            let key = k.trim();
            let value = v.trim();
            if key.is_empty() {
                return Err(Error::Config { line, msg: "empty key".into() });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config { line, msg: format!("unknown key '{key}'") });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(Error::Config { line, msg: format!("'{key}' already set on line {}", prev.line) });
            }
            entries.push(Entry { key: key.to_string(), value: value.to_string(), line });
        }
        Ok(ConfigFile { entries, base_dir: None })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn read(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    /// Overrides or adds a value, as done for command-line flags.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value.to_string(),
            None => self.entries.push(Entry { key: key.into(), value: value.into(), line: 0 }),
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| Error::Config { line: e.line, msg: format!("{key}: {err}") }),
        }
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| Error::Config { line: 0, msg: format!("missing required key '{key}'") })
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        let body = e.value.trim().trim_start_matches('[').trim_end_matches(']');
        if body.trim().is_empty() {
            return Ok(Some(Vec::new()));
        }
        body.split(',')
            .map(|s| {
                s.trim().parse::<T>().map_err(|err| Error::Config { line: e.line, msg: format!("{key}: {err}") })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| match &self.base_dir {
            Some(dir) if Path::new(v).is_relative() => dir.join(v),
            _ => PathBuf::from(v),
        })
    }

    pub fn model(&self) -> Result<ModelSpec> {
        Ok(ModelSpec::new(self.required::<ModelKind>("model")?))
    }

    pub fn emission_kind(&self) -> Result<EmissionKind> {
        Ok(self.parsed("emission")?.unwrap_or(EmissionKind::Binomial))
    }

    fn gamma_prior(&self, name: &str) -> Result<Option<GammaPrior>> {
        let shape = self.parsed::<f64>(&format!("prior.{name}.shape"))?;
        let rate = self.parsed::<f64>(&format!("prior.{name}.rate"))?;
        match (shape, rate) {
            (Some(s), Some(r)) => Ok(Some(GammaPrior::new(s, r))),
            (None, None) => Ok(None),
            _ => Err(Error::Config { line: 0, msg: format!("prior.{name} needs both shape and rate") }),
        }
    }

    pub fn priors(&self, model: &ModelSpec) -> Result<PriorSpec> {
        let missing = |k: &str| Error::Config { line: 0, msg: format!("missing prior for {k}") };
        let p = PriorSpec {
            beta: self.gamma_prior("beta")?.ok_or_else(|| missing("beta"))?,
            gamma: self.gamma_prior("gamma")?,
            mu: self.gamma_prior("mu")?.ok_or_else(|| missing("mu"))?,
            rho: BetaPrior::new(self.required("prior.rho.a")?, self.required("prior.rho.b")?),
            phi: self.gamma_prior("phi")?,
            p_init: DirichletPrior { alpha: self.list("prior.p0.alpha")?.ok_or_else(|| missing("p0"))? },
        };
        p.validate(model)?;
        Ok(p)
    }

    /// Starting parameters if every required `init.*` key is present.
    pub fn init_params(&self, model: &ModelSpec, emission: EmissionKind) -> Result<Option<Params>> {
        let beta = self.parsed::<f64>("init.beta")?;
        let Some(beta) = beta else {
            return Ok(None);
        };
        let p = Params {
            beta,
            gamma: self.parsed("init.gamma")?,
            mu: self.required("init.mu")?,
            rho: self.required("init.rho")?,
            phi: match emission {
                EmissionKind::Binomial => None,
                EmissionKind::NegBinomial => Some(self.required("init.phi")?),
            },
            p_init: self.list("init.p0")?.ok_or_else(|| Error::Config { line: 0, msg: "init.p0 missing".into() })?,
        };
        p.validate(model)?;
        Ok(Some(p))
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let model = self.model()?;
        let emission = self.emission_kind()?;
        let priors = self.priors(&model)?;
        let mut c = RunConfig::new(model.clone(), emission, priors);
        c.init = self.init_params(&model, emission)?;
        c.iterations = self.parsed("iterations")?.unwrap_or(c.iterations);
        c.burn_in = self.parsed("burn_in")?.unwrap_or(c.burn_in);
        c.thin = self.parsed("thin")?.unwrap_or(c.thin);
        c.subjects_per_iter = self.parsed("subjects_per_iter")?;
        c.bridge_sampler = self.parsed::<BridgeSampler>("bridge_sampler")?.unwrap_or(c.bridge_sampler);
        c.seed = self.parsed("seed")?.unwrap_or(c.seed);
        c.chains = self.parsed("chains")?.unwrap_or(c.chains);
        c.method = self.parsed::<Method>("method")?.unwrap_or(Method::Bda);
        c.emission_pilot = self.parsed("nb.pilot")?.unwrap_or(c.emission_pilot);
        c.init_attempts = self.parsed("init_attempts")?.unwrap_or(DEFAULT_INIT_ATTEMPTS);
        let mut pm = PmmhSettings { particles: self.parsed("pmmh.particles")?.unwrap_or(500), ..Default::default() };
        pm.pilot = self.parsed("pmmh.pilot")?;
        pm.scale = self.parsed("pmmh.scale")?.unwrap_or(pm.scale);
        pm.path_sim = match self.get("pmmh.path_sim").map(|s| s.to_ascii_lowercase()) {
            None => PathSim::Exact,
            Some(s) if s == "exact" || s == "gillespie" => PathSim::Exact,
            Some(s) if s == "tauleap" || s == "tau-leap" || s == "tau_leap" => {
                let step: f64 = self.parsed("pmmh.step")?.ok_or_else(|| Error::Config {
                    line: 0,
                    msg: "pmmh.path_sim = tauleap needs pmmh.step".into(),
                })?;
                PathSim::TauLeap(step)
            }
            Some(s) => {
                let line = self.entry("pmmh.path_sim").map_or(0, |e| e.line);
                return Err(Error::Config { line, msg: format!("unknown path simulator '{s}'") });
            }
        };
        c.pmmh = pm;
        Ok(c)
    }

    pub fn sim_setup(&self) -> Result<SimSetup> {
        let model = self.model()?;
        let population: usize = self.required("population")?;
        let initial: Vec<usize> = self.list("sim.initial")?.ok_or_else(|| Error::Config {
            line: 0,
            msg: "missing sim.initial".into(),
        })?;
        if initial.len() != model.n_states() || initial.iter().sum::<usize>() != population {
            return Err(Error::Config {
                line: self.entry("sim.initial").map_or(0, |e| e.line),
                msg: format!("sim.initial must list {} counts summing to {population}", model.n_states()),
            });
        }
        let beta: Vec<f64> = self.list("sim.beta")?.unwrap_or_default();
        let mu: Vec<f64> = self.list("sim.mu")?.unwrap_or_default();
        let gamma: Vec<f64> = self.list("sim.gamma")?.unwrap_or_else(|| vec![0.0]);
        let starts: Vec<f64> = self.list("sim.epochs")?.unwrap_or_else(|| vec![f64::NEG_INFINITY]);
        let k = starts.len();
        let pick = |v: &[f64], i: usize, name: &str| -> Result<f64> {
            match v.len() {
                1 => Ok(v[0]),
                n if n == k => Ok(v[i]),
                _ => Err(Error::Config { line: 0, msg: format!("sim.{name} needs 1 or {k} values") }),
            }
        };
        let rates = (0..k)
            .map(|i| Ok(Rates { beta: pick(&beta, i, "beta")?, gamma: pick(&gamma, i, "gamma")?, mu: pick(&mu, i, "mu")? }))
            .collect::<Result<Vec<_>>>()?;
        let schedule = EpochSchedule::new(starts, rates)?;
        let times = match self.list::<f64>("sim.times")? {
            Some(t) => t,
            None => {
                let start: f64 = self.required("sim.start")?;
                let end: f64 = self.required("sim.end")?;
                let every: f64 = self.required("sim.every")?;
                if !(every > 0.0) || !(end >= start) {
                    return Err(Error::Config { line: 0, msg: "sim.start/end/every do not form a grid".into() });
                }
                let n = ((end - start) / every + 1e-9).floor() as usize;
                (0..=n).map(|i| start + i as f64 * every).collect()
            }
        };
        let emission = Emission::new(self.emission_kind()?, self.required("sim.rho")?, self.parsed("sim.phi")?)?;
        Ok(SimSetup { model, population, initial, schedule, emission, times, seed: self.parsed("seed")?.unwrap_or(1) })
    }
}

/// Everything needed to simulate one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSetup {
    pub model: ModelSpec,
    pub population: usize,
    pub initial: Vec<usize>,
    pub schedule: EpochSchedule,
    pub emission: Emission,
    pub times: Vec<f64>,
    pub seed: u64,
}
