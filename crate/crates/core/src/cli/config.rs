use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::divergence::{DivergenceKind, JsMode};
use crate::error::{Error, Result};
use crate::levelset::{NlacParams, Polarity, XiPolicy};
use crate::multiscale::MsConfig;
use crate::similarity::{KernelNorm, DEFAULT_CACHE_BUDGET};
use crate::stats::Model;

/// Every tunable of a `segment` run after merging defaults, the config file
/// and command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub input: PathBuf,
    pub gt: Option<PathBuf>,
    pub out: PathBuf,
    pub scales: usize,
    pub seed: u64,
    pub model: Model,
    pub bins: usize,
    pub looks: u32,
    pub distance: DivergenceKind,
    pub js_mode: JsMode,
    pub patch_half: usize,
    pub nl_radius: usize,
    /// `None` means half the window radius.
    pub nl_sigma: Option<f64>,
    pub kernel_norm: KernelNorm,
    pub lambda: f64,
    /// `None` selects the step automatically.
    pub xi: Option<f64>,
    pub omega: f64,
    pub max_iters: usize,
    pub epsilon: f64,
    pub sigma0: f64,
    pub polarity: Polarity,
    pub threads: Option<usize>,
    pub snapshot_every: Option<usize>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        let ms = MsConfig::<f64>::default();
        Self {
            input: PathBuf::new(),
            gt: None,
            out: PathBuf::from("out"),
            scales: ms.levels,
            seed: ms.seed,
            model: ms.model,
            bins: ms.bins,
            looks: ms.looks,
            distance: ms.nlac.kind,
            js_mode: ms.nlac.js_mode,
            patch_half: ms.tau,
            nl_radius: ms.nl_radius,
            nl_sigma: None,
            kernel_norm: ms.kernel_norm,
            lambda: ms.nlac.lambda,
            xi: None,
            omega: ms.nlac.omega,
            max_iters: ms.nlac.max_iters,
            epsilon: ms.nlac.epsilon,
            sigma0: ms.sigma0,
            polarity: ms.nlac.polarity,
            threads: None,
            snapshot_every: None,
        }
    }
}

fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::param(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_optional<T: FromStr>(key: &'static str, value: &str, none: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if value.eq_ignore_ascii_case(none) {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl SegmentConfig {
    /// Sets one field from its textual `key = value` form. Keys use the
    /// flag spelling; `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "input" => self.input = PathBuf::from(v),
            "gt" => self.gt = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "scales" => self.scales = parse("scales", v)?,
            "seed" => self.seed = parse("seed", v)?,
            "model" => self.model = parse("model", v)?,
            "bins" => self.bins = parse("bins", v)?,
            "looks" => self.looks = parse("looks", v)?,
            "distance" => self.distance = parse("distance", v)?,
            "js-mode" => self.js_mode = parse("js-mode", v)?,
            "patch-half" => self.patch_half = parse("patch-half", v)?,
            "nl-radius" => self.nl_radius = parse("nl-radius", v)?,
            "nl-sigma" => self.nl_sigma = parse_optional("nl-sigma", v, "auto")?,
            "kernel-norm" => self.kernel_norm = parse("kernel-norm", v)?,
            "lambda" => self.lambda = parse("lambda", v)?,
            "xi" => self.xi = parse_optional("xi", v, "auto")?,
            "omega" => self.omega = parse("omega", v)?,
            "max-iters" => self.max_iters = parse("max-iters", v)?,
            "epsilon" => self.epsilon = parse("epsilon", v)?,
            "sigma0" => self.sigma0 = parse("sigma0", v)?,
            "polarity" => {
                self.polarity = match v {
                    "positive" => Polarity::Positive,
                    "border-background" => Polarity::BorderBackground,
                    _ => return Err(Error::param("polarity", format!("unknown polarity `{v}`"))),
                }
            }
            "threads" => self.threads = parse_optional("threads", v, "auto")?,
            "snapshot-every" => self.snapshot_every = parse_optional("snapshot-every", v, "never")?,
            _ => return Err(Error::InvalidData(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidData(format!("{}:{}: expected `key = value`", path.display(), n + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_ms_config(&self) -> MsConfig<f64> {
        MsConfig {
            levels: self.scales,
            nlac: NlacParams {
                lambda: self.lambda,
                xi: self.xi.map_or_else(XiPolicy::default, XiPolicy::Fixed),
                omega: self.omega,
                max_iters: self.max_iters,
                epsilon: self.epsilon,
                kind: self.distance,
                js_mode: self.js_mode,
                clamp: 10.0,
                polarity: self.polarity,
            },
            model: self.model,
            tau: self.patch_half,
            nl_radius: self.nl_radius,
            nl_sigma: self.nl_sigma,
            kernel_norm: self.kernel_norm,
            bins: self.bins,
            looks: self.looks,
            sigma0: self.sigma0,
            seed: self.seed,
            cache_budget: DEFAULT_CACHE_BUDGET,
        }
    }

    /// Checks everything that does not depend on the input image.
    pub fn validate(&self) -> Result<()> {
        if self.input.as_os_str().is_empty() {
            return Err(Error::param("input", "no input image given"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads", "must be at least 1"));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::param("snapshot-every", "must be at least 1"));
        }
        if let Some(s) = self.nl_sigma {
            if !(s > 0.0) {
                return Err(Error::param("nl-sigma", "must be positive"));
            }
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::param("sigma0", "must be positive"));
        }
        if self.scales == 0 {
            return Err(Error::param("scales", "must be at least 1"));
        }
        self.to_ms_config().nlac.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment\nlambda = 5\nmodel = weibull\nnl_radius=4 # trailing\n\nxi = auto\nthreads = 2\n",
        )
        .unwrap();
        let mut cfg = SegmentConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!((cfg.lambda, cfg.model, cfg.nl_radius, cfg.xi, cfg.threads), (5.0, Model::Weibull, 4, None, Some(2)));
        cfg.set("lambda", "7").unwrap();
        assert_eq!(cfg.lambda, 7.0);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut cfg = SegmentConfig::default();
        assert!(cfg.set("colour", "red").is_err());
        assert!(cfg.set("bins", "many").is_err());
        assert!(cfg.set("distance", "l2").is_err());
    }

    #[test]
    fn defaults_follow_library() {
        let cfg = SegmentConfig::default();
        assert_eq!((cfg.patch_half, cfg.nl_radius, cfg.scales, cfg.lambda, cfg.omega), (7, 30, 3, 20.0, 1e-3));
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SegmentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }
}
