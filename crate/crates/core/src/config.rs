//! Flat key/value run configuration (TOML) shared by the `train` and
//! `lemmas` commands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concentration::ConcentrationParams;
use crate::data::{build_basis, sample_dataset, DataConfig, Dataset, XorBasis};
use crate::error::{Error, Result};
use crate::model::{init_weights, CnnWeights};
use crate::rng::{stream_rng, Stream};
use crate::theory::{snr, small_angle_sigma_0, GrowthParams, KappaInputs, Regime};
use crate::train::{Preset, RegimeInputs, TrainConfig};

/// Default `σp⁴d/‖μ‖⁴` when neither `mu_norm` nor `ratio` is given.
pub const DEFAULT_RATIO: f64 = 0.2;

/// Initialization scale when `sigma_0` is absent and the preset is not
/// explicitly `small_angle`.
pub const DEFAULT_SIGMA_0: f64 = 0.01;

/// Every parameter of one run. Keys absent from the file take the defaults
/// below; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub sigma_p: f64,
    pub flip_p: f64,
    pub cos_theta: f64,
    /// Signal norm `‖μ‖`; mutually exclusive with `ratio`.
    pub mu_norm: Option<f64>,
    /// `σp⁴d/‖μ‖⁴`, from which `‖μ‖` is derived; mutually exclusive with `mu_norm`.
    pub ratio: Option<f64>,
    /// Initialization scale. When absent: `nm/(σp d)` if `preset = "small_angle"`
    /// is given explicitly, otherwise [`DEFAULT_SIGMA_0`].
    pub sigma_0: Option<f64>,
    pub eta: f64,
    pub epochs: u64,
    pub target_eps: f64,
    pub record_every: u64,
    /// `classic_xor`, `small_angle` or `custom`; implied by `cos_theta` when absent.
    pub preset: Option<Preset>,
    pub early_stop: bool,
    pub seed: u64,
    pub n_test: usize,
    pub delta: f64,
    /// Seeded repetitions used by the statistical lemma suites.
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            n: 80,
            d: 200,
            m: 40,
            sigma_p: 1.0,
            flip_p: 0.1,
            cos_theta: 0.8,
            mu_norm: None,
            ratio: None,
            sigma_0: None,
            eta: t.eta,
            epochs: t.epochs,
            target_eps: t.target_eps,
            record_every: t.record_every,
            preset: None,
            early_stop: t.early_stop,
            seed: 0,
            n_test: 1000,
            delta: 0.05,
            trials: 20,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu_norm.is_some() && self.ratio.is_some() {
            return Err(Error::Config("give either mu_norm or ratio, not both".into()));
        }
        if let Some(r) = self.ratio {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Config(format!("ratio must be positive, got {r}")));
            }
        }
        if self.n_test == 0 || self.trials == 0 {
            return Err(Error::Config("n_test and trials must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        self.data_config().validate()?;
        self.train_config().validate()?;
        let _ = self.resolved_mu_norm()?;
        let _ = self.resolved_sigma_0()?;
        Ok(())
    }

    pub fn resolved_preset(&self) -> Preset {
        self.preset.unwrap_or_else(|| Preset::for_angle(self.cos_theta))
    }

    pub fn regime(&self) -> Regime {
        Regime::of(self.resolved_preset(), self.cos_theta)
    }

    /// `‖μ‖` from `mu_norm`, or from `ratio` (default [`DEFAULT_RATIO`]).
    pub fn resolved_mu_norm(&self) -> Result<f64> {
        let mu = match self.mu_norm {
            Some(mu) => mu,
            None => {
                let s2 = self.sigma_p * self.sigma_p;
                (s2 * s2 * self.d as f64 / self.ratio.unwrap_or(DEFAULT_RATIO)).powf(0.25)
            }
        };
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Config(format!("mu_norm must be positive, got {mu}")));
        }
        Ok(mu)
    }

    /// `σ0` as given; when unset, the small-angle scale `nm/(σp d)` under an
    /// explicit small-angle preset and [`DEFAULT_SIGMA_0`] otherwise.
    pub fn resolved_sigma_0(&self) -> Result<f64> {
        let s0 = match self.sigma_0 {
            Some(s) => s,
            None if self.preset == Some(Preset::SmallAngle) => small_angle_sigma_0(self.n, self.m, self.sigma_p, self.d),
            None => DEFAULT_SIGMA_0,
        };
        if !(s0 > 0.0) || !s0.is_finite() {
            return Err(Error::Config(format!("sigma_0 must be positive, got {s0}")));
        }
        Ok(s0)
    }

    pub fn data_config(&self) -> DataConfig {
        DataConfig { n: self.n, sigma_p: self.sigma_p, flip_p: self.flip_p, seed: self.seed }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            eta: self.eta,
            epochs: self.epochs,
            target_eps: self.target_eps,
            record_every: self.record_every,
            preset: self.resolved_preset(),
            early_stop: self.early_stop,
            keep_snapshots: false,
        }
    }

    /// Basis, training set and initial weights, each on its own stream of `seed`.
    pub fn instance(&self) -> Result<(XorBasis<f64>, Dataset<f64>, CnnWeights<f64>)> {
        let basis = build_basis::<f64, _>(self.d, self.resolved_mu_norm()?, self.cos_theta, &mut stream_rng(self.seed, Stream::Basis))?;
        let dataset = sample_dataset(&basis, &self.data_config(), &mut stream_rng(self.seed, Stream::Data))?;
        let init = init_weights(self.m, self.d, self.resolved_sigma_0()?, &mut stream_rng(self.seed, Stream::Init))?;
        Ok((basis, dataset, init))
    }

    pub fn regime_inputs(&self) -> Result<RegimeInputs> {
        Ok(RegimeInputs {
            n: self.n,
            d: self.d,
            m: self.m,
            mu_norm: self.resolved_mu_norm()?,
            sigma_p: self.sigma_p,
            flip_p: self.flip_p,
            eta: self.eta,
            sigma_0: self.resolved_sigma_0()?,
            cos_theta: self.cos_theta,
            eps: self.target_eps,
            delta: self.delta,
        })
    }

    /// `κ` inputs with `T*` set to the epoch budget.
    pub fn kappa_inputs(&self) -> Result<KappaInputs> {
        Ok(KappaInputs {
            n: self.n,
            d: self.d,
            m: self.m,
            delta: self.delta,
            sigma_0: self.resolved_sigma_0()?,
            sigma_p: self.sigma_p,
            snr: snr(self.resolved_mu_norm()?, self.sigma_p, self.d),
            t_star: self.epochs.max(1) as f64,
        })
    }

    pub fn growth_params(&self) -> Result<GrowthParams> {
        Ok(GrowthParams {
            n: self.n,
            d: self.d,
            m: self.m,
            eta: self.eta,
            sigma_0: self.resolved_sigma_0()?,
            sigma_p: self.sigma_p,
            mu_norm: self.resolved_mu_norm()?,
            delta: self.delta,
        })
    }

    pub fn concentration_params(&self) -> Result<ConcentrationParams> {
        Ok(ConcentrationParams {
            n: self.n,
            d: self.d,
            m: self.m,
            sigma_p: self.sigma_p,
            sigma_0: self.resolved_sigma_0()?,
            mu_norm: self.resolved_mu_norm()?,
            cos_theta: self.cos_theta,
            flip_p: self.flip_p,
            delta: self.delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.resolved_preset(), Preset::SmallAngle);
    }

    #[test]
    fn ratio_determines_signal_norm() {
        let c = RunConfig::from_toml_str("d = 200\nratio = 0.2\n").unwrap();
        // σp⁴d/‖μ‖⁴ = 0.2 → ‖μ‖⁴ = 1000
        assert!((c.resolved_mu_norm().unwrap().powi(4) - 1000.0).abs() < 1e-9);
        let c = RunConfig::from_toml_str("mu_norm = 3.5").unwrap();
        assert_eq!(c.resolved_mu_norm().unwrap(), 3.5);
    }

    #[test]
    fn rejects_conflicts_and_unknown_keys() {
        assert!(RunConfig::from_toml_str("mu_norm = 1.0\nratio = 0.2").is_err());
        assert!(RunConfig::from_toml_str("learning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml_str("flip_p = 0.5").is_err());
        assert!(RunConfig::from_toml_str("eta = 0.0").is_err());
    }

    #[test]
    fn small_angle_preset_fills_in_sigma_0() {
        let c = RunConfig::from_toml_str("n = 20\nm = 10\nd = 8000\npreset = \"small_angle\"\nsigma_0 = 0.5").unwrap();
        assert_eq!(c.resolved_sigma_0().unwrap(), 0.5);
        let mut c = c;
        c.sigma_0 = None;
        assert_eq!(c.resolved_sigma_0().unwrap(), 200.0 / 8000.0);
        c.preset = Some(Preset::ClassicXor);
        assert_eq!(c.resolved_sigma_0().unwrap(), DEFAULT_SIGMA_0);
        // An angle-implied preset does not switch the initialization scale.
        c.preset = None;
        assert_eq!(c.resolved_preset(), Preset::SmallAngle);
        assert_eq!(c.resolved_sigma_0().unwrap(), DEFAULT_SIGMA_0);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig { ratio: Some(0.5), seed: 99, preset: Some(Preset::ClassicXor), ..RunConfig::default() };
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn instance_is_seed_deterministic() {
        let c = RunConfig { n: 10, d: 20, m: 3, seed: 4, ..RunConfig::default() };
        let (b1, d1, w1) = c.instance().unwrap();
        let (b2, d2, w2) = c.instance().unwrap();
        assert_eq!((b1, d1.points, w1), (b2, d2.points, w2));
    }
}
