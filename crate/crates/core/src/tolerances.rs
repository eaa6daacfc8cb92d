//! Numerical defaults shared by every check. Reports echo the full set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prefix for environment overrides, e.g. `APCERT_KKT=1e-6`.
pub const ENV_PREFIX: &str = "APCERT_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Max-piece and index activity, relative to `|max| + 1`.
    pub activity: f64,
    /// Constraint and Ω slack accepted by feasibility tests.
    pub feasibility: f64,
    /// Allowed `|μ_t g_t(x̄)|` and `|Λ • g(x̄)|`.
    pub complementarity: f64,
    /// Residual at or below which a KKT inclusion counts as certified.
    pub kkt: f64,
    pub max_iter: usize,
    /// Smallest margin accepted as a strict direction.
    pub sigma_min: f64,
    /// Strict generalized-convexity margin is `strict_factor * (1 + |x - x̄|)`.
    pub strict_factor: f64,
    /// Slack subtracted from the right side of the grid dominance tests.
    pub oracle_slack: f64,
    /// Default points per interval dimension of an index domain.
    pub index_points: usize,
    /// Cap on subgradient vertex combinations per sample point.
    pub combination_cap: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            activity: 1e-8,
            feasibility: 1e-9,
            complementarity: 1e-7,
            kkt: 1e-8,
            max_iter: 20_000,
            sigma_min: 1e-9,
            strict_factor: 1e-9,
            oracle_slack: 0.0,
            index_points: 201,
            combination_cap: 4096,
        }
    }
}

impl Tolerances {
    /// Defaults overlaid with any `APCERT_*` environment variables.
    pub fn from_env() -> Result<Self> {
        Self::default().overlay(|key| std::env::var(format!("{ENV_PREFIX}{key}")).ok())
    }

    /// Overlays values looked up by upper-case field name.
    pub fn overlay<F: Fn(&str) -> Option<String>>(mut self, lookup: F) -> Result<Self> {
        fn real(key: &str, raw: Option<String>, slot: &mut f64) -> Result<()> {
            if let Some(raw) = raw {
                *slot = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::Schema(format!("{key}: cannot parse `{raw}` as a number")))?;
            }
            Ok(())
        }
        fn count(key: &str, raw: Option<String>, slot: &mut usize) -> Result<()> {
            if let Some(raw) = raw {
                *slot = raw
                    .trim()
                    .parse()
                    .map_err(|_| Error::Schema(format!("{key}: cannot parse `{raw}` as a count")))?;
            }
            Ok(())
        }
        real("ACTIVITY", lookup("ACTIVITY"), &mut self.activity)?;
        real("FEASIBILITY", lookup("FEASIBILITY"), &mut self.feasibility)?;
        real("COMPLEMENTARITY", lookup("COMPLEMENTARITY"), &mut self.complementarity)?;
        real("KKT", lookup("KKT"), &mut self.kkt)?;
        count("MAX_ITER", lookup("MAX_ITER"), &mut self.max_iter)?;
        real("SIGMA_MIN", lookup("SIGMA_MIN"), &mut self.sigma_min)?;
        real("STRICT_FACTOR", lookup("STRICT_FACTOR"), &mut self.strict_factor)?;
        real("ORACLE_SLACK", lookup("ORACLE_SLACK"), &mut self.oracle_slack)?;
        count("INDEX_POINTS", lookup("INDEX_POINTS"), &mut self.index_points)?;
        count("COMBINATION_CAP", lookup("COMBINATION_CAP"), &mut self.combination_cap)?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("activity", self.activity),
            ("feasibility", self.feasibility),
            ("complementarity", self.complementarity),
            ("kkt", self.kkt),
            ("sigma_min", self.sigma_min),
            ("strict_factor", self.strict_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        if !(self.oracle_slack >= 0.0 && self.oracle_slack.is_finite()) {
            return Err(Error::Schema("tolerance `oracle_slack` must be nonnegative".into()));
        }
        if self.max_iter == 0 || self.index_points < 2 || self.combination_cap == 0 {
            return Err(Error::Schema(
                "max_iter and combination_cap must be positive, index_points at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Activity band below a maximum value `m`.
    pub fn activity_band(&self, m: f64) -> f64 {
        self.activity * (m.abs() + 1.0)
    }
}
