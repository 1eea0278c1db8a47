//! Open-boundary conditions for velocity and temperature.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Smooth switch from inflow (1) to outflow (0).
pub fn beta1(s: f64) -> f64 {
    0.5 - (100.0 * s).atan() / std::f64::consts::PI
}

/// Step function: 1/2 on inflow, 0 otherwise.
pub fn beta2(s: f64) -> f64 {
    if s < 0.0 {
        0.5
    } else {
        0.0
    }
}

/// The negative part `min(s, 0)`.
#[inline]
pub fn negative_part(s: f64) -> f64 {
    s.min(0.0)
}

pub type BetaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum BetaSpec {
    Beta1,
    Beta2,
    /// A user-supplied function with a declared sup-norm bound.
    Custom {
        name: String,
        f: BetaFn,
        bound: f64,
        lipschitz: bool,
    },
}

impl BetaSpec {
    pub fn custom(
        name: impl Into<String>,
        bound: f64,
        lipschitz: bool,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        BetaSpec::Custom {
            name: name.into(),
            f: Arc::new(f),
            bound,
            lipschitz,
        }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            BetaSpec::Beta1 => beta1(s),
            BetaSpec::Beta2 => beta2(s),
            BetaSpec::Custom { f, .. } => f(s),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            BetaSpec::Beta1 => 1.0,
            BetaSpec::Beta2 => 0.5,
            BetaSpec::Custom { bound, .. } => *bound,
        }
    }

    pub fn is_lipschitz(&self) -> bool {
        match self {
            BetaSpec::Beta1 => true,
            BetaSpec::Beta2 => false,
            BetaSpec::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            BetaSpec::Beta1 => "beta1",
            BetaSpec::Beta2 => "beta2",
            BetaSpec::Custom { name, .. } => name,
        }
    }

    /// Spot-check the declared bound on a grid of normal velocities.
    pub fn check_bound(&self, samples: &[f64]) -> Result<()> {
        for &s in samples {
            let v = self.eval(s);
            if !v.is_finite() || v.abs() > self.bound() {
                return Err(Error::param(
                    "beta",
                    format!("|{}({s})| = {} exceeds the bound {}", self.name(), v.abs(), self.bound()),
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BetaSpec({})", self.name())
    }
}

impl PartialEq for BetaSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (BetaSpec::Beta1, BetaSpec::Beta1) | (BetaSpec::Beta2, BetaSpec::Beta2) => true,
            (BetaSpec::Custom { f: a, .. }, BetaSpec::Custom { f: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Heat flux density `u * beta(v.n) * (v.n)` through the open boundary.
#[inline]
pub fn heat_flux_integrand(u_val: f64, v_normal: f64, beta: &BetaSpec) -> f64 {
    if v_normal == 0.0 {
        return 0.0;
    }
    u_val * beta.eval(v_normal) * v_normal
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VelocityBc {
    /// Do-nothing: `(1/Re) dv/dn = p n`.
    DoNothing,
    /// Directional do-nothing: adds `-1/2 v (v.n)_-` to the do-nothing traction.
    DirectionalDoNothing,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TemperatureBc {
    /// Homogeneous Neumann.
    Neumann,
    /// `(1/(Re Pr)) du/dn = u beta(v.n) (v.n)`.
    NeumannBeta(BetaSpec),
}

impl TemperatureBc {
    pub fn beta(&self) -> Option<&BetaSpec> {
        match self {
            TemperatureBc::Neumann => None,
            TemperatureBc::NeumannBeta(b) => Some(b),
        }
    }
}

/// A velocity condition paired with a temperature condition on the open boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BcCombo {
    pub velocity: VelocityBc,
    pub temperature: TemperatureBc,
}

impl BcCombo {
    pub fn new(velocity: VelocityBc, temperature: TemperatureBc) -> Self {
        BcCombo {
            velocity,
            temperature,
        }
    }

    /// The six combinations compared in the truncation benchmark, in table order.
    pub fn benchmark_set() -> Vec<BcCombo> {
        use TemperatureBc::*;
        use VelocityBc::*;
        vec![
            BcCombo::new(DoNothing, Neumann),
            BcCombo::new(DirectionalDoNothing, Neumann),
            BcCombo::new(DoNothing, NeumannBeta(BetaSpec::Beta1)),
            BcCombo::new(DirectionalDoNothing, NeumannBeta(BetaSpec::Beta1)),
            BcCombo::new(DoNothing, NeumannBeta(BetaSpec::Beta2)),
            BcCombo::new(DirectionalDoNothing, NeumannBeta(BetaSpec::Beta2)),
        ]
    }

    pub fn velocity_name(&self) -> &'static str {
        match self.velocity {
            VelocityBc::DoNothing => "dn",
            VelocityBc::DirectionalDoNothing => "ddn",
        }
    }

    pub fn temperature_name(&self) -> String {
        match &self.temperature {
            TemperatureBc::Neumann => "n".into(),
            TemperatureBc::NeumannBeta(BetaSpec::Beta1) => "n_beta1".into(),
            TemperatureBc::NeumannBeta(BetaSpec::Beta2) => "n_beta2".into(),
            TemperatureBc::NeumannBeta(b) => format!("n_{}", b.name()),
        }
    }

    /// Table label such as `DDN-N_beta1`.
    pub fn label(&self) -> String {
        let v = self.velocity_name().to_uppercase();
        let t = match &self.temperature {
            TemperatureBc::Neumann => "N".to_string(),
            TemperatureBc::NeumannBeta(b) => format!("N_{}", b.name()),
        };
        format!("{v}-{t}")
    }
}

impl fmt::Display for BcCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for VelocityBc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dn" => Ok(VelocityBc::DoNothing),
            "ddn" => Ok(VelocityBc::DirectionalDoNothing),
            other => Err(Error::param("bc_v", format!("unknown condition {other:?}"))),
        }
    }
}

impl FromStr for TemperatureBc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(TemperatureBc::Neumann),
            "n_beta1" => Ok(TemperatureBc::NeumannBeta(BetaSpec::Beta1)),
            "n_beta2" => Ok(TemperatureBc::NeumannBeta(BetaSpec::Beta2)),
            other => Err(Error::param("bc_u", format!("unknown condition {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beta1_values() {
        assert_eq!(beta1(0.0), 0.5);
        assert!((beta1(0.01) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn beta2_values() {
        assert_eq!(beta2(-1.0), 0.5);
        assert_eq!(beta2(0.0), 0.0);
        assert_eq!(beta2(3.7), 0.0);
    }

    #[test]
    fn beta1_range_and_monotonicity() {
        let samples: Vec<f64> = (0..10_000).map(|i| -5.0 + 10.0 * i as f64 / 9_999.0).collect();
        let values: Vec<f64> = samples.iter().map(|&s| beta1(s)).collect();
        assert!(values.iter().all(|&b| b > 0.0 && b < 1.0));
        assert!(values.windows(2).all(|w| w[1] < w[0]));
        BetaSpec::Beta1.check_bound(&samples).unwrap();
        BetaSpec::Beta2.check_bound(&samples).unwrap();
        let bad = BetaSpec::custom("two", 1.0, true, |_| 2.0);
        assert!(bad.check_bound(&samples).is_err());
    }

    #[test]
    fn flux_integrand() {
        assert_eq!(heat_flux_integrand(5.0, 0.0, &BetaSpec::Beta1), 0.0);
        let one = BetaSpec::custom("one", 1.0, true, |_| 1.0);
        assert_eq!(heat_flux_integrand(1.0, 2.0, &one), 2.0);
        assert_eq!(heat_flux_integrand(3.0, -2.0, &BetaSpec::Beta2), -3.0);
    }

    #[test]
    fn combos() {
        let set = BcCombo::benchmark_set();
        assert_eq!(set.len(), 6);
        let labels: Vec<_> = set.iter().map(BcCombo::label).collect();
        assert_eq!(
            labels,
            ["DN-N", "DDN-N", "DN-N_beta1", "DDN-N_beta1", "DN-N_beta2", "DDN-N_beta2"]
        );
        for c in &set {
            let v: VelocityBc = c.velocity_name().parse().unwrap();
            let t: TemperatureBc = c.temperature_name().parse().unwrap();
            assert_eq!(BcCombo::new(v, t), *c);
        }
        assert!("robin".parse::<TemperatureBc>().is_err());
        assert!(!BetaSpec::Beta2.is_lipschitz());
    }

    proptest! {
        #[test]
        fn beta1_reflection(s in -1e3f64..1e3) {
            prop_assert!((beta1(s) + beta1(-s) - 1.0).abs() < 1e-15);
        }
    }
}
