//! Claim-size distributions and Cramér–Lundberg parameter sets.
//!
//! Both shipped families (exponential, integer-shape gamma) are gamma laws
//! with integer shape, so every moment-type quantity below reduces to
//! incomplete-gamma sums that close over elementary functions.  The scaled
//! claim Y/√n stays in the family: Gamma(m, β) / √n = Gamma(m, β√n).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported gamma shape.  Keeps factorial-ratio sums well inside
/// f64 range; claim models in this problem class use small shapes.
pub const MAX_GAMMA_SHAPE: u32 = 20;

// ---------------------------------------------------------------------------
// Claim distribution
// ---------------------------------------------------------------------------

/// Supported light-tailed claim families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClaimFamily {
    /// Exponential with the given rate (mean 1/rate).
    Exponential { rate: f64 },
    /// Gamma with positive integer shape and the given rate (mean shape/rate).
    Gamma { shape: u32, rate: f64 },
}

/// Claim-size law Y with closed-form moments, tilted moments, survival and
/// mean-excess functions, and a deterministic sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimDistribution {
    family: ClaimFamily,
}

impl ClaimDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "exponential rate must be positive and finite, got {rate}"
            )));
        }
        Ok(Self { family: ClaimFamily::Exponential { rate } })
    }

    pub fn gamma(shape: u32, rate: f64) -> Result<Self> {
        if shape == 0 || shape > MAX_GAMMA_SHAPE {
            return Err(Error::InvalidParameter(format!(
                "gamma shape must be in 1..={MAX_GAMMA_SHAPE}, got {shape}"
            )));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma rate must be positive and finite, got {rate}"
            )));
        }
        Ok(Self { family: ClaimFamily::Gamma { shape, rate } })
    }

    pub fn family(&self) -> ClaimFamily {
        self.family
    }

    /// Gamma-form view (shape m, rate β); exponential is m = 1.
    pub fn shape_rate(&self) -> (u32, f64) {
        match self.family {
            ClaimFamily::Exponential { rate } => (1, rate),
            ClaimFamily::Gamma { shape, rate } => (shape, rate),
        }
    }

    /// Supremum of s with E(e^{sY}) < ∞ (the rate parameter).
    pub fn mgf_radius(&self) -> f64 {
        self.shape_rate().1
    }

    pub fn mean(&self) -> f64 {
        let (m, b) = self.shape_rate();
        f64::from(m) / b
    }

    /// Raw moment E(Y^k) = m(m+1)...(m+k-1)/β^k.
    pub fn moment(&self, k: u32) -> f64 {
        let (m, b) = self.shape_rate();
        let mut p = 1.0;
        for i in 0..k {
            p *= f64::from(m + i);
        }
        p / b.powi(k as i32)
    }

    /// Density f_Y(y).
    pub fn density(&self, y: f64) -> f64 {
        let (m, b) = self.shape_rate();
        if y < 0.0 {
            return 0.0;
        }
        let mut f = b * (-b * y).exp();
        for i in 1..m {
            f *= b * y / f64::from(i);
        }
        f
    }

    /// Survival S_Y(d) = P(Y > d) = e^{-βd} Σ_{j<m} (βd)^j / j!.
    pub fn survival(&self, d: f64) -> f64 {
        let (m, b) = self.shape_rate();
        erlang_survival(m, b, d)
    }

    /// CDF P(Y <= d), computed without cancellation for small d.
    pub fn cdf(&self, d: f64) -> f64 {
        let (m, b) = self.shape_rate();
        erlang_cdf(m, b, d)
    }

    /// Mean excess E(Y - d | Y > d); equals (∫_d^∞ S_Y) / S_Y(d).
    pub fn mean_excess(&self, d: f64) -> f64 {
        // E(Y 1{Y>d}) / S(d) - d; the tilted tail at s = 0 is exact.
        let s = self.survival(d);
        self.tilted_tail(1, 0.0, d).expect("tilt 0 always converges") / s - d
    }

    /// sup_{d >= 0} E(Y - d | Y > d).  Integer-shape gamma has decreasing
    /// mean residual life, so the supremum sits at d = 0 and equals the mean.
    pub fn sup_mean_excess(&self) -> f64 {
        self.mean()
    }

    /// Tilted moment E(Y^k e^{sY}) = [m...(m+k-1)] β^m / (β-s)^{m+k}.
    pub fn tilted_moment(&self, k: u32, s: f64) -> Result<f64> {
        let (m, b) = self.shape_rate();
        let nu = b - s;
        if !(nu > 0.0) {
            return Err(Error::DivergentTilt {
                tilt: s,
                radius: b,
                detail: format!("E(Y^{k} e^{{sY}}) requires s < {b}"),
            });
        }
        let mut p = 1.0;
        for i in 0..k {
            p *= f64::from(m + i);
        }
        Ok(p * (b / nu).powi(m as i32) / nu.powi(k as i32))
    }

    /// Tilted tail E(Y^k e^{sY} 1{Y > t0}) in closed form (ν = β - s > 0):
    /// (β^m/(m-1)!) e^{-ν t0} Σ_{j <= m+k-1} ((m+k-1)!/j!) t0^j / ν^{m+k-j}.
    pub fn tilted_tail(&self, k: u32, s: f64, t0: f64) -> Result<f64> {
        let (m, b) = self.shape_rate();
        let nu = b - s;
        if !(nu > 0.0) {
            return Err(Error::DivergentTilt {
                tilt: s,
                radius: b,
                detail: format!("tail moment E(Y^{k} e^{{sY}}; Y > {t0}) requires s < {b}"),
            });
        }
        if t0 <= 0.0 {
            return self.tilted_moment(k, s);
        }
        let top = m + k - 1; // degree of y^{m+k-1}
        // Σ_{j=0}^{top} (top!/j!) t0^j / ν^{top+1-j}, accumulated from j = top
        // downward so each step multiplies by j/(ν t0-ish) without factorials.
        let mut term = t0.powi(top as i32) / nu; // j = top
        let mut sum = term;
        for j in (0..top).rev() {
            term *= f64::from(j + 1) / (nu * t0);
            sum += term;
        }
        // prefactor β^m/(m-1)! times the non-(m+k-1)! normalization:
        // y^{m+k-1} carried (m+k-1)!/j! relative to term construction above.
        let mut pref = (-nu * t0).exp();
        for i in 0..m {
            pref *= b / if i == 0 { 1.0 } else { f64::from(i) };
        }
        // pref = β^m e^{-ν t0} / (m-1)!
        Ok(pref * sum)
    }

    /// Partial moment E(Y 1{Y <= t0}).
    pub fn partial_mean(&self, t0: f64) -> f64 {
        self.mean() - self.tilted_tail(1, 0.0, t0).expect("tilt 0 always converges")
    }

    /// Draw one claim.  Inverse-CDF for the exponential family; integer-shape
    /// gamma as a sum of independent exponentials.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (m, b) = self.shape_rate();
        let mut acc = 0.0;
        for _ in 0..m {
            let u: f64 = rng.gen();
            acc -= (1.0 - u).ln();
        }
        acc / b
    }

    /// The law of Y/√n: same family with rate multiplied by √n.
    pub fn scaled_by_sqrt(&self, sqrt_n: f64) -> ClaimDistribution {
        let f = match self.family {
            ClaimFamily::Exponential { rate } => ClaimFamily::Exponential { rate: rate * sqrt_n },
            ClaimFamily::Gamma { shape, rate } => {
                ClaimFamily::Gamma { shape, rate: rate * sqrt_n }
            }
        };
        ClaimDistribution { family: f }
    }
}

/// Survival of Gamma(m, b) at w: e^{-bw} Σ_{j<m} (bw)^j/j!.
pub(crate) fn erlang_survival(m: u32, b: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 1.0;
    }
    let bw = b * w;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..m {
        term *= bw / f64::from(j);
        sum += term;
    }
    (-bw).exp() * sum
}

/// CDF of Gamma(m, b) at w.  For moderate bw uses the Poisson-tail identity
/// P(Gamma(m,b) <= w) = Σ_{j>=m} e^{-bw}(bw)^j/j! (all positive terms, no
/// cancellation for small w); for large bw falls back to 1 - survival.
pub(crate) fn erlang_cdf(m: u32, b: f64, w: f64) -> f64 {
    if w <= 0.0 {
        return 0.0;
    }
    let bw = b * w;
    if bw > f64::from(m) + 30.0 {
        return 1.0 - erlang_survival(m, b, w);
    }
    // term at j = m: e^{-bw}(bw)^m/m!, built in log-free incremental form
    let mut term = (-bw).exp();
    for j in 1..=m {
        term *= bw / f64::from(j);
    }
    let mut sum = term;
    let mut j = m;
    while term > sum * 1e-18 + 1e-300 && j < m + 1000 {
        j += 1;
        term *= bw / f64::from(j);
        sum += term;
    }
    sum
}

/// Partial first moment ∫_0^w t g_{m,b}(t) dt = (m/b) · CDF_{m+1,b}(w).
pub(crate) fn erlang_partial_mean(m: u32, b: f64, w: f64) -> f64 {
    f64::from(m) / b * erlang_cdf(m + 1, b, w)
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Cramér–Lundberg parameters (λ, θ, δ, claim law); premium c = (1+θ)λ E Y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CLParameters {
    pub lambda: f64,
    pub theta: f64,
    pub delta: f64,
    pub claim: ClaimDistribution,
}

impl CLParameters {
    pub fn new(lambda: f64, theta: f64, delta: f64, claim: ClaimDistribution) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("theta", theta), ("delta", delta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { lambda, theta, delta, claim })
    }

    /// Premium rate c = (1+θ) λ E Y > λ E Y.
    pub fn premium_rate(&self) -> f64 {
        (1.0 + self.theta) * self.lambda * self.claim.mean()
    }

    pub fn scale(&self, n: f64) -> Result<ScaledParameters> {
        ScaledParameters::new(*self, n)
    }
}

/// The n-scaled model: λ_n = nλ, claims Y/√n, c_n = (√n+θ)λ E Y, θ_n = θ/√n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledParameters {
    pub base: CLParameters,
    pub n: f64,
    pub lambda_n: f64,
    pub c_n: f64,
    pub theta_n: f64,
}

impl ScaledParameters {
    pub fn new(base: CLParameters, n: f64) -> Result<Self> {
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor n must be positive and finite, got {n}"
            )));
        }
        let sq = n.sqrt();
        Ok(Self {
            base,
            n,
            lambda_n: n * base.lambda,
            c_n: (sq + base.theta) * base.lambda * base.claim.mean(),
            theta_n: base.theta / sq,
        })
    }

    pub fn sqrt_n(&self) -> f64 {
        self.n.sqrt()
    }

    /// The law of Y_n = Y/√n.
    pub fn scaled_claim(&self) -> ClaimDistribution {
        self.base.claim.scaled_by_sqrt(self.sqrt_n())
    }

    pub fn delta(&self) -> f64 {
        self.base.delta
    }
}

/// Convenience constructor mirroring the JSON parameter schema.
pub fn scale(base: &CLParameters, n: f64) -> Result<ScaledParameters> {
    base.scale(n)
}

// ---------------------------------------------------------------------------
// JSON parameter schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimJson {
    family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    shape: Option<u32>,
    rate: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsJson {
    lambda: f64,
    theta: f64,
    delta: f64,
    claim: ClaimJson,
}

impl CLParameters {
    /// Parse `{"lambda", "theta", "delta", "claim": {"family", "shape"?, "rate"}}`,
    /// rejecting unknown fields and non-positive values.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ParamsJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("parameter JSON: {e}")))?;
        let claim = match raw.claim.family.as_str() {
            "exponential" => {
                if raw.claim.shape.is_some() {
                    return Err(Error::InvalidParameter(
                        "claim.shape is only valid for the gamma family".into(),
                    ));
                }
                ClaimDistribution::exponential(raw.claim.rate)?
            }
            "gamma" => {
                let shape = raw.claim.shape.ok_or_else(|| {
                    Error::InvalidParameter("gamma claim requires claim.shape".into())
                })?;
                ClaimDistribution::gamma(shape, raw.claim.rate)?
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown claim family {other:?} (expected \"gamma\" or \"exponential\")"
                )))
            }
        };
        CLParameters::new(raw.lambda, raw.theta, raw.delta, claim)
    }

    pub fn to_json(&self) -> String {
        let claim = match self.claim.family() {
            ClaimFamily::Exponential { rate } => {
                ClaimJson { family: "exponential".into(), shape: None, rate }
            }
            ClaimFamily::Gamma { shape, rate } => {
                ClaimJson { family: "gamma".into(), shape: Some(shape), rate }
            }
        };
        serde_json::to_string_pretty(&ParamsJson {
            lambda: self.lambda,
            theta: self.theta,
            delta: self.delta,
            claim,
        })
        .expect("parameter serialization cannot fail")
    }
}
