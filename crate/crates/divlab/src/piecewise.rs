//! Piecewise value functions built from exponential-sum and affine segments.
//!
//! JSON form: `[{lo, hi, terms: [[a, alpha], ...]} | {lo, hi, intercept, slope}]`
//! with `hi = null` meaning +∞.  A conjugate characteristic pair contributes
//! an oscillatory term serialized as an object
//! `{cos, sin, rate, freq}` inside `terms` (an extension; the shipped claim
//! families produce real roots only).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One additive term of an exponential-sum segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    /// coef · e^{rate·x}
    Exp { coef: f64, rate: f64 },
    /// e^{rate·x} (coef_cos·cos(freq·x) + coef_sin·sin(freq·x))
    Osc { coef_cos: f64, coef_sin: f64, rate: f64, freq: f64 },
}

impl Term {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Term::Exp { coef, rate } => coef * (rate * x).exp(),
            Term::Osc { coef_cos, coef_sin, rate, freq } => {
                (rate * x).exp() * (coef_cos * (freq * x).cos() + coef_sin * (freq * x).sin())
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Term::Exp { coef, rate } => coef * rate * (rate * x).exp(),
            Term::Osc { coef_cos, coef_sin, rate, freq } => {
                let (s, c) = (freq * x).sin_cos();
                (rate * x).exp()
                    * (rate * (coef_cos * c + coef_sin * s) + freq * (coef_sin * c - coef_cos * s))
            }
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match *self {
            Term::Exp { coef, rate } => coef * rate * rate * (rate * x).exp(),
            Term::Osc { coef_cos, coef_sin, rate, freq } => {
                // Differentiate via the complex representation (r+iw)^2 e^{(r+iw)x}.
                let (s, c) = (freq * x).sin_cos();
                let rr = rate * rate - freq * freq;
                let ri = 2.0 * rate * freq;
                // Re[(rr + i ri)(A - iB)(cos + i sin)] with A = coef_cos, B = -coef_sin
                let a = coef_cos;
                let b = coef_sin;
                (rate * x).exp()
                    * (rr * (a * c + b * s) + ri * (b * c - a * s))
            }
        }
    }
}

/// Segment payload: exponential sum or affine, never both.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentKind {
    ExpSum(Vec<Term>),
    Affine { intercept: f64, slope: f64 },
}

/// A segment of the surplus axis, `hi = f64::INFINITY` for the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            SegmentKind::ExpSum(terms) => terms.iter().map(|t| t.eval(x)).sum(),
            SegmentKind::Affine { intercept, slope } => intercept + slope * x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match &self.kind {
            SegmentKind::ExpSum(terms) => terms.iter().map(|t| t.deriv(x)).sum(),
            SegmentKind::Affine { slope, .. } => *slope,
        }
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        match &self.kind {
            SegmentKind::ExpSum(terms) => terms.iter().map(|t| t.second_deriv(x)).sum(),
            SegmentKind::Affine { .. } => 0.0,
        }
    }
}

/// Ordered, gap-free segments covering [0, ∞).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseValueFunction {
    segments: Vec<Segment>,
}

/// Junction continuity tolerance (values).
pub const C0_TOL: f64 = 1e-8;

impl PiecewiseValueFunction {
    /// Validate coverage of [0, ∞), ordering, and value continuity at
    /// junctions within `C0_TOL` relative to the local scale.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Structural("no segments".into()));
        }
        if segments[0].lo != 0.0 {
            return Err(Error::Structural(format!(
                "segments must start at 0, got {}",
                segments[0].lo
            )));
        }
        for w in segments.windows(2) {
            if (w[0].hi - w[1].lo).abs() > 1e-12 * w[0].hi.abs().max(1.0) {
                return Err(Error::Structural(format!(
                    "gap between segments: [..,{}] then [{},..]",
                    w[0].hi, w[1].lo
                )));
            }
            let a = w[0].eval(w[0].hi);
            let b = w[1].eval(w[1].lo);
            if (a - b).abs() > C0_TOL * a.abs().max(1.0) {
                return Err(Error::Structural(format!(
                    "value jump {} -> {} at junction {}",
                    a, b, w[0].hi
                )));
            }
        }
        let last = segments.last().expect("nonempty");
        if last.hi != f64::INFINITY {
            return Err(Error::Structural("last segment must extend to infinity".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Interior junction points (excludes 0 and ∞).
    pub fn junctions(&self) -> Vec<f64> {
        self.segments.iter().skip(1).map(|s| s.lo).collect()
    }

    /// The segment active at x (right-continuous at junctions).
    pub fn segment_at(&self, x: f64) -> Result<&Segment> {
        if x < 0.0 {
            return Err(Error::Structural(format!("evaluation below 0: x = {x}")));
        }
        for s in self.segments.iter().rev() {
            if x >= s.lo {
                return Ok(s);
            }
        }
        Err(Error::Structural(format!("no segment covers x = {x}")))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.segment_at(x).map(|s| s.eval(x)).unwrap_or(f64::NAN)
    }

    /// Right derivative at x (band bottoms are only one-sided differentiable).
    pub fn derivative(&self, x: f64) -> f64 {
        self.segment_at(x).map(|s| s.deriv(x)).unwrap_or(f64::NAN)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.segment_at(x).map(|s| s.second_deriv(x)).unwrap_or(f64::NAN)
    }

    pub fn to_json(&self) -> String {
        let raw: Vec<SegmentJson> = self.segments.iter().map(SegmentJson::from).collect();
        serde_json::to_string_pretty(&raw).expect("segment serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Vec<SegmentJson> = serde_json::from_str(text)
            .map_err(|e| Error::Structural(format!("piecewise JSON: {e}")))?;
        let segments = raw.into_iter().map(SegmentJson::into_segment).collect::<Result<Vec<_>>>()?;
        Self::from_segments(segments)
    }
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermJson {
    Pair([f64; 2]),
    Osc { cos: f64, sin: f64, rate: f64, freq: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SegmentJson {
    ExpSum { lo: f64, hi: Option<f64>, terms: Vec<TermJson> },
    Affine { lo: f64, hi: Option<f64>, intercept: f64, slope: f64 },
}

impl From<&Segment> for SegmentJson {
    fn from(s: &Segment) -> Self {
        let hi = if s.hi.is_finite() { Some(s.hi) } else { None };
        match &s.kind {
            SegmentKind::ExpSum(terms) => SegmentJson::ExpSum {
                lo: s.lo,
                hi,
                terms: terms
                    .iter()
                    .map(|t| match *t {
                        Term::Exp { coef, rate } => TermJson::Pair([coef, rate]),
                        Term::Osc { coef_cos, coef_sin, rate, freq } => {
                            TermJson::Osc { cos: coef_cos, sin: coef_sin, rate, freq }
                        }
                    })
                    .collect(),
            },
            SegmentKind::Affine { intercept, slope } => {
                SegmentJson::Affine { lo: s.lo, hi, intercept: *intercept, slope: *slope }
            }
        }
    }
}

impl SegmentJson {
    fn into_segment(self) -> Result<Segment> {
        Ok(match self {
            SegmentJson::ExpSum { lo, hi, terms } => Segment {
                lo,
                hi: hi.unwrap_or(f64::INFINITY),
                kind: SegmentKind::ExpSum(
                    terms
                        .into_iter()
                        .map(|t| match t {
                            TermJson::Pair([coef, rate]) => Term::Exp { coef, rate },
                            TermJson::Osc { cos, sin, rate, freq } => {
                                Term::Osc { coef_cos: cos, coef_sin: sin, rate, freq }
                            }
                        })
                        .collect(),
                ),
            },
            SegmentJson::Affine { lo, hi, intercept, slope } => {
                Segment { lo, hi: hi.unwrap_or(f64::INFINITY), kind: SegmentKind::Affine { intercept, slope } }
            }
        })
    }
}
