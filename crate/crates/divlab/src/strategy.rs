//! Dividend strategies and their value/payoff functions.
//!
//! The optimal policy is a band strategy: dividends are paid exactly on a
//! finite union of intervals, the last one unbounded.  Construction follows
//! the classical scheme: decide whether the band containing 0 pays (the
//! solution u of G_n u = 0, u(0) = 1 has its derivative minimum at 0), then
//! repeatedly extend by solutions of G_n = 0, picking each pay-band top b so
//! that the extension's derivative has minimum exactly 1; the argmin is the
//! next no-pay band's top.  A barrier strategy is the single-interval case.

use serde::{Deserialize, Serialize};

use crate::diffusion::solve_diffusion;
use crate::error::{Error, Result};
use crate::ide::{self, Engine};
use crate::model::{ClaimFamily, ScaledParameters};
use crate::piecewise::{PiecewiseValueFunction, Segment, SegmentKind};

/// Dividends are paid on these disjoint ordered intervals; the last is
/// [top_threshold, ∞).
#[derive(Debug, Clone, PartialEq)]
pub struct BandStrategy {
    intervals: Vec<(f64, f64)>, // hi = f64::INFINITY on the last
}

impl BandStrategy {
    /// A barrier strategy: pay everything above b.
    pub fn barrier(b: f64) -> Self {
        BandStrategy { intervals: vec![(b.max(0.0), f64::INFINITY)] }
    }

    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidParameter("band strategy needs at least one interval".into()));
        }
        for w in intervals.windows(2) {
            if w[0].1 > w[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "pay intervals overlap or are unordered near {}",
                    w[0].1
                )));
            }
        }
        let last = intervals.last().expect("nonempty");
        if last.1 != f64::INFINITY {
            return Err(Error::InvalidParameter("last pay interval must be unbounded".into()));
        }
        Ok(BandStrategy { intervals })
    }

    pub fn pay_intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Lower end of the unbounded pay interval.
    pub fn top_threshold(&self) -> f64 {
        self.intervals.last().expect("nonempty").0
    }

    /// The pay interval containing x, as the index of its lower end.
    pub fn pay_floor(&self, x: f64) -> Option<f64> {
        self.intervals.iter().find(|(lo, hi)| x >= *lo && x <= *hi).map(|(lo, _)| *lo)
    }

    /// Lower end of the nearest pay interval strictly above x.
    pub fn next_pay_lo_above(&self, x: f64) -> Option<f64> {
        self.intervals.iter().map(|(lo, _)| *lo).find(|lo| *lo > x)
    }

    pub fn to_json(&self) -> String {
        let raw = BandStrategyJson {
            pay_intervals: self
                .intervals
                .iter()
                .map(|&(lo, hi)| [Some(lo), if hi.is_finite() { Some(hi) } else { None }])
                .collect(),
            top_threshold: self.top_threshold(),
        };
        serde_json::to_string_pretty(&raw).expect("strategy serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: BandStrategyJson = serde_json::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("strategy JSON: {e}")))?;
        let intervals = raw
            .pay_intervals
            .iter()
            .map(|pair| {
                let lo = pair[0]
                    .ok_or_else(|| Error::InvalidParameter("interval lower end missing".into()))?;
                Ok((lo, pair[1].unwrap_or(f64::INFINITY)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(intervals)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BandStrategyJson {
    pay_intervals: Vec<[Option<f64>; 2]>,
    top_threshold: f64,
}

/// Closed-form optimal barrier data for exponential claims.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSolution {
    pub r1: f64,
    pub r2: f64,
    pub b_n: f64,
}

// ---------------------------------------------------------------------------
// Band construction
// ---------------------------------------------------------------------------

/// Grid resolution for derivative scans, as a fraction of b_D.
const SCAN_STEP_FRAC: f64 = 1.0 / 1024.0;
/// Coarse step for bracketing the tangency threshold, as a fraction of b_D.
const BRACKET_STEP_FRAC: f64 = 1.0 / 128.0;

struct DerivMin {
    x: f64,
    value: f64,
}

/// Minimum of u' over [lo, hi] with the left endpoint excluded (the junction
/// itself carries the trivial tangency), refined by bisection on u''.
fn deriv_min(u: &PiecewiseValueFunction, lo: f64, hi: f64, step: f64) -> DerivMin {
    let mut best = DerivMin { x: hi, value: u.derivative(hi) };
    let mut x = lo + step;
    while x < hi {
        let d = u.derivative(x);
        if d < best.value {
            best = DerivMin { x, value: d };
        }
        x += step;
    }
    // Refine: bracket the sign change of u'' around the best grid point.
    let (mut a, mut b) = ((best.x - step).max(lo), (best.x + step).min(hi));
    if u.second_derivative(a) < 0.0 && u.second_derivative(b) > 0.0 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if u.second_derivative(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-12 * (1.0 + b.abs()) {
                break;
            }
        }
        let m = 0.5 * (a + b);
        let d = u.derivative(m);
        if d < best.value {
            best = DerivMin { x: m, value: d };
        }
    }
    best
}

/// Value function and band strategy of the n-scaled dividend problem.
///
/// Returns the piecewise value function (affine on pay bands, exponential
/// sums elsewhere) together with the pay intervals.
pub fn construct_band_value(
    scaled: &ScaledParameters,
    x_max: f64,
) -> Result<(PiecewiseValueFunction, BandStrategy)> {
    let sol = solve_diffusion(&scaled.base)?;
    let b_d = sol.b_d;
    if !(x_max > 0.0) {
        return Err(Error::InvalidParameter(format!("x_max must be positive, got {x_max}")));
    }
    let scan_step = b_d * SCAN_STEP_FRAC;
    let engine = Engine::new(scaled)?;

    // Phase 0: does the band containing 0 pay dividends?
    let g = ide::solve_gn(scaled, x_max)?;
    let d0 = g.derivative(0.0);
    let interior = deriv_min(&g, 0.0, x_max, scan_step);

    let mut segments: Vec<Segment> = Vec::new();
    let mut pay_intervals: Vec<(f64, f64)> = Vec::new();
    // Invariant through the loop: V is built on [0, cursor], V'(cursor) = 1,
    // and the region just above cursor pays until the next tangency point.
    let mut cursor; // current threshold T
    let mut value_at_cursor;
    let pay_at_zero = d0 <= interior.value + 1e-12 * d0.abs();

    if pay_at_zero {
        cursor = 0.0;
        value_at_cursor = scaled.c_n / (scaled.lambda_n + scaled.delta());
    } else {
        // No dividends near 0: normalize g by its interior derivative minimum.
        if interior.x >= x_max - scan_step {
            return Err(Error::IncompleteBand {
                x_max,
                detail: "derivative minimum of the base solution sits at x_max".into(),
            });
        }
        let scale = 1.0 / interior.value;
        let SegmentKind::ExpSum(terms) = &g.segments()[0].kind else {
            return Err(Error::Convergence("base solution is not an exponential sum".into()));
        };
        let scaled_terms = terms
            .iter()
            .map(|t| match *t {
                crate::piecewise::Term::Exp { coef, rate } => {
                    crate::piecewise::Term::Exp { coef: coef * scale, rate }
                }
                crate::piecewise::Term::Osc { coef_cos, coef_sin, rate, freq } => {
                    crate::piecewise::Term::Osc {
                        coef_cos: coef_cos * scale,
                        coef_sin: coef_sin * scale,
                        rate,
                        freq,
                    }
                }
            })
            .collect();
        segments.push(Segment { lo: 0.0, hi: interior.x, kind: SegmentKind::ExpSum(scaled_terms) });
        cursor = interior.x;
        value_at_cursor = g.value(interior.x) * scale;
    }

    // Band loop: from each derivative-1 threshold, search for the pay-band
    // top b with min_{x > b} (W^b)'(x) = 1.
    loop {
        let lower_for = |b: f64| -> Vec<Segment> {
            let mut segs = segments.clone();
            if b > cursor {
                segs.push(Segment {
                    lo: cursor,
                    hi: b,
                    kind: SegmentKind::Affine { intercept: value_at_cursor - cursor, slope: 1.0 },
                });
            }
            segs
        };
        // ψ(b) = min_{x>b} (W^b)'(x) − 1; coarse scan during bracketing, the
        // u''-bisection inside deriv_min restores full precision.
        let coarse = b_d / 96.0;
        let psi = |b: f64, step: f64| -> Result<(f64, f64)> {
            let lower = lower_for(b);
            let terms = engine.continuation(&lower, b, value_at_cursor + (b - cursor))?;
            let mut segs = lower;
            segs.push(Segment { lo: b, hi: f64::INFINITY, kind: SegmentKind::ExpSum(terms) });
            let w = PiecewiseValueFunction::from_segments(segs)?;
            let m = deriv_min(&w, b, x_max, step);
            Ok((m.value - 1.0, m.x))
        };

        let bracket_step = b_d * BRACKET_STEP_FRAC;
        let mut bracket: Option<(f64, f64)> = None;
        let mut prev_b = cursor;
        let mut prev_psi = psi(prev_b, coarse)?.0;
        let mut b = cursor + bracket_step;
        while b < x_max {
            let cur = psi(b, coarse)?.0;
            if prev_psi == 0.0 || (prev_psi < 0.0) != (cur < 0.0) {
                bracket = Some((prev_b, b));
                break;
            }
            prev_b = b;
            prev_psi = cur;
            b += bracket_step;
        }

        let Some((mut lo, mut hi)) = bracket else {
            // No tangency below x_max: dividends are paid from cursor on.
            pay_intervals.push((cursor, f64::INFINITY));
            segments.push(Segment {
                lo: cursor,
                hi: f64::INFINITY,
                kind: SegmentKind::Affine { intercept: value_at_cursor - cursor, slope: 1.0 },
            });
            break;
        };
        let mut psi_lo = psi(lo, scan_step)?.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let pm = psi(mid, scan_step)?.0;
            if (pm < 0.0) == (psi_lo < 0.0) {
                lo = mid;
                psi_lo = pm;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-10 {
                break;
            }
        }
        let b_star = 0.5 * (lo + hi);
        let (_, x_hat) = psi(b_star, scan_step)?;
        if x_hat >= x_max - scan_step {
            return Err(Error::IncompleteBand {
                x_max,
                detail: format!("band starting at {b_star:.6} has no derivative-1 crossing"),
            });
        }
        if x_hat <= b_star + scan_step {
            // Tangency collapsed onto the junction: no real band above.
            pay_intervals.push((cursor, f64::INFINITY));
            segments.push(Segment {
                lo: cursor,
                hi: f64::INFINITY,
                kind: SegmentKind::Affine { intercept: value_at_cursor - cursor, slope: 1.0 },
            });
            break;
        }
        // Commit: pay band [cursor, b_star], no-pay band [b_star, x_hat].
        let lower = lower_for(b_star);
        let terms = engine.continuation(&lower, b_star, value_at_cursor + (b_star - cursor))?;
        pay_intervals.push((cursor, b_star));
        if b_star > cursor {
            segments.push(Segment {
                lo: cursor,
                hi: b_star,
                kind: SegmentKind::Affine { intercept: value_at_cursor - cursor, slope: 1.0 },
            });
        }
        segments.push(Segment { lo: b_star, hi: x_hat, kind: SegmentKind::ExpSum(terms.clone()) });
        let w_tail = Segment { lo: b_star, hi: f64::INFINITY, kind: SegmentKind::ExpSum(terms) };
        value_at_cursor = w_tail.eval(x_hat);
        cursor = x_hat;
    }

    let v = PiecewiseValueFunction::from_segments(segments)?;
    let strat = BandStrategy::new(pay_intervals)?;
    validate_band_value(&v, &strat, scaled, x_max)?;
    Ok((v, strat))
}

/// Complementarity checks: V' >= 1 everywhere; G_n(V) = 0 off pay intervals
/// and >= 0 on them (within tolerance on the operator scale).
fn validate_band_value(
    v: &PiecewiseValueFunction,
    strat: &BandStrategy,
    scaled: &ScaledParameters,
    x_max: f64,
) -> Result<()> {
    let n_pts = 512;
    let mut vmax: f64 = 1.0;
    for i in 0..=n_pts {
        vmax = vmax.max(v.value(x_max * i as f64 / n_pts as f64).abs());
    }
    let scale = scaled.lambda_n * vmax;
    for i in 0..=n_pts {
        let x = x_max * i as f64 / n_pts as f64;
        let d = v.derivative(x);
        if d < 1.0 - 1e-6 {
            return Err(Error::Convergence(format!("V' = {d} < 1 at x = {x}")));
        }
        let g = ide::eval_gn(v, x, scaled)?;
        if strat.pay_floor(x).is_some() {
            if g < -1e-6 * scale {
                return Err(Error::Convergence(format!(
                    "G_n(V) = {g} < 0 on a pay interval at x = {x}"
                )));
            }
        } else if g.abs() > 1e-6 * scale {
            return Err(Error::Convergence(format!(
                "G_n(V) = {g} != 0 on a no-pay band at x = {x}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Barrier payoff and the exponential-claim closed forms
// ---------------------------------------------------------------------------

/// Payoff of the barrier strategy at b: g_n(x)/g_n'(b) on [0, b], slope 1
/// beyond; C¹ with derivative exactly 1 at b.
pub fn barrier_payoff(scaled: &ScaledParameters, b: f64) -> Result<PiecewiseValueFunction> {
    if !(b > 0.0) {
        return Err(Error::InvalidParameter(format!("barrier must be positive, got {b}")));
    }
    let g = ide::solve_gn(scaled, b * 1.5 + 1.0)?;
    let slope = g.derivative(b);
    if !(slope > 0.0) {
        return Err(Error::InvalidBarrier { b, slope });
    }
    let SegmentKind::ExpSum(terms) = &g.segments()[0].kind else {
        return Err(Error::Convergence("g_n is not an exponential sum".into()));
    };
    let scaled_terms: Vec<crate::piecewise::Term> = terms
        .iter()
        .map(|t| match *t {
            crate::piecewise::Term::Exp { coef, rate } => {
                crate::piecewise::Term::Exp { coef: coef / slope, rate }
            }
            crate::piecewise::Term::Osc { coef_cos, coef_sin, rate, freq } => {
                crate::piecewise::Term::Osc {
                    coef_cos: coef_cos / slope,
                    coef_sin: coef_sin / slope,
                    rate,
                    freq,
                }
            }
        })
        .collect();
    let value_at_b = g.value(b) / slope;
    PiecewiseValueFunction::from_segments(vec![
        Segment { lo: 0.0, hi: b, kind: SegmentKind::ExpSum(scaled_terms) },
        Segment {
            lo: b,
            hi: f64::INFINITY,
            kind: SegmentKind::Affine { intercept: value_at_b - b, slope: 1.0 },
        },
    ])
}

/// Optimal barrier for exponential claims, in closed form.  The canonical
/// formulas are stated for unit-mean claims; a general rate ρ rescales money,
/// so r_i(ρ) = ρ·r_i(1) and b_n(ρ) = b_n(1)/ρ.
pub fn exp_optimal_barrier(scaled: &ScaledParameters) -> Result<BarrierSolution> {
    let rho = match scaled.base.claim.family() {
        ClaimFamily::Exponential { rate } => rate,
        other => {
            return Err(Error::Unsupported(format!(
                "exp_optimal_barrier needs exponential claims, got {other:?}"
            )))
        }
    };
    let (lam, th, del) = (scaled.base.lambda, scaled.base.theta, scaled.base.delta);
    let sq = scaled.sqrt_n();
    let disc = ((sq * lam * th + del).powi(2) + 4.0 * scaled.n * del * lam).sqrt();
    let r1 = (disc - (sq * lam * th - del)) / (2.0 * lam * (sq + th));
    let r2 = (disc + (sq * lam * th - del)) / (2.0 * lam * (sq + th));
    if sq <= r2 {
        return Err(Error::InvalidParameter(format!(
            "barrier formula needs sqrt(n) > r2, got sqrt(n) = {sq}, r2 = {r2}"
        )));
    }
    let b_unit = ((r2 * r2 * (sq - r2)) / (r1 * r1 * (sq + r1))).ln() / (r1 + r2);
    Ok(BarrierSolution { r1: rho * r1, r2: rho * r2, b_n: b_unit / rho })
}

/// One row of the barrier convergence-rate table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateRow {
    pub n: f64,
    pub b_n: f64,
    /// √n · |b_n − b_D|
    pub scaled_gap: f64,
}

/// √n·|b_n − b_D| over a list of scales (exponential claims).
pub fn barrier_rate_check(
    base: &crate::model::CLParameters,
    n_list: &[f64],
) -> Result<Vec<RateRow>> {
    let sol = solve_diffusion(base)?;
    n_list
        .iter()
        .map(|&n| {
            let scaled = base.scale(n)?;
            let b = exp_optimal_barrier(&scaled)?;
            Ok(RateRow { n, b_n: b.b_n, scaled_gap: n.sqrt() * (b.b_n - sol.b_d).abs() })
        })
        .collect()
}
