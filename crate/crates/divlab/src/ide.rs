//! The integro-differential engine.
//!
//! For the n-scaled model the operator acting on u is
//!
//!   G_n(u)(x) = (nλ+δ)u(x) − λ(√n+θ)E Y·u'(x) − nλ ∫_0^{√n x} u(x − t/√n) dF_Y(t),
//!
//! and F_n(u)(x) = min{G_n(u)(x), u'(x) − 1}.  Substituting y = t/√n turns the
//! convolution into one against the scaled claim Y_n = Y/√n, which stays an
//! integer-shape gamma law, so the integral closes over incomplete-gamma sums
//! segment by segment.  Solutions of G_n u = 0 are exponential sums whose
//! rates are the roots of
//!
//!   p(α) = (nλ+δ − c_n α)(B+α)^m − nλ B^m,   B = β√n,
//!
//! the characteristic polynomial obtained from the rational MGF; coefficients
//! come from exact linear constraints (value condition plus m collocation
//! equations that zero the degree-(m−1) defect polynomial), never from
//! least squares.

use num_complex::Complex64;

use crate::diffusion::DiffusionSolution;
use crate::error::{Error, Result};
use crate::model::{erlang_cdf, erlang_partial_mean, ScaledParameters};
use crate::piecewise::{PiecewiseValueFunction, Segment, SegmentKind, Term};
use crate::quad;

/// Default absolute residual tolerance for G_n solves, on the operator's
/// natural scale nλ·u.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Verification grid points per band.
pub const VERIFY_GRID: usize = 512;

// ---------------------------------------------------------------------------
// Operator parameters in x-space
// ---------------------------------------------------------------------------

/// The scaled operator data: arrival rate Λ = nλ, premium c_n, discount δ,
/// and the scaled claim Gamma(m, B) with B = β√n.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OpParams {
    pub lam: f64,
    pub c: f64,
    pub delta: f64,
    pub m: u32,
    pub big_b: f64,
}

impl OpParams {
    pub fn new(scaled: &ScaledParameters) -> Self {
        let (m, big_b) = scaled.scaled_claim().shape_rate();
        OpParams { lam: scaled.lambda_n, c: scaled.c_n, delta: scaled.delta(), m, big_b }
    }

    fn k_total(&self) -> f64 {
        self.lam + self.delta
    }
}

// ---------------------------------------------------------------------------
// Closed-form convolution pieces
// ---------------------------------------------------------------------------

fn cexp(z: Complex64) -> Complex64 {
    z.exp()
}

/// ∫_{za}^{zb} e^{α(z − x0)} g_{m,B}(x − z) dz for za <= zb <= x, with every
/// exponential folded so nothing overflows for reachable arguments.
fn conv_exp(m: u32, big_b: f64, alpha: Complex64, x: f64, za: f64, zb: f64, x0: f64) -> Complex64 {
    if zb <= za {
        return Complex64::new(0.0, 0.0);
    }
    let nu = alpha + big_b;
    let w1 = x - zb;
    let w2 = x - za;
    let dl = zb - za;
    // β^m/(m−1)! prefactor of the gamma density
    let mut bfac = 1.0;
    for i in 0..m {
        bfac *= big_b / if i == 0 { 1.0 } else { f64::from(i) };
    }
    // e^{α(zb−x0) − B(x−zb)}: the only exponential attached to the zb endpoint
    let fold_b = cexp(alpha * (zb - x0) - Complex64::new(big_b * w1, 0.0));
    if nu.norm() * dl < 0.5 {
        // Shifted series: e^{-ν w1} Σ_j binom(m-1,j) w1^{m-1-j} G_j(ν, Δ),
        // G_j = Δ^{j+1} Σ_k (-νΔ)^k / (k! (j+k+1)).
        let mut sum = Complex64::new(0.0, 0.0);
        let mut binom = 1.0;
        for j in 0..m {
            let j = j as i32;
            if j > 0 {
                binom *= f64::from(m as i32 - j) / f64::from(j);
            }
            let mut gj = Complex64::new(0.0, 0.0);
            let mut kterm = Complex64::new(1.0, 0.0);
            for k in 0..40 {
                gj += kterm / f64::from(j + k + 1);
                kterm *= -nu * dl / f64::from(k + 1);
                if kterm.norm() < 1e-20 {
                    break;
                }
            }
            gj *= dl.powi(j + 1);
            sum += gj * binom * w1.powi(m as i32 - 1 - j);
        }
        fold_b * bfac * sum
    } else {
        // Antiderivative differences with per-endpoint folding.
        let fold_a = cexp(alpha * (za - x0) - Complex64::new(big_b * w2, 0.0));
        bfac * (fold_b * s_poly(w1, nu, m) - fold_a * s_poly(w2, nu, m))
    }
}

/// S(w) = Σ_{j=0}^{m-1} ((m-1)!/j!) w^j / ν^{m-j}; −e^{−νw}S(w) is the
/// antiderivative of w^{m-1}e^{-νw}.
fn s_poly(w: f64, nu: Complex64, m: u32) -> Complex64 {
    let mut fact = 1.0;
    for i in 1..m {
        fact *= f64::from(i);
    }
    let mut term = fact / nu.powu(m);
    let mut sum = term;
    for j in 1..m {
        term = term * w * nu / f64::from(j);
        sum += term;
    }
    sum
}

/// ∫_{za}^{zb} (p + q z) g_{m,B}(x − z) dz for za <= zb <= x.
fn conv_affine(m: u32, big_b: f64, p: f64, q: f64, x: f64, za: f64, zb: f64) -> f64 {
    if zb <= za {
        return 0.0;
    }
    let w1 = x - zb;
    let w2 = x - za;
    let mass = erlang_cdf(m, big_b, w2) - erlang_cdf(m, big_b, w1);
    let first = erlang_partial_mean(m, big_b, w2) - erlang_partial_mean(m, big_b, w1);
    (p + q * x) * mass - q * first
}

/// Closed-form ∫_0^x u(z) g_n(x − z) dz over the piecewise structure.
fn conv_piecewise(u: &PiecewiseValueFunction, x: f64, op: &OpParams) -> f64 {
    let mut acc = 0.0;
    for seg in u.segments() {
        let za = seg.lo.max(0.0);
        let zb = seg.hi.min(x);
        if zb <= za {
            continue;
        }
        match &seg.kind {
            SegmentKind::Affine { intercept, slope } => {
                acc += conv_affine(op.m, op.big_b, *intercept, *slope, x, za, zb);
            }
            SegmentKind::ExpSum(terms) => {
                for t in terms {
                    match *t {
                        Term::Exp { coef, rate } => {
                            let v = conv_exp(
                                op.m,
                                op.big_b,
                                Complex64::new(rate, 0.0),
                                x,
                                za,
                                zb,
                                0.0,
                            );
                            acc += coef * v.re;
                        }
                        Term::Osc { coef_cos, coef_sin, rate, freq } => {
                            let v = conv_exp(
                                op.m,
                                op.big_b,
                                Complex64::new(rate, freq),
                                x,
                                za,
                                zb,
                                0.0,
                            );
                            acc += coef_cos * v.re + coef_sin * v.im;
                        }
                    }
                }
            }
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Operator evaluation
// ---------------------------------------------------------------------------

/// G_n(u)(x) with the convolution in closed form.
pub fn eval_gn(u: &PiecewiseValueFunction, x: f64, scaled: &ScaledParameters) -> Result<f64> {
    let op = OpParams::new(scaled);
    let seg = u.segment_at(x)?;
    Ok(op.k_total() * seg.eval(x) - op.c * seg.deriv(x) - op.lam * conv_piecewise(u, x, &op))
}

/// G_n(u)(x) with the convolution by adaptive Gauss–Legendre quadrature split
/// at segment junctions.  Independent cross-check of [`eval_gn`] and fallback
/// for claim families without a rational MGF.
pub fn eval_gn_quadrature(
    u: &PiecewiseValueFunction,
    x: f64,
    scaled: &ScaledParameters,
    tol: f64,
) -> Result<f64> {
    let op = OpParams::new(scaled);
    let claim_n = scaled.scaled_claim();
    let seg = u.segment_at(x)?;
    let mut cuts: Vec<f64> = vec![0.0];
    for j in u.junctions() {
        if j > 0.0 && j < x {
            cuts.push(j);
        }
    }
    cuts.push(x);
    let mut integral = 0.0;
    for w in cuts.windows(2) {
        integral += quad::integrate(|z| u.value(z) * claim_n.density(x - z), w[0], w[1], tol);
    }
    Ok(op.k_total() * seg.eval(x) - op.c * seg.deriv(x) - op.lam * integral)
}

/// F_n(u)(x) = min{G_n(u)(x), u'(x) − 1}.
pub fn eval_fn(u: &PiecewiseValueFunction, x: f64, scaled: &ScaledParameters) -> Result<f64> {
    let g = eval_gn(u, x, scaled)?;
    Ok(g.min(u.derivative(x) - 1.0))
}

/// The operator symbol φ(α) = (nλ+δ) − c_n α − nλ (B/(B+α))^m obtained by
/// applying G_n to e^{αx} with the integral taken over the whole half line.
pub fn characteristic_symbol(scaled: &ScaledParameters, alpha: Complex64) -> Complex64 {
    let op = OpParams::new(scaled);
    let ratio = Complex64::new(op.big_b, 0.0) / (alpha + op.big_b);
    Complex64::new(op.k_total(), 0.0) - op.c * alpha - op.lam * ratio.powu(op.m)
}

// ---------------------------------------------------------------------------
// Characteristic roots
// ---------------------------------------------------------------------------

fn poly_eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn durand_kerner(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    let lead = coeffs[deg];
    let monic: Vec<Complex64> =
        coeffs.iter().map(|&c| Complex64::new(c / lead, 0.0)).collect();
    let radius = 1.0 + monic.iter().take(deg).map(|c| c.norm()).fold(0.0, f64::max);
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..deg).map(|k| radius * seed.powu(k as u32 + 1)).collect();
    for _ in 0..800 {
        let mut worst = 0.0f64;
        for i in 0..deg {
            let p = poly_eval(&monic, z[i]);
            let mut q = Complex64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    q *= z[i] - z[j];
                }
            }
            if q.norm() == 0.0 {
                continue;
            }
            let step = p / q;
            z[i] -= step;
            worst = worst.max(step.norm() / (1.0 + z[i].norm()));
        }
        if worst < 1e-15 {
            break;
        }
    }
    z
}

/// All roots of the characteristic polynomial of G_n u = 0 (count = shape+1,
/// exactly one with positive real part), polished against the symbol and
/// sorted by descending real part.
pub fn characteristic_roots(scaled: &ScaledParameters) -> Result<Vec<Complex64>> {
    let op = OpParams::new(scaled);
    let m = op.m as usize;
    let k = op.k_total();
    // (B+α)^m expansion: binom(m,j) B^{m-j} α^j
    let mut pow = vec![0.0f64; m + 1];
    let mut binom = 1.0;
    for (j, p) in pow.iter_mut().enumerate() {
        if j > 0 {
            binom *= (m - j + 1) as f64 / j as f64;
        }
        *p = binom * op.big_b.powi((m - j) as i32);
    }
    let mut coeffs = vec![0.0f64; m + 2];
    for j in 0..=m {
        coeffs[j] += k * pow[j];
        coeffs[j + 1] -= op.c * pow[j];
    }
    coeffs[0] -= op.lam * op.big_b.powi(m as i32);
    let scale = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    for c in &mut coeffs {
        *c /= scale;
    }

    let mut roots = durand_kerner(&coeffs);
    // Newton-polish against the (normalized) expanded polynomial: its f64
    // evaluation localizes the roots orders of magnitude more tightly than
    // the symbol, whose large terms cancel to a wide zero plateau.
    let ccoeffs: Vec<Complex64> = coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let dcoeffs: Vec<Complex64> = ccoeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, &c)| c * j as f64)
        .collect();
    for r in &mut roots {
        for _ in 0..12 {
            let p = poly_eval(&ccoeffs, *r);
            let dp = poly_eval(&dcoeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            *r -= step;
            if step.norm() < 1e-15 * (1.0 + r.norm()) {
                break;
            }
        }
        // Snap numerically-real roots.
        if r.im.abs() <= 1e-9 * (1.0 + r.re.abs()) {
            r.im = 0.0;
        }
    }
    roots.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));

    // Validate: symbol killed, roots distinct, exactly one positive real root.
    let sym_scale = k + op.lam + op.c * roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    for r in &roots {
        let res = characteristic_symbol(scaled, *r).norm();
        if res > 1e-9 * sym_scale {
            return Err(Error::Convergence(format!(
                "characteristic root {r} leaves symbol residual {res:.3e}"
            )));
        }
    }
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if (roots[i] - roots[j]).norm() < 1e-8 * (1.0 + roots[i].norm()) {
                return Err(Error::Unsupported(
                    "repeated characteristic roots; the exponential ansatz degenerates".into(),
                ));
            }
        }
    }
    let positive = roots.iter().filter(|r| r.im == 0.0 && r.re > 0.0).count();
    if positive != 1 {
        return Err(Error::Convergence(format!(
            "expected exactly one positive characteristic root, found {positive}"
        )));
    }
    Ok(roots)
}

// ---------------------------------------------------------------------------
// Exponential-ansatz solver
// ---------------------------------------------------------------------------

fn csolve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Result<Vec<Complex64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].norm().partial_cmp(&a[j][col].norm()).unwrap())
            .expect("nonempty");
        if a[piv][col].norm() < 1e-300 {
            return Err(Error::Convergence("singular collocation system".into()));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (head, tail) = a.split_at_mut(row);
            let pivot_row = &head[col];
            for (dst, src) in tail[0].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * *src;
            }
            let v = b[col];
            b[row] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Shared solver state: operator data plus the characteristic roots, which
/// depend only on the scaled parameters.
pub(crate) struct Engine {
    pub op: OpParams,
    pub roots: Vec<Complex64>,
}

impl Engine {
    pub fn new(scaled: &ScaledParameters) -> Result<Self> {
        Ok(Engine { op: OpParams::new(scaled), roots: characteristic_roots(scaled)? })
    }

    /// G_n applied to the basis function e^{α(x−b)}·1_{[b,∞)} at x > b.
    fn gn_basis(&self, alpha: Complex64, b: f64, x: f64) -> Complex64 {
        let e = cexp(alpha * (x - b));
        (Complex64::new(self.op.k_total(), 0.0) - self.op.c * alpha) * e
            - self.op.lam * conv_exp(self.op.m, self.op.big_b, alpha, x, b, x, b)
    }

    /// −G_n applied to the lower structure alone (zero above b) at x > b.
    fn gn_lower(&self, lower: &[Segment], b: f64, x: f64) -> f64 {
        let mut acc = 0.0;
        for seg in lower {
            let za = seg.lo.max(0.0);
            let zb = seg.hi.min(b).min(x);
            if zb <= za {
                continue;
            }
            match &seg.kind {
                SegmentKind::Affine { intercept, slope } => {
                    acc += conv_affine(self.op.m, self.op.big_b, *intercept, *slope, x, za, zb);
                }
                SegmentKind::ExpSum(terms) => {
                    for t in terms {
                        match *t {
                            Term::Exp { coef, rate } => {
                                acc += coef
                                    * conv_exp(
                                        self.op.m,
                                        self.op.big_b,
                                        Complex64::new(rate, 0.0),
                                        x,
                                        za,
                                        zb,
                                        0.0,
                                    )
                                    .re;
                            }
                            Term::Osc { coef_cos, coef_sin, rate, freq } => {
                                let v = conv_exp(
                                    self.op.m,
                                    self.op.big_b,
                                    Complex64::new(rate, freq),
                                    x,
                                    za,
                                    zb,
                                    0.0,
                                );
                                acc += coef_cos * v.re + coef_sin * v.im;
                            }
                        }
                    }
                }
            }
        }
        self.op.lam * acc
    }

    /// Continuation of G_n u = 0 on [b, ∞) given the structure below b and
    /// the junction value.  The value condition plus m collocation points
    /// (which zero the degree-(m−1) defect polynomial exactly) determine the
    /// m+1 ansatz coefficients as a small linear system.
    pub fn continuation(&self, lower: &[Segment], b: f64, value_at_b: f64) -> Result<Vec<Term>> {
        let mm = self.op.m as usize;
        let dim = mm + 1;
        let mut a = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
        for (i, _) in self.roots.iter().enumerate() {
            a[0][i] = Complex64::new(1.0, 0.0);
        }
        rhs[0] = Complex64::new(value_at_b, 0.0);
        for r in 1..=mm {
            let x_r = b + r as f64 / self.op.big_b;
            for (i, &alpha) in self.roots.iter().enumerate() {
                a[r][i] = self.gn_basis(alpha, b, x_r);
            }
            rhs[r] = Complex64::new(self.gn_lower(lower, b, x_r), 0.0);
        }
        let mut d = csolve(a, rhs)?;

        // Conjugate roots must carry conjugate coefficients; symmetrize the
        // rounding noise away, then emit real terms.
        let mut used = vec![false; dim];
        let mut terms = Vec::new();
        for i in 0..dim {
            if used[i] {
                continue;
            }
            let alpha = self.roots[i];
            if alpha.im == 0.0 {
                let coef = d[i].re * (-alpha.re * b).exp();
                if !coef.is_finite() {
                    return Err(Error::Convergence(format!(
                        "ansatz coefficient overflow at rate {} (junction {b})",
                        alpha.re
                    )));
                }
                terms.push(Term::Exp { coef, rate: alpha.re });
                used[i] = true;
            } else {
                let j = (0..dim)
                    .find(|&j| {
                        !used[j]
                            && j != i
                            && (self.roots[j] - alpha.conj()).norm() < 1e-8 * (1.0 + alpha.norm())
                    })
                    .ok_or_else(|| {
                        Error::Convergence("unpaired complex characteristic root".into())
                    })?;
                let avg = 0.5 * (d[i] + d[j].conj());
                d[i] = avg;
                d[j] = avg.conj();
                // pick the member with positive frequency
                let (alpha, coef) = if alpha.im > 0.0 { (alpha, d[i]) } else { (alpha.conj(), d[j]) };
                let c0 = coef * cexp(-alpha * b);
                if !c0.re.is_finite() || !c0.im.is_finite() {
                    return Err(Error::Convergence(format!(
                        "ansatz coefficient overflow at rate {} (junction {b})",
                        alpha.re
                    )));
                }
                terms.push(Term::Osc {
                    coef_cos: 2.0 * c0.re,
                    coef_sin: -2.0 * c0.im,
                    rate: alpha.re,
                    freq: alpha.im,
                });
                used[i] = true;
                used[j] = true;
            }
        }
        Ok(terms)
    }
}

/// Check |G_n(u)| <= tol · nλ · max(1, sup|u|) on a uniform grid of the band
/// [lo, hi]; returns the worst offender on failure.
fn verify_residual(
    u: &PiecewiseValueFunction,
    lo: f64,
    hi: f64,
    scaled: &ScaledParameters,
    tol: f64,
) -> Result<()> {
    let mut umax: f64 = 1.0;
    for i in 0..=VERIFY_GRID {
        let x = lo + (hi - lo) * i as f64 / VERIFY_GRID as f64;
        umax = umax.max(u.value(x).abs());
    }
    let scale = scaled.lambda_n * umax;
    let mut worst = (0.0f64, lo);
    for i in 0..=VERIFY_GRID {
        let x = lo + (hi - lo) * i as f64 / VERIFY_GRID as f64;
        let g = eval_gn(u, x, scaled)?;
        if g.abs() > worst.0 {
            worst = (g.abs(), x);
        }
    }
    if worst.0 > tol * scale {
        return Err(Error::Convergence(format!(
            "G_n residual {:.3e} at x = {:.6} exceeds {:.1e} × scale {:.3e} on [{lo}, {hi}]",
            worst.0, worst.1, tol, scale
        )));
    }
    Ok(())
}

/// The unique solution g_n of G_n u = 0 on [0, ∞) with g_n(0) = 1 (strictly
/// increasing).  The residual is verified on a grid over [0, x_max].
pub fn solve_gn(scaled: &ScaledParameters, x_max: f64) -> Result<PiecewiseValueFunction> {
    solve_with_initial_impl(scaled, &[], 0.0, 1.0, x_max)
}

/// Extend the structure below `b` by a solution of G_n u = 0 on [b, ∞) with
/// u(b) = value_at_b.  Only the part of `lower` below b is consulted.
/// With b = 0 and value 1 this reduces to [`solve_gn`].
pub fn solve_with_initial(
    scaled: &ScaledParameters,
    lower: &PiecewiseValueFunction,
    b: f64,
    value_at_b: f64,
    x_max: f64,
) -> Result<PiecewiseValueFunction> {
    let mut segs: Vec<Segment> = Vec::new();
    for s in lower.segments() {
        if s.lo >= b {
            break;
        }
        let mut s = s.clone();
        s.hi = s.hi.min(b);
        segs.push(s);
    }
    solve_with_initial_impl(scaled, &segs, b, value_at_b, x_max)
}

fn solve_with_initial_impl(
    scaled: &ScaledParameters,
    lower: &[Segment],
    b: f64,
    value_at_b: f64,
    x_max: f64,
) -> Result<PiecewiseValueFunction> {
    if b < 0.0 || x_max <= b {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= b < x_max, got b = {b}, x_max = {x_max}"
        )));
    }
    let engine = Engine::new(scaled)?;
    let terms = engine.continuation(lower, b, value_at_b)?;
    let mut segs: Vec<Segment> = lower.to_vec();
    segs.push(Segment { lo: b, hi: f64::INFINITY, kind: SegmentKind::ExpSum(terms) });
    let u = PiecewiseValueFunction::from_segments(segs)?;
    verify_residual(&u, b, x_max, scaled, RESIDUAL_TOL)?;
    if lower.is_empty() {
        // g_n must be strictly increasing.
        for i in 0..=VERIFY_GRID {
            let x = b + (x_max - b) * i as f64 / VERIFY_GRID as f64;
            let d = u.derivative(x);
            if !(d > 0.0) {
                return Err(Error::Convergence(format!(
                    "g_n' = {d} at x = {x}; expected strictly increasing"
                )));
            }
        }
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Marching fallback
// ---------------------------------------------------------------------------

/// Numerical fallback for G_n u = 0, u(0) = 1: march the equivalent Volterra
/// form u'(x) = [(nλ+δ)u(x) − nλ∫_0^x u(z) g_n(x−z) dz]/c_n with a
/// trapezoidal convolution and Heun stepping at step h and h/2, then
/// Richardson-extrapolate.  Independent of the characteristic-root route and
/// usable for claim families without a rational MGF.  Returns (x, u(x))
/// samples on the coarse grid.
pub fn solve_gn_marching(
    scaled: &ScaledParameters,
    x_max: f64,
    steps: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(x_max > 0.0) || steps < 2 {
        return Err(Error::InvalidParameter(format!(
            "need x_max > 0 and steps >= 2, got {x_max}, {steps}"
        )));
    }
    let coarse = march(scaled, x_max, steps);
    let fine = march(scaled, x_max, 2 * steps);
    // Heun + trapezoid is O(h²): one Richardson level removes the leading
    // error term.
    Ok(coarse
        .iter()
        .enumerate()
        .map(|(k, &(x, u_h))| (x, (4.0 * fine[2 * k].1 - u_h) / 3.0))
        .collect())
}

fn march(scaled: &ScaledParameters, x_max: f64, steps: usize) -> Vec<(f64, f64)> {
    let op = OpParams::new(scaled);
    let claim_n = scaled.scaled_claim();
    let h = x_max / steps as f64;
    let kernel: Vec<f64> = (0..=steps).map(|j| claim_n.density(j as f64 * h)).collect();
    let conv = |u: &[f64], k1: usize, u_end: f64| -> f64 {
        // trapezoid over z ∈ [0, x_{k1}] of u(z) g(x_{k1} − z)
        let mut s = 0.5 * (u[0] * kernel[k1] + u_end * kernel[0]);
        for j in 1..k1 {
            s += u[j] * kernel[k1 - j];
        }
        s * h
    };
    let slope = |u_x: f64, integral: f64| (op.k_total() * u_x - op.lam * integral) / op.c;
    let mut u = Vec::with_capacity(steps + 1);
    u.push(1.0);
    // the equation at 0 pins u'(0) = (nλ+δ)/c_n
    let mut d_k = op.k_total() / op.c;
    for k in 0..steps {
        let predict = u[k] + h * d_k;
        let i_next = conv(&u, k + 1, predict);
        let d_tilde = slope(predict, i_next);
        let corrected = u[k] + 0.5 * h * (d_k + d_tilde);
        let i_corr = conv(&u, k + 1, corrected);
        u.push(corrected);
        d_k = slope(corrected, i_corr);
    }
    u.into_iter().enumerate().map(|(k, v)| (k as f64 * h, v)).collect()
}

// ---------------------------------------------------------------------------
// Extended evaluation (whole-line split)
// ---------------------------------------------------------------------------

/// G_n evaluated against a function defined on all of R, decomposed as
/// total = main + tail with
///   main = (nλ+δ)u(x) − c_n u'(x) − nλ E[u(x − Y_n)]          (full line)
///   tail = +nλ E[u(x − Y_n); Y_n > x]                          (overshoot)
#[derive(Debug, Clone, Copy)]
pub struct GnSplit {
    pub total: f64,
    pub main_part: f64,
    pub tail_part: f64,
}

/// A function on all of R suitable for the whole-line operator split.
pub trait ExtendedReal {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    /// A rate g >= 0 with |value(−z)| = O(e^{g z}); g must stay below the
    /// scaled MGF radius or the whole-line integrals diverge.
    fn neg_growth_rate(&self) -> f64;
}

/// V_D + shift with the oscillatory branch kept below b_D (and below 0).
#[derive(Debug, Clone, Copy)]
pub struct ExtendedVd {
    pub sol: DiffusionSolution,
    pub shift: f64,
}

impl ExtendedReal for ExtendedVd {
    fn value(&self, x: f64) -> f64 {
        self.sol.vd(x) + self.shift
    }
    fn derivative(&self, x: f64) -> f64 {
        self.sol.vd_prime(x)
    }
    fn neg_growth_rate(&self) -> f64 {
        self.sol.gamma2
    }
}

/// Quadrature route for any extended function.
pub fn eval_gn_extended(
    u: &dyn ExtendedReal,
    x: f64,
    scaled: &ScaledParameters,
    tol: f64,
) -> Result<GnSplit> {
    let op = OpParams::new(scaled);
    let claim_n = scaled.scaled_claim();
    let growth = u.neg_growth_rate();
    if growth >= op.big_b {
        return Err(Error::DivergentTilt {
            tilt: growth,
            radius: op.big_b,
            detail: "tail integral of the extended function diverges".into(),
        });
    }
    let finite = if x > 0.0 {
        quad::integrate(|z| u.value(z) * claim_n.density(x - z), 0.0, x, tol)
    } else {
        0.0
    };
    let tail = quad::integrate_tail(
        |v| u.value(-v) * claim_n.density(x + v),
        0.0,
        op.big_b - growth,
        tol,
    );
    let total = op.k_total() * u.value(x) - op.c * u.derivative(x) - op.lam * finite;
    let tail_part = op.lam * tail;
    Ok(GnSplit { total, main_part: total - tail_part, tail_part })
}

/// Closed-form whole-line evaluation of G_n at V_D + shift.
pub fn eval_gn_vd_shifted(
    sol: &DiffusionSolution,
    shift: f64,
    x: f64,
    scaled: &ScaledParameters,
) -> Result<GnSplit> {
    let op = OpParams::new(scaled);
    let claim_n = scaled.scaled_claim();
    let (g1, g2, c) = (sol.gamma1, sol.gamma2, sol.c_norm);
    let k = shift;

    // E[u(x − Y_n)] over the whole line, split at the b_D branch point.
    let full_line = if x <= sol.b_d {
        // all arguments stay on the oscillatory branch
        ((g1 * x).exp() * claim_n.tilted_moment(0, -g1).expect("negative tilt")
            - (-g2 * x).exp() * claim_n.tilted_moment(0, g2)?)
            / c
            + k
    } else {
        let w0 = x - sol.b_d;
        let osc = ((g1 * x).exp() * claim_n.tilted_tail(0, -g1, w0).expect("negative tilt")
            - (-g2 * x).exp() * claim_n.tilted_tail(0, g2, w0)?)
            / c
            + k * claim_n.survival(w0);
        let lin = (sol.value_at_barrier() + k + w0) * claim_n.cdf(w0)
            - claim_n.partial_mean(w0);
        osc + lin
    };
    // Overshoot tail: arguments below zero, always oscillatory.
    let tail = ((g1 * x).exp() * claim_n.tilted_tail(0, -g1, x).expect("negative tilt")
        - (-g2 * x).exp() * claim_n.tilted_tail(0, g2, x)?)
        / c
        + k * claim_n.survival(x);

    let u_x = sol.vd(x) + k;
    let du_x = sol.vd_prime(x);
    let main = op.k_total() * u_x - op.c * du_x - op.lam * full_line;
    let tail_part = op.lam * tail;
    Ok(GnSplit { total: main + tail_part, main_part: main, tail_part })
}
