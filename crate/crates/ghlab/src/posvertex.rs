//! The Ooguri-Vafa type ansatz on the positive vertex: periodic lattice sums
//! of the C^3 building blocks, their closed-form averages, exponential
//! Fourier decay, the reflection identity to the 2d Ooguri-Vafa potential,
//! the periodic beta sums with the cotangent identity, the positivity domain
//! M^+, and the periodic first order fields.

use crate::c3::{alpha, beta, AlphaTriple, BetaQuad, C3Error, ScalarJet};
use crate::classic2d::GAMMA_E;
use crate::coupling::{C3Point, PosVertexPoint, SymCoupling};
use crate::numverify::{Certified, NumError, TailModel, TruncSpec};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PosVertexError {
    #[error("point lies on the periodized discriminant graph")]
    OnGraph,
    #[error("closed-form average undefined: log argument {0} not positive")]
    LogDomain(f64),
    #[error("positivity of the periodic ansatz fails at the point")]
    NotPositive,
    #[error(transparent)]
    C3(#[from] C3Error),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// The periodic triple with jets and the truncation report of the sums.
#[derive(Debug, Clone, Copy)]
pub struct TildeAlphaTriple {
    pub a1: ScalarJet,
    pub a2: ScalarJet,
    pub a3: ScalarJet,
    pub tail_bound: f64,
}

impl TildeAlphaTriple {
    pub fn values(&self) -> [f64; 3] {
        [self.a1.value, self.a2.value, self.a3.value]
    }
}

/// The subtraction constants 1/(4 |n| sqrt(c_i)) of the three series.
fn subtraction_consts(a: &SymCoupling) -> [f64; 3] {
    [a.a22, a.a11, a.c3()].map(|c| 0.25 / c.sqrt())
}

/// tilde alpha_i = alpha_i(eta) + sum_{n != 0} (alpha_i(eta + n) - 1/(4|n| sqrt(c_i))),
/// summed in symmetric pairs with the analytic tail of the paired expansion
/// t_n + t_{-n} = P2/n^2 + P3/n^3 + O(n^{-4}),
/// P2 = L_i/(pi sqrt(A) c_i), P3 = (2x^2 - y^2 - m_i^2/c_i)/(4 sqrt(c_i)).
/// Jets are summed termwise (those series converge absolutely).
pub fn tilde_alpha(
    p: &PosVertexPoint,
    a: &SymCoupling,
    trunc: &TruncSpec,
) -> Result<TildeAlphaTriple, PosVertexError> {
    let consts = subtraction_consts(a);
    let base = C3Point::new(p.mu1, p.mu2, p.eta);
    let t0 = alpha(&base, a).map_err(|_| PosVertexError::OnGraph)?;
    let mut acc = [t0.a1, t0.a2, t0.a3];
    let n = trunc.cutoff as i64;
    let mut last_shells = [[0.0f64; 3]; 4];
    for k in 1..=n {
        let mut shell = [0.0f64; 3];
        for s in [k, -k] {
            let q = C3Point::new(p.mu1, p.mu2, p.eta + s as f64);
            let t = alpha(&q, a).map_err(|_| PosVertexError::OnGraph)?;
            for (i, jet) in [t.a1, t.a2, t.a3].into_iter().enumerate() {
                let dv = jet.value - consts[i] / (s as f64).abs();
                acc[i].value += dv;
                shell[i] += dv;
                for c in 0..4 {
                    acc[i].d[c] += jet.d[c];
                }
            }
        }
        if k > n - 4 {
            last_shells[(k - (n - 3)) as usize] = shell;
        }
    }
    // analytic tail coefficients per kernel
    let sa = a.det().sqrt();
    let (x, y) = (p.eta.re, p.eta.im);
    let cs = [a.a22, a.a11, a.c3()];
    let ms = [p.mu1, p.mu2, p.mu1 - p.mu2];
    let ls = [
        a.a12 * p.mu1 + a.a22 * p.mu2,
        a.a11 * p.mu1 + a.a12 * p.mu2,
        -(a.a11 + a.a12) * p.mu1 - (a.a12 + a.a22) * p.mu2,
    ];
    let nf = n as f64 + 0.5;
    let mut tail_bound = 0.0f64;
    for i in 0..3 {
        let p2 = ls[i] / (std::f64::consts::PI * sa * cs[i]);
        let p3 = (2.0 * x * x - y * y - ms[i] * ms[i] / cs[i]) / (4.0 * cs[i].sqrt());
        acc[i].value += p2 / nf + p3 / (2.0 * nf * nf);
        // certify against the model on the last shells
        let mut c4: f64 = 0.0;
        for (j, sh) in last_shells.iter().enumerate() {
            let kk = (n - 3 + j as i64) as f64;
            let model = p2 / (kk * kk) + p3 / (kk * kk * kk);
            c4 = c4.max((sh[i] - model).abs() * kk * kk * kk * kk);
        }
        tail_bound = tail_bound.max(c4 / (3.0 * (n as f64).powi(3)));
    }
    if tail_bound > trunc.tail_tolerance {
        return Err(NumError::TailBudget(tail_bound, trunc.tail_tolerance).into());
    }
    Ok(TildeAlphaTriple { a1: acc[0], a2: acc[1], a3: acc[2], tail_bound })
}

/// Default truncation for the periodic sums.
pub fn default_trunc() -> TruncSpec {
    TruncSpec::new(500, 1e-6, TailModel::InverseSquare)
}

/// Closed-form unit-cell averages bar alpha_i(mu1, mu2, y):
/// (1/(2 sqrt(c_i))) { log 2 - gamma_E - log(arg_i / sqrt(A)) } with
/// arg_1 = varrho' - (a22 mu2 + a12 mu1)/sqrt(a22), cyclic analogues.
pub fn bar_alpha(
    mu1: f64,
    mu2: f64,
    y: f64,
    a: &SymCoupling,
) -> Result<[f64; 3], PosVertexError> {
    let rho = a.varrho(mu1, mu2, y);
    let sa = a.det().sqrt();
    let c3 = a.c3();
    let args = [
        rho - (a.a22 * mu2 + a.a12 * mu1) / a.a22.sqrt(),
        rho - (a.a11 * mu1 + a.a12 * mu2) / a.a11.sqrt(),
        rho + ((a.a11 + a.a12) * mu1 + (a.a12 + a.a22) * mu2) / c3.sqrt(),
    ];
    let cs = [a.a22, a.a11, c3];
    let mut out = [0.0; 3];
    for i in 0..3 {
        let arg = args[i] / sa;
        if arg <= 0.0 {
            return Err(PosVertexError::LogDomain(arg));
        }
        out[i] = 0.5 / cs[i].sqrt() * ((2.0f64).ln() - GAMMA_E - arg.ln());
    }
    Ok(out)
}

/// Unit-cell x-average of tilde alpha_i by Gauss quadrature, the oracle for
/// the closed forms.
pub fn tilde_alpha_cell_average(
    mu1: f64,
    mu2: f64,
    y: f64,
    a: &SymCoupling,
    trunc: &TruncSpec,
    order: usize,
) -> Result<[f64; 3], PosVertexError> {
    let (xs, ws) = crate::numverify::gauss_legendre(order);
    let mut acc = [0.0; 3];
    for (x, w) in xs.iter().zip(&ws) {
        let xx = 0.5 * (x + 1.0);
        let p = PosVertexPoint::new(mu1, mu2, Complex64::new(xx, y));
        let t = tilde_alpha(&p, a, trunc)?;
        for (i, v) in t.values().into_iter().enumerate() {
            acc[i] += 0.5 * w * v;
        }
    }
    Ok(acc)
}

/// Amplitude of the first Fourier mode of tilde alpha_1 - bar alpha_1 on the
/// x-circle through (mu1, mu2, y).
pub fn first_mode_amplitude(
    mu1: f64,
    mu2: f64,
    y: f64,
    a: &SymCoupling,
    trunc: &TruncSpec,
    samples: usize,
) -> Result<f64, PosVertexError> {
    let mut vals = Vec::with_capacity(samples);
    for k in 0..samples {
        let x = k as f64 / samples as f64;
        let p = PosVertexPoint::new(mu1, mu2, Complex64::new(x, y));
        vals.push(tilde_alpha(&p, a, trunc)?.a1.value);
    }
    let modes = crate::numverify::fourier_modes(&vals, 2);
    Ok(modes[1].norm())
}

/// Fit the exponential decay rate of the first Fourier mode along a line of
/// points receding from D1; the expected rate is -2 pi A^{-1/2} per unit
/// g_a'-distance.
pub fn fourier_decay_fit(
    a: &SymCoupling,
    points: &[(f64, f64, f64)],
    trunc: &TruncSpec,
) -> Result<f64, PosVertexError> {
    let mut ds = Vec::new();
    let mut ls = Vec::new();
    for &(m1, m2, y) in points {
        let amp = first_mode_amplitude(m1, m2, y, a, trunc, 16)?;
        ds.push(crate::coupling::dist_prime_to_graph(a, m1, m2, y));
        ls.push(amp.ln());
    }
    Ok(crate::numverify::ls_slope(&ds, &ls))
}

/// Residual of the reflection identity: tilde alpha_i(p) + tilde alpha_i(-p)
/// minus the 2d Ooguri-Vafa type sum for the corresponding edge.
pub fn reflection_identity(
    p: &PosVertexPoint,
    a: &SymCoupling,
    edge: usize,
    trunc: &TruncSpec,
) -> Result<f64, PosVertexError> {
    assert!((1..=3).contains(&edge));
    let i = edge - 1;
    let tp = tilde_alpha(p, a, trunc)?;
    let pm = PosVertexPoint::new(-p.mu1, -p.mu2, -p.eta);
    let tm = tilde_alpha(&pm, a, trunc)?;
    let lhs = tp.values()[i] + tm.values()[i];

    let (m, c) = match edge {
        1 => (p.mu1, a.a22),
        2 => (p.mu2, a.a11),
        _ => (p.mu1 - p.mu2, a.c3()),
    };
    // the 2d Ooguri-Vafa type sum with the matching analytic cubic tail
    let term = |n: i64| -> f64 {
        let en = p.eta + n as f64;
        let r = (m * m + c * en.norm_sqr()).sqrt();
        if n == 0 {
            0.5 / r
        } else {
            0.5 / r - 0.5 / (c.sqrt() * (n as f64).abs())
        }
    };
    let nmax = trunc.cutoff as i64;
    let mut ov = term(0);
    for k in 1..=nmax {
        ov += term(k) + term(-k);
    }
    let (x, y) = (p.eta.re, p.eta.im);
    let p3 = (2.0 * x * x - y * y - m * m / c) / (2.0 * c.sqrt());
    ov += p3 / (2.0 * (nmax as f64 + 0.5).powi(2));
    Ok(lhs - ov)
}

/// Sum of the periodic beta series, computed from symmetric partial sums of
/// the improper-integral engine at (mu1, mu2), plus the analytic midpoint
/// tail of the 1/(eta+n) asymptotics; equals pi cot(pi eta).
pub fn tilde_beta_sum(
    eta: Complex64,
    mu1: f64,
    mu2: f64,
    a: &SymCoupling,
    cutoff: usize,
    quad: &BetaQuad,
) -> Result<Complex64, PosVertexError> {
    let mut s = Complex64::new(0.0, 0.0);
    for n in -(cutoff as i64)..=(cutoff as i64) {
        let p = C3Point::new(mu1, mu2, eta + n as f64);
        for which in [0usize, 1, 2] {
            s += beta(&p, a, which, quad)?;
        }
    }
    // midpoint-rule tail of sum_{|n| > N} 1/(eta + n): the engine's per-term
    // sum is exactly 1/(eta+n), so the analytic tail applies
    let nh = cutoff as f64 + 0.5;
    let tail = ((nh - eta) / (nh + eta)).ln();
    Ok(s + tail)
}

/// pi cot(pi eta), the closed-form target of the periodic beta sum.
pub fn pi_cot_pi(eta: Complex64) -> Complex64 {
    let z = std::f64::consts::PI * eta;
    std::f64::consts::PI * z.cos() / z.sin()
}

/// Membership in the positivity domain M^+ = { log(A^{-1/2} varrho) < eps0 A^{3/4} },
/// together with the empirical positivity of the periodic ansatz fields.
pub fn mplus_contains(
    p: &PosVertexPoint,
    a: &SymCoupling,
    eps0: f64,
    trunc: &TruncSpec,
) -> Result<(bool, bool), PosVertexError> {
    let rho = a.varrho(p.mu1, p.mu2, p.eta.im);
    let in_domain = (rho / a.det().sqrt()).ln() < eps0 * a.det().powf(0.75);
    let positive = match pos_fields(p, a, trunc) {
        Ok(_) => true,
        Err(PosVertexError::NotPositive) => false,
        Err(e) => return Err(e),
    };
    Ok((in_domain, positive))
}

/// Membership predicate alone (no field evaluation).
pub fn mplus_domain(varrho: f64, a_det: f64, eps0: f64) -> bool {
    (varrho / a_det.sqrt()).ln() < eps0 * a_det.powf(0.75)
}

/// The periodic first order fields.
#[derive(Debug, Clone, Copy)]
pub struct PosFields {
    pub v1: [[f64; 2]; 2],
    pub w1: f64,
    pub e1: f64,
}

/// tilde V = a + tilde v, tilde W = A + tilde w and the volume error
/// tilde E^(1) = -det(tilde v) / (A + tilde w + det tilde v).
pub fn pos_fields(
    p: &PosVertexPoint,
    a: &SymCoupling,
    trunc: &TruncSpec,
) -> Result<PosFields, PosVertexError> {
    let t = tilde_alpha(p, a, trunc)?;
    let [x1, x2, x3] = t.values();
    pos_fields_from_alpha([x1, x2, x3], a)
}

/// Assembly from given periodic alpha values (exposed so the constant limit
/// can be exercised directly).
pub fn pos_fields_from_alpha(x: [f64; 3], a: &SymCoupling) -> Result<PosFields, PosVertexError> {
    let [x1, x2, x3] = x;
    let v = [x1 + x3, -x3, x2 + x3];
    let w = a.a22 * x1 + a.a11 * x2 + a.c3() * x3;
    let det_v = x1 * x2 + x1 * x3 + x2 * x3;
    let denom = a.det() + w + det_v;
    let v1 = [[a.a11 + v[0], a.a12 + v[1]], [a.a12 + v[1], a.a22 + v[2]]];
    let w1 = a.det() + w;
    let det_v1 = v1[0][0] * v1[1][1] - v1[0][1] * v1[1][0];
    if denom <= 0.0 || w1 <= 0.0 || v1[0][0] <= 0.0 || det_v1 <= 0.0 {
        return Err(PosVertexError::NotPositive);
    }
    Ok(PosFields { v1, w1, e1: -det_v / denom })
}

/// Tube-flux target machinery for the averaged field: analytic gradient of
/// bar alpha_1 in (mu1, mu2, y).
pub fn bar_alpha1_gradient(mu1: f64, mu2: f64, y: f64, a: &SymCoupling) -> [f64; 3] {
    // bar alpha_1 = C - (1/(2 sqrt(a22))) log(g), g = varrho' - (a22 mu2 + a12 mu1)/sqrt(a22)
    let rho = a.varrho(mu1, mu2, y);
    let g = rho - (a.a22 * mu2 + a.a12 * mu1) / a.a22.sqrt();
    let drho = [
        (a.a11 * mu1 + a.a12 * mu2) / rho,
        (a.a12 * mu1 + a.a22 * mu2) / rho,
        a.det() * y / rho,
    ];
    let dg = [
        drho[0] - a.a12 / a.a22.sqrt(),
        drho[1] - a.a22 / a.a22.sqrt(),
        drho[2],
    ];
    let c = -0.5 / a.a22.sqrt() / g;
    [c * dg[0], c * dg[1], c * dg[2]]
}

/// Certified wrapper used by the acceptance suite to assert the cell-average
/// identity: |quadrature average - closed form| per component.
pub fn average_identity_residual(
    mu1: f64,
    mu2: f64,
    y: f64,
    a: &SymCoupling,
    trunc: &TruncSpec,
) -> Result<[f64; 3], PosVertexError> {
    let avg = tilde_alpha_cell_average(mu1, mu2, y, a, trunc, 24)?;
    let bar = bar_alpha(mu1, mu2, y, a)?;
    Ok([avg[0] - bar[0], avg[1] - bar[1], avg[2] - bar[2]])
}

/// Difference tilde E^(1) - E^(1) between the periodic and the C^3 volume
/// errors at the same base point.
pub fn periodic_vs_c3_error(
    p: &PosVertexPoint,
    a: &SymCoupling,
    trunc: &TruncSpec,
) -> Result<f64, PosVertexError> {
    let e_tilde = pos_fields(p, a, trunc)?.e1;
    let c = crate::c3::c3_fields(&C3Point::new(p.mu1, p.mu2, p.eta), a)
        .map_err(PosVertexError::C3)?;
    Ok(e_tilde - c.e1)
}

pub fn certified_tilde_alpha1(
    p: &PosVertexPoint,
    a: &SymCoupling,
    trunc: &TruncSpec,
) -> Result<Certified, PosVertexError> {
    let t = tilde_alpha(p, a, trunc)?;
    Ok(Certified::new(t.a1.value, t.tail_bound))
}

fn _alpha_triple_unused(_t: &AlphaTriple) {}
