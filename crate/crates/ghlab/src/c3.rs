//! The Taub-NUT type ansatz on C^3: closed-form harmonic building blocks
//! alpha_1..alpha_3 with analytic jets, the linearised fields v^{ij}, w and
//! the volume error E^(1), the transverse Taub-NUT model, the improper beta
//! integrals and the modulus-level functional equation |z0 z1 z2| = |eta|.

use crate::coupling::{C3Point, SymCoupling};
use crate::numverify::{gauss_legendre, path_integral, Certified, NumError, Segment};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum C3Error {
    #[error("point lies on the singular ray of alpha_{0}")]
    OnSingularRay(usize),
    #[error("ansatz breakdown: denominator A + w + det v = {0} is not positive")]
    Breakdown(f64),
    #[error("beta_{0} undefined: point lies on the excluded ray")]
    BetaDomain(usize),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Value and first partials with respect to (mu1, mu2, xi1, xi2) where
/// eta = xi1 + i xi2.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarJet {
    pub value: f64,
    pub d: [f64; 4],
}

impl ScalarJet {
    pub fn d_eta(&self) -> Complex64 {
        0.5 * Complex64::new(self.d[2], -self.d[3])
    }
}

/// The triple (alpha_1, alpha_2, alpha_3) with analytic jets.
#[derive(Debug, Clone, Copy)]
pub struct AlphaTriple {
    pub a1: ScalarJet,
    pub a2: ScalarJet,
    pub a3: ScalarJet,
}

impl AlphaTriple {
    pub fn values(&self) -> [f64; 3] {
        [self.a1.value, self.a2.value, self.a3.value]
    }
}

/// Data of one edge kernel: alpha = Phi(q) / (2 rho) with
/// rho = sqrt(m^2 + c |eta|^2), q = L / (sqrt(A) rho), m and L linear in mu.
struct EdgeKernel {
    /// coefficients of m = lm[0] mu1 + lm[1] mu2
    lm: [f64; 2],
    /// coefficient of |eta|^2 inside rho
    c: f64,
    /// coefficients of L = ll[0] mu1 + ll[1] mu2
    ll: [f64; 2],
}

fn edge_kernels(a: &SymCoupling) -> [EdgeKernel; 3] {
    [
        EdgeKernel { lm: [1.0, 0.0], c: a.a22, ll: [a.a12, a.a22] },
        EdgeKernel { lm: [0.0, 1.0], c: a.a11, ll: [a.a11, a.a12] },
        EdgeKernel {
            lm: [1.0, -1.0],
            c: a.c3(),
            ll: [-(a.a11 + a.a12), -(a.a12 + a.a22)],
        },
    ]
}

fn atan_over_x(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // atan(x)/x = 1 - x^2/3 + x^4/5 - ...
        let x2 = x * x;
        1.0 - x2 / 3.0 + x2 * x2 / 5.0
    } else {
        x.atan() / x
    }
}

impl EdgeKernel {
    /// Stable evaluation of the bracket Phi(q) = 1/2 + atan(q)/pi via the
    /// complementary arctan forms, including the removable 0*inf set where
    /// rho -> 0 with L < 0.
    fn eval(&self, a: &SymCoupling, mu1: f64, mu2: f64, eta: Complex64) -> Result<ScalarJet, C3Error> {
        let pi = std::f64::consts::PI;
        let sqrt_a = a.det().sqrt();
        let m = self.lm[0] * mu1 + self.lm[1] * mu2;
        let l = self.ll[0] * mu1 + self.ll[1] * mu2;
        let rho2 = m * m + self.c * eta.norm_sqr();
        let rho = rho2.sqrt();

        if rho < 1e-300 {
            if l > 0.0 {
                return Err(C3Error::OnSingularRay(0));
            }
            if l == 0.0 {
                return Err(C3Error::OnSingularRay(0));
            }
            // removable point: alpha = sqrt(A) / (2 pi |L|); the gradient is
            // not required on this set
            let value = sqrt_a / (2.0 * pi * (-l));
            return Ok(ScalarJet { value, d: [f64::NAN; 4] });
        }

        let value = if l < 0.0 {
            let u = sqrt_a * rho / (-l);
            (sqrt_a / (2.0 * pi * (-l))) * atan_over_x(u)
        } else if l > 0.0 {
            let u = sqrt_a * rho / l;
            (1.0 - u.atan() / pi) / (2.0 * rho)
        } else {
            0.25 / rho
        };

        // gradient: d alpha = -(d rho / 2 rho^2) Phi + (1/(2 rho)) Phi'(q) dq,
        // Phi'(q) = 1/(pi (1+q^2)), q = L/(sqrt(A) rho),
        // dq = dL/(sqrt(A) rho) - q d rho / rho.
        let phi = 2.0 * rho * value; // Phi(q), recovered stably from the value
        let denom = a.det() * rho2 + l * l; // A rho^2 + L^2
        let dphi_scale = a.det() * rho2 / (pi * denom); // Phi'(q)
        let drho = |k: usize| -> f64 {
            match k {
                0 => m * self.lm[0] / rho,
                1 => m * self.lm[1] / rho,
                2 => self.c * eta.re / rho,
                _ => self.c * eta.im / rho,
            }
        };
        let dl = |k: usize| -> f64 {
            match k {
                0 => self.ll[0],
                1 => self.ll[1],
                _ => 0.0,
            }
        };
        let mut d = [0.0; 4];
        for (k, dk) in d.iter_mut().enumerate() {
            let rk = drho(k);
            let qk = dl(k) / (sqrt_a * rho) - (l / (sqrt_a * rho)) * rk / rho;
            *dk = -rk / (2.0 * rho2) * phi + dphi_scale * qk / (2.0 * rho);
        }
        Ok(ScalarJet { value, d })
    }
}

/// Evaluate the alpha triple with analytic first partials. Fails when the
/// point lies on any of the three singular rays; use [`alpha_component`] to
/// evaluate a single alpha_i away from its own ray.
pub fn alpha(p: &C3Point, a: &SymCoupling) -> Result<AlphaTriple, C3Error> {
    let ks = edge_kernels(a);
    let a1 = ks[0].eval(a, p.mu1, p.mu2, p.eta).map_err(|_| C3Error::OnSingularRay(1))?;
    let a2 = ks[1].eval(a, p.mu1, p.mu2, p.eta).map_err(|_| C3Error::OnSingularRay(2))?;
    let a3 = ks[2].eval(a, p.mu1, p.mu2, p.eta).map_err(|_| C3Error::OnSingularRay(3))?;
    Ok(AlphaTriple { a1, a2, a3 })
}

/// Evaluate a single alpha_i (i = 1, 2, 3).
pub fn alpha_component(p: &C3Point, a: &SymCoupling, i: usize) -> Result<ScalarJet, C3Error> {
    assert!((1..=3).contains(&i));
    edge_kernels(a)[i - 1]
        .eval(a, p.mu1, p.mu2, p.eta)
        .map_err(|_| C3Error::OnSingularRay(i))
}

/// Max residual of the linear integrability identity
/// d alpha_1/d mu2 = d alpha_2/d mu1 = (-d/d mu1 - d/d mu2) alpha_3
/// = sqrt(A) / (2 pi |mu|_a^2).
///
/// The three analytic derivatives reduce to sqrt(A) c_i / (2 pi (A rho_i^2 + L_i^2)),
/// which stay regular on the rays where the alpha_i values themselves blow up.
pub fn integrability_identity(p: &C3Point, a: &SymCoupling) -> Result<f64, C3Error> {
    let na = a.norm_a(p.mu1, p.mu2, p.eta);
    if na == 0.0 {
        return Err(C3Error::OnSingularRay(0));
    }
    let target = a.det().sqrt() / (2.0 * std::f64::consts::PI * na * na);
    let ks = edge_kernels(a);
    let mut worst = 0.0f64;
    for k in &ks {
        let m = k.lm[0] * p.mu1 + k.lm[1] * p.mu2;
        let l = k.ll[0] * p.mu1 + k.ll[1] * p.mu2;
        let rho2 = m * m + k.c * p.eta.norm_sqr();
        let deriv = a.det().sqrt() * k.c
            / (2.0 * std::f64::consts::PI * (a.det() * rho2 + l * l));
        worst = worst.max((deriv - target).abs());
    }
    Ok(worst)
}

/// The linearised fields of the first order ansatz.
#[derive(Debug, Clone, Copy)]
pub struct C3Fields {
    pub alpha: AlphaTriple,
    /// v^{11}, v^{12} = v^{21}, v^{22}
    pub v: [f64; 3],
    pub w: f64,
    /// V^{ij}_(1) = a_{ij} + v^{ij}
    pub v1: [[f64; 2]; 2],
    /// W_(1) = A + w
    pub w1: f64,
    pub det_v: f64,
    pub e1: f64,
}

/// Assemble v^{ij}, w, V_(1), W_(1) and the volume error
/// E^(1) = -det v / (A + w + det v).
pub fn c3_fields(p: &C3Point, a: &SymCoupling) -> Result<C3Fields, C3Error> {
    let t = alpha(p, a)?;
    let [x1, x2, x3] = t.values();
    let v = [x1 + x3, -x3, x2 + x3];
    let w = a.a22 * x1 + a.a11 * x2 + a.c3() * x3;
    let det_v = x1 * x2 + x1 * x3 + x2 * x3;
    let denom = a.det() + w + det_v;
    if denom <= 0.0 {
        return Err(C3Error::Breakdown(denom));
    }
    let e1 = -det_v / denom;
    Ok(C3Fields {
        alpha: t,
        v,
        w,
        v1: [[a.a11 + v[0], a.a12 + v[1]], [a.a12 + v[1], a.a22 + v[2]]],
        w1: a.det() + w,
        det_v,
        e1,
    })
}

/// The transverse Taub-NUT model near edge 1, 2 or 3: the singular block of
/// V and the scalar W, together with the deviation of the full ansatz.
#[derive(Debug, Clone, Copy)]
pub struct TaubModel {
    pub v_taub: [[f64; 2]; 2],
    pub w_taub: f64,
    pub v_deviation: f64,
    pub w_deviation: f64,
}

pub fn taub_model(p: &C3Point, a: &SymCoupling, edge: usize) -> Result<TaubModel, C3Error> {
    assert!((1..=3).contains(&edge));
    let k = &edge_kernels(a)[edge - 1];
    let m = k.lm[0] * p.mu1 + k.lm[1] * p.mu2;
    let rho = (m * m + k.c * p.eta.norm_sqr()).sqrt();
    let s = 0.5 / rho;
    // singular block: s * (lm d mu)^2
    let mut v_taub = a.mat();
    for i in 0..2 {
        for j in 0..2 {
            v_taub[i][j] += s * k.lm[i] * k.lm[j];
        }
    }
    let w_taub = a.det() + k.c * s;
    let f = c3_fields(p, a)?;
    let mut vdev: f64 = 0.0;
    let vfull = f.v1;
    for i in 0..2 {
        for j in 0..2 {
            vdev = vdev.max((vfull[i][j] - v_taub[i][j]).abs());
        }
    }
    Ok(TaubModel { v_taub, w_taub, v_deviation: vdev, w_deviation: (f.w1 - w_taub).abs() })
}

// ---------------------------------------------------------------------------
// beta improper integrals
// ---------------------------------------------------------------------------

/// Quadrature budget for the improper beta integrals.
#[derive(Debug, Clone, Copy)]
pub struct BetaQuad {
    pub order: usize,
    pub panels: usize,
    pub cutoff_factor: f64,
}

impl Default for BetaQuad {
    fn default() -> Self {
        BetaQuad { order: 24, panels: 10, cutoff_factor: 12.0 }
    }
}

fn d_eta_sum(
    a: &SymCoupling,
    kernels: &[usize],
    mu1: f64,
    mu2: f64,
    eta: Complex64,
) -> Complex64 {
    let ks = edge_kernels(a);
    let mut s = Complex64::new(0.0, 0.0);
    for &i in kernels {
        let jet = ks[i].eval(a, mu1, mu2, eta).expect("beta path hit a singular ray");
        s += jet.d_eta();
    }
    s
}

fn ray_integral_complex(
    f: &mut dyn FnMut(f64) -> Complex64,
    cutoff: f64,
    order: usize,
    panels: usize,
) -> Complex64 {
    let (xs, ws) = gauss_legendre(order);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut edges = Vec::with_capacity(panels + 1);
    for k in 0..=panels {
        edges.push(cutoff * (k as f64 / panels as f64).powi(2));
    }
    for k in 0..panels {
        let (aa, bb) = (edges[k], edges[k + 1]);
        let c = 0.5 * (bb - aa);
        let mid = 0.5 * (aa + bb);
        for (x, w) in xs.iter().zip(&ws) {
            acc += f(mid + c * x) * (w * c);
        }
    }
    // algebraic tail via t = cutoff/u
    for (x, w) in xs.iter().zip(&ws) {
        let u = 0.5 * (x + 1.0);
        if u <= 1e-12 {
            continue;
        }
        let t = cutoff / u;
        acc += f(t) * (w * 0.5 * cutoff / (u * u));
    }
    acc
}

/// The improper line integrals beta_i (i = 0, 1, 2) of 2 d alpha / d eta
/// along the paper's limit directions, with the algebraic tail mapped to a
/// compact interval. Path independence can be asserted with
/// [`beta_alt_path`].
pub fn beta(p: &C3Point, a: &SymCoupling, which: usize, quad: &BetaQuad) -> Result<Complex64, C3Error> {
    check_beta_domain(p, which)?;
    let scale = 1.0 + p.mu1.abs().max(p.mu2.abs()) + a.c3().sqrt() * p.eta.norm();
    let cutoff = quad.cutoff_factor * scale;
    let (mu1, mu2, eta) = (p.mu1, p.mu2, p.eta);
    let mut integrand: Box<dyn FnMut(f64) -> Complex64> = match which {
        1 => Box::new(move |t: f64| {
            // moving in from mu1 = +infinity; d(s1 - s2) = ds1 on this path
            d_eta_sum(&a.clone(), &[0, 2], mu1 + t, mu2, eta)
        }),
        2 => Box::new(move |t: f64| d_eta_sum(&a.clone(), &[1, 2], mu1, mu2 + t, eta)),
        0 => Box::new(move |t: f64| d_eta_sum(&a.clone(), &[0, 1], mu1 - t, mu2 - t, eta)),
        _ => panic!("beta index must be 0, 1 or 2"),
    };
    let v = ray_integral_complex(&mut *integrand, cutoff, quad.order, quad.panels);
    Ok(-2.0 * v)
}

/// beta_1 along the homotopic direction (2, 1) instead of (1, 0); used for
/// the path-independence assertion.
pub fn beta1_alt_path(p: &C3Point, a: &SymCoupling, quad: &BetaQuad) -> Result<Complex64, C3Error> {
    check_beta_domain(p, 1)?;
    let scale = 1.0 + p.mu1.abs().max(p.mu2.abs()) + a.c3().sqrt() * p.eta.norm();
    let cutoff = quad.cutoff_factor * scale;
    let (mu1, mu2, eta) = (p.mu1, p.mu2, p.eta);
    let ks = edge_kernels(a);
    let mut integrand = move |t: f64| {
        // along s(t) = (mu1 + 2t, mu2 + t): ds1 = 2 dt, d(s1-s2) = dt
        let j1 = ks[0].eval(&a.clone(), mu1 + 2.0 * t, mu2 + t, eta).unwrap();
        let j3 = ks[2].eval(&a.clone(), mu1 + 2.0 * t, mu2 + t, eta).unwrap();
        2.0 * j1.d_eta() + j3.d_eta()
    };
    let v = ray_integral_complex(&mut integrand, cutoff, quad.order, quad.panels);
    Ok(-2.0 * v)
}

fn check_beta_domain(p: &C3Point, which: usize) -> Result<(), C3Error> {
    if p.eta.norm() > 1e-12 {
        return Ok(());
    }
    let bad = match which {
        1 => p.mu1 <= 0.0 && p.mu1 <= p.mu2,
        2 => p.mu2 <= 0.0 && p.mu2 <= p.mu1,
        0 => p.mu1 >= 0.0 && p.mu2 >= 0.0,
        _ => true,
    };
    if bad {
        Err(C3Error::BetaDomain(which))
    } else {
        Ok(())
    }
}

/// Sum beta_1 + beta_2 + beta_0, which must equal 1/eta.
pub fn beta_sum(p: &C3Point, a: &SymCoupling, quad: &BetaQuad) -> Result<Complex64, C3Error> {
    Ok(beta(p, a, 1, quad)? + beta(p, a, 2, quad)? + beta(p, a, 0, quad)?)
}

// ---------------------------------------------------------------------------
// log|z_i| reconstruction
// ---------------------------------------------------------------------------

/// The closed real 1-form d log|z_i| at a base point, as covector components
/// in (mu1, mu2, xi1, xi2):
///   d log|z1| = V^{1j} d mu_j + Re(beta_1 d eta)
///   d log|z2| = V^{2j} d mu_j + Re(beta_2 d eta)
///   d log|z0| = -(V^{1j} + V^{2j}) d mu_j + Re(beta_0 d eta)
pub fn logmod_form(p: &C3Point, a: &SymCoupling, which: usize, quad: &BetaQuad) -> [f64; 4] {
    let f = c3_fields(p, a).expect("logmod path hit the singular set");
    let b = beta(p, a, which, quad).expect("logmod path left the beta domain");
    let (c1, c2) = match which {
        1 => (f.v1[0][0], f.v1[0][1]),
        2 => (f.v1[1][0], f.v1[1][1]),
        0 => (-(f.v1[0][0] + f.v1[1][0]), -(f.v1[0][1] + f.v1[1][1])),
        _ => panic!("index"),
    };
    [c1, c2, b.re, -b.im]
}

/// The anchor point and normalization log|z_i| = (1/3) log|eta| there.
pub fn anchor_point(a: &SymCoupling) -> (C3Point, f64) {
    let s = a.det().powf(-0.5);
    let p = C3Point::new(s, -s, Complex64::new(0.0, a.det().powf(-0.75)));
    (p, p.eta.norm().ln() / 3.0)
}

/// Reconstruct log|z_which| at the end of a polyline path starting at the
/// anchor, by composite path integration of the closed 1-form.
pub fn logmod_z(
    waypoints: &[C3Point],
    a: &SymCoupling,
    which: usize,
    quad: &BetaQuad,
    tol: f64,
) -> Result<Certified, C3Error> {
    let (p0, anchor_val) = anchor_point(a);
    let mut pts = vec![[p0.mu1, p0.mu2, p0.eta.re, p0.eta.im]];
    for w in waypoints {
        pts.push([w.mu1, w.mu2, w.eta.re, w.eta.im]);
    }
    let form = |x: &[f64]| -> Vec<f64> {
        let p = C3Point::new(x[0], x[1], Complex64::new(x[2], x[3]));
        logmod_form(&p, a, which, quad).to_vec()
    };
    let mut total = anchor_val;
    let mut err = 0.0;
    for k in 0..pts.len() - 1 {
        let (s, e) = (pts[k], pts[k + 1]);
        let seg = move |t: f64| -> (Vec<f64>, Vec<f64>) {
            (
                (0..4).map(|i| s[i] + t * (e[i] - s[i])).collect(),
                (0..4).map(|i| e[i] - s[i]).collect(),
            )
        };
        let segs: Vec<Segment> = vec![&seg];
        let v = path_integral(&form, &segs, tol)?;
        total += v.value;
        err += v.certified_error;
    }
    Ok(Certified::new(total, err))
}

/// The ansatz-level special Lagrangian fibration coordinates.
pub fn sl_fibration(p: &C3Point) -> (f64, f64, f64) {
    (p.mu1, p.mu2, p.eta.im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numverify::{fd_hessian_scale, fd_laplacian, ls_slope, tube_flux};
    use rand::{Rng, SeedableRng};

    fn ginv_c3(a: &SymCoupling) -> Vec<Vec<f64>> {
        // Lap_a = a^{ij} d2/dmu_i dmu_j + (1/A)(d2/dxi1^2 + d2/dxi2^2)
        let inv = a.inv();
        let ia = 1.0 / a.det();
        vec![
            vec![inv[0][0], inv[0][1], 0.0, 0.0],
            vec![inv[1][0], inv[1][1], 0.0, 0.0],
            vec![0.0, 0.0, ia, 0.0],
            vec![0.0, 0.0, 0.0, ia],
        ]
    }

    #[test]
    fn alpha_closed_form_values() {
        let a = SymCoupling::identity();
        // (1, 0, 0) sits on D2, so only alpha_1 is evaluable there
        let a1 = alpha_component(&C3Point::new(1.0, 0.0, Complex64::new(0.0, 0.0)), &a, 1).unwrap();
        assert!((a1.value - 0.25).abs() < 1e-15, "{}", a1.value);

        let t2 = alpha(&C3Point::new(0.0, 1.0, Complex64::new(1.0, 0.0)), &a).unwrap();
        assert!((t2.a1.value - 0.375).abs() < 1e-15, "{}", t2.a1.value);

        let t3 = alpha(&C3Point::new(1.0, 2.0, Complex64::new(0.0, 0.0)), &a).unwrap();
        let want = 0.5 * (0.5 - (3.0f64).atan() / std::f64::consts::PI);
        assert!((t3.a3.value - want).abs() < 1e-14);
        assert!((t3.a3.value - 0.051_208_191_174_783_37).abs() < 1e-12);
    }

    #[test]
    fn alpha_gradient_matches_fd() {
        let a = SymCoupling::new(1.7, -0.3, 1.1).unwrap();
        let p = C3Point::new(0.8, -0.5, Complex64::new(0.4, 0.6));
        let t = alpha(&p, &a).unwrap();
        for (idx, jet) in [t.a1, t.a2, t.a3].into_iter().enumerate() {
            let f = |x: &[f64]| {
                let q = C3Point::new(x[0], x[1], Complex64::new(x[2], x[3]));
                alpha(&q, &a).unwrap().values()[idx]
            };
            let g = crate::numverify::fd_gradient(&mut { f }, &[0.8, -0.5, 0.4, 0.6], 1e-4);
            for k in 0..4 {
                assert!((g[k] - jet.d[k]).abs() < 1e-8, "alpha_{idx} d{k}: {} vs {}", g[k], jet.d[k]);
            }
        }
    }

    #[test]
    fn removable_ray_is_finite() {
        let a = SymCoupling::identity();
        // alpha_3 on {mu1 = mu2 > 0, eta = 0}: value sqrt(A)/(2 pi |L|),
        // L = -(mu1 + mu2)
        let t = alpha(&C3Point::new(1.0, 1.0, Complex64::new(0.0, 0.0)), &a).unwrap();
        let want = 1.0 / (2.0 * std::f64::consts::PI * 2.0);
        assert!((t.a3.value - want).abs() < 1e-12);
        // on D3 itself alpha_3 blows up
        assert!(alpha(&C3Point::new(-1.0, -1.0, Complex64::new(0.0, 0.0)), &a).is_err());
    }

    #[test]
    fn integrability_closed_form() {
        let a = SymCoupling::identity();
        let p = C3Point::new(1.0, 0.0, Complex64::new(0.0, 0.0));
        let r = integrability_identity(&p, &a).unwrap();
        assert!(r < 1e-10, "{r}");

        let a2 = SymCoupling::new(2.0, 0.0, 1.0).unwrap();
        let p2 = C3Point::new(1.0, 1.0, Complex64::new(0.0, 1.0));
        assert!(integrability_identity(&p2, &a2).unwrap() < 1e-10);

        // scaling invariance of the residual
        let lam = 4.0;
        let a3 = a2.scaled(lam);
        let p3 = C3Point::new(p2.mu1 / lam, p2.mu2 / lam, p2.eta / lam.powf(1.5));
        assert!(integrability_identity(&p3, &a3).unwrap() < 1e-12);
    }

    #[test]
    fn alpha_scaling_symmetry() {
        let a = SymCoupling::new(1.2, 0.3, 0.9).unwrap();
        let lam = 4.0;
        let al = a.scaled(lam);
        let p = C3Point::new(0.7, -0.4, Complex64::new(0.3, 0.2));
        let pl = C3Point::new(p.mu1 / lam, p.mu2 / lam, p.eta / lam.powf(1.5));
        let t = alpha(&p, &a).unwrap().values();
        let tl = alpha(&pl, &al).unwrap().values();
        for k in 0..3 {
            assert!((tl[k] - lam * t[k]).abs() < 1e-12 * tl[k].abs().max(1.0));
        }
    }

    #[test]
    fn alpha_nonnegative_random() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let a = SymCoupling::new(1.5, -0.4, 1.1).unwrap();
        for _ in 0..10_000 {
            let p = C3Point::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
            );
            if let Ok(t) = alpha(&p, &a) {
                for v in t.values() {
                    assert!(v >= 0.0, "alpha < 0 at {p:?}");
                }
            }
        }
    }

    #[test]
    fn alpha_harmonic_fd() {
        let a = SymCoupling::new(1.3, 0.2, 1.0).unwrap();
        let ginv = ginv_c3(&a);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = C3Point::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                Complex64::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            );
            if crate::coupling::trivalent_graph_distance(&a, p.mu1, p.mu2, p.eta) < 0.3 {
                continue;
            }
            for idx in 0..3 {
                let f = |x: &[f64]| {
                    alpha(&C3Point::new(x[0], x[1], Complex64::new(x[2], x[3])), &a)
                        .unwrap()
                        .values()[idx]
                };
                let x = [p.mu1, p.mu2, p.eta.re, p.eta.im];
                let lap = fd_laplacian(&mut { f }, &x, &ginv, 1e-3);
                let scale = fd_hessian_scale(&mut { f }, &x, 1e-3).max(1e-6);
                assert!(lap.abs() / scale < 1e-4, "lap {lap} scale {scale} at {p:?}");
            }
        }
    }

    #[test]
    fn c3_fields_identities() {
        let a = SymCoupling::identity();
        let p = C3Point::new(1.0, 2.0, Complex64::new(0.0, 0.0));
        let f = c3_fields(&p, &a).unwrap();
        // E1 from the direct formula vs the det/trace route
        let det_v1 = f.v1[0][0] * f.v1[1][1] - f.v1[0][1] * f.v1[1][0];
        let e_alt = f.w1 / det_v1 - 1.0;
        assert!((f.e1 - e_alt).abs() < 1e-12, "{} vs {e_alt}", f.e1);
        // invariant E1 (A + w + det v) + det v = 0
        let lhs = f.e1 * (a.det() + f.w + f.det_v) + f.det_v;
        assert!(lhs.abs() < 1e-15);
    }

    #[test]
    fn e1_decay_slope() {
        let a = SymCoupling::identity();
        let dir = (1.3, 0.7, Complex64::new(0.4, 0.3));
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &t in &[4.0, 8.0, 16.0, 32.0] {
            let p = C3Point::new(t * dir.0, t * dir.1, dir.2 * t);
            let f = c3_fields(&p, &a).unwrap();
            xs.push(a.norm_a(p.mu1, p.mu2, p.eta).ln());
            ys.push(f.e1.abs().ln());
        }
        let slope = ls_slope(&xs, &ys);
        assert!((slope + 2.0).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn taub_model_near_edge1() {
        let a = SymCoupling::identity();
        // deviation decreases moving out along D1
        let mut prev = f64::INFINITY;
        for &m2 in &[5.0, 10.0, 20.0] {
            let p = C3Point::new(0.01, m2, Complex64::new(0.0, 0.01));
            let t = taub_model(&p, &a, 1).unwrap();
            assert!(t.v_deviation < prev);
            assert!(t.v_deviation <= 2.0 / a.norm_a(p.mu1, p.mu2, p.eta));
            prev = t.v_deviation;
            // W_Taub - A - a22 alpha1 stays bounded on the tube
            let al = alpha(&p, &a).unwrap();
            let diff = t.w_taub - a.det() - a.a22 * al.a1.value;
            assert!(diff.abs() < 1.0, "{diff}");
        }
    }

    #[test]
    fn beta_sum_is_one_over_eta() {
        let a = SymCoupling::new(1.4, 0.25, 0.9).unwrap();
        let quad = BetaQuad::default();
        let p = C3Point::new(0.7, -0.4, Complex64::new(1.0, 0.0));
        let s = beta_sum(&p, &a, &quad).unwrap();
        assert!((s - Complex64::new(1.0, 0.0)).norm() < 1e-3, "{s}");

        let p2 = C3Point::new(-0.3, 0.8, Complex64::new(0.0, 2.0));
        let s2 = beta_sum(&p2, &a, &quad).unwrap();
        assert!((s2 - Complex64::new(0.0, -0.5)).norm() < 1e-3, "{s2}");
    }

    #[test]
    fn beta_path_independence() {
        let a = SymCoupling::identity();
        let quad = BetaQuad { order: 24, panels: 12, cutoff_factor: 16.0 };
        let p = C3Point::new(0.4, 0.9, Complex64::new(0.5, 0.7));
        let b = beta(&p, &a, 1, &quad).unwrap();
        let b_alt = beta1_alt_path(&p, &a, &quad).unwrap();
        assert!((b - b_alt).norm() < 1e-4, "{b} vs {b_alt}");
    }

    #[test]
    fn beta_derivative_identity() {
        // d beta_1 / d mu_1 = 2 d v^{11} / d eta
        let a = SymCoupling::identity();
        let quad = BetaQuad { order: 28, panels: 12, cutoff_factor: 16.0 };
        let p = C3Point::new(0.5, -0.2, Complex64::new(0.3, 0.8));
        let h = 1e-3;
        let bp = beta(&C3Point::new(p.mu1 + h, p.mu2, p.eta), &a, 1, &quad).unwrap();
        let bm = beta(&C3Point::new(p.mu1 - h, p.mu2, p.eta), &a, 1, &quad).unwrap();
        let fd = (bp - bm) / (2.0 * h);
        let t = alpha(&p, &a).unwrap();
        let want = 2.0 * (t.a1.d_eta() + t.a3.d_eta());
        assert!((fd - want).norm() < 1e-4, "{fd} vs {want}");
    }

    #[test]
    fn beta_domain_rejection() {
        let a = SymCoupling::identity();
        let quad = BetaQuad::default();
        let p = C3Point::new(-1.0, 0.5, Complex64::new(0.0, 0.0));
        assert!(beta(&p, &a, 1, &quad).is_err());
        let p2 = C3Point::new(1.0, 0.5, Complex64::new(0.0, 0.0));
        assert!(beta(&p2, &a, 0, &quad).is_err());
    }

    #[test]
    fn tube_flux_around_edge1() {
        // flux of grad_{g_a} alpha_1 through a tube around D1 cap {1<=mu2<=2}
        // equals -2 pi sqrt(A) (the mu2-length is 1). Work in orthonormal
        // coordinates u = (L^T mu, sqrt(A) xi).
        let a = SymCoupling::new(1.5, 0.4, 1.2).unwrap();
        let l = a.cholesky();
        let sa = a.det().sqrt();
        let to_mu = move |u: &[f64]| -> (f64, f64, Complex64) {
            // mu = L^{-T} u_mu; eta = u_eta / sqrt(A)
            let m2 = u[1] / l[1][1];
            let m1 = (u[0] - l[1][0] * m2) / l[0][0];
            (m1, m2, Complex64::new(u[2] / sa, u[3] / sa))
        };
        let field = move |u: &[f64]| -> Vec<f64> {
            crate::numverify::fd_gradient(
                &mut |x: &[f64]| {
                    let (m1, m2, eta) = to_mu(x);
                    alpha(&C3Point::new(m1, m2, eta), &a).unwrap().a1.value
                },
                u,
                1e-4,
            )
        };
        // segment endpoints: mu = (0,1) and (0,2), eta = 0 in u-coordinates
        let p = [l[0][0] * 0.0 + l[1][0] * 1.0, l[1][1] * 1.0, 0.0, 0.0];
        let q = [l[1][0] * 2.0, l[1][1] * 2.0, 0.0, 0.0];
        // u_mu = L^T mu: u1 = l11 mu1 + l21 mu2, u2 = l22 mu2
        let flux = tube_flux(&field, &p, &q, 0.25, 1e-3).unwrap();
        let want = -2.0 * std::f64::consts::PI * sa;
        assert!((flux.value - want).abs() < 0.01 * want.abs(), "{} vs {want}", flux.value);
    }

    #[test]
    fn logmod_product_is_path_independent() {
        let a = SymCoupling::identity();
        let quad = BetaQuad { order: 16, panels: 6, cutoff_factor: 10.0 };
        let targets = [
            C3Point::new(0.9, -0.6, Complex64::new(0.3, 0.8)),
            C3Point::new(0.5, 0.8, Complex64::new(-0.2, 0.9)),
            C3Point::new(-0.4, 0.7, Complex64::new(0.4, 0.6)),
        ];
        let mut residuals = Vec::new();
        for t in targets {
            let mut total = 0.0;
            for which in [0, 1, 2] {
                total += logmod_z(&[t], &a, which, &quad, 1e-5).unwrap().value;
            }
            residuals.push(total - t.eta.norm().ln());
        }
        let spread = residuals.iter().cloned().fold(f64::MIN, f64::max)
            - residuals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-3, "residuals {residuals:?}");
        // the product equals |eta| exactly under the symmetric anchor
        for r in residuals {
            assert!(r.abs() < 1e-3, "absolute residual {r}");
        }
    }

    #[test]
    fn logmod_z1_near_edge1() {
        let a = SymCoupling::identity();
        let quad = BetaQuad { order: 16, panels: 6, cutoff_factor: 10.0 };
        // arc of points around D1 at mu2 = 2, transverse radius 0.15
        let mut consts = Vec::new();
        for &ang in &[0.3f64, 1.2, 2.2] {
            let r = 0.15;
            let p = C3Point::new(r * ang.cos(), 2.0, Complex64::new(0.0, r * ang.sin()));
            // approach through a waypoint that stays away from the graph
            let way = C3Point::new(1.2, 2.0, Complex64::new(0.0, 1.0));
            let lz = logmod_z(&[way, p], &a, 1, &quad, 1e-5).unwrap().value;
            let asym = 0.5
                * ((p.mu1 / a.a22.sqrt()
                    + ((p.mu1 * p.mu1 + a.a22 * p.eta.norm_sqr()) / a.a22).sqrt())
                .ln())
                + a.a11 * p.mu1
                + a.a12 * p.mu2;
            consts.push(lz - asym);
        }
        let spread = consts.iter().cloned().fold(f64::MIN, f64::max)
            - consts.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-2, "{consts:?}");

        // vanishing: log|z1| decreases monotonically toward D1
        let mut prev = f64::INFINITY;
        for &r in &[0.4, 0.2, 0.1] {
            let p = C3Point::new(0.0, 2.0, Complex64::new(0.0, r));
            let way = C3Point::new(1.2, 2.0, Complex64::new(0.0, 1.0));
            let lz = logmod_z(&[way, p], &a, 1, &quad, 1e-5).unwrap().value;
            assert!(lz < prev);
            prev = lz;
        }
    }

    #[test]
    fn sl_fibration_is_coordinate_projection() {
        let p = C3Point::new(1.5, -2.0, Complex64::new(0.25, 0.75));
        assert_eq!(sl_fibration(&p), (1.5, -2.0, 0.75));
        let q = C3Point::new(0.0, 0.0, Complex64::new(0.0, 0.0));
        assert_eq!(sl_fibration(&q), (0.0, 0.0, 0.0));
        let r = C3Point::new(-3.0, 4.0, Complex64::new(1.0, -2.0));
        assert_eq!(sl_fibration(&r), (-3.0, 4.0, -2.0));
    }
}
