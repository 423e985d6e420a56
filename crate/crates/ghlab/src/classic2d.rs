//! The two complex-dimension-2 warm-up models: the Taub-NUT potential on
//! R^3 and the Ooguri-Vafa potential on R x S^1 x R, with their semiflat
//! asymptotes and modulus-level functional equations.

use crate::coupling::TAU;
use crate::numverify::{
    lattice_sum_1d, path_integral, Certified, NumError, Segment, TailModel, TruncSpec,
};
use num_complex::Complex64;
use thiserror::Error;

/// Euler-Mascheroni constant.
pub const GAMMA_E: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error)]
pub enum Classic2dError {
    #[error("evaluation at a singular point (mu, eta) = ({0}, {1})")]
    Singular(f64, Complex64),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Parameters of the Ooguri-Vafa potential.
#[derive(Debug, Clone, Copy)]
pub struct OVParams {
    pub a: f64,
    pub trunc: TruncSpec,
}

impl OVParams {
    pub fn new(a: f64) -> Self {
        // paired shells of the regularized sum decay cubically
        OVParams { a, trunc: TruncSpec::new(20_000, 1e-7, TailModel::InverseCube) }
    }
}

/// V = A + 1/(2 sqrt(mu^2 + |eta|^2)), the Taub-NUT potential.
pub fn taubnut_potential(mu: f64, eta: Complex64, a: f64) -> Result<f64, Classic2dError> {
    let r = (mu * mu + eta.norm_sqr()).sqrt();
    if r == 0.0 {
        return Err(Classic2dError::Singular(mu, eta));
    }
    Ok(a + 0.5 / r)
}

/// The Ooguri-Vafa potential
/// V = A + 1/(2|(mu,eta)|) + sum_{n != 0} (1/(2|(mu,eta+n)|) - 1/(2|n|)),
/// 1-periodic in Re(eta).
pub fn ov_potential(mu: f64, eta: Complex64, p: &OVParams) -> Result<Certified, Classic2dError> {
    // the series is 1-periodic; sum over the canonical representative
    let eta = Complex64::new(eta.re - eta.re.round(), eta.im);
    let r0 = (mu * mu + eta.norm_sqr()).sqrt();
    if r0 == 0.0 {
        return Err(Classic2dError::Singular(mu, eta));
    }
    let term = |n: i64| -> f64 {
        let en = Complex64::new(eta.re + n as f64, eta.im);
        let rn = (mu * mu + en.norm_sqr()).sqrt();
        if n == 0 {
            0.5 / rn
        } else {
            0.5 / rn - 0.5 / (n as f64).abs()
        }
    };
    let s = lattice_sum_1d(&mut { term }, &p.trunc)?;
    Ok(Certified::new(p.a + s.value, s.certified_error))
}

/// V - A + gamma_E - log 2 + (1/2) log(mu^2 + y^2): the deviation from the
/// semiflat asymptote, bounded by C exp(-2 pi sqrt(mu^2 + y^2)).
pub fn ov_semiflat_deviation(mu: f64, eta: Complex64, p: &OVParams) -> Result<f64, Classic2dError> {
    let v = ov_potential(mu, eta, p)?;
    let y = eta.im;
    Ok(v.value - p.a + GAMMA_E - (2.0f64).ln() + 0.5 * (mu * mu + y * y).ln())
}

// ---------------------------------------------------------------------------
// Holomorphic functional equations at the modulus level
// ---------------------------------------------------------------------------

/// beta_1 for the Taub-NUT model: d log z1 = zeta + beta_1 d eta with
/// beta_1 = (1/2 eta)(1 - mu / sqrt(mu^2 + |eta|^2)).
pub fn taubnut_beta1(mu: f64, eta: Complex64) -> Complex64 {
    let r = (mu * mu + eta.norm_sqr()).sqrt();
    (1.0 - mu / r) / (2.0 * eta)
}

/// beta_0 = (1/2 eta)(1 + mu / sqrt(mu^2 + |eta|^2)); beta_1 + beta_0 = 1/eta.
pub fn taubnut_beta0(mu: f64, eta: Complex64) -> Complex64 {
    let r = (mu * mu + eta.norm_sqr()).sqrt();
    (1.0 + mu / r) / (2.0 * eta)
}

/// The symmetric partial sums for the Ooguri-Vafa beta_{+-}, with the flat
/// holonomy constants theta_inf fixed to zero:
/// beta_+ = i pi/2 + lim sum_{|n|<=k} [ 1/(2(eta+n)) - mu/(2(eta+n) r_n) ],
/// beta_- has the opposite sign on the mu-term.
pub fn ov_beta_pm(mu: f64, eta: Complex64, cutoff: usize) -> (Complex64, Complex64) {
    let mut sp = Complex64::new(0.0, 0.5 * std::f64::consts::PI);
    let mut sm = sp;
    for n in -(cutoff as i64)..=(cutoff as i64) {
        let en = eta + n as f64;
        let rn = (mu * mu + en.norm_sqr()).sqrt();
        let base = 0.5 / en;
        let grav = mu / (2.0 * en * rn);
        sp += base - grav;
        sm += base + grav;
    }
    (sp, sm)
}

/// Which 2d model a functional-equation check runs against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model2d {
    TaubNut,
    OoguriVafa,
}

/// Reconstruct log|z_1| and log|z_0| (or log|z_2| for Ooguri-Vafa) by path
/// integration of the closed 1-forms d log|z| = +-V d mu + Re(beta d eta)
/// from an anchor on {mu = 0}, and return the functional-equation residual
/// |z1 z0| - |eta| (Taub-NUT) or |z1 z2| - |1 - e^{2 pi i eta}| (Ooguri-Vafa).
pub fn logmod_functional_eq(
    model: Model2d,
    a: f64,
    anchor: (f64, Complex64),
    target: (f64, Complex64),
    tol: f64,
) -> Result<f64, Classic2dError> {
    assert!(anchor.0 == 0.0, "anchor must lie on mu = 0");
    let (mu_a, eta_a) = anchor;
    let (mu_t, eta_t) = target;

    let form_plus = |x: &[f64]| -> Vec<f64> {
        one_form(model, a, x, true)
    };
    let form_minus = |x: &[f64]| -> Vec<f64> {
        one_form(model, a, x, false)
    };

    // straight segment in (mu, Re eta, Im eta)
    let p0 = [mu_a, eta_a.re, eta_a.im];
    let p1 = [mu_t, eta_t.re, eta_t.im];
    let seg = move |t: f64| -> (Vec<f64>, Vec<f64>) {
        (
            (0..3).map(|k| p0[k] + t * (p1[k] - p0[k])).collect(),
            (0..3).map(|k| p1[k] - p0[k]).collect(),
        )
    };
    let segs: Vec<Segment> = vec![&seg];

    let d1 = path_integral(&form_plus, &segs, tol)?;
    let d0 = path_integral(&form_minus, &segs, tol)?;

    // anchor normalization: |z1| = |z0| = sqrt of the target modulus there
    let anchor_log = match model {
        Model2d::TaubNut => 0.5 * eta_a.norm().ln(),
        Model2d::OoguriVafa => {
            0.5 * (Complex64::new(1.0, 0.0) - (Complex64::i() * TAU * eta_a).exp()).norm().ln()
        }
    };
    let log_z1 = anchor_log + d1.value;
    let log_z0 = anchor_log + d0.value;
    let prod = (log_z1 + log_z0).exp();
    let want = match model {
        Model2d::TaubNut => eta_t.norm(),
        Model2d::OoguriVafa => {
            (Complex64::new(1.0, 0.0) - (Complex64::i() * TAU * eta_t).exp()).norm()
        }
    };
    Ok(prod - want)
}

fn one_form(model: Model2d, a: f64, x: &[f64], plus: bool) -> Vec<f64> {
    let mu = x[0];
    let eta = Complex64::new(x[1], x[2]);
    let (v, beta) = match model {
        Model2d::TaubNut => {
            let v = taubnut_potential(mu, eta, a).expect("path crosses singular point");
            let b = if plus { taubnut_beta1(mu, eta) } else { taubnut_beta0(mu, eta) };
            (v, b)
        }
        Model2d::OoguriVafa => {
            let p = OVParams::new(a);
            let v = ov_potential(mu, eta, &p).expect("path crosses singular point").value;
            let (bp, bm) = ov_beta_pm(mu, eta, 900);
            (v, if plus { bp } else { bm })
        }
    };
    // Re(beta d eta) = Re(beta) dx - Im(beta) dy
    let sign = if plus { 1.0 } else { -1.0 };
    vec![sign * v, beta.re, -beta.im]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numverify::{fd_laplacian, ls_slope, sphere_flux};

    #[test]
    fn taubnut_values() {
        assert!((taubnut_potential(1.0, Complex64::new(0.0, 0.0), 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((taubnut_potential(0.0, Complex64::new(1.0, 0.0), 0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((taubnut_potential(3.0, Complex64::new(4.0, 0.0), 2.0).unwrap() - 2.1).abs() < 1e-15);
        assert!(taubnut_potential(0.0, Complex64::new(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn ov_closed_form_at_half() {
        // V(0, 1/2; A = 10) = 10 + 2 log 2, from harmonic-number telescoping.
        // Oracle: direct summation with large symmetric cutoff.
        let mut oracle = 10.0 + 1.0;
        for n in 1..4_000_000i64 {
            let nf = n as f64;
            oracle += 0.5 / (nf + 0.5) + 0.5 / (nf - 0.5) - 1.0 / nf;
        }
        let want = 10.0 + 2.0 * (2.0f64).ln();
        assert!((oracle - want).abs() < 1e-7, "oracle check {oracle}");

        let p = OVParams { a: 10.0, trunc: TruncSpec::new(40_000, 1e-9, TailModel::InverseCube) };
        let v = ov_potential(0.0, Complex64::new(0.5, 0.0), &p).unwrap();
        assert!((v.value - want).abs() < 1e-8, "{} vs {want}", v.value);
    }

    #[test]
    fn ov_decay_constant() {
        // V(0, 2i; A = 0) = -gamma_E up to e^{-4 pi}
        let p = OVParams { a: 0.0, trunc: TruncSpec::new(20_000, 1e-8, TailModel::InverseCube) };
        let v = ov_potential(0.0, Complex64::new(0.0, 2.0), &p).unwrap();
        assert!((v.value + GAMMA_E).abs() < 1e-5, "{}", v.value);
    }

    #[test]
    fn ov_periodicity() {
        let p = OVParams::new(3.0);
        let e = Complex64::new(0.3, 0.7);
        let v1 = ov_potential(0.2, e, &p).unwrap().value;
        let v2 = ov_potential(0.2, e + 1.0, &p).unwrap().value;
        // identical after the shift reindexes the absolutely convergent part
        assert!((v1 - v2).abs() < 2e-8, "{v1} {v2}");
    }

    #[test]
    fn semiflat_deviation_bound_and_slope() {
        let p = OVParams::new(5.0);
        let d1 = ov_semiflat_deviation(0.0, Complex64::new(0.0, 1.0), &p).unwrap();
        assert!(d1.abs() <= 10.0 * (-TAU).exp(), "{d1}");
        let d2 = ov_semiflat_deviation(0.0, Complex64::new(0.0, 2.0), &p).unwrap();
        assert!(d2.abs() <= 10.0 * (-2.0 * TAU).exp(), "{d2}");

        // least-squares slope of log |dev| over y in [1, 2.5] is ~ -2 pi
        let ys = [1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5];
        let logs: Vec<f64> = ys
            .iter()
            .map(|&y| {
                ov_semiflat_deviation(0.0, Complex64::new(0.0, y), &p).unwrap().abs().ln()
            })
            .collect();
        let slope = ls_slope(&ys, &logs);
        assert!((slope + TAU).abs() < 0.1 * TAU, "slope {slope}");
    }

    #[test]
    fn harmonicity_and_distributional_charge() {
        // flat 3D Laplacian of the Taub-NUT potential vanishes off the origin
        let eye: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let f = |x: &[f64]| taubnut_potential(x[0], Complex64::new(x[1], x[2]), 1.0).unwrap();
        let lap = fd_laplacian(&mut { f }, &[0.4, -0.3, 0.5], &eye, 1e-3);
        assert!(lap.abs() < 1e-4, "{lap}");

        // OV potential: harmonic away from the lattice points
        let p = OVParams::new(2.0);
        let g = |x: &[f64]| ov_potential(x[0], Complex64::new(x[1], x[2]), &p).unwrap().value;
        let lap2 = fd_laplacian(&mut { g }, &[0.3, 0.4, 0.2], &eye, 1e-3);
        assert!(lap2.abs() < 1e-4, "{lap2}");

        // flux of grad V through a small sphere around the OV singular point
        // equals -2 pi (same normalization as the Taub-NUT delta)
        let field = |x: &[f64]| {
            crate::numverify::fd_gradient(
                &mut |y: &[f64]| ov_potential(y[0], Complex64::new(y[1], y[2]), &p).unwrap().value,
                x,
                1e-4,
            )
        };
        let fl = sphere_flux(&field, &[0.0, 0.0, 0.0], 0.05, 1e-3).unwrap();
        assert!((fl.value + TAU).abs() < 0.01 * TAU, "{}", fl.value);
    }

    #[test]
    fn taubnut_functional_equation() {
        // anchor at (0, 1), evaluate at (1, 1)
        let r = logmod_functional_eq(
            Model2d::TaubNut,
            1.0,
            (0.0, Complex64::new(1.0, 0.0)),
            (1.0, Complex64::new(1.0, 0.0)),
            1e-9,
        )
        .unwrap();
        assert!(r.abs() < 1e-6, "{r}");
        // a target that moves in eta as well
        let r2 = logmod_functional_eq(
            Model2d::TaubNut,
            1.0,
            (0.0, Complex64::new(1.0, 0.0)),
            (0.8, Complex64::new(0.6, 0.9)),
            1e-9,
        )
        .unwrap();
        assert!(r2.abs() < 1e-6, "{r2}");
    }

    #[test]
    fn taubnut_form_closedness() {
        // FD exterior derivative of d log|z1| = V d mu + Re(beta_1 d eta)
        let form = |x: &[f64]| -> Vec<f64> {
            let eta = Complex64::new(x[1], x[2]);
            let v = taubnut_potential(x[0], eta, 1.0).unwrap();
            let b = taubnut_beta1(x[0], eta);
            vec![v, b.re, -b.im]
        };
        let x0 = [0.5, 0.4, -0.3];
        let h = 1e-4;
        let mut max_curl: f64 = 0.0;
        for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let mut xp = x0;
            let mut xm = x0;
            xp[i] += h;
            xm[i] -= h;
            let dj = (form(&xp)[j] - form(&xm)[j]) / (2.0 * h);
            let mut yp = x0;
            let mut ym = x0;
            yp[j] += h;
            ym[j] -= h;
            let di = (form(&yp)[i] - form(&ym)[i]) / (2.0 * h);
            max_curl = max_curl.max((dj - di).abs());
        }
        assert!(max_curl < 1e-6, "{max_curl}");
    }

    #[test]
    fn ov_loop_period_vanishes_at_large_y() {
        // modulus part of the period along the base circle decays like
        // e^{-2 pi y}
        let y = 1.5;
        let a = 3.0;
        let form = |x: &[f64]| one_form(Model2d::OoguriVafa, a, x, true);
        let circle = move |t: f64| -> (Vec<f64>, Vec<f64>) {
            (vec![0.0, t, y], vec![0.0, 1.0, 0.0])
        };
        let segs: Vec<Segment> = vec![&circle];
        let v = path_integral(&form, &segs, 1e-8).unwrap();
        assert!(v.value.abs() < 30.0 * (-TAU * y).exp(), "{}", v.value);
    }
}
