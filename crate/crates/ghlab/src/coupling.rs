//! Coupling matrices, base-point geometries, reference metrics, distance
//! scales, the discriminant graph and the surface S with its amoeba.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const TAU: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("coupling is not positive definite: a11 = {a11}, det = {det}")]
    NotPositive { a11: f64, det: f64 },
    #[error("point lies on the singular set: {0}")]
    Singular(String),
    #[error("lattice minimum search requires a better conditioned form (off-diagonal {0:.3} too large)")]
    IllConditioned(f64),
}

// ---------------------------------------------------------------------------
// Symmetric coupling (C^3 and positive vertex)
// ---------------------------------------------------------------------------

/// Positive definite real symmetric 2x2 coupling matrix a_{ij}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymCoupling {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl SymCoupling {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Result<Self, CouplingError> {
        let det = a11 * a22 - a12 * a12;
        if !(a11 > 0.0 && det > 0.0) {
            return Err(CouplingError::NotPositive { a11, det });
        }
        Ok(SymCoupling { a11, a12, a22 })
    }

    pub fn identity() -> Self {
        SymCoupling { a11: 1.0, a12: 0.0, a22: 1.0 }
    }

    /// det a
    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    /// Inverse entries a^{ij}.
    pub fn inv(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [[self.a22 / d, -self.a12 / d], [-self.a12 / d, self.a11 / d]]
    }

    pub fn mat(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    /// a_{ij} u_i v_j
    pub fn pair(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        self.a11 * u[0] * v[0] + self.a12 * (u[0] * v[1] + u[1] * v[0]) + self.a22 * u[1] * v[1]
    }

    /// a11 + 2 a12 + a22, the coefficient attached to the third edge.
    pub fn c3(&self) -> f64 {
        self.a11 + 2.0 * self.a12 + self.a22
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        SymCoupling { a11: lambda * self.a11, a12: lambda * self.a12, a22: lambda * self.a22 }
    }

    /// |(mu1, mu2, eta)|_a = sqrt(a_{ij} mu_i mu_j + A |eta|^2)
    pub fn norm_a(&self, mu1: f64, mu2: f64, eta: Complex64) -> f64 {
        (self.pair([mu1, mu2], [mu1, mu2]) + self.det() * eta.norm_sqr()).sqrt()
    }

    /// g_a'-distance |(mu1, mu2, y)|_a' = sqrt(a_{ij} mu_i mu_j + A y^2)
    pub fn varrho(&self, mu1: f64, mu2: f64, y: f64) -> f64 {
        (self.pair([mu1, mu2], [mu1, mu2]) + self.det() * y * y).sqrt()
    }

    /// Cholesky factor L (lower triangular) with a = L L^T.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let l11 = self.a11.sqrt();
        let l21 = self.a12 / l11;
        let l22 = (self.a22 - l21 * l21).sqrt();
        [[l11, 0.0], [l21, l22]]
    }
}

impl Serialize for SymCoupling {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SymCoupling", 3)?;
        st.serialize_field("a11", &self.a11)?;
        st.serialize_field("a12", &self.a12)?;
        st.serialize_field("a22", &self.a22)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for SymCoupling {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            a11: f64,
            a12: f64,
            a22: f64,
        }
        let r = Raw::deserialize(d)?;
        SymCoupling::new(r.a11, r.a12, r.a22).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Hermitian coupling (negative vertex)
// ---------------------------------------------------------------------------

/// Positive definite Hermitian 2x2 coupling a_{p \bar q}; a21 = conj(a12).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermCoupling {
    pub a11: f64,
    pub a12: Complex64,
    pub a22: f64,
}

impl HermCoupling {
    pub fn new(a11: f64, a12: Complex64, a22: f64) -> Result<Self, CouplingError> {
        let det = a11 * a22 - a12.norm_sqr();
        if !(a11 > 0.0 && det > 0.0) {
            return Err(CouplingError::NotPositive { a11, det });
        }
        Ok(HermCoupling { a11, a12, a22 })
    }

    pub fn identity() -> Self {
        HermCoupling { a11: 1.0, a12: Complex64::new(0.0, 0.0), a22: 1.0 }
    }

    pub fn from_sym(a: &SymCoupling) -> Self {
        HermCoupling { a11: a.a11, a12: Complex64::new(a.a12, 0.0), a22: a.a22 }
    }

    /// A = det a
    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12.norm_sqr()
    }

    /// Abb = A + (Im a12)^2
    pub fn det_bb(&self) -> f64 {
        self.det() + self.a12.im * self.a12.im
    }

    pub fn a21(&self) -> Complex64 {
        self.a12.conj()
    }

    /// a11 + a12 + a21 + a22 = a11 + 2 Re a12 + a22
    pub fn c3(&self) -> f64 {
        self.a11 + 2.0 * self.a12.re + self.a22
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        HermCoupling { a11: lambda * self.a11, a12: lambda * self.a12, a22: lambda * self.a22 }
    }

    /// Transposed-inverse entries a^{p \bar q} with a_{j\bar q} a^{p\bar q} = delta_j^p.
    /// Returned as [[a^{1\bar1}, a^{1\bar2}], [a^{2\bar1}, a^{2\bar2}]].
    pub fn inv(&self) -> [[Complex64; 2]; 2] {
        let d = self.det();
        [
            [
                Complex64::new(self.a22 / d, 0.0),
                -self.a12.conj() / d,
            ],
            [
                -self.a12 / d,
                Complex64::new(self.a11 / d, 0.0),
            ],
        ]
    }

    /// Hermitian pairing a_{p\bar q} u_p conj(v_q), real and positive for u = v.
    pub fn herm_pair(&self, u: [Complex64; 2], v: [Complex64; 2]) -> Complex64 {
        self.a11 * u[0] * v[0].conj()
            + self.a12 * u[0] * v[1].conj()
            + self.a12.conj() * u[1] * v[0].conj()
            + self.a22 * u[1] * v[1].conj()
    }

    /// |eta|_a^2 = a_{p\bar q} eta_p conj(eta_q)
    pub fn eta_norm_sqr(&self, eta: [Complex64; 2]) -> f64 {
        self.herm_pair(eta, eta).re
    }

    /// |(eta1, eta2, mu)|_a
    pub fn norm_a(&self, eta: [Complex64; 2], mu: f64) -> f64 {
        (self.eta_norm_sqr(eta) + self.det() * mu * mu).sqrt()
    }

    /// |y|_a^2 = a_{p\bar q} y_p y_q for a real vector y
    pub fn y_norm_sqr(&self, y: [f64; 2]) -> f64 {
        self.a11 * y[0] * y[0] + 2.0 * self.a12.re * y[0] * y[1] + self.a22 * y[1] * y[1]
    }

    /// varrho = sqrt( (A/Abb) |y|_a^2 + A mu^2 )
    pub fn varrho(&self, y: [f64; 2], mu: f64) -> f64 {
        let a = self.det();
        ((a / self.det_bb()) * self.y_norm_sqr(y) + a * mu * mu).sqrt()
    }

    /// The quadratic form of the dual 2-torus: A a^{p\bar q} n_p n_q / Abb
    /// evaluated on an integer vector.
    pub fn dual_form(&self, n: [f64; 2]) -> f64 {
        let a = self.det();
        (self.a22 * n[0] * n[0] - 2.0 * self.a12.re * n[0] * n[1] + self.a11 * n[1] * n[1])
            / self.det_bb()
            * (a / a)
    }

    /// kappa_a: minimum of k_{n1,n2} = 2 pi sqrt(A a^{p\bar q} n_p n_q / Abb)
    /// over the eight nonzero vectors with |n_p| <= 1. The caller-facing
    /// contract requires a reduced enough form so that the minimum over all
    /// of Z^2 \ {0} is attained on these short vectors.
    pub fn kappa(&self) -> Result<f64, CouplingError> {
        let off = 2.0 * self.a12.re.abs();
        if off > self.a11.min(self.a22) {
            return Err(CouplingError::IllConditioned(off / self.a11.min(self.a22)));
        }
        let mut best = f64::INFINITY;
        for n1 in -1i32..=1 {
            for n2 in -1i32..=1 {
                if n1 == 0 && n2 == 0 {
                    continue;
                }
                let q = self.dual_form([n1 as f64, n2 as f64]);
                best = best.min(q);
            }
        }
        Ok(TAU * best.sqrt())
    }
}

impl Serialize for HermCoupling {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("HermCoupling", 3)?;
        st.serialize_field("a11", &self.a11)?;
        if self.a12.im == 0.0 {
            st.serialize_field("a12", &self.a12.re)?;
        } else {
            st.serialize_field("a12", &[self.a12.re, self.a12.im])?;
        }
        st.serialize_field("a22", &self.a22)?;
        st.end()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RealOrPair {
    Real(f64),
    Pair([f64; 2]),
}

impl<'de> Deserialize<'de> for HermCoupling {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            a11: f64,
            a12: RealOrPair,
            a22: f64,
        }
        let r = Raw::deserialize(d)?;
        let a12 = match r.a12 {
            RealOrPair::Real(x) => Complex64::new(x, 0.0),
            RealOrPair::Pair([re, im]) => Complex64::new(re, im),
        };
        HermCoupling::new(r.a11, a12, r.a22).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Base points
// ---------------------------------------------------------------------------

/// Point on the C^3 base R^2_{mu} x C_eta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C3Point {
    pub mu1: f64,
    pub mu2: f64,
    pub eta: Complex64,
}

impl C3Point {
    pub fn new(mu1: f64, mu2: f64, eta: Complex64) -> Self {
        C3Point { mu1, mu2, eta }
    }
}

/// Point on the positive-vertex base R^2_{mu} x (S^1 x R)_eta; the real part
/// of eta is canonically reduced to [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosVertexPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub eta: Complex64,
}

impl PosVertexPoint {
    pub fn new(mu1: f64, mu2: f64, eta: Complex64) -> Self {
        let x = eta.re - eta.re.floor();
        PosVertexPoint { mu1, mu2, eta: Complex64::new(x, eta.im) }
    }
}

/// Point on the negative-vertex base (S^1 x R)^2 x R_mu; real parts of the
/// eta_p are canonically reduced to [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegVertexPoint {
    pub eta1: Complex64,
    pub eta2: Complex64,
    pub mu: f64,
}

impl NegVertexPoint {
    pub fn new(eta1: Complex64, eta2: Complex64, mu: f64) -> Self {
        let c = |e: Complex64| Complex64::new(e.re - e.re.floor(), e.im);
        NegVertexPoint { eta1: c(eta1), eta2: c(eta2), mu }
    }

    pub fn y(&self) -> [f64; 2] {
        [self.eta1.im, self.eta2.im]
    }
}

/// Distance scales at a base point.
#[derive(Debug, Clone, Copy)]
pub struct GeomScales {
    /// |.|_a distance to the origin
    pub norm_a: f64,
    /// g_a'-distance on the averaged base
    pub varrho: f64,
    /// g_a-distance to the discriminant locus (R for the negative vertex)
    pub dist_d: f64,
    /// ell = A^{-1/4} + dist_d
    pub ell: f64,
    /// exponential-decay scale (rate times averaged distance to the locus)
    pub ell_tilde: f64,
}

// ---------------------------------------------------------------------------
// Trivalent discriminant graph
// ---------------------------------------------------------------------------

/// The three rays of the trivalent graph in the mu-plane, each given by an
/// outgoing unit-parameter direction.
const RAYS: [[f64; 2]; 3] = [[0.0, 1.0], [1.0, 0.0], [-1.0, -1.0]];

fn dist_to_ray_sqr(a: &SymCoupling, mu: [f64; 2], eta: Complex64, dir: [f64; 2]) -> f64 {
    // minimize a_{ij}(mu - t d)_i (mu - t d)_j over t >= 0, plus A|eta|^2
    let dd = a.pair(dir, dir);
    let t = (a.pair(mu, dir) / dd).max(0.0);
    let v = [mu[0] - t * dir[0], mu[1] - t * dir[1]];
    a.pair(v, v) + a.det() * eta.norm_sqr()
}

/// g_a-distance from a C^3 base point to the trivalent graph
/// D = {mu1=0, mu2>=0, eta=0} u {mu2=0, mu1>=0, eta=0} u {mu1=mu2<=0, eta=0}.
pub fn trivalent_graph_distance(a: &SymCoupling, mu1: f64, mu2: f64, eta: Complex64) -> f64 {
    let mut best = f64::INFINITY;
    for dir in RAYS {
        best = best.min(dist_to_ray_sqr(a, [mu1, mu2], eta, dir));
    }
    best.sqrt()
}

/// Periodic variant: the eta-distance is taken to the canonical representative
/// nearest to the integer lattice, by minimizing over shifts |n| <= 3.
pub fn trivalent_graph_distance_periodic(
    a: &SymCoupling,
    mu1: f64,
    mu2: f64,
    eta: Complex64,
) -> f64 {
    let x = eta.re - eta.re.round();
    let mut best = f64::INFINITY;
    for n in -3i32..=3 {
        let shifted = Complex64::new(x + n as f64, eta.im);
        best = best.min(trivalent_graph_distance(a, mu1, mu2, shifted));
    }
    best
}

/// Scales bundle for the C^3 geometry.
pub fn c3_scales(a: &SymCoupling, p: &C3Point) -> GeomScales {
    let d = trivalent_graph_distance(a, p.mu1, p.mu2, p.eta);
    let aq = a.det().powf(-0.25);
    GeomScales {
        norm_a: a.norm_a(p.mu1, p.mu2, p.eta),
        varrho: a.varrho(p.mu1, p.mu2, p.eta.im),
        dist_d: d,
        ell: aq + d,
        ell_tilde: TAU / a.det().sqrt() * dist_prime_to_graph(a, p.mu1, p.mu2, p.eta.im),
    }
}

/// Scales bundle for the positive-vertex geometry.
pub fn pos_scales(a: &SymCoupling, p: &PosVertexPoint) -> GeomScales {
    let d = trivalent_graph_distance_periodic(a, p.mu1, p.mu2, p.eta);
    let aq = a.det().powf(-0.25);
    GeomScales {
        norm_a: a.norm_a(p.mu1, p.mu2, p.eta),
        varrho: a.varrho(p.mu1, p.mu2, p.eta.im),
        dist_d: d,
        ell: aq + d,
        ell_tilde: TAU / a.det().sqrt() * dist_prime_to_graph(a, p.mu1, p.mu2, p.eta.im),
    }
}

/// g_a'-distance in R^3_{mu1,mu2,y} to the trivalent graph in {y = 0}.
pub fn dist_prime_to_graph(a: &SymCoupling, mu1: f64, mu2: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    for dir in RAYS {
        let dd = a.pair(dir, dir);
        let t = (a.pair([mu1, mu2], dir) / dd).max(0.0);
        let v = [mu1 - t * dir[0], mu2 - t * dir[1]];
        best = best.min(a.pair(v, v) + a.det() * y * y);
    }
    best.sqrt()
}

// ---------------------------------------------------------------------------
// The surface S = {z1 + z2 = 1} and its amoeba
// ---------------------------------------------------------------------------

/// A parametrized point of S with the local area density of
/// dA = (i/2) a_{p\bar q} d eta_p ^ d conj(eta_q) in the (x2, y2) chart.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub point: NegVertexPoint,
    pub z1: Complex64,
    pub z2: Complex64,
    /// d eta1 = slope * d eta2 on S
    pub slope: Complex64,
    /// density of dA with respect to dx2 dy2
    pub area_density: f64,
}

/// Parametrize S by z2 (z2 not in {0, 1}): z1 = 1 - z2,
/// eta_p = log(z_p) / (2 pi i) with principal branch, x_p reduced mod 1.
pub fn surface_s(z2: Complex64, a: &HermCoupling) -> Result<SurfacePoint, CouplingError> {
    if z2 == Complex64::new(0.0, 0.0) || z2 == Complex64::new(1.0, 0.0) {
        return Err(CouplingError::Singular(format!("z2 = {z2} is a puncture of S")));
    }
    let z1 = Complex64::new(1.0, 0.0) - z2;
    let eta = |z: Complex64| {
        // eta = (1/2 pi i) log z = arg(z)/2pi - i log|z| / 2pi
        Complex64::new(z.arg() / TAU, -z.norm().ln() / TAU)
    };
    let p = NegVertexPoint::new(eta(z1), eta(z2), 0.0);
    // on S: dz1 = -dz2 => z1 d eta1 = -z2 d eta2
    let slope = -z2 / z1;
    let area_density = a.a11 * slope.norm_sqr() + 2.0 * (a.a12 * slope).re + a.a22;
    Ok(SurfacePoint { point: p, z1, z2, slope, area_density })
}

/// f_S = 1 - e^{2 pi i eta1} - e^{2 pi i eta2}
pub fn f_s(eta1: Complex64, eta2: Complex64) -> Complex64 {
    let e = |w: Complex64| (Complex64::i() * TAU * w).exp();
    Complex64::new(1.0, 0.0) - e(eta1) - e(eta2)
}

/// Amoeba membership with the signed minimum slack of the three defining
/// inequalities.
pub fn amoeba_contains(y1: f64, y2: f64) -> (bool, f64) {
    let u = (-TAU * y1).exp();
    let v = (-TAU * y2).exp();
    let s1 = u + v - 1.0;
    let s2 = u + 1.0 - v;
    let s3 = v + 1.0 - u;
    let slack = s1.min(s2).min(s3);
    (slack >= 0.0, slack)
}

/// g_a'-distance in R^3_{y1,y2,mu} from a point to the trivalent graph
/// underlying the amoeba (used as the decay scale of the negative vertex).
pub fn dist_prime_to_amoeba_graph(a: &HermCoupling, y1: f64, y2: f64, mu: f64) -> f64 {
    let aa = a.det();
    let bb = a.det_bb();
    let q = |v: [f64; 2], w: [f64; 2]| {
        (aa / bb)
            * (a.a11 * v[0] * w[0]
                + a.a12.re * (v[0] * w[1] + v[1] * w[0])
                + a.a22 * v[1] * w[1])
    };
    let mut best = f64::INFINITY;
    for dir in RAYS {
        let dd = q(dir, dir);
        let t = (q([y1, y2], dir) / dd).max(0.0);
        let v = [y1 - t * dir[0], y2 - t * dir[1]];
        best = best.min(q(v, v) + aa * mu * mu);
    }
    best.sqrt()
}
