//! The renormalization-flow ODE for the coupling constants of both vertices,
//! its exact parametrized solution, conserved quantities, attractor behavior
//! and neck-length estimates.

use crate::coupling::{HermCoupling, SymCoupling};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow state requires p_i > 0, got {0:?}")]
    NonPositive([f64; 3]),
    #[error("step size underflow at lambda = {0}")]
    StepUnderflow(f64),
    #[error("closed form is not positive at t = {0}")]
    ClosedFormDomain(f64),
}

/// State of the renormalization flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowState {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub im_a21: f64,
    pub lambda: f64,
}

impl FlowState {
    pub fn p(&self) -> [f64; 3] {
        [self.p1, self.p2, self.p3]
    }

    pub fn from_sym(a: &SymCoupling, lambda: f64) -> Self {
        FlowState {
            p1: a.a22.sqrt(),
            p2: a.a11.sqrt(),
            p3: a.c3().sqrt(),
            im_a21: 0.0,
            lambda,
        }
    }

    pub fn from_herm(a: &HermCoupling, lambda: f64) -> Self {
        FlowState {
            p1: a.a22.sqrt(),
            p2: a.a11.sqrt(),
            p3: a.c3().sqrt(),
            im_a21: a.a21().im,
            lambda,
        }
    }
}

/// Fitted constants of the parametrized representation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// Right-hand side: d(p_i^2)/d lambda = -1/(2 p_j) - 1/(2 p_k) cyclically,
/// and d(Im a21)/d lambda = 0. Returned as (d p^2 / d lambda, 0).
pub fn flow_rhs(s: &FlowState) -> Result<([f64; 3], f64), FlowError> {
    let p = s.p();
    if p.iter().any(|&v| v <= 0.0) {
        return Err(FlowError::NonPositive(p));
    }
    Ok((
        [
            -0.5 / p[1] - 0.5 / p[2],
            -0.5 / p[0] - 0.5 / p[2],
            -0.5 / p[0] - 0.5 / p[1],
        ],
        0.0,
    ))
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FlowSample {
    pub lambda: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub im_a21: f64,
}

/// Trajectory of the flow, with the breakdown scale when min p_i reaches 0
/// before lambda_end.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<FlowSample>,
    pub breakdown: Option<f64>,
}

fn rk4_step(q: [f64; 3], h: f64) -> Option<[f64; 3]> {
    let rhs = |q: [f64; 3]| -> Option<[f64; 3]> {
        if q.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let p = [q[0].sqrt(), q[1].sqrt(), q[2].sqrt()];
        Some([
            -0.5 / p[1] - 0.5 / p[2],
            -0.5 / p[0] - 0.5 / p[2],
            -0.5 / p[0] - 0.5 / p[1],
        ])
    };
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = rhs(q)?;
    let k2 = rhs(add(q, k1, 0.5 * h))?;
    let k3 = rhs(add(q, k2, 0.5 * h))?;
    let k4 = rhs(add(q, k3, h))?;
    Some([
        q[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        q[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        q[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ])
}

fn conserved(q: [f64; 3]) -> (f64, f64) {
    let p = [q[0].sqrt(), q[1].sqrt(), q[2].sqrt()];
    let s = p[0] + p[1] + p[2];
    ((p[0] - p[1]).powi(2) * s, (p[0] - p[2]).powi(2) * s)
}

/// RK4 integration in the q = p^2 variables from lambda = s0.lambda to
/// lambda_end, with adaptive halving whenever the conserved quantities
/// (p1-p2)^2 (p1+p2+p3) and (p1-p3)^2 (p1+p2+p3) drift by more than
/// `drift_tol` per step. Near breakdown the step shrinks with min q; the
/// breakdown scale is reported once min q falls below 1e-9 (the remaining
/// lambda-distance is O(q^{3/2}) and negligible).
pub fn integrate(
    s0: &FlowState,
    lambda_end: f64,
    step: f64,
    drift_tol: f64,
) -> Result<Trajectory, FlowError> {
    let p0 = s0.p();
    if p0.iter().any(|&v| v <= 0.0) {
        return Err(FlowError::NonPositive(p0));
    }
    let mut q = [p0[0] * p0[0], p0[1] * p0[1], p0[2] * p0[2]];
    let mut lam = s0.lambda;
    let mut out = Vec::new();
    let push = |out: &mut Vec<FlowSample>, lam: f64, q: [f64; 3]| {
        out.push(FlowSample {
            lambda: lam,
            p1: q[0].sqrt(),
            p2: q[1].sqrt(),
            p3: q[2].sqrt(),
            im_a21: s0.im_a21,
        });
    };
    push(&mut out, lam, q);
    let mut breakdown = None;
    'outer: while lam < lambda_end {
        let qmin = q[0].min(q[1]).min(q[2]);
        if qmin < 1e-9 {
            // the remaining lambda-distance to breakdown is O(qmin^{3/2})
            breakdown = Some(lam + (2.0 / 3.0) * qmin.powf(1.5));
            break;
        }
        // keep the relative change of the smallest q near 5% per step; its
        // slope is bounded by 1/sqrt(qmin)
        let mut h = step.min(lambda_end - lam).min(0.05 * qmin.powf(1.5));
        let (c1, c2) = conserved(q);
        loop {
            if h < 1e-14 {
                // the state is pinned against breakdown
                let qmin = q[0].min(q[1]).min(q[2]);
                breakdown = Some(lam + (2.0 / 3.0) * qmin.powf(1.5));
                break 'outer;
            }
            match rk4_step(q, h) {
                Some(qn) if qn.iter().all(|&v| v > 0.0) => {
                    let (d1, d2) = conserved(qn);
                    let drift = (d1 - c1).abs().max((d2 - c2).abs());
                    if drift > drift_tol * h.max(1e-16) {
                        h *= 0.5;
                        continue;
                    }
                    q = qn;
                    lam += h;
                    push(&mut out, lam, q);
                    break;
                }
                _ => {
                    h *= 0.5;
                }
            }
        }
    }
    Ok(Trajectory { samples: out, breakdown })
}

/// The parametrized closed-form solution:
/// p1 = t^{2/3} + (K1+K2) t^{-1/3}/3, p2 = t^{2/3} + (K2-2K1) t^{-1/3}/3,
/// p3 = t^{2/3} + (K1-2K2) t^{-1/3}/3, and
/// lambda = -(2/3) t^2 + (4/9)(K1^2+K2^2-K1K2) log t
///          + (4/81)(K1+K2)(K2-2K1)(K1-2K2)/t + K3.
pub fn closed_form(c: &FlowConstants, t: f64) -> Result<FlowState, FlowError> {
    let t13 = t.powf(1.0 / 3.0);
    let t23 = t13 * t13;
    let p1 = t23 + (c.k1 + c.k2) / (3.0 * t13);
    let p2 = t23 + (c.k2 - 2.0 * c.k1) / (3.0 * t13);
    let p3 = t23 + (c.k1 - 2.0 * c.k2) / (3.0 * t13);
    if p1 <= 0.0 || p2 <= 0.0 || p3 <= 0.0 {
        return Err(FlowError::ClosedFormDomain(t));
    }
    let lambda = -(2.0 / 3.0) * t * t
        + (4.0 / 9.0) * (c.k1 * c.k1 + c.k2 * c.k2 - c.k1 * c.k2) * t.ln()
        + (4.0 / 81.0) * (c.k1 + c.k2) * (c.k2 - 2.0 * c.k1) * (c.k1 - 2.0 * c.k2) / t
        + c.k3;
    Ok(FlowState { p1, p2, p3, im_a21: 0.0, lambda })
}

/// d lambda / dt = -4 p1 p2 p3 / (3 t) along the closed form.
pub fn closed_form_dlambda_dt(c: &FlowConstants, t: f64) -> Result<f64, FlowError> {
    let s = closed_form(c, t)?;
    Ok(-4.0 * s.p1 * s.p2 * s.p3 / (3.0 * t))
}

/// Fit (K1, K2, K3) from a state with p1 >= p2 >= p3 via the conserved
/// combinations: t = ((p1+p2+p3)/3)^{3/2}, K1 = (p1-p2) t^{1/3},
/// K2 = (p1-p3) t^{1/3}, and K3 from the lambda formula.
pub fn fit_constants(s: &FlowState) -> FlowConstants {
    let t = ((s.p1 + s.p2 + s.p3) / 3.0).powf(1.5);
    let t13 = t.powf(1.0 / 3.0);
    let k1 = (s.p1 - s.p2) * t13;
    let k2 = (s.p1 - s.p3) * t13;
    let partial = -(2.0 / 3.0) * t * t
        + (4.0 / 9.0) * (k1 * k1 + k2 * k2 - k1 * k2) * t.ln()
        + (4.0 / 81.0) * (k1 + k2) * (k2 - 2.0 * k1) * (k1 - 2.0 * k2) / t;
    FlowConstants { k1, k2, k3: s.lambda - partial }
}

/// Solve lambda(t) = lambda for t by Newton iteration from t0.
pub fn invert_lambda(c: &FlowConstants, lambda: f64, t0: f64) -> Result<f64, FlowError> {
    let mut t = t0;
    for _ in 0..80 {
        let s = closed_form(c, t)?;
        let d = closed_form_dlambda_dt(c, t)?;
        let dt = (s.lambda - lambda) / d;
        t -= dt;
        if t <= 0.0 {
            return Err(FlowError::ClosedFormDomain(t));
        }
        if dt.abs() < 1e-14 * t.max(1.0) {
            return Ok(t);
        }
    }
    Ok(t)
}

/// Neck estimate: the number of log scales K3 ~ (2/3)(4 A_max / 3)^{3/4}
/// and the diameter order e^{K3}.
pub fn neck_estimate(a_max: f64) -> (f64, f64) {
    let k3 = (2.0 / 3.0) * (4.0 * a_max / 3.0).powf(0.75);
    (k3, k3.exp())
}

/// The flow vector fields of the two vertex dictionaries coincide pointwise;
/// returns the max discrepancy of d(p_i^2)/d lambda over the two routes, and
/// asserts Im(a21) is constant along the Hermitian flow.
pub fn mirror_identity_check(sym: &SymCoupling, herm: &HermCoupling) -> Result<f64, FlowError> {
    let s1 = FlowState::from_sym(sym, 0.0);
    let s2 = FlowState::from_herm(herm, 0.0);
    let (r1, _) = flow_rhs(&s1)?;
    let (r2, dim) = flow_rhs(&s2)?;
    assert_eq!(dim, 0.0);
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        worst = worst.max((r1[k] - r2[k]).abs());
    }
    Ok(worst)
}
