// scratch debug
use ghlab::negvertex::*;
use ghlab::coupling::*;
use num_complex::Complex64;

fn main() {
    let a = HermCoupling::identity();
    let mesh = SMesh::build(&SMeshParams::coarse(6.0));
    println!("nodes: {}", mesh.nodes.len());
    let bump = |t: f64, lo: f64, hi: f64| -> f64 {
        if t <= lo || t >= hi { 0.0 } else { let s = (t - lo) / (hi - lo); (s * (1.0 - s)).powi(5) * 1024.0 }
    };
    // split by piece
    let mut pa = 0.0; let mut pb = 0.0;
    for n in &mesh.nodes {
        let v = bump(n.y1, 0.8, 1.6) * area_density(&a, n) * n.w;
        if n.piece == 0 { pa += v; } else { pb += v; }
    }
    println!("piece A: {pa:.10}, piece B: {pb:.10}, total {:.10}", pa + pb);
    // chi-off bump fully inside piece B
    let mut pb2 = 0.0; let mut pa2 = 0.0;
    for n in &mesh.nodes {
        let v = bump(n.y1, 1.8, 2.6) * area_density(&a, n) * n.w;
        if n.piece == 0 { pa2 += v; } else { pb2 += v; }
    }
    // direct reference in eta1 chart
    let refint = |lo: f64, hi: f64| -> f64 {
        let (gx, gw) = ghlab::numverify::gauss_legendre(40);
        let mut direct = 0.0;
        let mid = 0.5*(lo+hi); let half = 0.5*(hi-lo);
        for (sx, wx) in gx.iter().zip(&gw) {
            for (sy, wy) in gx.iter().zip(&gw) {
                let x1 = 0.5 * (sx + 1.0);
                let y1 = mid + half * sy;
                let eta1 = Complex64::new(x1, y1);
                let z1 = (Complex64::i() * TAU * eta1).exp();
                let z2 = Complex64::new(1.0, 0.0) - z1;
                let c = Complex64::new(1.0, 0.0) - 1.0 / z1;
                let rho = a.a11 * c.norm_sqr() + 2.0 * (a.a12 * c).re + a.a22;
                let slope2 = (z1 / z2).norm_sqr();
                direct += bump(y1, lo, hi) * rho * slope2 * wx * wy * 0.5 * half;
            }
        }
        direct
    };
    println!("bump[0.8,1.6]: mesh total vs ref: {:.10} vs {:.10}", pa + pb, refint(0.8, 1.6));
    println!("bump[1.8,2.6]: A {pa2:.2e} B {pb2:.10} vs ref {:.10}", refint(1.8, 2.6));
}
