//! Independent reference computations for the acceptance suite. Everything
//! here is deliberately separate from the solver implementations it checks:
//! plain quadratures, the complete elliptic integral via the
//! arithmetic-geometric mean, and a dense cyclic Jacobi eigensolver.

/// Complete elliptic integral K(m) = int_0^{pi/2} dphi / sqrt(1 - m sin^2),
/// via the arithmetic-geometric mean.
pub fn elliptic_k(m: f64) -> f64 {
    assert!((0.0..1.0).contains(&m));
    let mut a = 1.0f64;
    let mut b = (1.0 - m).sqrt();
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        a = an;
        b = bn;
        if (a - b).abs() < 1e-17 * a {
            break;
        }
    }
    std::f64::consts::PI / (2.0 * a)
}

/// Quarter period of the scalar-quartic brake orbit with turning amplitude
/// `u_max`: energy conservation gives
/// T/4 = int_0^{u_max} du / sqrt(2 (W(u) - W(u_max))), which the substitution
/// u = u_max sin(phi) reduces to K(m)/sqrt(a) with a = (2 - u_max^2)/2 and
/// m = u_max^2 / (2 - u_max^2).
pub fn quarter_period(u_max: f64) -> f64 {
    let a = 0.5 * (2.0 - u_max * u_max);
    let m = u_max * u_max / (2.0 - u_max * u_max);
    elliptic_k(m) / a.sqrt()
}

/// Turning amplitude for a given period: bisection of the period-amplitude
/// relation in log(1 - u_max^2).
pub fn turn_amplitude(t_period: f64) -> f64 {
    let target = 0.25 * t_period;
    // w = 1 - u_max^2, decreasing period as w grows
    let mut lo = (1e-15f64).ln();
    let mut hi = (1.0f64 - 1e-12).ln();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let w = mid.exp();
        let u = (1.0 - w).sqrt();
        if quarter_period(u) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (1.0 - (0.5 * (lo + hi)).exp()).sqrt()
}

/// Action of the scalar-quartic heteroclinic by the equipartition quadrature
/// int_{-1}^{1} sqrt(2 W(u)) du (Simpson rule; exact value 2 sqrt(2) / 3).
pub fn scalar_c0_quadrature() -> f64 {
    let n = 4000;
    let h = 2.0 / n as f64;
    let f = |u: f64| {
        let w = 0.25 * (1.0 - u * u) * (1.0 - u * u);
        (2.0 * w).sqrt()
    };
    let mut s = f(-1.0) + f(1.0);
    for k in 1..n {
        let u = -1.0 + k as f64 * h;
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    s * h / 3.0
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations,
/// ascending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>, tol: f64) -> Vec<f64> {
    let n = a.len();
    for sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < tol {
            break;
        }
        assert!(sweep < 99, "Jacobi failed to converge");
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigs.sort_by(|x, y| x.total_cmp(y));
    eigs
}

#[cfg(test)]
mod self_tests {
    use super::*;

    #[test]
    fn elliptic_k_small_m() {
        // K(0) = pi/2; series K(m) ~ pi/2 (1 + m/4) for small m
        assert!((elliptic_k(1e-12) - std::f64::consts::PI / 2.0).abs() < 1e-12);
        let m = 1e-4;
        let expect = std::f64::consts::PI / 2.0 * (1.0 + m / 4.0);
        assert!((elliptic_k(m) - expect).abs() < 1e-9);
    }

    #[test]
    fn small_oscillation_period() {
        // u_max -> 0: T -> 2 pi (curvature of -W at the center is 1)
        assert!((4.0 * quarter_period(1e-6) - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn c0_quadrature_matches_closed_form() {
        assert!((scalar_c0_quadrature() - 2.0 * 2.0f64.sqrt() / 3.0).abs() < 1e-10);
    }

    #[test]
    fn jacobi_on_known_matrix() {
        let a = vec![
            vec![2.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ];
        let eigs = jacobi_eigenvalues(a, 1e-14);
        let sqrt2 = 2.0f64.sqrt();
        for (e, expect) in eigs.iter().zip([2.0 - sqrt2, 2.0, 2.0 + sqrt2]) {
            assert!((e - expect).abs() < 1e-12);
        }
    }
}
