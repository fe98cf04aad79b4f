//! Fixed-size matrix helpers for per-node frame matrices (`n ≤ 3`).
//! In two dimensions only the upper-left 2×2 block is used.

pub type Mat = [[f64; 3]; 3];

pub const ZERO: Mat = [[0.0; 3]; 3];

pub fn identity(n: usize) -> Mat {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn det(n: usize, m: &Mat) -> f64 {
    match n {
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        _ => unreachable!(),
    }
}

/// Cofactor matrix, i.e. the gradient of `det` with respect to the entries.
pub fn cofactor(n: usize, m: &Mat) -> Mat {
    let mut c = ZERO;
    match n {
        2 => {
            c[0][0] = m[1][1];
            c[0][1] = -m[1][0];
            c[1][0] = -m[0][1];
            c[1][1] = m[0][0];
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                    let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                    c[i][j] = m[i1][j1] * m[i2][j2] - m[i1][j2] * m[i2][j1];
                }
            }
        }
        _ => unreachable!(),
    }
    c
}

pub fn mul(n: usize, a: &Mat, b: &Mat) -> Mat {
    let mut c = ZERO;
    for i in 0..n {
        for j in 0..n {
            c[i][j] = (0..n).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn transpose(m: &Mat) -> Mat {
    let mut t = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

pub fn scale(n: usize, m: &Mat, c: f64) -> Mat {
    let mut out = ZERO;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = c * m[i][j];
        }
    }
    out
}

pub fn frobenius_sq(n: usize, m: &Mat) -> f64 {
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| m[i][j] * m[i][j])
        .sum()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the eigenvectors as columns of the second matrix.
pub fn symmetric_eigen(n: usize, a: &Mat) -> ([f64; 3], Mat) {
    let mut a = *a;
    let mut v = identity(n);
    let scale = frobenius_sq(n, &a).sqrt();
    if scale == 0.0 {
        return ([0.0; 3], v);
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
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
                for row in v.iter_mut().take(n) {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut ev = [0.0; 3];
    for i in 0..n {
        ev[i] = a[i][i];
    }
    (ev, v)
}

/// Largest eigenvalue of a symmetric matrix with a unit eigenvector, in
/// closed form (trigonometric formula for `n = 3`).
pub fn top_eigen(n: usize, a: &Mat) -> (f64, [f64; 3]) {
    match n {
        2 => {
            let mean = 0.5 * (a[0][0] + a[1][1]);
            let half = 0.5 * (a[0][0] - a[1][1]);
            let lambda = mean + (half * half + a[0][1] * a[0][1]).sqrt();
            let c1 = [lambda - a[1][1], a[0][1]];
            let c2 = [a[0][1], lambda - a[0][0]];
            let (n1, n2) = (c1[0].hypot(c1[1]), c2[0].hypot(c2[1]));
            let v = if n1 == 0.0 && n2 == 0.0 {
                [1.0, 0.0, 0.0]
            } else if n1 >= n2 {
                [c1[0] / n1, c1[1] / n1, 0.0]
            } else {
                [c2[0] / n2, c2[1] / n2, 0.0]
            };
            (lambda, v)
        }
        3 => {
            let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
            let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
            if p2 <= 1e-300 {
                return (q, [1.0, 0.0, 0.0]);
            }
            let p = (p2 / 6.0).sqrt();
            let mut b = *a;
            for (i, row) in b.iter_mut().enumerate().take(3) {
                row[i] -= q;
                for v in row.iter_mut() {
                    *v /= p;
                }
            }
            let r = (0.5 * det(3, &b)).clamp(-1.0, 1.0);
            if r < -1.0 + 1e-6 {
                // Two nearly equal top eigenvalues: the trigonometric formula
                // loses half the digits there.
                return jacobi_top(a);
            }
            let lambda = q + 2.0 * p * (r.acos() / 3.0).cos();
            let mut m = *a;
            for (i, row) in m.iter_mut().enumerate().take(3) {
                row[i] -= lambda;
            }
            let cross = |x: &[f64; 3], y: &[f64; 3]| {
                [
                    x[1] * y[2] - x[2] * y[1],
                    x[2] * y[0] - x[0] * y[2],
                    x[0] * y[1] - x[1] * y[0],
                ]
            };
            let mut best = [1.0, 0.0, 0.0];
            let mut best_norm = 0.0;
            for c in [cross(&m[0], &m[1]), cross(&m[0], &m[2]), cross(&m[1], &m[2])] {
                let nc = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
                if nc > best_norm {
                    best_norm = nc;
                    best = [c[0] / nc, c[1] / nc, c[2] / nc];
                }
            }
            if best_norm <= 1e-12 * p2.sqrt() {
                return jacobi_top(a);
            }
            (lambda, best)
        }
        _ => unreachable!(),
    }
}

fn jacobi_top(a: &Mat) -> (f64, [f64; 3]) {
    let (ev, vecs) = symmetric_eigen(3, a);
    let k = (0..3).fold(0, |k, i| if ev[i] > ev[k] { i } else { k });
    (ev[k], [vecs[0][k], vecs[1][k], vecs[2][k]])
}

/// Largest singular value together with unit left/right singular vectors,
/// so that `d σ / d M = u vᵀ` wherever σ is simple.
pub fn spectral_norm_with_vectors(n: usize, m: &Mat) -> (f64, [f64; 3], [f64; 3]) {
    let mtm = mul(n, &transpose(m), m);
    let (lambda, v) = top_eigen(n, &mtm);
    let sigma = lambda.max(0.0).sqrt();
    let mut u = [0.0; 3];
    if sigma > 0.0 {
        for i in 0..n {
            u[i] = (0..n).map(|k| m[i][k] * v[k]).sum::<f64>() / sigma;
        }
    }
    (sigma, u, v)
}

/// Singular value decomposition `M = U Σ Vᵀ` with singular values in
/// descending order; `U` and `V` hold the singular vectors as columns.
pub fn svd(n: usize, m: &Mat) -> (Mat, [f64; 3], Mat) {
    let mtm = mul(n, &transpose(m), m);
    let (ev, vecs) = symmetric_eigen(n, &mtm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ev[b].total_cmp(&ev[a]));
    let mut sigma = [0.0; 3];
    let mut v = ZERO;
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = ev[j].max(0.0).sqrt();
        for i in 0..n {
            v[i][k] = vecs[i][j];
        }
    }
    let mut u = ZERO;
    let floor = 1e-12 * sigma[0].max(1e-300);
    let mut filled = 0;
    for k in 0..n {
        if sigma[k] <= floor {
            break;
        }
        for i in 0..n {
            u[i][k] = (0..n).map(|j| m[i][j] * v[j][k]).sum::<f64>() / sigma[k];
        }
        filled += 1;
    }
    // Complete U to an orthonormal basis where M is rank deficient.
    for k in filled..n {
        let mut best = [0.0; 3];
        let mut best_norm = 0.0;
        for e in 0..n {
            let mut c = [0.0; 3];
            c[e] = 1.0;
            for j in 0..k {
                let d: f64 = (0..n).map(|i| c[i] * u[i][j]).sum();
                for (i, ci) in c.iter_mut().enumerate().take(n) {
                    *ci -= d * u[i][j];
                }
            }
            let nc = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nc > best_norm {
                best_norm = nc;
                best = c;
            }
        }
        for i in 0..n {
            u[i][k] = best[i] / best_norm;
        }
    }
    (u, sigma, v)
}

/// Second derivatives of `det` as a bilinear form on `n × n` matrices,
/// indexed by `i·n + a`.
pub fn det_hessian(n: usize, m: &Mat) -> [[f64; 9]; 9] {
    let mut h = [[0.0; 9]; 9];
    match n {
        2 => {
            h[0][3] = 1.0;
            h[3][0] = 1.0;
            h[1][2] = -1.0;
            h[2][1] = -1.0;
        }
        3 => {
            // ∂²det/∂M_ia ∂M_jb = ε_ijk ε_abc M_kc.
            let eps = |i: usize, j: usize, k: usize| -> f64 {
                if i == j || j == k || i == k {
                    0.0
                } else if (i + 1) % 3 == j {
                    1.0
                } else {
                    -1.0
                }
            };
            for i in 0..3 {
                for a in 0..3 {
                    for j in 0..3 {
                        for b in 0..3 {
                            if i == j || a == b {
                                continue;
                            }
                            let (k, c) = (3 - i - j, 3 - a - b);
                            h[i * 3 + a][j * 3 + b] = eps(i, j, k) * eps(a, b, c) * m[k][c];
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    h
}

/// Hessian of the top singular value as a bilinear form (indexed as in
/// [`det_hessian`]); gaps below `1e-8 σ₁²` are clamped.
pub fn spectral_norm_hessian(n: usize, m: &Mat) -> [[f64; 9]; 9] {
    let (u, s, v) = svd(n, m);
    let mut h = [[0.0; 9]; 9];
    let s1 = s[0];
    if s1 == 0.0 {
        return h;
    }
    for j in 1..n {
        let gap = (s1 * s1 - s[j] * s[j]).max(1e-8 * s1 * s1);
        let mut a = [0.0; 9];
        let mut b = [0.0; 9];
        for i in 0..n {
            for c in 0..n {
                a[i * n + c] = u[i][0] * v[c][j];
                b[i * n + c] = u[i][j] * v[c][0];
            }
        }
        for p in 0..n * n {
            for q in 0..n * n {
                h[p][q] += (s1 * (a[p] * a[q] + b[p] * b[q]) + s[j] * (a[p] * b[q] + b[p] * a[q])) / gap;
            }
        }
    }
    h
}

/// Projects a symmetric `k × k` matrix (`k ≤ 9`) onto the positive
/// semidefinite cone in place.
pub fn clamp_psd(k: usize, h: &mut [[f64; 9]; 9]) {
    let mut a = *h;
    let mut v = [[0.0; 9]; 9];
    for (i, row) in v.iter_mut().enumerate().take(k) {
        row[i] = 1.0;
    }
    let scale: f64 = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| a[i][j] * a[i][j])
        .sum::<f64>()
        .sqrt();
    if scale == 0.0 {
        return;
    }
    for _sweep in 0..50 {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..k {
                    let (arp, arq) = (a[r][p], a[r][q]);
                    a[r][p] = c * arp - s * arq;
                    a[r][q] = s * arp + c * arq;
                }
                for r in 0..k {
                    let (apr, aqr) = (a[p][r], a[q][r]);
                    a[p][r] = c * apr - s * aqr;
                    a[q][r] = s * apr + c * aqr;
                }
                for row in v.iter_mut().take(k) {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            h[i][j] = (0..k).map(|e| v[i][e] * a[e][e].max(0.0) * v[j][e]).sum();
        }
    }
}

pub fn spectral_norm(n: usize, m: &Mat) -> f64 {
    spectral_norm_with_vectors(n, m).0
}

/// All singular values in descending order.
pub fn singular_values(n: usize, m: &Mat) -> [f64; 3] {
    let mtm = mul(n, &transpose(m), m);
    let (ev, _) = symmetric_eigen(n, &mtm);
    let mut s: Vec<f64> = ev[..n].iter().map(|e| e.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut out = [0.0; 3];
    out[..n].copy_from_slice(&s);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_and_cofactor_agree() {
        let m = [[2.0, -1.0, 0.5], [0.3, 1.0, 4.0], [1.0, 2.0, -3.0]];
        let c = cofactor(3, &m);
        // Laplace expansion along each row reproduces det.
        for i in 0..3 {
            let row: f64 = (0..3).map(|j| m[i][j] * c[i][j]).sum();
            assert!((row - det(3, &m)).abs() < 1e-12);
        }
        let m2 = [[1.0, 2.0, 0.0], [3.0, 4.0, 0.0], [0.0; 3]];
        assert_eq!(det(2, &m2), -2.0);
    }

    #[test]
    fn spectral_norm_of_diagonal_and_rotation() {
        let d = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]];
        assert!((spectral_norm(2, &d) - 2.0).abs() < 1e-14);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let r = [[3.0 * c, -3.0 * s, 0.0], [3.0 * s, 3.0 * c, 0.0], [0.0, 0.0, 1.0]];
        assert!((spectral_norm(3, &r) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn closed_form_top_eigenpair_matches_jacobi() {
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for n in [2, 3] {
            for _ in 0..500 {
                let mut m = ZERO;
                for row in m.iter_mut().take(n) {
                    for v in row.iter_mut().take(n) {
                        *v = next();
                    }
                }
                let a = mul(n, &transpose(&m), &m);
                let (lambda, v) = top_eigen(n, &a);
                let (ev, _) = symmetric_eigen(n, &a);
                let top = ev[..n].iter().cloned().fold(f64::MIN, f64::max);
                assert!((lambda - top).abs() < 1e-12 * top.max(1.0));
                for i in 0..n {
                    let av: f64 = (0..n).map(|k| a[i][k] * v[k]).sum();
                    assert!((av - lambda * v[i]).abs() < 1e-9 * top.max(1.0));
                }
            }
            let (l, _) = top_eigen(n, &identity(n));
            assert!((l - 1.0).abs() < 1e-15);
        }
    }

    fn numeric_hessian(n: usize, m: &Mat, f: impl Fn(&Mat) -> f64) -> [[f64; 9]; 9] {
        let mut h = [[0.0; 9]; 9];
        let e = 1e-4;
        for p in 0..n * n {
            for q in 0..n * n {
                let at = |dp: f64, dq: f64| {
                    let mut x = *m;
                    x[p / n][p % n] += dp;
                    x[q / n][q % n] += dq;
                    f(&x)
                };
                h[p][q] = (at(e, e) - at(e, -e) - at(-e, e) + at(-e, -e)) / (4.0 * e * e);
            }
        }
        h
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let m3 = [[1.0, 2.0, 0.3], [-1.0, 0.5, 2.0], [0.2, 1.0, -1.0]];
        let m2 = [[1.5, 0.4, 0.0], [-0.3, 0.7, 0.0], [0.0; 3]];
        for (n, m) in [(3, m3), (2, m2)] {
            for (exact, f) in [
                (
                    det_hessian(n, &m),
                    Box::new(move |x: &Mat| det(n, x)) as Box<dyn Fn(&Mat) -> f64>,
                ),
                (
                    spectral_norm_hessian(n, &m),
                    Box::new(move |x: &Mat| spectral_norm(n, x)),
                ),
            ] {
                let num = numeric_hessian(n, &m, f);
                for p in 0..n * n {
                    for q in 0..n * n {
                        assert!(
                            (exact[p][q] - num[p][q]).abs() < 1e-5,
                            "{n} {p} {q} {} {}",
                            exact[p][q],
                            num[p][q]
                        );
                    }
                }
            }
            let (u, s, v) = svd(n, &m);
            for i in 0..n {
                for j in 0..n {
                    let r: f64 = (0..n).map(|k| u[i][k] * s[k] * v[j][k]).sum();
                    assert!((r - m[i][j]).abs() < 1e-12);
                }
            }
        }
        let orig = det_hessian(3, &m3);
        let mut h = orig;
        clamp_psd(9, &mut h);
        for k in 0..20 {
            let x: Vec<f64> = (0..9).map(|i| ((i * 7 + k * 13) as f64).sin()).collect();
            let q: f64 = (0..9)
                .flat_map(|i| (0..9).map(move |j| (i, j)))
                .map(|(i, j)| x[i] * h[i][j] * x[j])
                .sum();
            assert!(q >= -1e-12);
        }
        // Projection keeps the positive part: ⟨H⁺, H⟩ = ‖H⁺‖².
        let a: f64 = (0..9)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .map(|(i, j)| h[i][j] * orig[i][j])
            .sum();
        let b: f64 = (0..9)
            .flat_map(|i| (0..9).map(move |j| (i, j)))
            .map(|(i, j)| h[i][j] * h[i][j])
            .sum();
        assert!(b > 0.0 && (a - b).abs() < 1e-10 * b);
    }

    #[test]
    fn singular_vectors_reproduce_sigma() {
        let m = [[1.0, 2.0, 3.0], [-1.0, 0.5, 2.0], [0.0, 1.0, -1.0]];
        let (s, u, v) = spectral_norm_with_vectors(3, &m);
        let mut umv = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                umv += u[i] * m[i][j] * v[j];
            }
        }
        assert!((umv - s).abs() < 1e-12 * s);
        let sv = singular_values(3, &m);
        assert!((sv[0] - s).abs() < 1e-12);
        let prod = sv[0] * sv[1] * sv[2];
        assert!((prod - det(3, &m).abs()).abs() < 1e-10);
    }
}
