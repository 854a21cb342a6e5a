//! Matrix exponential by scaling and squaring with a degree-13 Padé
//! approximant (Higham 2005).

use num_complex::Complex64;

use crate::gaussian::CMatrix;

const B: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA_13: f64 = 5.371920351148152;

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(m: &CMatrix, k: f64) -> CMatrix {
    m * Complex64::new(k, 0.0)
}

pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return a.clone();
    }
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = scaled(a, 0.5f64.powi(s));
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * (scaled(&a6, B[13]) + scaled(&a4, B[11]) + scaled(&a2, B[9]));
    let u = &a * (inner_u + scaled(&a6, B[7]) + scaled(&a4, B[5]) + scaled(&a2, B[3]) + scaled(&id, B[1]));
    let inner_v = &a6 * (scaled(&a6, B[12]) + scaled(&a4, B[10]) + scaled(&a2, B[8]));
    let v = inner_v + scaled(&a6, B[6]) + scaled(&a4, B[4]) + scaled(&a2, B[2]) + scaled(&id, B[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for a scaled argument");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zero_and_diagonal() {
        let z = CMatrix::zeros(3, 3);
        assert_eq!(expm(&z), CMatrix::identity(3, 3));
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(0.0, 2.0),
            c(-3.0, 0.5),
        ]));
        let e = expm(&d);
        for i in 0..3 {
            assert!((e[(i, i)] - d[(i, i)].exp()).norm() < 1e-14 * e[(i, i)].norm().max(1.0));
        }
    }

    #[test]
    fn rotation_generator() {
        // exp(θ [[0, 1], [-1, 0]]) = [[cos θ, sin θ], [-sin θ, cos θ]]
        for theta in [0.1, 1.0, 7.5, 40.0] {
            let g = CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(theta, 0.0), c(-theta, 0.0), c(0.0, 0.0)]);
            let e = expm(&g);
            let (s, co) = theta.sin_cos();
            let want = CMatrix::from_row_slice(2, 2, &[c(co, 0.0), c(s, 0.0), c(-s, 0.0), c(co, 0.0)]);
            assert!((e - want).camax() < 1e-13 * theta.max(1.0), "θ={theta}");
        }
    }

    #[test]
    fn nilpotent_is_truncated_series() {
        let n = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0),
                c(2.0, 1.0),
                c(0.5, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(-3.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
            ],
        );
        let want = CMatrix::identity(3, 3) + &n + &n * &n * c(0.5, 0.0);
        assert!((expm(&n) - want).camax() < 1e-13);
    }

    #[test]
    fn anti_hermitian_gives_unitary() {
        let h = CMatrix::from_fn(6, 6, |i, j| {
            let x = ((i * 7 + j * 3) % 5) as f64 - 2.0;
            let y = ((i * 2 + j * 5) % 7) as f64 - 3.0;
            c(x, y)
        });
        let h = (&h + h.adjoint()) * c(0.0, 0.9);
        let u = expm(&h);
        assert!((&u * u.adjoint() - CMatrix::identity(6, 6)).camax() < 1e-12);
    }
}
