//! Matrix exponential by scaling and squaring with Padé approximants
//! (degree chosen from the 1-norm, up to 13).

use crate::lie::{eye, CMat, C64};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
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

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(a: &CMat, c: f64) -> CMat {
    a.map(|z| z * c)
}

fn solve_pade(u: CMat, v: CMat) -> CMat {
    let p = &v + &u;
    let q = &v - &u;
    q.lu().solve(&p).expect("Padé denominator is singular")
}

fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    let n = a.nrows();
    let id = eye(n);
    let a2 = a * a;
    let mut even = scaled(&id, b[0]);
    let mut odd = scaled(&id, b[1]);
    let mut pow = id.clone();
    let m = b.len() - 1;
    let mut k = 2;
    while k <= m {
        pow = &pow * &a2;
        even += scaled(&pow, b[k]);
        if k + 1 <= m {
            odd += scaled(&pow, b[k + 1]);
        }
        k += 2;
    }
    solve_pade(a * odd, even)
}

fn pade13(a: &CMat) -> CMat {
    let n = a.nrows();
    let id = eye(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let inner_u = scaled(&a6, b[13]) + scaled(&a4, b[11]) + scaled(&a2, b[9]);
    let u = a * (&a6 * inner_u + scaled(&a6, b[7]) + scaled(&a4, b[5]) + scaled(&a2, b[3]) + scaled(&id, b[1]));
    let inner_v = scaled(&a6, b[12]) + scaled(&a4, b[10]) + scaled(&a2, b[8]);
    let v = &a6 * inner_v + scaled(&a6, b[6]) + scaled(&a4, b[4]) + scaled(&a2, b[2]) + scaled(&id, b[0]);
    solve_pade(u, v)
}

/// `exp(a)` for a square complex matrix.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let nrm = norm1(a);
    if nrm == 0.0 {
        return eye(n);
    }
    for (m, theta) in THETA {
        if nrm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = ((nrm / THETA13).log2().ceil()).max(0.0) as i32;
    let a_s = scaled(a, 0.5f64.powi(s));
    let mut r = pade13(&a_s);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Principal logarithm of a unit complex number, returned as `i·arg`.
pub fn log_unit(z: C64) -> C64 {
    C64::new(z.norm().ln(), z.arg())
}
