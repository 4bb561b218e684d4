//! Brute-force reference implementations. Deliberately naive and independent
//! of the library code they check.
#![allow(dead_code)]

use rand::Rng;

/// Random feasible class `lo ≤ p ≤ hi` built around a random center.
pub fn random_class<R: Rng>(n: usize, max_width: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let center = random_pmf(n, rng);
    let lo = center.iter().map(|&c| c * (1.0 - rng.random::<f64>() * max_width.min(1.0))).collect();
    let hi = center.iter().map(|&c| (c + rng.random::<f64>() * max_width).min(1.0)).collect();
    (lo, hi)
}

/// Flat Dirichlet draw.
pub fn random_pmf<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Vertices of `{lo ≤ p ≤ hi, Σp = 1}`: every coordinate but one sits at a bound.
pub fn class_vertices(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    for free in 0..n {
        for mask in 0..(1u32 << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for j in 0..n {
                if j == free {
                    continue;
                }
                p[j] = if mask >> bit & 1 == 1 { hi[j] } else { lo[j] };
                bit += 1;
            }
            let rest: f64 = p.iter().sum();
            p[free] = 1.0 - rest;
            if p[free] >= lo[free] - 1e-12 && p[free] <= hi[free] + 1e-12 {
                out.push(p);
            }
        }
    }
    out
}

/// `min cᵀp` over the class by enumerating vertices.
pub fn min_linear_by_vertices(c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    class_vertices(lo, hi)
        .iter()
        .map(|p| p.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `min cᵀp` over the class: fill cheapest coordinates first.
pub fn min_linear_greedy(c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap());
    let mut p = lo.to_vec();
    let mut left = 1.0 - lo.iter().sum::<f64>();
    for j in order {
        let add = left.min(hi[j] - lo[j]).max(0.0);
        p[j] += add;
        left -= add;
    }
    p.iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Minimax error by search over rules `d`.
///
/// The worst-case detection `g(d) = min_p dᵀp` and `h(d) = 1 − dᵀq` shift by
/// `+c` and `−c` when `c·1` is added to `d`, so each grid point over the
/// differences `d_j − d_0` is paired with its best shift in closed form.
pub fn minimax_error_by_grid(lo: &[f64], hi: &[f64], q: &[f64], step: f64) -> f64 {
    let n = lo.len();
    let value = |d: &[f64]| {
        let g = min_linear_greedy(d, lo, hi);
        let h = 1.0 - d.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
        let (d_min, d_max) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo_c, hi_c) = (-d_min, (1.0 - d_max).max(-d_min));
        let c = ((h - g) / 2.0).clamp(lo_c, hi_c);
        (g + c).min(h - c)
    };
    let steps = (2.0 / step).round() as i64;
    let offset = |k: i64| -1.0 + k as f64 * step;
    let mut best = f64::NEG_INFINITY;
    match n {
        1 => best = value(&[0.0]),
        2 => {
            for a in 0..=steps {
                best = best.max(value(&[0.0, offset(a)]));
            }
        }
        3 => {
            let mut d = [0.0; 3];
            for a in 0..=steps {
                d[1] = offset(a);
                for b in 0..=steps {
                    d[2] = offset(b);
                    if (d[1] - d[2]).abs() <= 1.0 {
                        best = best.max(value(&d));
                    }
                }
            }
        }
        _ => panic!("grid oracle supports n ≤ 3"),
    }
    1.0 - best
}

pub fn kl_bits(p: &[f64], r: &[f64]) -> f64 {
    p.iter().zip(r).filter(|(&a, _)| a > 0.0).map(|(&a, &b)| a * (a / b).log2()).sum()
}

/// Exact `min_{p ∈ class} D(p‖r)`: stationarity gives `p_i = clamp(c·r_i)`,
/// with `c` fixed by unit mass.
pub fn kl_min_kkt(lo: &[f64], hi: &[f64], r: &[f64]) -> (f64, Vec<f64>) {
    let at = |c: f64| -> Vec<f64> { r.iter().zip(lo.iter().zip(hi)).map(|(&ri, (&l, &h))| (c * ri).clamp(l, h)).collect() };
    let (mut a, mut b) = (0.0, 1.0);
    while at(b).iter().sum::<f64>() < 1.0 && b < 1e300 {
        b *= 2.0;
    }
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if at(m).iter().sum::<f64>() < 1.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let p = at(0.5 * (a + b));
    (kl_bits(&p, r), p)
}

/// `min D(p‖r)` over a class with `n ≤ 3` by grid search over the free
/// coordinates, also visiting the ends of every feasible segment and the
/// polygon's vertices.
pub fn kl_min_grid(lo: &[f64], hi: &[f64], r: &[f64], step: f64) -> f64 {
    let n = lo.len();
    let mut best = class_vertices(lo, hi).iter().map(|p| kl_bits(p, r)).fold(f64::INFINITY, f64::min);
    let span = |a: f64, b: f64| -> Vec<f64> {
        if b < a {
            return Vec::new();
        }
        let k = ((b - a) / step).floor() as usize;
        let mut v: Vec<f64> = (0..=k).map(|i| a + i as f64 * step).collect();
        v.push(b);
        v
    };
    match n {
        1 => {}
        2 => {
            for x in span(lo[0].max(1.0 - hi[1]), hi[0].min(1.0 - lo[1])) {
                best = best.min(kl_bits(&[x, 1.0 - x], r));
            }
        }
        3 => {
            for x in span(lo[0].max(1.0 - hi[1] - hi[2]), hi[0].min(1.0 - lo[1] - lo[2])) {
                let a = lo[1].max(1.0 - x - hi[2]);
                let b = hi[1].min(1.0 - x - lo[2]);
                for y in span(a, b) {
                    let z = (1.0 - x - y).max(0.0);
                    best = best.min(kl_bits(&[x, y, z], r));
                }
            }
        }
        _ => panic!("grid oracle supports n ≤ 3"),
    }
    best
}
