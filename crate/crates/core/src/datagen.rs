//! Reproducible data generation for the benchmark problems.
//!
//! All randomness flows through ChaCha8, a counter-based stream cipher RNG,
//! seeded explicitly per run. Identical seeds give bit-identical matrices on
//! every platform, which is what makes trace files reproducible.

use crate::mat::DenseMat;
use crate::numerics::qf;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// The stream used for a given seed.
pub fn rng_for_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// m×n matrix with i.i.d. N(0,1) entries, filled column-major.
pub fn gen_random_data(m: usize, n: usize, seed: u64) -> DenseMat {
    let mut rng = rng_for_seed(seed);
    gen_standard_normal(m, n, &mut rng)
}

/// N(0,1) matrix drawn from a caller-provided stream.
pub fn gen_standard_normal(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DenseMat {
    let data: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    DenseMat::from_vec(m, n, data)
}

/// Center each column to zero mean and scale it to unit Euclidean norm,
/// the usual preprocessing of a data matrix ahead of sparse PCA. Zero
/// columns are left at zero.
pub fn center_normalize_columns(a: &DenseMat) -> DenseMat {
    let (m, n) = a.shape();
    let mut out = a.clone();
    for j in 0..n {
        let col = out.col_mut(j);
        let mean = col.iter().sum::<f64>() / m as f64;
        for v in col.iter_mut() {
            *v -= mean;
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}

/// Random matrix with orthonormal columns: Q factor of a Gaussian n×r draw.
pub fn random_orthonormal(n: usize, r: usize, rng: &mut ChaCha8Rng) -> DenseMat {
    let g = gen_standard_normal(n, r, rng);
    qf(&g).expect("n >= r")
}

/// The five base signals behind the synthetic data, sampled on a grid of n
/// points over [0, 1]. Amplitude one, supports on essentially disjoint
/// subintervals: a box, a step, two windowed sinusoids, and a triangle.
pub fn synthetic_components(n: usize) -> [Vec<f64>; 5] {
    let pos = |i: usize| i as f64 / (n.max(2) - 1) as f64;
    let mut c: [Vec<f64>; 5] = Default::default();
    for k in 0..5 {
        c[k] = vec![0.0; n];
    }
    for i in 0..n {
        let t = pos(i);
        if (0.05..0.20).contains(&t) {
            c[0][i] = 1.0; // box
        }
        if (0.25..0.40).contains(&t) {
            c[1][i] = 1.0 - (t - 0.325).abs() / 0.075; // triangle
        }
        if (0.45..0.60).contains(&t) {
            c[2][i] = (2.0 * std::f64::consts::PI * (t - 0.45) / 0.15).sin();
        }
        if (0.65..0.80).contains(&t) {
            c[3][i] = (4.0 * std::f64::consts::PI * (t - 0.65) / 0.15).sin();
        }
        if t >= 0.85 {
            c[4][i] = 1.0; // step
        }
    }
    c
}

/// Synthetic data: the five components repeated m/5 times row-wise, plus
/// N(0, 0.64) noise. `m` must be divisible by 5.
pub fn gen_synthetic_data(m: usize, n: usize, seed: u64) -> Result<DenseMat, String> {
    if m % 5 != 0 {
        return Err(format!("row count {m} must be divisible by 5"));
    }
    let comps = synthetic_components(n);
    let reps = m / 5;
    let mut a = DenseMat::zeros(m, n);
    for (k, comp) in comps.iter().enumerate() {
        for rep in 0..reps {
            let row = k * reps + rep;
            for (j, &v) in comp.iter().enumerate() {
                a.set(row, j, v);
            }
        }
    }
    let mut rng = rng_for_seed(seed);
    let sigma = 0.8; // variance 0.64
    for j in 0..n {
        for i in 0..m {
            let noise: f64 = rng.sample(StandardNormal);
            a.set(i, j, a.get(i, j) + sigma * noise);
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{column_rank, sym_eig};

    #[test]
    fn random_data_is_deterministic_per_seed() {
        let a = gen_random_data(13, 7, 42);
        let b = gen_random_data(13, 7, 42);
        assert_eq!(a.as_slice(), b.as_slice());
        let c = gen_random_data(13, 7, 43);
        assert!(a.sub(&c).norm() > 0.0);
    }

    #[test]
    fn random_data_mean_is_small() {
        let a = gen_random_data(1000, 1000, 0);
        let mean: f64 = a.as_slice().iter().sum::<f64>() / 1e6;
        assert!(mean.abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn synthetic_noise_free_rank_at_most_five() {
        let comps = synthetic_components(60);
        let mut a = DenseMat::zeros(10, 60);
        for (k, comp) in comps.iter().enumerate() {
            for rep in 0..2 {
                for (j, &v) in comp.iter().enumerate() {
                    a.set(k * 2 + rep, j, v);
                }
            }
        }
        assert!(column_rank(&a.transpose()) <= 5);
    }

    #[test]
    fn synthetic_determinism_and_divisibility() {
        assert!(gen_synthetic_data(7, 10, 0).is_err());
        let a = gen_synthetic_data(10, 20, 5).unwrap();
        let b = gen_synthetic_data(10, 20, 5).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }

    #[test]
    fn synthetic_noise_variance_near_expected() {
        // 500x400 = 2e5 entries; subtract the noise-free part and estimate.
        let (m, n) = (500, 400);
        let noisy = gen_synthetic_data(m, n, 11).unwrap();
        let comps = synthetic_components(n);
        let reps = m / 5;
        let mut ss = 0.0;
        let mut mean = 0.0;
        for i in 0..m {
            let k = i / reps;
            for j in 0..n {
                let e = noisy.get(i, j) - comps[k][j];
                mean += e;
                ss += e * e;
            }
        }
        let cnt = (m * n) as f64;
        mean /= cnt;
        let var = ss / cnt - mean * mean;
        assert!((var - 0.64).abs() < 0.02, "noise variance {var}");
    }

    #[test]
    fn random_orthonormal_is_on_stiefel() {
        let mut rng = rng_for_seed(3);
        let q = random_orthonormal(12, 4, &mut rng);
        let g = q.t_matmul(&q);
        assert!(g.sub(&DenseMat::identity(4)).norm() < 1e-12);
    }

    #[test]
    fn eig_of_gram_is_sane() {
        // Smoke check tying datagen to numerics at test scale.
        let a = gen_random_data(9, 6, 1);
        let g = a.t_matmul(&a);
        let (eigs, _) = sym_eig(&g).unwrap();
        assert!(eigs.iter().all(|&l| l > -1e-10));
    }
}
