//! Statistical validation of the two fBM samplers against the moments and
//! distributions implied by the covariance R_H. Every test uses a fixed
//! experiment seed and three-standard-error bands (or 1% Kolmogorov-Smirnov
//! levels), so they are deterministic reruns of a pre-registered draw.

use roughfou::fbm::{
    component_rng, fgn_autocov, CholeskyFbmSampler, FgnSampler, PathSeed, SampleGrid,
};
use statrs::distribution::{ContinuousCDF, Normal};

fn grid(t: f64, n: usize) -> SampleGrid<f64> {
    SampleGrid::new(t, n).unwrap()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One-sample KS statistic against the standard normal CDF.
fn ks_against_normal(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = normal.cdf(x);
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - cdf).abs());
    }
    d
}

/// Two-sample KS statistic.
fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

#[test]
fn cholesky_brownian_variance_matches_power_law() {
    // H = 0.4, T = 1, n = 256: Var(B_T) = T^{2H} = 1, estimated over 10^4
    // replicates; sample variance of a Gaussian has SE sigma^2 sqrt(2/(N-1)).
    let sampler = CholeskyFbmSampler::new(0.4, grid(1.0, 256)).unwrap();
    let reps = 10_000usize;
    let endpoints: Vec<f64> = (0..reps)
        .map(|p| {
            let mut rng = component_rng(PathSeed::new(101, p as u64), 0);
            sampler.sample_fgn(&mut rng).iter().sum()
        })
        .collect();
    let (mean, _) = mean_and_se(&endpoints);
    let var = endpoints.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (reps as f64 - 1.0);
    let want = 1.0f64; // T^{2H} with T = 1
    let se = want * (2.0 / (reps as f64 - 1.0)).sqrt();
    assert!(
        (var - want).abs() < 3.0 * se,
        "Var(B_T) = {var:.4} vs {want} (3 SE = {:.4})",
        3.0 * se
    );
}

#[test]
fn cholesky_components_are_independent() {
    // d = 2: cross-component correlation of B_T over 4000 replicates is zero
    // within three standard errors (SE of a sample correlation ~ 1/sqrt(N)).
    let sampler = CholeskyFbmSampler::new(0.4, grid(1.0, 128)).unwrap();
    let reps = 4000usize;
    let mut xs = Vec::with_capacity(reps);
    let mut ys = Vec::with_capacity(reps);
    for p in 0..reps {
        let path = sampler.sample_path(2, PathSeed::new(7, p as u64)).unwrap();
        xs.push(path.value(0, 128));
        ys.push(path.value(1, 128));
    }
    let (mx, _) = mean_and_se(&xs);
    let (my, _) = mean_and_se(&ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let corr = sxy / (sxx * syy).sqrt();
    assert!(corr.abs() < 3.0 / (reps as f64).sqrt(), "cross correlation {corr:.4}");
}

#[test]
fn circulant_increment_moments() {
    // H = 1/2: increments have mean 0 and variance h.
    let g = grid(2.0, 128);
    let h = g.mesh();
    let sampler = FgnSampler::new(0.5, g).unwrap();
    let reps = 10_000usize;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    let count = reps * 128;
    for p in 0..reps {
        let mut rng = component_rng(PathSeed::new(55, p as u64), 0);
        for dx in sampler.sample_fgn(&mut rng) {
            sum += dx;
            sumsq += dx * dx;
        }
    }
    let mean = sum / count as f64;
    let var = sumsq / count as f64 - mean * mean;
    // Increments within a path are dependent only through rounding here
    // (H = 1/2), so the iid standard errors apply.
    let mean_se = (h / count as f64).sqrt();
    assert!(mean.abs() < 3.0 * mean_se, "mean {mean:.2e}");
    let var_se = h * (2.0 / count as f64).sqrt();
    assert!((var - h).abs() < 3.0 * var_se, "var {var:.6e} vs h = {h:.6e}");
}

#[test]
fn circulant_endpoint_distribution_is_gaussian() {
    // Kolmogorov-Smirnov of B_T / T^H against N(0,1), 1000 replicates, 1%
    // level: D_crit = 1.628 / (sqrt(n) + 0.12 + 0.11/sqrt(n)).
    let g = grid(4.0, 512);
    let hurst = 0.4f64;
    let sampler = FgnSampler::new(hurst, g).unwrap();
    let reps = 1000usize;
    let mut normalized: Vec<f64> = (0..reps)
        .map(|p| {
            let mut rng = component_rng(PathSeed::new(202, p as u64), 0);
            let endpoint: f64 = sampler.sample_fgn(&mut rng).iter().sum();
            endpoint / 4.0f64.powf(hurst)
        })
        .collect();
    let d = ks_against_normal(&mut normalized);
    let sqrt_n = (reps as f64).sqrt();
    let crit = 1.628 / (sqrt_n + 0.12 + 0.11 / sqrt_n);
    assert!(d < crit, "KS statistic {d:.4} vs 1% critical {crit:.4}");
}

#[test]
fn circulant_lag_one_autocovariance() {
    // Sample autocovariance at lag 1 against ½(2^{2H} − 2) h^{2H}; at
    // H = 0.4 the unit-mesh value is -0.12944943670387586.
    let g = grid(1.0, 256);
    let hurst = 0.4f64;
    let h = g.mesh();
    let want = -0.129_449_436_703_875_86 * h.powf(2.0 * hurst);
    let sampler = FgnSampler::new(hurst, g).unwrap();
    let reps = 10_000usize;
    let estimates: Vec<f64> = (0..reps)
        .map(|p| {
            let mut rng = component_rng(PathSeed::new(303, p as u64), 0);
            let fgn = sampler.sample_fgn(&mut rng);
            let n = fgn.len();
            let mean = fgn.iter().sum::<f64>() / n as f64;
            fgn.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1) as f64
        })
        .collect();
    let (mean, se) = mean_and_se(&estimates);
    assert!(
        (mean - want).abs() < 3.0 * se,
        "lag-1 autocovariance {mean:.4e} vs {want:.4e} (3 SE = {:.2e})",
        3.0 * se
    );
    // Consistency of the sampler's own formula with the estimate.
    assert!((fgn_autocov(hurst, h, 1) - want).abs() < 1e-15);
}

#[test]
fn samplers_agree_in_law() {
    // Same seed-stream design, different algorithms: the endpoint samples
    // from the circulant and Cholesky routes pass a two-sample KS test at
    // the 1% level (1000 paths each).
    let g = grid(1.0, 256);
    let hurst = 0.4f64;
    let circulant = FgnSampler::new(hurst, g).unwrap();
    let cholesky = CholeskyFbmSampler::new(hurst, g).unwrap();
    let reps = 1000usize;
    let mut a: Vec<f64> = (0..reps)
        .map(|p| {
            let mut rng = component_rng(PathSeed::new(404, p as u64), 0);
            circulant.sample_fgn(&mut rng).iter().sum()
        })
        .collect();
    let mut b: Vec<f64> = (0..reps)
        .map(|p| {
            let mut rng = component_rng(PathSeed::new(505, p as u64), 0);
            cholesky.sample_fgn(&mut rng).iter().sum()
        })
        .collect();
    let d = ks_two_sample(&mut a, &mut b);
    let n = reps as f64;
    let crit = 1.628 * (2.0 / n).sqrt();
    assert!(d < crit, "two-sample KS {d:.4} vs 1% critical {crit:.4}");
}
