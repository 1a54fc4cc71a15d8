use mom_bayes::diagnostics::bvm_diagnostic;
use mom_bayes::experiments::{example2, LocationConfig};
use mom_bayes::inference::{sample, Chain, PosteriorOptions, RobustPosterior, SamplerConfig};
use mom_bayes::models::{median, Bounds, Dataset, FamilyKind, LikelihoodFamily, Prior};
use mom_bayes::rho::RhoSpec;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gaussian_data(n: usize, seed: u64) -> (LikelihoodFamily, Dataset) {
    let fam = LikelihoodFamily::new(
        FamilyKind::GaussianLocation { sigma: 1.0 },
        Bounds::new(vec![-20.0], vec![20.0]).unwrap(),
    )
    .unwrap();
    let data = fam.simulate(&[1.0], n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (fam, data)
}

// Block increments of the Gaussian location model are affine in the block
// mean, so their median is the increment at the median block mean and the
// absolute-loss L̂ is an exact parabola.
#[test]
fn absolute_loss_location_objective_is_a_parabola() {
    let (fam, data) = gaussian_data(600, 3);
    let options = PosteriorOptions {
        k: 40,
        rho: RhoSpec::absolute(),
        theta_prime: Some(vec![0.3]),
        ..PosteriorOptions::default()
    };
    let post = RobustPosterior::from_options(
        fam,
        Prior::uniform(Bounds::new(vec![-20.0], vec![20.0]).unwrap()),
        &data,
        &options,
    )
    .unwrap();
    let part = post.partition();
    let block_means: Vec<f64> = (0..part.k())
        .map(|j| part.block(j).iter().map(|&i| data.response()[i]).sum::<f64>() / part.n() as f64)
        .collect();
    let m = median(&block_means);
    for i in 0..200 {
        let theta = -3.0 + 0.03 * i as f64;
        let parabola = (theta * theta - 0.09) / 2.0 - (theta - 0.3) * m;
        let got = post.mom(&[theta]).unwrap().value;
        assert!(
            (got - parabola).abs() < 1e-12 * (1.0 + parabola.abs()),
            "θ = {theta}: {got} vs {parabola}"
        );
    }
}

#[test]
fn single_block_reduces_to_the_mle() {
    let (fam, data) = gaussian_data(500, 9);
    let post = RobustPosterior::from_options(
        fam,
        Prior::uniform(Bounds::new(vec![-20.0], vec![20.0]).unwrap()),
        &data,
        &PosteriorOptions {
            k: 1,
            ..PosteriorOptions::default()
        },
    )
    .unwrap();
    let mean = data.response().iter().sum::<f64>() / 500.0;
    let tilde = post.theta_tilde(2, 1).unwrap().theta[0];
    assert!((tilde - mean).abs() < 1e-6, "{tilde} vs {mean}");
}

#[test]
fn contaminated_location_example_stays_at_the_truth() {
    let sampler = SamplerConfig {
        draws: 1500,
        warmup: 1000,
        ..SamplerConfig::default()
    };
    let run = example2(&LocationConfig {
        seed: 11,
        sampler,
        ..LocationConfig::default()
    })
    .unwrap();
    assert!(
        (run.summary.mean[0] + 30.0).abs() < 0.5,
        "robust mean {}",
        run.summary.mean[0]
    );
    assert!(run.standard_mean > 360.0, "standard mean {}", run.standard_mean);
    assert!(run.bvm.ks_statistic[0] < 0.1);
    let (lo, hi) = run.summary.credible_intervals[0];
    assert!(lo < -30.0 && -30.0 < hi);
}

#[test]
fn sampled_draws_stay_in_the_domain() {
    let (fam, data) = gaussian_data(300, 5);
    let domain = Bounds::new(vec![0.9], vec![1.2]).unwrap();
    let fam = LikelihoodFamily::new(fam.kind(), domain.clone()).unwrap();
    let post = RobustPosterior::from_options(
        fam,
        Prior::uniform(domain.clone()),
        &data,
        &PosteriorOptions {
            k: 15,
            ..PosteriorOptions::default()
        },
    )
    .unwrap();
    let cfg = SamplerConfig {
        draws: 1000,
        warmup: 500,
        ..SamplerConfig::default()
    };
    let chains = sample(&post, &cfg, &[1.0]).unwrap();
    for c in &chains {
        assert!((0.0..=1.0).contains(&c.acceptance_rate));
        assert!((0..c.len()).all(|i| domain.contains(c.draw(i))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bvm_is_invariant_under_affine_recentering(
        shift in -50.0f64..50.0,
        scale in 0.1f64..10.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..400).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
        let chain = |x: Vec<f64>| Chain::from_parts(1, x, vec![0.0; 400], 0).unwrap();
        let base = bvm_diagnostic(&[chain(z.clone())], &[0.0], &DMatrix::from_element(1, 1, 1.0)).unwrap();
        let moved: Vec<f64> = z.iter().map(|v| shift + scale * v).collect();
        let other = bvm_diagnostic(&[chain(moved)], &[shift], &DMatrix::from_element(1, 1, scale * scale)).unwrap();
        prop_assert!((base.ks_statistic[0] - other.ks_statistic[0]).abs() < 1e-9);
    }
}
