use diachron::viz::{conditional_affinities, row_perplexities, tsne, TsneConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Momentum can make the late KL trace wobble, so this checks overall
/// progress after exaggeration rather than step-by-step monotonicity.
#[test]
fn random_inputs_converge() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 100, 10);
        let c = conditional_affinities(&refs(&x), 19.0).unwrap();
        assert!(row_perplexities(&c, 100).iter().all(|p| (p - 19.0).abs() < 1e-4));

        let cfg = TsneConfig::default();
        let r = tsne(&refs(&x), &cfg).unwrap();
        assert!(r.kl_divergence >= 0.0);
        let after_exaggeration = r.kl_history[cfg.exaggeration_iterations];
        assert!(
            r.kl_divergence < after_exaggeration,
            "seed {seed}: {} vs {after_exaggeration}",
            r.kl_divergence
        );
    }
}

/// Three tight clusters at the corners of an equilateral triangle should
/// come out as an (approximately) equilateral triangle of centroids.
#[test]
fn equidistant_clusters_stay_equidistant() {
    let corners = [[0.0, 0.0, 10.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0]];
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut x = Vec::new();
        for c in &corners {
            for _ in 0..10 {
                x.push(
                    c.iter()
                        .map(|v| v + 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect::<Vec<f64>>(),
                );
            }
        }
        let cfg = TsneConfig {
            perplexity: 20.0,
            seed,
            ..Default::default()
        };
        let r = tsne(&refs(&x), &cfg).unwrap();
        let centroid = |k: usize| {
            let pts = &r.coords[k * 10..(k + 1) * 10];
            [
                pts.iter().map(|p| p[0]).sum::<f64>() / 10.0,
                pts.iter().map(|p| p[1]).sum::<f64>() / 10.0,
            ]
        };
        let (a, b, c) = (centroid(0), centroid(1), centroid(2));
        let sides = [dist(a, b), dist(b, c), dist(a, c)];
        let mean = sides.iter().sum::<f64>() / 3.0;
        for s in sides {
            assert!((s - mean).abs() / mean < 0.05, "seed {seed}: sides {sides:?}");
        }
    }
}

fn silhouette(coords: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = coords.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = [0.0f64; 2];
        let mut counts = [0usize; 2];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(coords[i], coords[j]);
                counts[labels[j]] += 1;
            }
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = sums[1 - labels[i]] / counts[1 - labels[i]] as f64;
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn planted_clusters_are_preserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut x = gaussian(&mut rng, 40, 8);
    let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
    for (v, &l) in x.iter_mut().zip(&labels) {
        v[0] += if l == 0 { 4.0 } else { -4.0 };
    }
    let r = tsne(
        &refs(&x),
        &TsneConfig {
            perplexity: 10.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(silhouette(&r.coords, &labels) > 0.0);
}
