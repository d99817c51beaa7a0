use itertools::Itertools;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stokeslet::density::ParticleCloud;
use stokeslet::transport::{pairing_from_plan, w1_approx, w1_exact, SinkhornOptions};
use stokeslet::Vec3;

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, weights: Option<&[f64]>) -> ParticleCloud {
    let pos: Vec<Vec3> = (0..n)
        .map(|_| {
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let w = weights
        .map(|w| w.to_vec())
        .unwrap_or_else(|| vec![1.0 / n as f64; n]);
    ParticleCloud::new(pos, w, "r").unwrap()
}

/// Independent min-cost-flow: successive shortest augmenting paths with Bellman–Ford.
fn ssp_oracle(a: &ParticleCloud, b: &ParticleCloud) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    let c = |i: usize, j: usize| (a.positions()[i] - b.positions()[j]).norm();
    let mut flow = vec![vec![0.0; n2]; n1];
    let mut sa = a.weights().to_vec();
    let mut sb = b.weights().to_vec();
    let total: f64 = sa.iter().sum();
    let mut shipped = 0.0;
    while total - shipped > 1e-13 * total {
        // nodes: rows 0..n1, columns n1..n1+n2; source = virtual over rows with residual supply
        let n = n1 + n2;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        for i in 0..n1 {
            if sa[i] > 1e-15 {
                dist[i] = 0.0;
            }
        }
        for _ in 0..n {
            let mut changed = false;
            for i in 0..n1 {
                if dist[i].is_finite() {
                    for j in 0..n2 {
                        let d = dist[i] + c(i, j);
                        if d < dist[n1 + j] - 1e-15 {
                            dist[n1 + j] = d;
                            prev[n1 + j] = i;
                            changed = true;
                        }
                    }
                }
            }
            for j in 0..n2 {
                if dist[n1 + j].is_finite() {
                    for i in 0..n1 {
                        if flow[i][j] > 1e-15 {
                            let d = dist[n1 + j] - c(i, j);
                            if d < dist[i] - 1e-15 {
                                dist[i] = d;
                                prev[i] = n1 + j;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let end = (0..n2)
            .filter(|&j| sb[j] > 1e-15 && dist[n1 + j].is_finite())
            .min_by(|&x, &y| dist[n1 + x].total_cmp(&dist[n1 + y]))
            .unwrap();
        let mut path = vec![n1 + end];
        let mut v = n1 + end;
        while prev[v] != usize::MAX {
            v = prev[v];
            path.push(v);
        }
        path.reverse();
        let start = path[0];
        let mut amount = sa[start].min(sb[end]);
        for w in path.windows(2) {
            if w[0] >= n1 {
                amount = amount.min(flow[w[1]][w[0] - n1]);
            }
        }
        for w in path.windows(2) {
            if w[0] < n1 {
                flow[w[0]][w[1] - n1] += amount;
            } else {
                flow[w[1]][w[0] - n1] -= amount;
            }
        }
        sa[start] -= amount;
        sb[end] -= amount;
        shipped += amount;
    }
    (0..n1)
        .cartesian_product(0..n2)
        .map(|(i, j)| flow[i][j] * c(i, j))
        .sum()
}

fn brute_force(a: &ParticleCloud, b: &ParticleCloud) -> f64 {
    let n = a.len();
    let w = a.weights()[0];
    (0..n)
        .permutations(n)
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| w * (a.positions()[i] - b.positions()[j]).norm())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn exact_matches_brute_force_on_small_equal_weight_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=6 {
        for _ in 0..20 {
            let a = random_cloud(&mut rng, n, None);
            let b = random_cloud(&mut rng, n, None);
            let (w, _) = w1_exact(&a, &b).unwrap();
            let bf = brute_force(&a, &b);
            assert!(
                (w - bf).abs() <= 1e-12 * bf.max(1.0),
                "n = {n}: {w} vs {bf}"
            );
        }
    }
}

#[test]
fn exact_matches_flow_oracle_with_unequal_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n1, n2) in [(7, 4), (15, 20), (30, 25)] {
        let mut wa: Vec<f64> = (0..n1).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut wb: Vec<f64> = (0..n2).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (sa, sb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
        wa.iter_mut().for_each(|w| *w /= sa);
        wb.iter_mut().for_each(|w| *w /= sb);
        let a = random_cloud(&mut rng, n1, Some(&wa));
        let b = random_cloud(&mut rng, n2, Some(&wb));
        let (w, plan) = w1_exact(&a, &b).unwrap();
        let oracle = ssp_oracle(&a, &b);
        assert!((w - oracle).abs() <= 1e-10, "{n1}x{n2}: {w} vs {oracle}");
        assert!(plan.marginal_error() <= 1e-9);
        assert!((plan.cost - plan.cost_on(&a, &b)).abs() < 1e-15);
    }
}

#[test]
fn plan_invariants_at_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_cloud(&mut rng, 200, None);
    let b = random_cloud(&mut rng, 200, None);
    let (w, plan) = w1_exact(&a, &b).unwrap();
    assert!(plan.marginal_error() <= 1e-9);
    let p = pairing_from_plan(&plan);
    for (m, w) in p.source_masses().iter().zip(a.weights()) {
        assert!((m - w).abs() <= 1e-12);
    }
    let (approx, aplan) = w1_approx(&a, &b, &SinkhornOptions::default()).unwrap();
    assert!(approx >= w * (1.0 - 1e-12));
    assert!((approx - w) / w <= 0.02, "{approx} vs {w}");
    assert!(aplan.marginal_error() <= 1e-9);
}

#[test]
fn smaller_regularization_is_closer() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = random_cloud(&mut rng, 100, None);
    let b = random_cloud(&mut rng, 100, None);
    let (w, _) = w1_exact(&a, &b).unwrap();
    let gap = |reg: f64| {
        let opts = SinkhornOptions {
            reg: Some(reg),
            ..Default::default()
        };
        (w1_approx(&a, &b, &opts).unwrap().0 - w).abs()
    };
    assert!(gap(1e-3) < gap(1e-2));
    assert!(gap(1e-2) < gap(1e-1));
}

#[test]
fn triangle_inequality_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let n = rng.gen_range(1..12);
        let a = random_cloud(&mut rng, n, None);
        let b = random_cloud(&mut rng, n, None);
        let c = random_cloud(&mut rng, n, None);
        let ab = w1_exact(&a, &b).unwrap().0;
        let bc = w1_exact(&b, &c).unwrap().0;
        let ac = w1_exact(&a, &c).unwrap().0;
        assert!(ac <= ab + bc + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_is_symmetric(seed in any::<u64>(), n in 1usize..20, m in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cloud(&mut rng, n, None);
        let b0 = random_cloud(&mut rng, m, None);
        let b = b0.scaled_weights(a.total_mass() / b0.total_mass()).unwrap();
        prop_assume!((a.total_mass() - b.total_mass()).abs() <= 1e-12 * a.total_mass());
        let ab = w1_exact(&a, &b).unwrap().0;
        let ba = w1_exact(&b, &a).unwrap().0;
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(w1_exact(&a, &a).unwrap().0, 0.0);
    }
}
