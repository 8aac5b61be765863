use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::sample::subsequence;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use triproxy::bounds::{bounds_outcome_proxy, extreme_contrasts, POINT_TOL};
use triproxy::fixtures::{fixture, Flavor};
use triproxy::npsem::dirichlet_flat;
use triproxy::pipelines::{atoms, estimands, identify, quantile, PipelineOptions};
use triproxy::prob::{ProbTensor, VarSpace};
use triproxy::relabel::{relabel, RelabelRule};
use triproxy::spectral::{construct_joint, hs_decompose, match_matrices, HsOptions};

fn tensor(seed: u64, cards: &[usize]) -> ProbTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = cards.iter().enumerate().map(|(i, &c)| VarSpace::indexed(format!("A{i}"), c)).collect();
    ProbTensor::new(axes, dirichlet_flat(&mut rng, cards.iter().product())).unwrap()
}

fn permutation(seed: u64, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

fn cards() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn marginalization_commutes_and_keeps_mass(seed: u64, cards in cards()) {
        let t = tensor(seed, &cards);
        let names: Vec<String> = t.axis_names().iter().map(|s| s.to_string()).collect();
        let (a, b) = (names[0].as_str(), names[names.len() - 1].as_str());
        let ab = t.marginalize(&[a]).unwrap().marginalize(&[b]).unwrap();
        let ba = t.marginalize(&[b]).unwrap().marginalize(&[a]).unwrap();
        prop_assert!(ab.max_abs_diff(&ba).unwrap() <= 1e-12);
        prop_assert!((ab.total_mass() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn conditioning_then_reweighting_restores_joint(seed: u64, cards in cards(), pick in subsequence(vec![0usize, 1], 1)) {
        let t = tensor(seed, &cards);
        let names: Vec<String> = t.axis_names().iter().map(|s| s.to_string()).collect();
        let given = names[pick[0]].as_str();
        let k = t.condition(&[given]).unwrap();
        for g in 0..k.given_configs() {
            prop_assert!((k.column(g).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
        let back = k.kernel_product(&t.marginal(&[given]).unwrap()).unwrap();
        let order: Vec<&str> = back.axis_names();
        prop_assert!(back.max_abs_diff(&t.permute_axes(&order).unwrap()).unwrap() <= 1e-12);
    }

    #[test]
    fn level_permutations_invert(seed: u64, cards in cards()) {
        let t = tensor(seed, &cards);
        let name = t.axis_names()[0].to_string();
        let p = permutation(seed ^ 1, cards[0]);
        let mut inv = vec![0; p.len()];
        for (i, &j) in p.iter().enumerate() {
            inv[j] = i;
        }
        let there = t.permute_levels(&name, &p).unwrap();
        prop_assert_eq!(there.permute_levels(&name, &inv).unwrap(), t);
    }

    #[test]
    fn quantiles_satisfy_tail_bounds(seed: u64, n in 1usize..8, tau in 0.001f64..=1.0) {
        let pmf = dirichlet_flat(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let levels: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let q = quantile(&levels, &pmf, tau).unwrap();
        let below: f64 = levels.iter().zip(&pmf).filter(|(l, _)| **l <= q).map(|(_, p)| p).sum();
        let above: f64 = levels.iter().zip(&pmf).filter(|(l, _)| **l >= q).map(|(_, p)| p).sum();
        prop_assert!(below >= tau - 1e-12);
        prop_assert!(above >= 1.0 - tau - 1e-12);
    }

    #[test]
    fn atom_tables_are_step_functions(values in prop::collection::vec(-2.0f64..2.0, 1..10), seed: u64) {
        let masses = dirichlet_flat(&mut ChaCha8Rng::seed_from_u64(seed), values.len());
        let a = atoms(&values, &masses);
        prop_assert!(a.windows(2).all(|w| w[0].value < w[1].value && w[0].cdf <= w[1].cdf));
        prop_assert!((a.last().unwrap().cdf - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn extremes_ignore_arm_orderings(seed: u64, k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m0 = dirichlet_flat(&mut rng, k);
        let m1 = dirichlet_flat(&mut rng, k);
        let p0 = dirichlet_flat(&mut rng, k);
        let p1 = dirichlet_flat(&mut rng, k);
        let base = extreme_contrasts(&m0, &p0, &m1, &p1);
        let (s0, s1) = (permutation(seed ^ 2, k), permutation(seed ^ 3, k));
        let pick = |v: &[f64], s: &[usize]| s.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let moved = extreme_contrasts(&pick(&m0, &s0), &pick(&p0, &s0), &pick(&m1, &s1), &pick(&p1, &s1));
        prop_assert_eq!(moved, base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_round_trip(seed: u64, k in 2usize..5, extra_z in 0usize..3, extra_v in 0usize..3, nc in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let mut m = DMatrix::zeros(rows, cols);
            for c in 0..cols {
                for (r, p) in dirichlet_flat(&mut rng, rows).into_iter().enumerate() {
                    m[(r, c)] = p;
                }
            }
            m
        };
        let (nz, nv) = (k + extra_z, k + extra_v);
        let fz = draw(nz, k);
        let fc = draw(nc, k);
        let fwv = draw(k, nv);
        let fv = draw(nv, 1).column(0).iter().copied().collect::<Vec<_>>();
        let sep = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).map(|(a, b)| (fc.column(a) - fc.column(b)).amax()).fold(1.0, f64::min);
        let s = fz.clone().svd(false, false).singular_values;
        prop_assume!(sep >= 0.05 && s[k - 1] / s[0] >= 1e-2);
        let sp = [VarSpace::indexed("Z", nz), VarSpace::indexed("C", nc), VarSpace::indexed("V", nv)];
        let joint = construct_joint(&fz, &fc, &fwv, &fv, sp).unwrap();
        let f = hs_decompose(&joint, "Z", "C", "V", &HsOptions::new(k).with_seed(seed)).unwrap();
        let got = [f.z_given_w.to_matrix(), f.c_given_w.to_matrix(), f.w_given_v.to_matrix().transpose()];
        let truth = [fz, fc, fwv.transpose()];
        let sigma = match_matrices(&truth, &got).unwrap();
        for (g, t) in got.iter().zip(&truth) {
            for (j, &s) in sigma.iter().enumerate() {
                prop_assert!((g.column(j) - t.column(s)).amax() <= 1e-7);
            }
        }
    }

    #[test]
    fn reports_ignore_latent_labels(seed in 0u64..1000, fig in prop::sample::select(vec!["fig2c", "fig3c", "fig4a", "fig5a"])) {
        let fx = fixture(fig, 3, Flavor::Generic, seed).unwrap();
        let m = identify(fx.design.unwrap(), &fx.observed_joint().unwrap(), &PipelineOptions::new(3)).unwrap();
        let base = estimands(&m).unwrap();
        prop_assert_eq!(estimands(&m.permute_latent(&permutation(seed, 3)).unwrap()).unwrap(), base);
    }

    #[test]
    fn model_reproduces_observed_outcome_law(seed in 0u64..1000, fig in prop::sample::select(vec!["fig2a", "fig3b", "fig4b"])) {
        let fx = fixture(fig, 2, Flavor::Generic, seed).unwrap();
        let joint = fx.observed_joint().unwrap();
        let m = identify(fx.design.unwrap(), &joint, &PipelineOptions::new(2)).unwrap();
        let implied = m.observed_yx().unwrap();
        prop_assert!(implied.max_abs_diff(&joint.marginal(&["Y", "X"]).unwrap()).unwrap() <= 1e-7);
        prop_assert!((m.wx_joint.total_mass() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn relabeling_is_idempotent(seed in 0u64..1000) {
        let fx = fixture("fig2a", 3, Flavor::MonotoneZ, seed).unwrap();
        let m = identify(fx.design.unwrap(), &fx.observed_joint().unwrap(), &PipelineOptions::new(3)).unwrap();
        let rule: RelabelRule = "mean-monotone".parse().unwrap();
        let once = relabel(&m, &rule, &[0.5]).unwrap();
        prop_assert_eq!(relabel(&once.base, &rule, &[0.5]).unwrap(), once);
    }

    #[test]
    fn bounds_are_ordered(seed in 0u64..1000) {
        let fx = fixture("fig6a", 2, Flavor::RankInvariant, seed).unwrap();
        let r = bounds_outcome_proxy(&fx.observed_joint().unwrap(), &PipelineOptions::new(2)).unwrap();
        prop_assert!(r.s_lower <= r.s_upper + 1e-9);
        prop_assert_eq!(r.point_identified, (r.s_upper - r.s_lower).abs() <= POINT_TOL);
    }
}
