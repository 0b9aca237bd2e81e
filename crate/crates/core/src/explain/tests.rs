use ndarray::{s, ArrayView2};
use rand::Rng;

use super::*;
use crate::nn::{parameter_blocks, Activation, LayerSpec, NetworkSpec};
use crate::seed;

fn random_windows(n: usize, t: usize, f: usize, seed_: u64) -> Tensor3 {
    let mut rng = seed::rng(seed_);
    Tensor3::from_vec((n, t, f), (0..n * t * f).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn column_means(w: ArrayView2<'_, f64>) -> Vec<f64> {
    (0..w.ncols()).map(|j| w.column(j).mean().unwrap()).collect()
}

fn additive(weights: Vec<f64>) -> FnModel<impl Fn(ArrayView2<'_, f64>) -> Vec<f64> + Sync> {
    let f = weights.len();
    FnModel::new(f, 1, move |w| {
        vec![column_means(w).iter().zip(&weights).map(|(x, w)| x * w).sum()]
    })
}

fn small_net(f: usize, seed_: u64) -> Network {
    let spec = NetworkSpec::new(
        f,
        Some(4),
        vec![
            LayerSpec::lstm(5, 0.0),
            LayerSpec::dense(6, Activation::Relu),
            LayerSpec::dense(4, Activation::Softmax),
        ],
    );
    Network::new(spec, seed_).unwrap()
}

/// Zero every input weight that reads feature `j`.
fn silence_feature(net: &mut Network, j: usize) {
    let blocks = parameter_blocks(net.spec());
    let first = blocks.iter().find(|b| b.layer == 0 && b.rows == net.spec().input_features).unwrap();
    let (offset, cols) = (first.offset, first.cols);
    for c in 0..cols {
        net.params_mut()[offset + j * cols + c] = 0.0;
    }
}

#[test]
fn mask_extremes() {
    let x = random_windows(1, 4, 3, 1);
    let net = small_net(3, 2);
    let bg = Background::mean_of(&random_windows(20, 4, 3, 3)).unwrap();
    let all = mask_and_eval(&net, x.window(0), &[0, 1, 2], &bg).unwrap();
    assert_eq!(all, net.predict(&x).unwrap().row(0).to_vec());
    let none = mask_and_eval(&net, x.window(0), &[], &bg).unwrap();
    let filled = Tensor3::from_array(ndarray::Array3::from_shape_fn((1, 4, 3), |(_, _, j)| bg.values[j])).unwrap();
    assert_eq!(none, net.predict(&filled).unwrap().row(0).to_vec());
    assert!(mask_and_eval(&net, x.window(0), &[3], &bg).is_err());
}

#[test]
fn silenced_feature_does_not_matter() {
    let mut net = small_net(4, 5);
    silence_feature(&mut net, 2);
    let x = random_windows(1, 4, 4, 6);
    let bg = Background::mean_of(&random_windows(10, 4, 4, 7)).unwrap();
    for base in [vec![], vec![0], vec![1, 3], vec![0, 1, 3]] {
        let mut with = base.clone();
        with.push(2);
        let a = mask_and_eval(&net, x.window(0), &base, &bg).unwrap();
        let b = mask_and_eval(&net, x.window(0), &with, &bg).unwrap();
        assert_eq!(a, b);
    }
    for attr in exact_shapley_all(&net, x.window(0), &bg).unwrap() {
        assert!(attr.phi[2].abs() < 1e-15);
    }
}

#[test]
fn constant_model_gets_zero() {
    let m = FnModel::new(5, 2, |_| vec![0.3, -2.0]);
    let x = random_windows(1, 3, 5, 1);
    let bg = Background::from_values(vec![0.0; 5]).unwrap();
    for o in 0..2 {
        let a = exact_shapley(&m, x.window(0), &bg, o).unwrap();
        assert!(a.phi.iter().all(|&p| p == 0.0));
    }
}

#[test]
fn additive_closed_form() {
    let w = vec![0.5, -1.5, 2.0, 0.0, 3.25, -0.75, 1.0];
    let m = additive(w.clone());
    let x = random_windows(1, 6, 7, 9);
    let b: Vec<f64> = (0..7).map(|j| 0.1 * j as f64 - 0.3).collect();
    let bg = Background::from_values(b.clone()).unwrap();
    let a = exact_shapley(&m, x.window(0), &bg, 0).unwrap();
    let xbar = column_means(x.window(0));
    for i in 0..7 {
        assert!((a.phi[i] - w[i] * (xbar[i] - b[i])).abs() < 1e-12, "feature {i}");
    }
    assert_eq!(a.phi[3], 0.0);
    assert!(a.efficiency_gap().abs() < 1e-12);
}

#[test]
fn symmetric_features_share_credit() {
    // f = x0 * x1 + x2 with x0 = x1
    let m = FnModel::new(3, 1, |w| {
        let m = column_means(w);
        vec![m[0] * m[1] + m[2]]
    });
    let mut x = random_windows(1, 5, 3, 11).into_array();
    let col = x.slice(s![0, .., 0]).to_owned();
    x.slice_mut(s![0, .., 1]).assign(&col);
    let x = Tensor3::from_array(x).unwrap();
    let bg = Background::from_values(vec![0.2, 0.2, 0.0]).unwrap();
    let a = exact_shapley(&m, x.window(0), &bg, 0).unwrap();
    assert!((a.phi[0] - a.phi[1]).abs() < 1e-15);
}

#[test]
fn efficiency_on_random_networks() {
    for s in 0..5 {
        let net = small_net(6, 100 + s);
        let x = random_windows(3, 4, 6, 200 + s);
        let bg = Background::mean_of(&random_windows(30, 4, 6, 300 + s)).unwrap();
        for i in 0..3 {
            let attrs = exact_shapley_all(&net, x.window(i), &bg).unwrap();
            let out = net.predict(&x.select(&[i])).unwrap();
            for a in &attrs {
                assert!(a.efficiency_gap().abs() < 1e-9);
                assert_eq!(a.value, out[[0, a.output_index]]);
            }
        }
    }
}

#[test]
fn linearity_over_model_sums() {
    let f = |w: ArrayView2<'_, f64>| {
        let m = column_means(w);
        vec![(m[0] * m[2]).tanh() + m[3].powi(2)]
    };
    let g = |w: ArrayView2<'_, f64>| {
        let m = column_means(w);
        vec![m[1].exp() * m[0] - m[3]]
    };
    let mf = FnModel::new(4, 1, f);
    let mg = FnModel::new(4, 1, g);
    let sum = FnModel::new(4, 1, move |w| vec![f(w)[0] + g(w)[0]]);
    let x = random_windows(1, 3, 4, 21);
    let bg = Background::from_values(vec![0.1, -0.2, 0.3, 0.0]).unwrap();
    let (a, b, c) = (
        exact_shapley(&mf, x.window(0), &bg, 0).unwrap(),
        exact_shapley(&mg, x.window(0), &bg, 0).unwrap(),
        exact_shapley(&sum, x.window(0), &bg, 0).unwrap(),
    );
    for i in 0..4 {
        assert!((a.phi[i] + b.phi[i] - c.phi[i]).abs() < 1e-12);
    }
}

#[test]
fn exact_refuses_too_many_features() {
    let m = FnModel::new(21, 1, |_| vec![0.0]);
    let x = random_windows(1, 2, 21, 1);
    let bg = Background::from_values(vec![0.0; 21]).unwrap();
    let err = exact_shapley(&m, x.window(0), &bg, 0).unwrap_err();
    assert!(matches!(err, Error::Capacity { features: 21, limit: 20 }));
    assert!(err.to_string().contains("sampled"));
    assert_eq!(err.exit_code(), 5);
}

fn interacting(f: usize) -> FnModel<impl Fn(ArrayView2<'_, f64>) -> Vec<f64> + Sync> {
    FnModel::new(f, 2, |w| {
        let m = column_means(w);
        let a: f64 = m.windows(2).map(|p| p[0] * p[1]).sum::<f64>() + m[0].sin();
        vec![a, (m.iter().sum::<f64>()).tanh() * m[m.len() - 1]]
    })
}

#[test]
fn exhaustive_permutations_match_exact() {
    let m = interacting(4);
    let x = random_windows(1, 3, 4, 31);
    let bg = Background::from_values(vec![0.05, -0.1, 0.2, 0.0]).unwrap();
    let exact = exact_shapley_all(&m, x.window(0), &bg).unwrap();
    let sampled = sampled_shapley_all(&m, x.window(0), &bg, 24, 7).unwrap();
    for (e, s) in exact.iter().zip(&sampled) {
        for i in 0..4 {
            assert!((e.phi[i] - s.phi[i]).abs() < 1e-9);
        }
        assert!(s.std_errors.iter().all(|&v| v == 0.0));
    }
    // any other count samples at random
    let more = sampled_shapley_all(&m, x.window(0), &bg, 25, 7).unwrap();
    assert!(more[0].std_errors.iter().any(|&v| v > 0.0));
}

#[test]
fn sampled_is_seeded() {
    let m = interacting(6);
    let x = random_windows(1, 3, 6, 32);
    let bg = Background::from_values(vec![0.0; 6]).unwrap();
    let a = sampled_shapley(&m, x.window(0), &bg, 50, 9, 1).unwrap();
    let b = sampled_shapley(&m, x.window(0), &bg, 50, 9, 1).unwrap();
    assert_eq!(a, b);
    let c = sampled_shapley(&m, x.window(0), &bg, 50, 10, 1).unwrap();
    assert_ne!(a.phi, c.phi);
    assert!(a.efficiency_gap().abs() < 1e-12);
}

#[test]
fn sampled_error_shrinks_with_more_permutations() {
    let m = interacting(8);
    let x = random_windows(1, 3, 8, 33);
    let bg = Background::from_values(vec![0.0; 8]).unwrap();
    let exact = exact_shapley(&m, x.window(0), &bg, 0).unwrap();
    let err = |n: usize| {
        (0..10)
            .map(|s| {
                let a = sampled_shapley(&m, x.window(0), &bg, n, s, 0).unwrap();
                a.phi.iter().zip(&exact.phi).map(|(p, e)| (p - e).abs()).sum::<f64>()
            })
            .sum::<f64>()
    };
    assert!(err(1000) < err(20));
}

#[test]
fn background_windows_average() {
    let net = small_net(3, 41);
    let x = random_windows(1, 4, 3, 42);
    let train = random_windows(12, 4, 3, 43);
    let bg = Background::mean_of(&train).unwrap().with_windows(train.select(&[0, 5, 9])).unwrap();
    let attrs = exact_shapley_all(&net, x.window(0), &bg).unwrap();
    let base = net.predict(&train.select(&[0, 5, 9])).unwrap();
    for a in &attrs {
        let expected = base.column(a.output_index).mean().unwrap();
        assert!((a.base_value - expected).abs() < 1e-12);
        assert!(a.efficiency_gap().abs() < 1e-9);
    }
}

fn names(f: usize) -> Vec<String> {
    (0..f).map(|j| format!("f{j}")).collect()
}

#[test]
fn constant_model_ranks_by_index() {
    let m = FnModel::new(5, 4, |_| vec![0.25; 4]);
    let train = random_windows(10, 3, 5, 1);
    let test = random_windows(6, 3, 5, 2);
    let (r, attrs) = rank_features(&m, &train, &test, &names(5), Estimator::Exact, &RankConfig::default()).unwrap();
    assert_eq!(r.order(), vec![0, 1, 2, 3, 4]);
    assert!(r.entries.iter().all(|e| e.importance == 0.0));
    assert_eq!(attrs.len(), 6);
}

#[test]
fn ranking_follows_weights_and_ignores_sample_order() {
    let m = additive(vec![0.1, 3.0, -0.5, 0.0, -2.0]);
    let train = random_windows(40, 3, 5, 3);
    let test = random_windows(15, 3, 5, 4);
    let mut rev: Vec<usize> = (0..15).collect();
    rev.reverse();
    let reversed = test.select(&rev);
    for est in [
        Estimator::Exact,
        Estimator::Sampled {
            n_permutations: 30,
            seed: 5,
        },
    ] {
        let (a, _) = rank_features(&m, &train, &test, &names(5), est, &RankConfig::default()).unwrap();
        let (b, _) = rank_features(&m, &train, &reversed, &names(5), est, &RankConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.order()[..3], [1, 4, 2]);
        assert_eq!(a.rank_of(3), Some(5));
    }
}

#[test]
fn ranking_csv_round_trip() {
    let r = FeatureRanking::from_importances(&names(4), &[0.5, 2.0, 0.5, 0.125]).unwrap();
    assert_eq!(r.order(), vec![1, 0, 2, 3]);
    let mut buf = Vec::new();
    write_ranking_csv(&r, &mut buf, &["config_hash: abc".into()]).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# config_hash: abc\nfeature,importance,rank\nf1,2,1\n"));
    assert_eq!(FeatureRanking::read_csv(buf.as_slice(), &names(4)).unwrap(), r);
    assert!(FeatureRanking::from_importances(&names(2), &[1.0, -1.0]).is_err());
}

/// Softmax over `z = W mean(x)`, two features.
fn linear_softmax() -> FnModel<impl Fn(ArrayView2<'_, f64>) -> Vec<f64> + Sync> {
    FnModel::new(2, 3, |w| {
        let m = column_means(w);
        let z = [m[0] - m[1], 2.0 * m[1], -0.5 * m[0]];
        let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    })
}

#[test]
fn two_player_closed_form() {
    let m = linear_softmax();
    let x = random_windows(1, 2, 2, 51);
    let bg = Background::from_values(vec![0.3, -0.4]).unwrap();
    let e = local_explanation(&m, x.window(0), &bg, Estimator::Exact, 7).unwrap();
    let v = |c: &[usize]| mask_and_eval(&m, x.window(0), c, &bg).unwrap();
    let (v0, v1, v2, v12) = (v(&[]), v(&[0]), v(&[1]), v(&[0, 1]));
    for a in &e.attributions {
        let o = a.output_index;
        let phi0 = 0.5 * ((v1[o] - v0[o]) + (v12[o] - v2[o]));
        let phi1 = 0.5 * ((v2[o] - v0[o]) + (v12[o] - v1[o]));
        assert!((a.phi[0] - phi0).abs() < 1e-15 && (a.phi[1] - phi1).abs() < 1e-15);
        assert_eq!(a.sample_id, 7);
    }
    let pred = &e.attributions[e.predicted];
    assert!(pred.efficiency_gap().abs() < 1e-12);
    assert_eq!(e.predicted, crate::nn::argmax(v12.iter()));
}

#[test]
fn duplicate_columns_get_equal_credit() {
    let m = FnModel::new(3, 1, |w| {
        let m = column_means(w);
        vec![(m[0] + m[1]).sin() * m[2]]
    });
    let mut x = random_windows(1, 4, 3, 61).into_array();
    let col = x.slice(s![0, .., 1]).to_owned();
    x.slice_mut(s![0, .., 0]).assign(&col);
    let x = Tensor3::from_array(x).unwrap();
    let bg = Background::from_values(vec![0.1, 0.1, 0.5]).unwrap();
    let e = local_explanation(&m, x.window(0), &bg, Estimator::Exact, 0).unwrap();
    assert!((e.attributions[0].phi[0] - e.attributions[0].phi[1]).abs() < 1e-15);
}

#[test]
fn local_records_are_one_line_per_output() {
    let m = linear_softmax();
    let x = random_windows(2, 2, 2, 71);
    let bg = Background::from_values(vec![0.0, 0.0]).unwrap();
    let ex: Vec<_> = (0..2)
        .map(|i| local_explanation(&m, x.window(i), &bg, Estimator::Exact, i).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_local_records(&ex, &names(2), Some("h"), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    let rec: LocalRecord = serde_json::from_str(lines[4]).unwrap();
    assert_eq!((rec.sample_id, rec.output_index), (1, 1));
    assert_eq!(rec.config_hash.as_deref(), Some("h"));
    assert_eq!(rec.phi, ex[1].attributions[1].phi);
}

#[test]
fn network_and_background_shapes_must_agree() {
    let net = small_net(3, 1);
    let x = random_windows(1, 4, 4, 2);
    let bg = Background::from_values(vec![0.0; 4]).unwrap();
    assert!(matches!(exact_shapley_all(&net, x.window(0), &bg), Err(Error::Shape(_))));
}
