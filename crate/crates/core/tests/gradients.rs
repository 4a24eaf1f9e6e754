//! Central finite-difference checks of every analytic gradient.

use fimgate_core::fim::{correlation_matrix, first_layer_jacobian, Centering, CorrelationMatrix};
use fimgate_core::gating::{
    decision_backward, decision_forward, stochastic_forward, stochastic_mu_gradient, CorrelationLayout,
    DecisionUnit, StochasticGate,
};
use fimgate_core::nnet::{self, Network};
use fimgate_core::trainer::{loss_and_gradients, penalty_gradients, variance_penalty, VariancePenalty};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1e-8 + a.abs().max(b.abs()))
}

fn assert_close(analytic: f64, numeric: f64, what: &str) {
    let ok = rel_err(analytic, numeric) < 1e-5 || (analytic - numeric).abs() < 1e-8;
    assert!(ok, "{what}: analytic {analytic} vs numeric {numeric}");
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5))
}

fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Every scalar parameter as (layer, is_bias, row, col).
fn param_sites(net: &Network) -> Vec<(usize, bool, usize, usize)> {
    let mut out = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        for i in 0..layer.weights.nrows() {
            for j in 0..layer.weights.ncols() {
                out.push((l, false, i, j));
            }
            out.push((l, true, i, 0));
        }
    }
    out
}

fn nudge(net: &Network, site: (usize, bool, usize, usize), delta: f64) -> Network {
    let mut n = net.clone();
    let (l, bias, i, j) = site;
    let layer = &mut n.layers_mut()[l];
    if bias {
        layer.bias[i] += delta;
    } else {
        layer.weights[(i, j)] += delta;
    }
    n
}

fn grad_at(grads: &nnet::ParamGrads, site: (usize, bool, usize, usize)) -> f64 {
    let (l, bias, i, j) = site;
    if bias {
        grads.layers[l].bias[i]
    } else {
        grads.layers[l].weights[(i, j)]
    }
}

struct Fixture {
    net: Network,
    x: DMatrix<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    x0: Vec<f64>,
    c: CorrelationMatrix,
}

fn fixture(seed: u64, hidden: &[usize]) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 6;
    let net = Network::new(d, hidden, seed).unwrap();
    let x = random_matrix(24, d, &mut rng);
    let y = random_vec(24, -1.0, 1.0, &mut rng);
    let alpha = random_vec(d, 0.1, 0.9, &mut rng);
    let x0 = random_vec(d, -0.5, 0.5, &mut rng);
    let c = correlation_matrix(&x, Centering::Centered).unwrap();
    Fixture {
        net,
        x,
        y,
        alpha,
        x0,
        c,
    }
}

fn mse(net: &Network, x: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let p = nnet::predict(net, x, alpha).unwrap();
    p.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / y.len() as f64
}

#[test]
fn mse_parameter_and_score_gradients() {
    for hidden in [vec![5], vec![4, 3]] {
        let f = fixture(11, &hidden);
        let (preds, trace) = nnet::forward(&f.net, &f.x, &f.alpha).unwrap();
        let resid: Vec<f64> = f.y.iter().zip(&preds).map(|(t, p)| t - p).collect();
        let grads = nnet::backward(&f.net, &trace, &resid).unwrap();
        for site in param_sites(&f.net) {
            let up = mse(&nudge(&f.net, site, H), &f.x, &f.y, &f.alpha);
            let dn = mse(&nudge(&f.net, site, -H), &f.x, &f.y, &f.alpha);
            assert_close(grad_at(&grads, site), (up - dn) / (2.0 * H), "parameter");
        }
        for j in 0..f.alpha.len() {
            let mut a = f.alpha.clone();
            a[j] += H;
            let up = mse(&f.net, &f.x, &f.y, &a);
            a[j] -= 2.0 * H;
            let dn = mse(&f.net, &f.x, &f.y, &a);
            assert_close(grads.alpha[j], (up - dn) / (2.0 * H), "score");
        }
    }
}

#[test]
fn input_gradient_matches_differences_in_x() {
    let f = fixture(3, &[7]);
    let g = nnet::input_gradient(&f.net, &f.x0, &f.alpha).unwrap();
    let eval = |x: &[f64]| {
        let m = DMatrix::from_row_slice(1, x.len(), x);
        nnet::predict(&f.net, &m, &f.alpha).unwrap()[0]
    };
    for j in 0..f.x0.len() {
        let mut x = f.x0.clone();
        x[j] += H;
        let up = eval(&x);
        x[j] -= 2.0 * H;
        let dn = eval(&x);
        assert_close(g[j], (up - dn) / (2.0 * H), "input gradient");
    }
}

#[test]
fn second_order_product_matches_differences() {
    for hidden in [vec![5], vec![3, 4]] {
        let f = fixture(5, &hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v = random_vec(f.alpha.len(), -1.0, 1.0, &mut rng);
        let s = |net: &Network, alpha: &[f64]| -> f64 {
            let g = nnet::input_gradient(net, &f.x0, alpha).unwrap();
            g.iter().zip(&v).map(|(a, b)| a * b).sum()
        };
        let (value, grads) = nnet::input_gradient_vjp(&f.net, &f.x0, &f.alpha, &v).unwrap();
        assert_close(value, s(&f.net, &f.alpha), "value");
        for site in param_sites(&f.net) {
            let num = (s(&nudge(&f.net, site, H), &f.alpha) - s(&nudge(&f.net, site, -H), &f.alpha)) / (2.0 * H);
            assert_close(grad_at(&grads, site), num, "vjp parameter");
        }
        for j in 0..f.alpha.len() {
            let mut a = f.alpha.clone();
            a[j] += H;
            let up = s(&f.net, &a);
            a[j] -= 2.0 * H;
            let dn = s(&f.net, &a);
            assert_close(grads.alpha[j], (up - dn) / (2.0 * H), "vjp score");
        }
    }
}

#[test]
fn penalty_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_matrix(40, 5, &mut rng);
    let c = correlation_matrix(&x, Centering::Centered).unwrap();
    let alpha = random_vec(5, 0.0, 1.0, &mut rng);
    let g = random_vec(5, -2.0, 2.0, &mut rng);
    let var_y = 0.7;
    let (da, dg) = penalty_gradients(&alpha, &c, &g, var_y).unwrap();
    for j in 0..5 {
        let mut a = alpha.clone();
        a[j] += H;
        let up = variance_penalty(&a, &c, &g, var_y).unwrap();
        a[j] -= 2.0 * H;
        let dn = variance_penalty(&a, &c, &g, var_y).unwrap();
        assert_close(da[j], (up - dn) / (2.0 * H), "penalty score");
        let mut gg = g.clone();
        gg[j] += H;
        let up = variance_penalty(&alpha, &c, &gg, var_y).unwrap();
        gg[j] -= 2.0 * H;
        let dn = variance_penalty(&alpha, &c, &gg, var_y).unwrap();
        assert_close(dg[j], (up - dn) / (2.0 * H), "penalty input gradient");
    }
}

#[test]
fn full_objective_gradients_match_differences() {
    for through_network in [true, false] {
        let f = fixture(21, &[6]);
        let penalty = VariancePenalty {
            correlation: &f.c,
            x0: &f.x0,
            var_y: 2.5,
            lambda_v: 0.3,
            through_network,
        };
        let total = |net: &Network, alpha: &[f64]| {
            loss_and_gradients(net, alpha, &f.x, &f.y, Some(&penalty)).unwrap().0.total
        };
        let (loss, grads) = loss_and_gradients(&f.net, &f.alpha, &f.x, &f.y, Some(&penalty)).unwrap();
        assert!(loss.var_penalty > 0.0);
        if !through_network {
            // g is held constant: only the direct score term is added.
            let plain = loss_and_gradients(&f.net, &f.alpha, &f.x, &f.y, None).unwrap().1;
            let g = nnet::input_gradient(&f.net, &f.x0, &f.alpha).unwrap();
            let (da, _) = penalty_gradients(&f.alpha, &f.c, &g, 2.5).unwrap();
            for j in 0..f.alpha.len() {
                assert_close(grads.alpha[j], plain.alpha[j] + 0.3 * da[j], "detached score");
            }
            for site in param_sites(&f.net) {
                assert_eq!(grad_at(&grads, site), grad_at(&plain, site));
            }
            continue;
        }
        for j in 0..f.alpha.len() {
            let mut a = f.alpha.clone();
            a[j] += H;
            let up = total(&f.net, &a);
            a[j] -= 2.0 * H;
            let dn = total(&f.net, &a);
            assert_close(grads.alpha[j], (up - dn) / (2.0 * H), "objective score");
        }
        for site in param_sites(&f.net) {
            let num = (total(&nudge(&f.net, site, H), &f.alpha) - total(&nudge(&f.net, site, -H), &f.alpha))
                / (2.0 * H);
            assert_close(grad_at(&grads, site), num, "objective parameter");
        }
    }
}

#[test]
fn decision_unit_chain_rule() {
    let f = fixture(4, &[5]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for layout in [CorrelationLayout::UpperTriangle, CorrelationLayout::Full] {
        let mut unit = DecisionUnit::zeros(f.alpha.len(), layout);
        unit.weights = random_matrix(unit.weights.nrows(), unit.weights.ncols(), &mut rng) * 0.2;
        unit.bias = random_vec(unit.bias.len(), -0.5, 0.5, &mut rng);
        let penalty = VariancePenalty {
            correlation: &f.c,
            x0: &f.x0,
            var_y: 1.0,
            lambda_v: 0.1,
            through_network: true,
        };
        let total = |u: &DecisionUnit| {
            let a: Vec<f64> = decision_forward(u, &f.c).unwrap().as_slice().to_vec();
            loss_and_gradients(&f.net, &a, &f.x, &f.y, Some(&penalty)).unwrap().0.total
        };
        let alpha: Vec<f64> = decision_forward(&unit, &f.c).unwrap().as_slice().to_vec();
        let (_, grads) = loss_and_gradients(&f.net, &alpha, &f.x, &f.y, Some(&penalty)).unwrap();
        let dg = decision_backward(&unit, &f.c, &grads.alpha).unwrap();
        for i in 0..unit.weights.nrows() {
            for j in (0..unit.weights.ncols()).step_by(3) {
                let mut u = unit.clone();
                u.weights[(i, j)] += H;
                let up = total(&u);
                u.weights[(i, j)] -= 2.0 * H;
                let dn = total(&u);
                assert_close(dg.weights[(i, j)], (up - dn) / (2.0 * H), "decision weight");
            }
            let mut u = unit.clone();
            u.bias[i] += H;
            let up = total(&u);
            u.bias[i] -= 2.0 * H;
            let dn = total(&u);
            assert_close(dg.bias[i], (up - dn) / (2.0 * H), "decision bias");
        }
    }
}

#[test]
fn stochastic_gate_gradient_in_interior() {
    let f = fixture(6, &[5]);
    let d = f.alpha.len();
    let mu = vec![0.3, 0.5, 0.6, 0.45, 0.2, 0.55];
    let eps = vec![0.1, -0.2, 0.15, 0.05, 0.3, -0.25];
    let gate = StochasticGate::new(mu.clone(), 1.0).unwrap();
    let alpha: Vec<f64> = stochastic_forward(&gate, &eps, true).unwrap().as_slice().to_vec();
    assert!(alpha.iter().all(|a| *a > 0.0 && *a < 1.0));
    let (preds, trace) = nnet::forward(&f.net, &f.x, &alpha).unwrap();
    let resid: Vec<f64> = f.y.iter().zip(&preds).map(|(t, p)| t - p).collect();
    let up_grad = nnet::backward(&f.net, &trace, &resid).unwrap().alpha;
    let g = stochastic_mu_gradient(&gate, &eps, &up_grad).unwrap();
    for j in 0..d {
        let eval = |delta: f64| {
            let mut m = mu.clone();
            m[j] += delta;
            let gate = StochasticGate::new(m, 1.0).unwrap();
            let a: Vec<f64> = stochastic_forward(&gate, &eps, true).unwrap().as_slice().to_vec();
            mse(&f.net, &f.x, &f.y, &a)
        };
        assert_close(g[j], (eval(H) - eval(-H)) / (2.0 * H), "stochastic mu");
    }
}

#[test]
fn stochastic_gate_blocks_gradient_when_clamped() {
    let gate = StochasticGate::new(vec![0.9, 0.1], 1.0).unwrap();
    let eps = [0.5, -0.5];
    let g = stochastic_mu_gradient(&gate, &eps, &[1.0, 1.0]).unwrap();
    assert_eq!(g, vec![0.0, 0.0]);
}

#[test]
fn first_layer_jacobian_matches_differences() {
    let f = fixture(12, &[4]);
    let (_, trace) = nnet::forward(&f.net, &f.x, &f.alpha).unwrap();
    for index in [0, 7, 23] {
        let jac = first_layer_jacobian(&f.net, &trace, index).unwrap();
        let row = DMatrix::from_fn(1, f.x.ncols(), |_, j| f.x[(index, j)]);
        let resid = |net: &Network| f.y[index] - nnet::predict(net, &row, &f.alpha).unwrap()[0];
        for a in 0..jac.nrows() {
            for j in 0..jac.ncols() {
                let site = (0, false, a, j);
                let num = (resid(&nudge(&f.net, site, H)) - resid(&nudge(&f.net, site, -H))) / (2.0 * H);
                assert_close(jac[(a, j)], num, "jacobian");
            }
        }
    }
    assert!(first_layer_jacobian(&f.net, &trace, 24).is_err());
}
