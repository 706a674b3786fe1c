//! Independent brute-force references. Nothing here calls the library's
//! encoding, forward pass, set construction or joint-law code; only plain
//! accessors are used.

#![allow(dead_code)]

use persuasion::conformal::{calibrate, ConformalCalibration, ScoreKind, ScoreVariant};
use persuasion::domain::{Scenario, SignalingPolicy};
use persuasion::neural::{grad, loss, Encoding, Predictor};
use persuasion::robustopt::{delta_mech_model, delta_tv, robust_objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows drawn from a flat Dirichlet, with an occasional exact zero.
pub fn random_policy(rng: &mut impl Rng, n_states: usize, n_signals: usize) -> SignalingPolicy {
    let rows = (0..n_states)
        .map(|_| {
            let mut w: Vec<f64> = (0..n_signals)
                .map(|_| {
                    if rng.random::<f64>() < 0.1 {
                        0.0
                    } else {
                        -rng.random::<f64>().max(1e-300).ln()
                    }
                })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                w[0] = 1.0;
            }
            let t: f64 = w.iter().sum();
            w.iter().map(|v| v / t).collect()
        })
        .collect();
    SignalingPolicy::new(rows).unwrap()
}

pub fn features(scenario: &Scenario, y: usize, s: usize, pi: &SignalingPolicy) -> Vec<f64> {
    let mut f = vec![0.0; scenario.n_obs() + scenario.n_signals()];
    f[y] = 1.0;
    f[scenario.n_obs() + s] = 1.0;
    for x in 0..scenario.n_states() {
        for t in 0..scenario.n_signals() {
            f.push(pi.prob(x, t));
        }
    }
    f
}

/// ReLU MLP with softmax output, evaluated from the raw parameters.
pub fn mlp_probs(p: &Predictor, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    for l in 0..p.n_layers() {
        let (w, b) = (p.weights(l), p.biases(l));
        let n_in = h.len();
        let mut z: Vec<f64> = (0..b.len())
            .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * h[i]).sum::<f64>())
            .collect();
        if l + 1 < p.n_layers() {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        h = z;
    }
    let m = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = h.iter().map(|v| (v - m).exp()).collect();
    let t: f64 = e.iter().sum();
    e.iter().map(|v| v / t).collect()
}

pub fn brute_set(kind: &ScoreKind, threshold: f64, probs: &[f64]) -> Vec<usize> {
    let score = |u: usize| match kind.variant {
        ScoreVariant::Nll => -(probs[u] + kind.nll_epsilon).ln(),
        ScoreVariant::OneMinusProb => 1.0 - probs[u],
        ScoreVariant::Aps => probs.iter().filter(|&&q| q >= probs[u]).sum(),
        ScoreVariant::Indicator => {
            let top = (0..probs.len()).fold(0, |b, v| if probs[v] > probs[b] { v } else { b });
            if u == top {
                0.0
            } else {
                1.0
            }
        }
    };
    let set: Vec<usize> = (0..probs.len()).filter(|&u| score(u) <= threshold).collect();
    if set.is_empty() {
        vec![(0..probs.len()).fold(0, |b, v| if probs[v] > probs[b] { v } else { b })]
    } else {
        set
    }
}

pub fn brute_robust(
    scenario: &Scenario,
    pi: &SignalingPolicy,
    p: &Predictor,
    cal: &ConformalCalibration,
) -> f64 {
    let mut v = 0.0;
    for x in 0..scenario.n_states() {
        for y in 0..scenario.n_obs() {
            for s in 0..scenario.n_signals() {
                let w = scenario.prior().prob(x) * scenario.obs_likelihood(x, y) * pi.prob(x, s);
                let set = brute_set(cal.score_kind(), cal.threshold(), &mlp_probs(p, &features(scenario, y, s, pi)));
                let worst = set
                    .iter()
                    .map(|&u| scenario.sender_reward()[x][u])
                    .fold(f64::INFINITY, f64::min);
                v += w * worst;
            }
        }
    }
    v
}

pub fn brute_joint(scenario: &Scenario, pi: &SignalingPolicy) -> Vec<f64> {
    let mut j = Vec::new();
    for y in 0..scenario.n_obs() {
        for s in 0..scenario.n_signals() {
            j.push(
                (0..scenario.n_states())
                    .map(|x| scenario.prior().prob(x) * scenario.obs_likelihood(x, y) * pi.prob(x, s))
                    .sum(),
            );
        }
    }
    j
}

pub fn brute_tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn brute_delta_mech(scenario: &Scenario, p: &Predictor, a: &SignalingPolicy, b: &SignalingPolicy) -> f64 {
    let mut worst: f64 = 0.0;
    for y in 0..scenario.n_obs() {
        for s in 0..scenario.n_signals() {
            let pa = mlp_probs(p, &features(scenario, y, s, a));
            let pb = mlp_probs(p, &features(scenario, y, s, b));
            worst = worst.max(brute_tv(&pa, &pb));
        }
    }
    worst
}

/// A full-size predictor with sharpened random weights, so its sets are a
/// mix of singletons, pairs and full sets.
pub fn sharp_predictor(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Predictor {
    let d = scenario.n_obs() + scenario.n_signals() + scenario.n_states() * scenario.n_signals();
    let mut p = Predictor::new(&[d, 128, 64, scenario.n_actions()], 0.0, rng).unwrap();
    for l in 0..p.n_layers() {
        p.weights_mut(l).iter_mut().for_each(|w| *w *= 3.0);
        for b in p.biases_mut(l) {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    p
}

/// Calibration from scores of random `(policy, y, s, u)` draws.
pub fn random_calibration(
    scenario: &Scenario,
    p: &Predictor,
    kind: ScoreKind,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> ConformalCalibration {
    let scores: Vec<f64> = (0..300)
        .map(|_| {
            let pi = random_policy(rng, scenario.n_states(), scenario.n_signals());
            let (y, s) = (rng.random_range(0..scenario.n_obs()), rng.random_range(0..scenario.n_signals()));
            let u = rng.random_range(0..scenario.n_actions());
            kind.from_probs(&mlp_probs(p, &features(scenario, y, s, &pi)), u)
        })
        .collect();
    calibrate(kind, &scores, alpha).unwrap()
}

/// Largest absolute gap between library and brute force over `n` random
/// policies, for (robust objective, Δ_TV, Δ_mech).
pub fn oracle_gaps(scenario: &Scenario, n: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let p = sharp_predictor(scenario, &mut r);
    // An APS threshold of exactly 1 sits on the full-set score, where set
    // membership is decided by the last ulp of a probability sum.
    let cals = [
        random_calibration(scenario, &p, ScoreKind::nll(), 0.1, &mut r),
        random_calibration(scenario, &p, ScoreKind::aps(), 0.4, &mut r),
    ];
    assert!(cals[1].threshold() < 1.0 - 1e-9, "APS threshold on the boundary");
    let (ns, nm) = (scenario.n_states(), scenario.n_signals());
    let (mut g_obj, mut g_tv, mut g_mech) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n {
        let pi = random_policy(&mut r, ns, nm);
        let pi_hat = random_policy(&mut r, ns, nm);
        for cal in &cals {
            let lib = robust_objective(scenario, &pi, &p, cal).unwrap();
            g_obj = g_obj.max((lib - brute_robust(scenario, &pi, &p, cal)).abs());
        }
        let tv = brute_tv(&brute_joint(scenario, &pi), &brute_joint(scenario, &pi_hat));
        g_tv = g_tv.max((delta_tv(scenario, &pi, &pi_hat) - tv).abs());
        let mech = delta_mech_model(scenario, &p, &pi, &pi_hat).unwrap();
        g_mech = g_mech.max((mech - brute_delta_mech(scenario, &p, &pi, &pi_hat)).abs());
    }
    (g_obj, g_tv, g_mech)
}

/// Largest relative error between analytic and central-difference gradients
/// of the L2-regularized loss, over every parameter of a `15→8→3` network and
/// `n_batches` random batches. Entries where both are below `floor` in
/// magnitude are compared absolutely against `floor`.
pub fn gradient_check(n_batches: usize, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_batches {
        let mut p = Predictor::new(&[15, 8, 3], 0.0, &mut r).unwrap();
        let batch: Vec<(Encoding, usize)> = (0..16)
            .map(|_| {
                let f: Vec<f64> = (0..15).map(|_| r.random_range(-1.0..1.0)).collect();
                (Encoding::from_raw(f), r.random_range(0..3))
            })
            .collect();
        let l2 = 1e-3;
        let g = grad(&p, &batch, l2).unwrap();
        for l in 0..p.n_layers() {
            for i in 0..p.weights(l).len() {
                let orig = p.weights(l)[i];
                p.weights_mut(l)[i] = orig + H;
                let up = loss(&p, &batch, l2).unwrap();
                p.weights_mut(l)[i] = orig - H;
                let down = loss(&p, &batch, l2).unwrap();
                p.weights_mut(l)[i] = orig;
                worst = worst.max(rel(g.weights[l][i], (up - down) / (2.0 * H), FLOOR));
            }
            for i in 0..p.biases(l).len() {
                let orig = p.biases(l)[i];
                p.biases_mut(l)[i] = orig + H;
                let up = loss(&p, &batch, l2).unwrap();
                p.biases_mut(l)[i] = orig - H;
                let down = loss(&p, &batch, l2).unwrap();
                p.biases_mut(l)[i] = orig;
                worst = worst.max(rel(g.biases[l][i], (up - down) / (2.0 * H), FLOOR));
            }
        }
    }
    worst
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
