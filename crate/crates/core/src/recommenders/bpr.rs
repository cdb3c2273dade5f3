use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::info;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::{InteractionLog, ItemId, UserId};
use crate::rng::{self, tag};

use super::{BprParams, ScoringModel};

/// Parameters touched by one `(user, positive, negative)` triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletParams {
    pub user: Vec<f64>,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub pos_bias: f64,
    pub neg_bias: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn margin(p: &TripletParams) -> f64 {
    (p.pos_bias - p.neg_bias) + dot(&p.user, &p.pos) - dot(&p.user, &p.neg)
}

/// `ln σ(x_pos - x_neg) - reg * ‖θ‖²` over the triplet's parameters, with
/// `x = bias_i + <user, item_i>`.
pub fn triplet_objective(p: &TripletParams, reg: f64) -> f64 {
    let norm = sq(&p.user) + sq(&p.pos) + sq(&p.neg) + p.pos_bias * p.pos_bias + p.neg_bias * p.neg_bias;
    -softplus(-margin(p)) - reg * norm
}

/// Analytic gradient of [`triplet_objective`], laid out like the input.
pub fn triplet_gradient(p: &TripletParams, reg: f64) -> TripletParams {
    // d/dx ln σ(x) = σ(-x)
    let g = 1.0 / (1.0 + margin(p).exp());
    TripletParams {
        user: p
            .user
            .iter()
            .zip(p.pos.iter().zip(&p.neg))
            .map(|(u, (i, j))| g * (i - j) - 2.0 * reg * u)
            .collect(),
        pos: p.user.iter().zip(&p.pos).map(|(u, i)| g * u - 2.0 * reg * i).collect(),
        neg: p.user.iter().zip(&p.neg).map(|(u, j)| -g * u - 2.0 * reg * j).collect(),
        pos_bias: g - 2.0 * reg * p.pos_bias,
        neg_bias: -g - 2.0 * reg * p.neg_bias,
    }
}

/// Matrix factorisation trained with the pairwise ranking loss by SGD on
/// sampled `(u, i⁺, i⁻)` triplets.
#[derive(Debug, Clone)]
pub struct BprModel {
    catalog: Vec<ItemId>,
    item_index: HashMap<ItemId, usize>,
    user_index: BTreeMap<UserId, usize>,
    factors: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    item_bias: Vec<f64>,
    skipped: usize,
}

impl BprModel {
    pub fn train(log: &InteractionLog, catalog: &[ItemId], params: &BprParams, seed: u64) -> Self {
        let mut catalog = catalog.to_vec();
        catalog.sort();
        catalog.dedup();
        let item_index: HashMap<ItemId, usize> = catalog.iter().enumerate().map(|(k, &i)| (i, k)).collect();

        let mut history: BTreeMap<UserId, BTreeSet<usize>> = BTreeMap::new();
        for e in log.events() {
            if let Some(&k) = item_index.get(&e.item) {
                history.entry(e.user).or_default().insert(k);
            }
        }
        let user_index: BTreeMap<UserId, usize> =
            history.keys().enumerate().map(|(k, &u)| (u, k)).collect();

        let f = params.factors;
        let mut rng = rng::stream(seed, &[tag::TRAIN, log.len() as u64, catalog.len() as u64]);
        let init = Normal::new(0.0, params.init_std).expect("validated std");
        let user_factors: Vec<f64> = (0..user_index.len() * f).map(|_| init.sample(&mut rng)).collect();
        let item_factors: Vec<f64> = (0..catalog.len() * f).map(|_| init.sample(&mut rng)).collect();
        let mut model = BprModel {
            item_bias: vec![0.0; catalog.len()],
            catalog,
            item_index,
            user_index,
            factors: f,
            user_factors,
            item_factors,
            skipped: 0,
        };

        let n_items = model.catalog.len();
        let mut positives: Vec<(usize, usize)> = Vec::new();
        let mut skipped = 0;
        for (u, items) in &history {
            if items.len() >= n_items {
                skipped += 1;
                continue;
            }
            let uk = model.user_index[u];
            positives.extend(items.iter().map(|&i| (uk, i)));
        }
        let user_hist: Vec<&BTreeSet<usize>> = history.values().collect();
        if skipped > 0 {
            info!("bpr: {skipped} users with full-catalog history yield no negatives");
        }
        model.skipped = skipped;

        let lr = params.learning_rate;
        let reg = params.regularization;
        for _ in 0..params.epochs {
            // Fisher-Yates
            for k in (1..positives.len()).rev() {
                let r = rng.random_range(0..=k);
                positives.swap(k, r);
            }
            for &(u, i) in &positives {
                for _ in 0..params.negatives_per_positive {
                    let j = loop {
                        let j = rng.random_range(0..n_items);
                        if !user_hist[u].contains(&j) {
                            break j;
                        }
                    };
                    model.step(u, i, j, lr, reg);
                }
            }
        }
        model
    }

    fn gather(&self, u: usize, i: usize, j: usize) -> TripletParams {
        let f = self.factors;
        TripletParams {
            user: self.user_factors[u * f..(u + 1) * f].to_vec(),
            pos: self.item_factors[i * f..(i + 1) * f].to_vec(),
            neg: self.item_factors[j * f..(j + 1) * f].to_vec(),
            pos_bias: self.item_bias[i],
            neg_bias: self.item_bias[j],
        }
    }

    fn step(&mut self, u: usize, i: usize, j: usize, lr: f64, reg: f64) {
        let f = self.factors;
        let p = self.gather(u, i, j);
        let g = triplet_gradient(&p, reg);
        for k in 0..f {
            self.user_factors[u * f + k] += lr * g.user[k];
            self.item_factors[i * f + k] += lr * g.pos[k];
            self.item_factors[j * f + k] += lr * g.neg[k];
        }
        self.item_bias[i] += lr * g.pos_bias;
        self.item_bias[j] += lr * g.neg_bias;
    }

    pub fn user_vector(&self, user: UserId) -> Option<&[f64]> {
        let f = self.factors;
        self.user_index.get(&user).map(|&u| &self.user_factors[u * f..(u + 1) * f])
    }

    pub fn item_vector(&self, item: ItemId) -> Option<&[f64]> {
        let f = self.factors;
        self.item_index.get(&item).map(|&i| &self.item_factors[i * f..(i + 1) * f])
    }

    pub fn item_bias(&self, item: ItemId) -> Option<f64> {
        self.item_index.get(&item).map(|&i| self.item_bias[i])
    }
}

impl ScoringModel for BprModel {
    fn name(&self) -> &str {
        "bpr"
    }

    fn catalog(&self) -> &[ItemId] {
        &self.catalog
    }

    fn knows_user(&self, user: UserId) -> bool {
        self.user_index.contains_key(&user)
    }

    fn score(&self, user: UserId, item: ItemId) -> f64 {
        let Some(&i) = self.item_index.get(&item) else {
            return 0.0;
        };
        let f = self.factors;
        let bias = self.item_bias[i];
        match self.user_index.get(&user) {
            Some(&u) => bias + dot(&self.user_factors[u * f..(u + 1) * f], &self.item_factors[i * f..(i + 1) * f]),
            None => bias,
        }
    }

    fn scores(&self, user: UserId) -> Vec<f64> {
        let f = self.factors;
        match self.user_index.get(&user) {
            Some(&u) => {
                let uv = &self.user_factors[u * f..(u + 1) * f];
                (0..self.catalog.len())
                    .map(|i| self.item_bias[i] + dot(uv, &self.item_factors[i * f..(i + 1) * f]))
                    .collect()
            }
            None => self.item_bias.clone(),
        }
    }

    fn skipped_users(&self) -> usize {
        self.skipped
    }
}
