//! Brute-force reference for discrete data: every conditional expectation is
//! an empirical cell frequency, and the nested regressions become explicit
//! sums over the observed support.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proxyport::data::{DatasetBuilder, RawRow};
use proxyport::{ProxyConfig, StudyDataset, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Key = Vec<u64>;

pub fn key(values: &[f64]) -> Key {
    values.iter().map(|v| (v + 0.0).to_bits()).collect()
}

pub struct Row {
    pub study: usize,
    pub arm: u8,
    pub w: Vec<f64>,
    pub t: Vec<f64>,
    pub y: Option<f64>,
}

pub fn rows(data: &StudyDataset) -> Vec<Row> {
    (0..data.n_rows())
        .map(|i| Row {
            study: data.study_of(i),
            arm: data.arm(i),
            w: data.covariates(i).to_vec(),
            t: data.proxies(i).to_vec(),
            y: data.outcome(i),
        })
        .collect()
}

fn pick(t: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&j| t[j]).collect()
}

/// Mean of Y over donor rows in each `(T_sub, W)` cell for one arm.
pub fn cell_means(all: &[Row], donors: &[usize], proxies: &[usize], arm: u8) -> BTreeMap<Key, f64> {
    let mut acc: BTreeMap<Key, (f64, usize)> = BTreeMap::new();
    for r in all.iter().filter(|r| r.arm == arm && donors.contains(&r.study)) {
        let mut k = pick(&r.t, proxies);
        k.extend(&r.w);
        let e = acc.entry(key(&k)).or_default();
        e.0 += r.y.unwrap();
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// `sum_t P(T_sub = t | W = w, arm, scope) * inner(t, w)` for every `w`
/// present in the scope.
fn outer_means(
    all: &[Row],
    scope: &[usize],
    proxies: &[usize],
    arm: u8,
    inner: &BTreeMap<Key, f64>,
) -> BTreeMap<Key, f64> {
    let mut counts: BTreeMap<Key, BTreeMap<Key, usize>> = BTreeMap::new();
    for r in all.iter().filter(|r| r.arm == arm && scope.contains(&r.study)) {
        *counts
            .entry(key(&r.w))
            .or_default()
            .entry(key(&pick(&r.t, proxies)))
            .or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(w, by_t)| {
            let total: usize = by_t.values().sum();
            let m = by_t
                .into_iter()
                .map(|(t, n)| {
                    let mut k = t;
                    k.extend(&w);
                    inner[&k] * n as f64 / total as f64
                })
                .sum();
            (w, m)
        })
        .collect()
}

/// `sum_w P_s(W = w) (m1(w) - m0(w))`.
fn standardize(all: &[Row], s: usize, m: [&BTreeMap<Key, f64>; 2]) -> f64 {
    let mut counts: BTreeMap<Key, usize> = BTreeMap::new();
    for r in all.iter().filter(|r| r.study == s) {
        *counts.entry(key(&r.w)).or_default() += 1;
    }
    let n: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(w, c)| (m[1][&w] - m[0][&w]) * c as f64 / n as f64)
        .sum()
}

/// Cell-level arm means `m_a(w)` that study `s` standardizes over.
pub fn arm_means(data: &StudyDataset, cfg: &ProxyConfig, variant: Variant, s: usize) -> [BTreeMap<Key, f64>; 2] {
    let all = rows(data);
    [0u8, 1].map(|arm| {
        if s < cfg.s_star {
            return cell_means(&all, &[s], &[], arm);
        }
        let donors = &cfg.donor_sets[s];
        let proxies = &cfg.proxy_subsets[s];
        match variant {
            Variant::Blind => cell_means(&all, donors, &[], arm),
            Variant::ProxyAware => outer_means(&all, &[s], proxies, arm, &cell_means(&all, donors, proxies, arm)),
            Variant::Pooled => {
                let scope: Vec<usize> = (0..data.n_studies())
                    .filter(|&o| data.proxies_available(o, proxies))
                    .collect();
                outer_means(&all, &scope, proxies, arm, &cell_means(&all, donors, proxies, arm))
            }
        }
    })
}

/// Per-study effects and their weighted total.
pub fn brute_force(data: &StudyDataset, cfg: &ProxyConfig, variant: Variant) -> (f64, Vec<f64>) {
    let all = rows(data);
    let effects: Vec<f64> = (0..data.n_studies())
        .map(|s| {
            let [m0, m1] = arm_means(data, cfg, variant, s);
            standardize(&all, s, [&m0, &m1])
        })
        .collect();
    let overall = effects.iter().zip(&cfg.weights).map(|(e, w)| e * w).sum();
    (overall, effects)
}

/// A random discrete multi-study instance with every `(arm, T, W)` cell
/// populated in every study, so saturated fits never meet an unseen cell.
///
/// Studies observing the outcome see both proxies; missing studies see
/// `t1` and, at random, `t2`.
pub fn discrete_instance(seed: u64) -> StudyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=4usize);
    let observed = rng.random_range(1..k);
    let w_levels = rng.random_range(2..=3usize);
    let t_levels = 2usize;
    let mut b = DatasetBuilder::new(vec!["w1".into()], vec!["t1".into(), "t2".into()]);
    for s in 0..k {
        let has_y = s < observed;
        let has_t2 = has_y || rng.random_bool(0.5);
        let mut push = |arm: u8, w: f64, t1: f64, t2: f64, rng: &mut ChaCha8Rng| {
            let y = has_y.then(|| {
                let base = arm as f64 * (1.0 + t1) + 0.5 * w - t2 + s as f64;
                base + rng.random_range(-1.0..1.0f64)
            });
            b.push(RawRow {
                study: s as i64 * 10 + 3,
                arm,
                covariates: vec![w],
                proxies: vec![Some(t1), has_t2.then_some(t2)],
                outcome: y,
            })
            .unwrap();
        };
        for arm in 0..=1u8 {
            for w in 0..w_levels {
                for t1 in 0..t_levels {
                    for t2 in 0..t_levels {
                        push(arm, w as f64, t1 as f64, t2 as f64, &mut rng);
                    }
                }
            }
        }
        for _ in 0..rng.random_range(0..30) {
            let arm = rng.random_range(0..=1u8);
            let w = rng.random_range(0..w_levels) as f64;
            let t1 = rng.random_range(0..t_levels) as f64;
            let t2 = rng.random_range(0..t_levels) as f64;
            push(arm, w, t1, t2, &mut rng);
        }
    }
    b.build().unwrap()
}

/// Binary covariate, one binary proxy seen by every study, 2 to 4 studies
/// and at most 40 rows; every `(arm, T, W)` cell is populated in every
/// study.
pub fn binary_instance(seed: u64) -> StudyDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a7);
    let k = rng.random_range(2..=4usize);
    let observed = rng.random_range(1..k);
    let mut b = DatasetBuilder::new(vec!["w1".into()], vec!["t1".into()]);
    let mut cells = Vec::new();
    for s in 0..k {
        for arm in 0..=1u8 {
            for w in 0..2 {
                for t in 0..2 {
                    cells.push((s, arm, w as f64, t as f64));
                }
            }
        }
    }
    for _ in 0..rng.random_range(0..=40 - cells.len()) {
        let s = rng.random_range(0..k);
        cells.push((s, rng.random_range(0..=1u8), rng.random_range(0..2) as f64, rng.random_range(0..2) as f64));
    }
    for (s, arm, w, t) in cells {
        let y = (s < observed).then(|| arm as f64 * (1.0 + t) + w - 0.5 * t + rng.random_range(-1.0..1.0f64));
        b.push(RawRow {
            study: s as i64 + 1,
            arm,
            covariates: vec![w],
            proxies: vec![Some(t)],
            outcome: y,
        })
        .unwrap();
    }
    b.build().unwrap()
}
