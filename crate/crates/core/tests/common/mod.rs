#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::Value;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_avcorpus"))
}

pub fn write_fixture(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(v).unwrap()).unwrap();
    p
}

pub fn mock(dir: &Path, name: &str, fixture: &Value) -> String {
    let p = write_fixture(dir, name, fixture);
    avcorpus::synth::mock_command(&bin(), "face", &p)
}

/// AP by its definition: mean over positives of precision at that
/// positive's rank, ranking by score descending with ties in input order.
pub fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let mut total = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        if labels[i] {
            let hits = idx[..=k].iter().filter(|&&j| labels[j]).count() as f64;
            total += hits / (k + 1) as f64;
        }
    }
    total / p
}

/// AUC as the probability a random positive outscores a random negative,
/// ties counting one half, over all pairs.
pub fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Best Youden J over every candidate threshold, and the smallest threshold
/// achieving it, by direct evaluation. J is compared exactly as tp*N - fp*P.
pub fn youden_oracle(scores: &[f64], labels: &[bool]) -> (f64, f64) {
    let p = labels.iter().filter(|&&l| l).count() as i64;
    let n = labels.len() as i64 - p;
    let mut cands: Vec<f64> = scores.to_vec();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let mut best: Option<(i64, f64, i64, i64)> = None;
    for &t in &cands {
        let tp = scores.iter().zip(labels).filter(|(s, l)| **l && **s >= t).count() as i64;
        let fp = scores.iter().zip(labels).filter(|(s, l)| !**l && **s >= t).count() as i64;
        let j = tp * n - fp * p;
        if best.is_none_or(|b| j > b.0) {
            best = Some((j, t, tp, fp));
        }
    }
    let (_, t, tp, fp) = best.unwrap();
    (tp as f64 / p as f64 - fp as f64 / n as f64, t)
}

/// Centered moving mean computed naively.
pub fn smooth_oracle(v: &[f64], k: usize) -> Vec<f64> {
    let h = (k / 2) as isize;
    (0..v.len() as isize)
        .map(|i| {
            let w: Vec<f64> =
                (i - h..=i + h).filter(|&j| j >= 0 && (j as usize) < v.len()).map(|j| v[j as usize]).collect();
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}
