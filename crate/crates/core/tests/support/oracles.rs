//! Direct-definition recomputations used as references for the optimized
//! implementations. Deliberately naive.

use tablesim_core::corpus::Label;

/// Best total over every injective assignment of the smaller side.
pub fn brute_force_matching(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let m = w.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return 0.0;
    }
    if n > m {
        let t: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| w[i][j]).collect()).collect();
        return brute_force_matching(&t);
    }
    fn go(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(w[row][j] + go(w, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    go(w, 0, &mut vec![false; m])
}

/// Fraction of (similar, dissimilar) pairs ordered correctly by `oriented`
/// scores (higher = more similar), ties counting one half.
pub fn auc_pairwise(oriented: &[f64], gold: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for (i, &gi) in gold.iter().enumerate() {
        for (j, &gj) in gold.iter().enumerate() {
            if gi == Label::Similar && gj == Label::Dissimilar {
                total += 1.0;
                if oriented[i] > oriented[j] {
                    wins += 1.0;
                } else if oriented[i] == oriented[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / total
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// NDCG with exponential gains whose ideal DCG is found by trying every
/// ordering of the items.
pub fn ndcg_brute(gains: &[u32], k: usize) -> f64 {
    let dcg = |order: &[u32]| -> f64 {
        let mut s = 0.0;
        for (i, &g) in order.iter().enumerate() {
            if i >= k {
                break;
            }
            s += (2f64.powf(g as f64) - 1.0) / (i as f64 + 2.0).log2();
        }
        s
    };
    let ideal = permutations(gains.len())
        .iter()
        .map(|p| dcg(&p.iter().map(|&i| gains[i]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    if ideal == 0.0 {
        0.0
    } else {
        dcg(gains) / ideal
    }
}

/// `(precision, recall, f1, accuracy)` from explicit per-class counting.
pub fn prf_direct(pred: &[Label], gold: &[Label]) -> (f64, f64, f64, f64) {
    let safe = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    for class in [Label::Similar, Label::Dissimilar] {
        let predicted = pred.iter().filter(|&&p| p == class).count() as f64;
        let actual = gold.iter().filter(|&&g| g == class).count() as f64;
        let hit = pred
            .iter()
            .zip(gold)
            .filter(|(&p, &g)| p == class && g == class)
            .count() as f64;
        let p = safe(hit, predicted);
        let r = safe(hit, actual);
        p_sum += p;
        r_sum += r;
        f_sum += safe(2.0 * p * r, p + r);
    }
    let acc = pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64;
    (p_sum / 2.0, r_sum / 2.0, f_sum / 2.0, acc)
}

/// Fleiss' kappa from raw rater assignments (`assign[item][rater]` is a
/// category): observed agreement as the share of agreeing ordered rater
/// pairs, chance agreement from the pooled category shares.
pub fn kappa_from_assignments(assign: &[Vec<usize>], categories: usize) -> f64 {
    let r = assign[0].len();
    let mut observed = 0.0;
    for item in assign {
        let mut agree = 0.0;
        for a in 0..r {
            for b in 0..r {
                if a != b && item[a] == item[b] {
                    agree += 1.0;
                }
            }
        }
        observed += agree / (r * (r - 1)) as f64;
    }
    observed /= assign.len() as f64;
    let total = (assign.len() * r) as f64;
    let chance: f64 = (0..categories)
        .map(|c| {
            let share = assign.iter().flatten().filter(|&&x| x == c).count() as f64 / total;
            share * share
        })
        .sum();
    if chance == 1.0 {
        1.0
    } else {
        (observed - chance) / (1.0 - chance)
    }
}
