//! Brute-force reference implementations used as test oracles. They follow
//! the textbook definitions directly and share no code with the library.

#![allow(dead_code)]

/// Cohen's kappa by counting: observed agreement and chance agreement from
/// the two raters' marginal proportions. `None` without shared items.
pub fn kappa(a: &[Option<i64>], b: &[Option<i64>]) -> Option<f64> {
    let pairs: Vec<(i64, i64)> = a.iter().zip(b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let po = pairs.iter().filter(|(x, y)| x == y).count() as f64 / n;
    let mut cats: Vec<i64> = pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
    cats.sort_unstable();
    cats.dedup();
    let pe: f64 = cats
        .iter()
        .map(|&c| {
            let pa = pairs.iter().filter(|p| p.0 == c).count() as f64 / n;
            let pb = pairs.iter().filter(|p| p.1 == c).count() as f64 / n;
            pa * pb
        })
        .sum();
    if pe == 1.0 {
        return Some(1.0);
    }
    Some((po - pe) / (1.0 - pe))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Nominal,
    Ordinal,
    Interval,
}

/// Krippendorff's alpha by enumerating every ordered pair of values within
/// each unit. `rows` are units, entries are raters. `None` when fewer than
/// two raters exist or no unit is pairable.
pub fn alpha(rows: &[Vec<Option<i64>>], metric: Metric) -> Option<f64> {
    if rows.first().map_or(0, |r| r.len()) < 2 {
        return None;
    }
    let lo = rows.iter().flatten().flatten().copied().min()?;
    let hi = rows.iter().flatten().flatten().copied().max()?;
    let k = (hi - lo + 1) as usize;
    let mut o = vec![vec![0.0; k]; k];
    let mut pairable = false;
    for row in rows {
        let vals: Vec<i64> = row.iter().flatten().copied().collect();
        let m = vals.len();
        if m < 2 {
            continue;
        }
        pairable = true;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    o[(vals[i] - lo) as usize][(vals[j] - lo) as usize] += 1.0 / (m as f64 - 1.0);
                }
            }
        }
    }
    if !pairable {
        return None;
    }
    let nc: Vec<f64> = o.iter().map(|r| r.iter().sum()).collect();
    let n: f64 = nc.iter().sum();
    let d2 = |c: usize, k2: usize| -> f64 {
        match metric {
            Metric::Nominal => f64::from(u8::from(c != k2)),
            Metric::Interval => ((c as f64) - (k2 as f64)).powi(2),
            Metric::Ordinal => {
                if c == k2 {
                    return 0.0;
                }
                let (a, b) = (c.min(k2), c.max(k2));
                let s: f64 = (a..=b).map(|g| nc[g]).sum::<f64>() - (nc[c] + nc[k2]) / 2.0;
                s * s
            }
        }
    };
    let mut dobs = 0.0;
    let mut dexp = 0.0;
    for c in 0..k {
        for k2 in 0..k {
            dobs += o[c][k2] * d2(c, k2);
            dexp += nc[c] * nc[k2] * d2(c, k2);
        }
    }
    if dexp == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - (n - 1.0) * dobs / dexp)
}

/// Kaplan–Meier by definition: at each distinct event time, multiply by
/// (1 − deaths / at-risk), where at-risk counts every subject whose time is
/// at least t.
pub fn kaplan_meier(obs: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let mut times: Vec<f64> = obs.iter().filter(|o| !o.1).map(|o| o.0).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut s = 1.0;
    times
        .into_iter()
        .map(|t| {
            let at_risk = obs.iter().filter(|o| o.0 >= t).count() as f64;
            let deaths = obs.iter().filter(|o| o.0 == t && !o.1).count() as f64;
            s *= 1.0 - deaths / at_risk;
            (t, s)
        })
        .collect()
}
