//! Peak finding on sampled traces.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub location: f64,
    pub height: f64,
    /// Full width at half maximum; `None` if the trace never drops to half
    /// height on one side.
    pub fwhm: Option<f64>,
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn is_local_max(y: &[f64], i: usize) -> bool {
    i > 0 && i + 1 < y.len() && y[i] > y[i - 1] && y[i] >= y[i + 1]
}

/// Half-maximum crossing distance on one side, linearly interpolated.
fn half_width(x: &[f64], y: &[f64], i: usize, step: isize) -> Option<f64> {
    let half = 0.5 * y[i];
    let mut j = i as isize;
    loop {
        let k = j + step;
        if k < 0 || k as usize >= y.len() {
            return None;
        }
        let (a, b) = (j as usize, k as usize);
        if y[b] <= half {
            let f = (y[a] - half) / (y[a] - y[b]);
            let xc = x[a] + f * (x[b] - x[a]);
            return Some((xc - x[i]).abs());
        }
        j = k;
    }
}

pub fn fwhm_at(x: &[f64], y: &[f64], i: usize) -> Option<f64> {
    Some(half_width(x, y, i, -1)? + half_width(x, y, i, 1)?)
}

/// Local maxima above three times the trace median; maxima closer than half
/// the median spacing are merged into the taller one.
pub fn find_peaks(x: &[f64], y: &[f64]) -> Vec<Peak> {
    let thr = 3.0 * median(y);
    let mut idx: Vec<usize> = (1..y.len().saturating_sub(1))
        .filter(|&i| is_local_max(y, i) && y[i] > thr)
        .collect();
    if idx.len() > 2 {
        let gaps: Vec<f64> = idx.windows(2).map(|w| x[w[1]] - x[w[0]]).collect();
        let merge = 0.5 * median(&gaps);
        let mut kept: Vec<usize> = Vec::with_capacity(idx.len());
        for i in idx {
            match kept.last_mut() {
                Some(last) if x[i] - x[*last] < merge => {
                    if y[i] > y[*last] {
                        *last = i;
                    }
                }
                _ => kept.push(i),
            }
        }
        idx = kept;
    }
    idx.into_iter()
        .map(|i| Peak {
            location: x[i],
            height: y[i],
            fwhm: fwhm_at(x, y, i),
        })
        .collect()
}

/// Local maxima that rise at least `ratio` times above the higher of the two
/// minima separating them from taller ground (or the trace ends), and above
/// `floor` times the trace maximum. Resolves weak peaks sitting on the tail
/// of a strong neighbour, where a median threshold would drop them.
pub fn find_prominent(x: &[f64], y: &[f64], ratio: f64, floor: f64) -> Vec<Peak> {
    let top = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = y.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !is_local_max(y, i) || y[i] < floor * top {
            continue;
        }
        let mut lm = y[i];
        let mut j = i;
        while j > 0 && y[j - 1] <= y[i] {
            j -= 1;
            lm = lm.min(y[j]);
        }
        let mut rm = y[i];
        let mut j = i;
        while j + 1 < n && y[j + 1] <= y[i] {
            j += 1;
            rm = rm.min(y[j]);
        }
        if y[i] >= ratio * lm.max(rm) {
            out.push(Peak {
                location: x[i],
                height: y[i],
                fwhm: fwhm_at(x, y, i),
            });
        }
    }
    out
}

/// Argmax and FWHM of a trace on a uniform periodic grid of period `period`.
pub fn periodic_peak(x: &[f64], y: &[f64], period: f64) -> Option<Peak> {
    let n = y.len();
    if n < 3 {
        return None;
    }
    let (i, &top) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let half = 0.5 * top;
    let dx = period / n as f64;
    let side = |step: isize| -> Option<f64> {
        for s in 1..n as isize {
            let a = (i as isize + (s - 1) * step).rem_euclid(n as isize) as usize;
            let b = (i as isize + s * step).rem_euclid(n as isize) as usize;
            if y[b] <= half {
                let f = (y[a] - half) / (y[a] - y[b]);
                return Some((s as f64 - 1.0 + f) * dx);
            }
        }
        None
    };
    let fwhm = match (side(-1), side(1)) {
        (Some(l), Some(r)) => Some(l + r),
        _ => None,
    };
    Some(Peak {
        location: x[i],
        height: top,
        fwhm,
    })
}
