use serde::{Deserialize, Serialize};

use super::record::{BatteryRecord, CycleData, Variable};
use crate::error::{Error, Result};

/// Consistency constant turning a MAD into a Gaussian standard deviation.
const MAD_SCALE: f64 = 1.4826;
/// Deviation tolerated when the local MAD is zero.
const FLAT_TOLERANCE: f64 = 1e-9;

/// Rolling-median outlier filter settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Odd window length, at least 3.
    pub window: usize,
    /// Threshold in robust standard deviations.
    pub k: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self { window: 21, k: 5.0 }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "outlier window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.k > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "outlier k must be positive, got {}",
                self.k
            )));
        }
        Ok(())
    }
}

fn median_in_place(buf: &mut [f64]) -> f64 {
    let mid = buf.len() / 2;
    *buf.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Replaces points farther than `k · 1.4826 · MAD` from their rolling
/// median with that median.
///
/// Windows keep their full length at the edges by sliding inward. When a
/// window's MAD is zero, any deviation above 1e-9 counts as an outlier.
/// Series shorter than the window come back unchanged.
pub fn remove_outliers(series: &[f64], window: usize, k: f64) -> Result<Vec<f64>> {
    OutlierConfig { window, k }.validate()?;
    let n = series.len();
    if n < window {
        return Ok(series.to_vec());
    }
    let half = window / 2;
    let mut out = series.to_vec();
    let mut buf = vec![0.0; window];
    for i in 0..n {
        let start = i.saturating_sub(half).min(n - window);
        let win = &series[start..start + window];
        buf.copy_from_slice(win);
        let med = median_in_place(&mut buf);
        for (b, &x) in buf.iter_mut().zip(win) {
            *b = (x - med).abs();
        }
        let mad = median_in_place(&mut buf);
        let dev = (series[i] - med).abs();
        let limit = if mad > 0.0 {
            k * MAD_SCALE * mad
        } else {
            FLAT_TOLERANCE
        };
        if dev > limit {
            out[i] = med;
        }
    }
    Ok(out)
}

pub fn clean_cycle(cycle: &CycleData, cfg: &OutlierConfig) -> Result<CycleData> {
    let mut out = cycle.clone();
    for var in Variable::ALL {
        *out.series_mut(var) = remove_outliers(cycle.series(var), cfg.window, cfg.k)?;
    }
    Ok(out)
}

pub fn clean_record(record: &BatteryRecord, cfg: &OutlierConfig) -> Result<BatteryRecord> {
    let cycles = record
        .cycles
        .iter()
        .map(|c| clean_cycle(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatteryRecord {
        cycles,
        ..record.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive oracle: explicit sort per window, same edge convention.
    fn flags_oracle(series: &[f64], window: usize, k: f64) -> Vec<bool> {
        let n = series.len();
        let half = window / 2;
        (0..n)
            .map(|i| {
                let start = if i < half {
                    0
                } else if i + half >= n {
                    n - window
                } else {
                    i - half
                };
                let mut w: Vec<f64> = series[start..start + window].to_vec();
                w.sort_by(f64::total_cmp);
                let med = w[window / 2];
                let mut d: Vec<f64> = w.iter().map(|x| (x - med).abs()).collect();
                d.sort_by(f64::total_cmp);
                let mad = d[window / 2];
                let dev = (series[i] - med).abs();
                if mad > 0.0 {
                    dev > k * 1.4826 * mad
                } else {
                    dev > 1e-9
                }
            })
            .collect()
    }

    #[test]
    fn spike_on_constant_series_is_replaced() {
        let mut s = vec![2.5; 40];
        s[17] += 100.0;
        let out = remove_outliers(&s, 21, 5.0).unwrap();
        assert_eq!(out, vec![2.5; 40]);
    }

    #[test]
    fn monotone_ramp_is_unchanged() {
        let s: Vec<f64> = (0..100).map(|i| 0.011 * i as f64).collect();
        assert!(flags_oracle(&s, 21, 5.0).iter().all(|f| !f));
        assert_eq!(remove_outliers(&s, 21, 5.0).unwrap(), s);
    }

    #[test]
    fn identical_series_unchanged() {
        let s = vec![-1.25; 30];
        assert_eq!(remove_outliers(&s, 21, 5.0).unwrap(), s);
    }

    #[test]
    fn short_series_unchanged() {
        let s = vec![1.0, 50.0, 1.0];
        assert_eq!(remove_outliers(&s, 21, 5.0).unwrap(), s);
    }

    #[test]
    fn bad_parameters() {
        assert!(remove_outliers(&[1.0; 30], 4, 5.0).is_err());
        assert!(remove_outliers(&[1.0; 30], 1, 5.0).is_err());
        assert!(remove_outliers(&[1.0; 30], 5, 0.0).is_err());
    }

    #[test]
    fn agrees_with_oracle_on_noisy_sine() {
        let s: Vec<f64> = (0..200)
            .map(|i| {
                let x = i as f64 * 0.07;
                x.sin()
                    + if i % 37 == 5 {
                        3.0
                    } else {
                        0.01 * ((i * 7919) % 13) as f64
                    }
            })
            .collect();
        let flags = flags_oracle(&s, 21, 5.0);
        let out = remove_outliers(&s, 21, 5.0).unwrap();
        assert!(flags.iter().any(|&f| f));
        for (i, &f) in flags.iter().enumerate() {
            assert_eq!(out[i] != s[i], f, "index {i}");
        }
        assert_eq!(out.len(), s.len());
    }
}
