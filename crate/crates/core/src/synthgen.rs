//! Synthetic battery corpora with planted, analytically known cycle lives.
//!
//! Every battery b gets a real-valued life `L` drawn log-uniformly and a
//! capacity multiplier `m(n) = 1 - 0.2 (n / L)^k`, so `m(L) = 0.8`. The
//! recorded cycle life is the first whole cycle strictly past `L`, which is
//! exactly what [`compute_cycle_life`](crate::datapipe::compute_cycle_life)
//! finds on noise-free data.
//!
//! Life-predictive signal sits in `Qd_lin` and `dQdV`: the `Qd_lin` curve
//! ends at the faded capacity and bows downward by an amount growing with
//! `sqrt(n / L)`, and the variance of `dQdV` grows linearly in `n / L`, while the peak shape of `dQdV` differs from cell to cell. `V`
//! follows the same ramp for every cell and every cycle, so nothing about it
//! can predict life. Temperature carries a weak, noisy relation to life.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datapipe::{BatteryRecord, CycleData, Variable};
use crate::error::{Error, Result};

const CAPACITY_FADE: f64 = 0.2;
const QD_LIN_BOW: f64 = 0.15;
const DQDV_LEVEL: f64 = -4.0;
const DQDV_GROWTH: f64 = 50.0;
const V_TOP: f64 = 3.5;
const V_BOTTOM: f64 = 2.0;
const T_BASE: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_batteries: usize,
    /// Inclusive `[min, max]` range of planted lives, in cycles.
    pub life_range: [f64; 2],
    pub nominal_capacity: f64,
    /// Exponent `k > 1` of the capacity fade; larger means a sharper knee.
    pub knee_sharpness: f64,
    /// Gaussian noise on every sample, relative to the standard deviation
    /// of the series it is added to.
    pub noise_sigma: f64,
    pub points_per_cycle: usize,
    /// Cycles written per battery. `None` runs each battery to the first
    /// cycle past end of life.
    pub stored_cycles: Option<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_batteries: 124,
            life_range: [300.0, 2000.0],
            nominal_capacity: 1.1,
            knee_sharpness: 2.0,
            noise_sigma: 0.02,
            points_per_cycle: 200,
            stored_cycles: Some(100),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let [lo, hi] = self.life_range;
        if self.n_batteries == 0 {
            return bad("n_batteries must be at least 1".into());
        }
        if !(lo.is_finite() && hi.is_finite()) || lo < 150.0 || hi < lo {
            return bad(format!(
                "life_range must satisfy 150 <= min <= max, got [{lo}, {hi}]"
            ));
        }
        if !(self.nominal_capacity > 0.0 && self.nominal_capacity.is_finite()) {
            return bad(format!(
                "nominal_capacity must be positive, got {}",
                self.nominal_capacity
            ));
        }
        if !(self.knee_sharpness > 1.0 && self.knee_sharpness.is_finite()) {
            return bad(format!(
                "knee_sharpness must exceed 1, got {}",
                self.knee_sharpness
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.points_per_cycle < 2 {
            return bad(format!(
                "points_per_cycle must be at least 2, got {}",
                self.points_per_cycle
            ));
        }
        if self.stored_cycles == Some(0) {
            return bad("stored_cycles must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-battery hidden parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Planted {
    pub life: f64,
    pub t_drift: f64,
    pub t_amplitude: f64,
    /// Weight of the third harmonic in the `dQdV` waveform.
    pub dqdv_shape: f64,
}

impl Planted {
    /// First whole cycle strictly after the planted life.
    pub fn cycle_life(&self) -> u32 {
        self.life.floor() as u32 + 1
    }
}

/// Capacity multiplier after `n` cycles.
pub fn capacity_multiplier(n: f64, life: f64, k: f64) -> f64 {
    1.0 - CAPACITY_FADE * (n / life).powf(k)
}

pub fn battery_id(index: usize) -> String {
    format!("syn{index:04}")
}

fn battery_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_planted(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Planted {
    let [lo, hi] = cfg.life_range;
    let life = if hi > lo {
        (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp()
    } else {
        lo
    };
    let position = (life.ln() - lo.ln()) / (hi.ln() - lo.ln()).max(f64::MIN_POSITIVE);
    Planted {
        life,
        t_drift: rng.gen_range(1.0..4.0),
        t_amplitude: 1.5 + 0.5 * position + rng.gen_range(0.0..1.5),
        dqdv_shape: rng.gen_range(0.0..1.2),
    }
}

fn simulate_cycle(cfg: &SynthConfig, p: &Planted, n: usize, rng: &mut ChaCha8Rng) -> CycleData {
    let pts = cfg.points_per_cycle;
    let q = cfg.nominal_capacity;
    let age = n as f64 / p.life;
    let m = capacity_multiplier(n as f64, p.life, cfg.knee_sharpness);
    let spread = (2.0 * DQDV_GROWTH * age).sqrt();
    let norm = (1.0 + p.dqdv_shape * p.dqdv_shape).sqrt();
    let mut c = CycleData {
        t: Vec::with_capacity(pts),
        v: Vec::with_capacity(pts),
        qd: Vec::with_capacity(pts),
        qd_lin: Vec::with_capacity(pts),
        td_lin: Vec::with_capacity(pts),
        dqdv: Vec::with_capacity(pts),
    };
    for i in 0..pts {
        let s = i as f64 / (pts - 1) as f64;
        // Waves use a periodic grid so the harmonics stay exactly orthogonal
        // and the dQdV variance is `DQDV_LEVEL² · DQDV_GROWTH · age`.
        let theta = 2.0 * PI * i as f64 / pts as f64;
        let wave = theta.sin();
        let peak = (wave + p.dqdv_shape * (3.0 * theta).sin()) / norm;
        c.t.push(T_BASE + p.t_drift * age + p.t_amplitude * wave);
        c.v.push(V_TOP + (V_BOTTOM - V_TOP) * s);
        c.qd.push(m * q * s);
        c.qd_lin
            .push(q * (m * s - QD_LIN_BOW * age.sqrt() * 4.0 * s * (1.0 - s)));
        c.td_lin
            .push(T_BASE + p.t_drift * age * s + 0.5 * p.t_amplitude * wave);
        c.dqdv.push(DQDV_LEVEL * (1.0 + spread * peak));
    }
    if cfg.noise_sigma > 0.0 {
        for var in Variable::ALL {
            add_noise(c.series_mut(var), cfg.noise_sigma, rng);
        }
    }
    c
}

/// Adds Gaussian noise with standard deviation `sigma` times the series'
/// own standard deviation.
fn add_noise(series: &mut [f64], sigma: f64, rng: &mut ChaCha8Rng) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let sd = (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in series.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *x += sigma * sd * e;
    }
}

/// One battery, reproducible on its own from `(seed, index)`.
pub fn generate_battery(cfg: &SynthConfig, index: usize) -> Result<(BatteryRecord, Planted)> {
    cfg.validate()?;
    Ok(battery(cfg, index))
}

fn battery(cfg: &SynthConfig, index: usize) -> (BatteryRecord, Planted) {
    let mut rng = battery_rng(cfg.seed, index);
    let planted = draw_planted(cfg, &mut rng);
    let count = cfg.stored_cycles.unwrap_or(planted.cycle_life() as usize);
    let cycles = (1..=count)
        .map(|n| simulate_cycle(cfg, &planted, n, &mut rng))
        .collect();
    let record = BatteryRecord {
        id: battery_id(index),
        nominal_capacity: cfg.nominal_capacity,
        cycle_life: Some(planted.cycle_life()),
        cycles,
    };
    (record, planted)
}

/// Generates the corpus; batteries are independent, each on its own RNG
/// stream.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Vec<BatteryRecord>> {
    Ok(generate_with_truth(cfg)?
        .into_iter()
        .map(|(r, _)| r)
        .collect())
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<Vec<(BatteryRecord, Planted)>> {
    cfg.validate()?;
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(cfg.n_batteries);
    let per = cfg.n_batteries.div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let range = t * per..((t + 1) * per).min(cfg.n_batteries);
                scope.spawn(move || range.map(|i| battery(cfg, i)).collect::<Vec<_>>())
            })
            .collect();
        Ok(handles
            .into_iter()
            .flat_map(|h| h.join().expect("generator thread panicked"))
            .collect())
    })
}

/// Lives used by [`golden_corpus`]: four above the 700-cycle threshold and
/// four below.
pub const GOLDEN_LIVES: [f64; 8] = [1800.5, 1400.5, 1100.5, 900.5, 600.5, 450.5, 350.5, 250.5];

pub fn golden_config() -> SynthConfig {
    SynthConfig {
        n_batteries: GOLDEN_LIVES.len(),
        noise_sigma: 0.01,
        points_per_cycle: 20,
        stored_cycles: Some(100),
        seed: 20_190_325,
        ..SynthConfig::default()
    }
}

/// Eight fixed batteries for smoke and overfit tests.
pub fn golden_corpus() -> Vec<BatteryRecord> {
    let cfg = golden_config();
    GOLDEN_LIVES
        .iter()
        .enumerate()
        .map(|(i, &life)| {
            let mut rng = battery_rng(cfg.seed, i);
            let mut planted = draw_planted(&cfg, &mut rng);
            planted.life = life;
            let cycles = (1..=100)
                .map(|n| simulate_cycle(&cfg, &planted, n, &mut rng))
                .collect();
            BatteryRecord {
                id: format!("golden{i}"),
                nominal_capacity: cfg.nominal_capacity,
                cycle_life: Some(planted.cycle_life()),
                cycles,
            }
        })
        .collect()
}
