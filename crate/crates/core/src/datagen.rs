//! Synthetic NARX benchmark systems, lagged regressor construction and
//! standardization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;
use rand::distr::{Distribution, Uniform};
use rand_distr::Normal;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Magnitude above which a simulated output is treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// The eleven benchmark generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SystemId {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
    F11,
}

/// Which signal a regressor column is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Signal {
    U,
    Y,
}

/// A lagged variable `u_{t-lag}` or `y_{t-lag}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LagLabel {
    pub signal: Signal,
    pub lag: usize,
}

impl LagLabel {
    pub const fn u(lag: usize) -> Self {
        Self {
            signal: Signal::U,
            lag,
        }
    }

    pub const fn y(lag: usize) -> Self {
        Self {
            signal: Signal::Y,
            lag,
        }
    }
}

impl fmt::Display for LagLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.signal {
            Signal::U => "u",
            Signal::Y => "y",
        };
        write!(f, "{s}_lag{}", self.lag)
    }
}

impl FromStr for LagLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad column label `{s}`"));
        let (sig, lag) = s.split_once("_lag").ok_or_else(bad)?;
        let lag: usize = lag.parse().map_err(|_| bad())?;
        match sig {
            "u" => Ok(Self::u(lag)),
            "y" => Ok(Self::y(lag)),
            _ => Err(bad()),
        }
    }
}

impl SystemId {
    pub const ALL: [SystemId; 11] = [
        SystemId::F1,
        SystemId::F2,
        SystemId::F3,
        SystemId::F4,
        SystemId::F5,
        SystemId::F6,
        SystemId::F7,
        SystemId::F8,
        SystemId::F9,
        SystemId::F10,
        SystemId::F11,
    ];

    /// Deepest lag referenced by the generating formula.
    pub fn max_lag(self) -> usize {
        self.support().iter().map(|l| l.lag).max().unwrap_or(1)
    }

    /// Every lagged variable the generating formula reads.
    pub fn support(self) -> &'static [LagLabel] {
        use LagLabel as L;
        match self {
            SystemId::F1 => const { &[L::y(1), L::y(2), L::u(4), L::u(1), L::u(2), L::u(3)] },
            SystemId::F2 => const { &[L::y(1), L::u(1), L::u(2), L::u(3), L::u(4)] },
            SystemId::F3 => const { &[L::u(1), L::u(2), L::u(3), L::u(4)] },
            SystemId::F4 => const { &[L::u(3), L::u(2), L::u(1), L::y(2), L::y(1)] },
            SystemId::F5 => const { &[L::u(1), L::u(2), L::y(1), L::y(2)] },
            SystemId::F6 => const { &[L::y(1), L::y(3), L::u(2)] },
            SystemId::F7 => const { &[L::u(5), L::y(1), L::y(3), L::u(2)] },
            SystemId::F8 => const { &[L::u(1), L::u(3), L::u(2), L::u(4), L::y(6)] },
            SystemId::F9 => const { &[L::u(5), L::u(2), L::y(6)] },
            SystemId::F10 => const { &[L::u(1), L::u(2), L::y(1), L::y(10)] },
            SystemId::F11 => const { &[L::u(10), L::u(1), L::u(2), L::u(3), L::y(1), L::y(5)] },
        }
    }

    /// Value used for the output history before the first simulated step.
    ///
    /// F10 is `sqrt(y)`-driven: from an all-zero history it stays at zero
    /// forever, so it starts from one instead.
    pub fn default_initial_output(self) -> f64 {
        match self {
            SystemId::F10 => 1.0,
            _ => 0.0,
        }
    }

    /// Input range under which the recursion stays bounded.
    ///
    /// The benchmark range `[-2.5, 2.5]` makes F2, F4 and F5 blow up within a
    /// few dozen steps. F6 and F7 multiply `y_{t-3}` by `exp(-u_{t-2})`, whose
    /// log has zero mean under any symmetric range, so they need `u > 0`.
    pub fn stable_input_range(self) -> (f64, f64) {
        match self {
            SystemId::F2 | SystemId::F4 => (-1.0, 1.0),
            SystemId::F5 | SystemId::F6 | SystemId::F7 => (0.0, 1.0),
            _ => BENCHMARK_INPUT_RANGE,
        }
    }

    /// One step of the recursion. `u(k)` and `y(k)` return the values `k`
    /// steps in the past.
    fn step(self, u: impl Fn(usize) -> f64, y: impl Fn(usize) -> f64) -> f64 {
        use libm::{asin, atan, exp, sin, sqrt};
        match self {
            SystemId::F1 => sin(y(1)) + 0.01 * y(2) + u(4) + u(1) * u(1) + u(2) * u(3),
            SystemId::F2 => {
                let u4 = u(4);
                0.01 * y(1) * y(1) + libm::pow(u(1), 5.0) + u(2) * u(3) * libm::pow(u4, 4.0)
            }
            SystemId::F3 => u(1) * u(1) + u(2) * u(3) * u(4),
            SystemId::F4 => {
                u(3) * u(2) + u(3) * u(1) + u(3) * u(2) * u(1) + sin(y(2)) + exp(-y(1))
            }
            SystemId::F5 => sin(u(1) * u(2)) + exp(-y(1) * y(2)),
            SystemId::F6 => exp(sin(y(1))) + y(3) * exp(-u(2)),
            SystemId::F7 => u(5) * exp(sin(y(1))) + y(3) * exp(-u(2)),
            SystemId::F8 => exp(u(1) + u(3)) + u(2) * u(4) + 1.0 / (1.0 + y(6) * y(6)),
            SystemId::F9 => sqrt(exp(u(5))) + 1.0 / (1.0 + y(6) * y(6) + u(2) * u(2)),
            SystemId::F10 => {
                // Domain guards: sqrt of |y| and arcsin clamped to [-1, 1].
                libm::pow(2.0, -libm::fabs(u(1) * u(2))) * sqrt(libm::fabs(y(1)))
                    + 0.01 * asin(y(10).clamp(-1.0, 1.0))
            }
            SystemId::F11 => {
                0.01 * u(10) * atan(y(1) + u(1))
                    + u(2).max(0.5)
                    + 1.0 / (1.0 + y(5) * y(5) + u(3) * u(3))
            }
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .iter()
            .copied()
            .find(|id| {
                let name: String = format!("{id}");
                name.eq_ignore_ascii_case(s.trim())
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown system `{s}`")))
    }
}

/// Input range of the benchmark protocol.
pub const BENCHMARK_INPUT_RANGE: (f64, f64) = (-2.5, 2.5);

/// Simulation settings for one benchmark series.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub system: SystemId,
    pub n_samples: usize,
    pub u_low: f64,
    pub u_high: f64,
    pub burn_in: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Output history before the first step.
    pub initial_output: f64,
}

impl SimConfig {
    pub fn new(system: SystemId, n_samples: usize, seed: u64) -> Self {
        let (u_low, u_high) = BENCHMARK_INPUT_RANGE;
        Self {
            system,
            n_samples,
            u_low,
            u_high,
            burn_in: 50,
            noise_std: 0.0,
            seed,
            initial_output: system.default_initial_output(),
        }
    }

    pub fn with_input_range(mut self, low: f64, high: f64) -> Self {
        self.u_low = low;
        self.u_high = high;
        self
    }

    pub fn with_stable_range(self) -> Self {
        let (lo, hi) = self.system.stable_input_range();
        self.with_input_range(lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_low < self.u_high) {
            return Err(Error::InvalidRange {
                low: self.u_low,
                high: self.u_high,
            });
        }
        if self.n_samples == 0 {
            return Err(Error::EmptyRequest);
        }
        if !(self.noise_std >= 0.0) || !self.initial_output.is_finite() {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// Input samples consumed by [`simulate`]: pre-history, burn-in and the
    /// retained window.
    pub fn input_len(&self) -> usize {
        self.system.max_lag() + self.burn_in + self.n_samples
    }

    /// Draws the input signal and simulates the system.
    pub fn run(&self) -> Result<TimeSeriesPair> {
        self.validate()?;
        let u = generate_input(self.input_len(), self.u_low, self.u_high, self.seed)?;
        simulate(self, &u)
    }
}

/// Paired input/output sequences of equal length.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeSeriesPair {
    u: Vec<f64>,
    y: Vec<f64>,
}

impl TimeSeriesPair {
    pub fn new(u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_len_eq(u.len(), y.len())?;
        if u.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("time series"));
        }
        Ok(Self { u, y })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

fn check_len_eq(a: usize, b: usize) -> Result<()> {
    crate::error::check_len("output sequence length", a, b)
}

/// `n` i.i.d. draws from `Uniform[low, high]`.
pub fn generate_input(n: usize, low: f64, high: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyRequest);
    }
    if !(low < high) || !low.is_finite() || !high.is_finite() {
        return Err(Error::InvalidRange { low, high });
    }
    let dist = Uniform::new_inclusive(low, high).map_err(|_| Error::InvalidRange { low, high })?;
    let mut rng = rng::stream(seed, Stream::Input);
    Ok(dist.sample_iter(&mut rng).take(n).collect())
}

/// Runs the recursion of `config.system` over the input `u`.
///
/// The first `max_lag` inputs act as pre-history, the next `burn_in` steps
/// are simulated and discarded, and `n_samples` steps are returned. The
/// output history starts at `config.initial_output`.
pub fn simulate(config: &SimConfig, u: &[f64]) -> Result<TimeSeriesPair> {
    config.validate()?;
    let offset = config.system.max_lag();
    let needed = config.input_len();
    if u.len() < needed {
        return Err(Error::InsufficientData {
            len: u.len(),
            lag: needed,
        });
    }
    let mut y = alloc::vec![config.initial_output; needed];
    for t in offset..needed {
        let v = config.system.step(|k| u[t - k], |k| y[t - k]);
        if !v.is_finite() || libm::fabs(v) > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step: t - offset,
                value: v,
            });
        }
        y[t] = v;
    }

    let start = offset + config.burn_in;
    let mut out_y = y[start..needed].to_vec();
    if config.noise_std > 0.0 {
        let normal = Normal::new(0.0, config.noise_std)
            .map_err(|_| Error::InvalidConfig("noise_std".into()))?;
        let mut rng = rng::stream(config.seed, Stream::Noise);
        for v in &mut out_y {
            *v += normal.sample(&mut rng);
        }
    }
    TimeSeriesPair::new(u[start..needed].to_vec(), out_y)
}

/// The exact lagged variables of the generating formula.
pub fn ground_truth_support(system: SystemId) -> alloc::collections::BTreeSet<LagLabel> {
    system.support().iter().copied().collect()
}

/// Regressor matrix of lagged windows with aligned one-step-ahead targets.
///
/// Columns are ordered `[u_{t-nb}, ..., u_{t-1}, y_{t-na}, ..., y_{t-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDataset {
    pub x: DMatrix<f64>,
    pub targets: Vec<f64>,
    /// Deepest lag of any column.
    pub lag: usize,
    pub labels: Vec<LagLabel>,
    /// Statistics this dataset was standardized with, if any.
    pub scaling: Option<StandardizeStats>,
}

impl LaggedDataset {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Splits into a time-ordered prefix of `n_first` rows and the rest.
    pub fn split_at(&self, n_first: usize) -> Result<(LaggedDataset, LaggedDataset)> {
        let n = self.n_rows();
        if n_first == 0 || n_first >= n {
            return Err(Error::InvalidConfig(format!(
                "cannot split {n} rows at {n_first}"
            )));
        }
        let part = |rows: core::ops::Range<usize>| LaggedDataset {
            x: self.x.rows(rows.start, rows.len()).into_owned(),
            targets: self.targets[rows].to_vec(),
            lag: self.lag,
            labels: self.labels.clone(),
            scaling: self.scaling.clone(),
        };
        Ok((part(0..n_first), part(n_first..n)))
    }

    /// Population variance of the targets.
    pub fn target_variance(&self) -> f64 {
        let (_, sd) = mean_std(self.targets.iter().copied());
        sd * sd
    }
}

/// Lagged dataset with the same lag for input and output.
pub fn build_lagged(pair: &TimeSeriesPair, lag: usize) -> Result<LaggedDataset> {
    build_arx(pair, lag, lag)
}

/// ARX regressor with `n_b` input lags and `n_a` output lags.
pub fn build_arx(pair: &TimeSeriesPair, n_a: usize, n_b: usize) -> Result<LaggedDataset> {
    let lag = n_a.max(n_b);
    if lag == 0 {
        return Err(Error::InvalidConfig("at least one lag is required".into()));
    }
    let t_len = pair.len();
    if t_len <= lag {
        return Err(Error::InsufficientData { len: t_len, lag });
    }
    let rows = t_len - lag;
    let labels: Vec<LagLabel> = (1..=n_b)
        .rev()
        .map(LagLabel::u)
        .chain((1..=n_a).rev().map(LagLabel::y))
        .collect();
    let (u, y) = (pair.u(), pair.y());
    let x = DMatrix::from_fn(rows, labels.len(), |i, j| {
        let t = i + lag;
        let label = labels[j];
        match label.signal {
            Signal::U => u[t - label.lag],
            Signal::Y => y[t - label.lag],
        }
    });
    let targets = y[lag..].to_vec();
    Ok(LaggedDataset {
        x,
        targets,
        lag,
        labels,
        scaling: None,
    })
}

/// Per-column location and scale used to standardize a dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StandardizeStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        sum += v;
        n += 1;
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / n as f64))
}

fn is_degenerate(mean: f64, std: f64) -> bool {
    !(std > 1e-12 * mean.abs().max(1.0))
}

impl StandardizeStats {
    /// Population mean and standard deviation of every column and the target.
    pub fn fit(dataset: &LaggedDataset) -> Result<Self> {
        let mut x_mean = Vec::with_capacity(dataset.n_features());
        let mut x_std = Vec::with_capacity(dataset.n_features());
        for (j, col) in dataset.x.column_iter().enumerate() {
            let (m, s) = mean_std(col.iter().copied());
            if is_degenerate(m, s) {
                return Err(Error::DegenerateFeature { column: j });
            }
            x_mean.push(m);
            x_std.push(s);
        }
        let (y_mean, y_std) = mean_std(dataset.targets.iter().copied());
        if is_degenerate(y_mean, y_std) {
            return Err(Error::DegenerateTarget);
        }
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    /// Standardizes a raw dataset with these statistics.
    pub fn apply(&self, dataset: &LaggedDataset) -> Result<LaggedDataset> {
        if dataset.scaling.is_some() {
            return Err(Error::InvalidConfig("dataset is already standardized".into()));
        }
        crate::error::check_len("feature count", self.x_mean.len(), dataset.n_features())?;
        let mut x = dataset.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let targets = dataset
            .targets
            .iter()
            .map(|v| (v - self.y_mean) / self.y_std)
            .collect();
        Ok(LaggedDataset {
            x,
            targets,
            lag: dataset.lag,
            labels: dataset.labels.clone(),
            scaling: Some(self.clone()),
        })
    }

    pub fn destandardize_target(&self, v: f64) -> f64 {
        v * self.y_std + self.y_mean
    }
}

/// Fits standardization statistics on `dataset` and applies them.
pub fn standardize(dataset: &LaggedDataset) -> Result<(LaggedDataset, StandardizeStats)> {
    let stats = StandardizeStats::fit(dataset)?;
    let out = stats.apply(dataset)?;
    Ok((out, stats))
}
