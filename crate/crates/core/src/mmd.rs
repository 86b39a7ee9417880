//! Kernel two-sample statistics between posterior samples.
//!
//! All estimators work off one pooled distance matrix, so a whole kernel
//! bank, and every relabelling of a permutation test, reuses the same
//! pairwise distances.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::Network;
use crate::symmetry::{canonicalize, CanonicalizeConfig};

pub const MEDIAN_SUBSAMPLE: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(−‖x−y‖₂² / (2σ²))`
    Gaussian,
    /// `exp(−‖x−y‖₁ / σ)`
    Laplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            bandwidth,
        }
    }

    pub fn laplace(bandwidth: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Laplace,
            bandwidth,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Gaussian => self.at_distances(sq_l2(x, y), 0.0),
            KernelFamily::Laplace => self.at_distances(0.0, l1(x, y)),
        }
    }

    #[inline]
    fn at_distances(&self, l2sq: f64, l1: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-l2sq / (2.0 * self.bandwidth * self.bandwidth)).exp(),
            KernelFamily::Laplace => (-l1 / self.bandwidth).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bandwidth > 0.0 && self.bandwidth.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {}", self.bandwidth)))
        }
    }
}

fn sq_l2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// V-statistic, diagonal included.
    #[default]
    Biased,
    /// U-statistic, diagonal excluded; can be slightly negative.
    Unbiased,
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "biased" => Ok(Estimator::Biased),
            "unbiased" => Ok(Estimator::Unbiased),
            other => Err(format!("unknown estimator {other:?} (expected biased or unbiased)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub multipliers: Vec<f64>,
    pub families: Vec<KernelFamily>,
    pub estimator: Estimator,
    /// Seed of the median-heuristic subsample.
    pub seed: u64,
}

impl Default for MmdConfig {
    /// Multipliers `2^i`, `i ∈ −4..=5`, for both families: 20 kernels.
    fn default() -> Self {
        MmdConfig {
            multipliers: (-4..=5).map(|i| 2f64.powi(i)).collect(),
            families: vec![KernelFamily::Gaussian, KernelFamily::Laplace],
            estimator: Estimator::Biased,
            seed: 0,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multipliers.is_empty() || self.families.is_empty() {
            return Err(Error::InvalidArgument("kernel bank is empty".into()));
        }
        if let Some(m) = self.multipliers.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidArgument(format!("bandwidth multiplier {m} is not positive")));
        }
        Ok(())
    }
}

/// Pairwise distances of a pooled sample `[X; Y]`, stored as full symmetric matrices.
pub struct PooledDistances {
    n: usize,
    l2sq: Vec<f64>,
    l1: Vec<f64>,
}

impl PooledDistances {
    pub fn new(points: &[&[f64]]) -> Result<Self> {
        let n = points.len();
        let d = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Shape("sample rows differ in length".into()));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("MMD sample".into()));
        }
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut a = vec![0.0; n];
                let mut b = vec![0.0; n];
                for j in i + 1..n {
                    a[j] = sq_l2(points[i], points[j]);
                    b[j] = l1(points[i], points[j]);
                }
                (a, b)
            })
            .collect();
        let mut l2sq = vec![0.0; n * n];
        let mut l1m = vec![0.0; n * n];
        for (i, (a, b)) in rows.into_iter().enumerate() {
            for j in i + 1..n {
                l2sq[i * n + j] = a[j];
                l2sq[j * n + i] = a[j];
                l1m[i * n + j] = b[j];
                l1m[j * n + i] = b[j];
            }
        }
        Ok(PooledDistances { n, l2sq, l1: l1m })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Median pairwise distance (L2 for Gaussian, L1 for Laplace), over all
    /// pairs or over a seeded subsample of [`MEDIAN_SUBSAMPLE`] points.
    pub fn median(&self, family: KernelFamily, seed: u64) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::EmptySample("median heuristic needs at least two points".into()));
        }
        let idx: Vec<usize> = if self.n > MEDIAN_SUBSAMPLE {
            let mut v = index::sample(&mut ChaCha8Rng::seed_from_u64(seed), self.n, MEDIAN_SUBSAMPLE).into_vec();
            v.sort_unstable();
            v
        } else {
            (0..self.n).collect()
        };
        let mut d = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                d.push(match family {
                    KernelFamily::Gaussian => self.l2sq[i * self.n + j].sqrt(),
                    KernelFamily::Laplace => self.l1[i * self.n + j],
                });
            }
        }
        let m = median_of(&mut d);
        if m > 0.0 {
            Ok(m)
        } else {
            Err(Error::ZeroMedianDistance)
        }
    }

    #[inline]
    fn kernel(&self, k: &KernelSpec, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        k.at_distances(self.l2sq[i * self.n + j], self.l1[i * self.n + j])
    }

    /// MMD² between the pooled points indexed by `xi` and by `yi`.
    pub fn mmd2(&self, xi: &[usize], yi: &[usize], k: &KernelSpec, est: Estimator) -> Result<f64> {
        split_mmd2(xi, yi, est, |i, j| self.kernel(k, i, j))
    }

    /// Full kernel matrix of the pooled sample.
    pub fn gram(&self, k: &KernelSpec) -> Vec<f64> {
        let n = self.n;
        (0..n * n).map(|ij| self.kernel(k, ij / n, ij % n)).collect()
    }
}

/// MMD² of a split of a pooled sample given pairwise kernel values. The
/// cross term is summed both row- and column-wise so swapping the two
/// samples gives the same bits.
fn split_mmd2(xi: &[usize], yi: &[usize], est: Estimator, kv: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let (m, n) = (xi.len(), yi.len());
    let min = match est {
        Estimator::Biased => 1,
        Estimator::Unbiased => 2,
    };
    if m < min || n < min {
        return Err(Error::EmptySample(format!("{est:?} MMD needs at least {min} points per sample, got {m} and {n}")));
    }
    let within = |s: &[usize]| -> f64 {
        let mut total = 0.0;
        for (a, &i) in s.iter().enumerate() {
            let row: f64 = s[a + 1..].iter().map(|&j| kv(i, j)).sum();
            total += row;
        }
        total
    };
    let (sxx, syy) = (within(xi), within(yi));
    let mut rows = 0.0;
    let mut cols = vec![0.0; n];
    for &i in xi {
        let mut row = 0.0;
        for (c, &j) in cols.iter_mut().zip(yi) {
            let v = kv(i, j);
            row += v;
            *c += v;
        }
        rows += row;
    }
    let cross = rows + cols.iter().sum::<f64>();
    let (mf, nf) = (m as f64, n as f64);
    Ok(match est {
        Estimator::Biased => (mf + 2.0 * sxx) / (mf * mf) + (nf + 2.0 * syy) / (nf * nf) - cross / (mf * nf),
        Estimator::Unbiased => 2.0 * sxx / (mf * (mf - 1.0)) + 2.0 * syy / (nf * (nf - 1.0)) - cross / (mf * nf),
    })
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn pooled<'a>(x: &'a [Vec<f64>], y: &'a [Vec<f64>]) -> Vec<&'a [f64]> {
    x.iter().chain(y).map(Vec::as_slice).collect()
}

/// Median pairwise L2 distance over the pooled sample.
pub fn median_heuristic(x: &[Vec<f64>], y: &[Vec<f64>], seed: u64) -> Result<f64> {
    PooledDistances::new(&pooled(x, y))?.median(KernelFamily::Gaussian, seed)
}

pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelSpec, estimator: Estimator) -> Result<f64> {
    kernel.validate()?;
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample("mmd2 needs two non-empty samples".into()));
    }
    let d = PooledDistances::new(&pooled(x, y))?;
    let xi: Vec<usize> = (0..x.len()).collect();
    let yi: Vec<usize> = (x.len()..x.len() + y.len()).collect();
    d.mmd2(&xi, &yi, kernel, estimator)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub kernel: KernelSpec,
    pub multiplier: f64,
    pub mmd2: f64,
    /// `√max(mmd², 0)`.
    pub mmd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMmd {
    pub median: f64,
    pub mean: f64,
    pub max: f64,
    pub root_median: f64,
    pub root_mean: f64,
    pub root_max: f64,
    /// Some unbiased estimate came out negative.
    pub negative: bool,
    pub per_kernel: Vec<KernelValue>,
}

impl AggregatedMmd {
    fn from_values(per_kernel: Vec<KernelValue>) -> Self {
        let mut v: Vec<f64> = per_kernel.iter().map(|k| k.mmd2).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let median = median_of(&mut v);
        let root = |x: f64| x.max(0.0).sqrt();
        AggregatedMmd {
            median,
            mean,
            max,
            root_median: root(median),
            root_mean: root(mean),
            root_max: root(max),
            negative: per_kernel.iter().any(|k| k.mmd2 < 0.0),
            per_kernel,
        }
    }
}

/// Kernel bank over a pooled sample: bandwidth = family median × multiplier.
pub struct KernelBank {
    pub distances: PooledDistances,
    pub kernels: Vec<(KernelSpec, f64)>,
}

impl KernelBank {
    pub fn new(points: &[&[f64]], cfg: &MmdConfig) -> Result<Self> {
        cfg.validate()?;
        let distances = PooledDistances::new(points)?;
        let mut kernels = Vec::new();
        for &family in &cfg.families {
            let base = distances.median(family, cfg.seed)?;
            for &m in &cfg.multipliers {
                kernels.push((KernelSpec { family, bandwidth: base * m }, m));
            }
        }
        Ok(KernelBank { distances, kernels })
    }

    pub fn aggregate(&self, xi: &[usize], yi: &[usize], est: Estimator) -> Result<AggregatedMmd> {
        let per_kernel = self
            .kernels
            .par_iter()
            .map(|(k, m)| {
                let v = self.distances.mmd2(xi, yi, k, est)?;
                Ok(KernelValue {
                    kernel: *k,
                    multiplier: *m,
                    mmd2: v,
                    mmd: v.max(0.0).sqrt(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AggregatedMmd::from_values(per_kernel))
    }

    /// Aggregates for many splits; each kernel matrix is built once and shared by all splits.
    pub fn aggregate_splits(&self, splits: &[(Vec<usize>, Vec<usize>)], est: Estimator) -> Result<Vec<AggregatedMmd>> {
        let n = self.distances.len();
        let per_kernel: Vec<Vec<KernelValue>> = self
            .kernels
            .iter()
            .map(|(k, m)| {
                let gram = self.distances.gram(k);
                splits
                    .par_iter()
                    .map(|(xi, yi)| {
                        let v = split_mmd2(xi, yi, est, |i, j| gram[i * n + j])?;
                        Ok(KernelValue {
                            kernel: *k,
                            multiplier: *m,
                            mmd2: v,
                            mmd: v.max(0.0).sqrt(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok((0..splits.len())
            .map(|s| AggregatedMmd::from_values(per_kernel.iter().map(|v| v[s].clone()).collect()))
            .collect())
    }
}

pub fn aggregated_mmd(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &MmdConfig) -> Result<AggregatedMmd> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample("aggregated_mmd needs two non-empty samples".into()));
    }
    let bank = KernelBank::new(&pooled(x, y), cfg)?;
    let xi: Vec<usize> = (0..x.len()).collect();
    let yi: Vec<usize> = (x.len()..x.len() + y.len()).collect();
    bank.aggregate(&xi, &yi, cfg.estimator)
}

/// Random relabellings of a pooled sample of `m + n` points into sizes `m` and `n`.
pub fn random_splits(m: usize, n: usize, count: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut idx: Vec<usize> = (0..m + n).collect();
            idx.shuffle(&mut rng);
            let y = idx.split_off(m);
            (idx, y)
        })
        .collect()
}

/// Observed aggregate and its permutation-null replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub observed: AggregatedMmd,
    pub null: Vec<AggregatedMmd>,
}

pub fn permutation_test(x: &[Vec<f64>], y: &[Vec<f64>], cfg: &MmdConfig, n_perm: usize, seed: u64) -> Result<PermutationTest> {
    let bank = KernelBank::new(&pooled(x, y), cfg)?;
    let xi: Vec<usize> = (0..x.len()).collect();
    let yi: Vec<usize> = (x.len()..x.len() + y.len()).collect();
    let observed = bank.aggregate(&xi, &yi, cfg.estimator)?;
    let null = bank.aggregate_splits(&random_splits(x.len(), y.len(), n_perm, seed), cfg.estimator)?;
    Ok(PermutationTest { observed, null })
}

/// Empirical `q`-quantile (nearest rank, upper).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[k]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMmd {
    pub layer: usize,
    pub param_count: usize,
    pub mmd: AggregatedMmd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerwiseMmdReport {
    pub layers: Vec<LayerMmd>,
    pub total_params: usize,
    /// Parameter-count-weighted means of the per-layer aggregates (MMD²).
    pub weighted_median: f64,
    pub weighted_mean: f64,
    pub weighted_max: f64,
    pub canonicalized: bool,
    pub estimator: Estimator,
    pub multipliers: Vec<f64>,
    pub families: Vec<KernelFamily>,
}

fn weighted(layers: &[LayerMmd], f: impl Fn(&AggregatedMmd) -> f64) -> f64 {
    let total: usize = layers.iter().map(|l| l.param_count).sum();
    layers.iter().map(|l| l.param_count as f64 * f(&l.mmd)).sum::<f64>() / total as f64
}

/// Per-layer sample matrices (one row per checkpoint: weights then biases).
fn layer_rows(a: &[Network], b: &[Network], canonical: Option<&CanonicalizeConfig>) -> Result<Vec<Vec<Vec<f64>>>> {
    let first = a.first().or(b.first()).ok_or_else(|| Error::EmptySample("no checkpoints".into()))?;
    if let Some(k) = a.iter().chain(b).position(|n| n.spec() != first.spec()) {
        return Err(Error::InvalidArgument(format!("checkpoint {k} has a different architecture")));
    }
    let nets: Vec<Network> = match canonical {
        Some(cfg) => a.iter().chain(b).map(|n| canonicalize(n, cfg).map(|(c, _)| c)).collect::<Result<_>>()?,
        None => a.iter().chain(b).cloned().collect(),
    };
    Ok((0..first.num_layers()).map(|l| nets.iter().map(|n| n.layer_vector(l)).collect()).collect())
}

struct LayerBanks {
    /// `(layer, parameter count, bank)` for every layer with parameters.
    banks: Vec<(usize, usize, KernelBank)>,
    m: usize,
    n: usize,
}

impl LayerBanks {
    fn new(a: &[Network], b: &[Network], cfg: &MmdConfig, canonical: Option<&CanonicalizeConfig>) -> Result<Self> {
        let min = match cfg.estimator {
            Estimator::Biased => 1,
            Estimator::Unbiased => 2,
        };
        if a.len() < min.max(2) || b.len() < min.max(2) {
            return Err(Error::EmptySample("each posterior sample needs at least two checkpoints".into()));
        }
        let rows = layer_rows(a, b, canonical)?;
        let banks = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r[0].is_empty())
            .map(|(l, r)| {
                let pts: Vec<&[f64]> = r.iter().map(Vec::as_slice).collect();
                Ok((l, r[0].len(), KernelBank::new(&pts, cfg)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerBanks {
            banks,
            m: a.len(),
            n: b.len(),
        })
    }

    fn report(&self, xi: &[usize], yi: &[usize], cfg: &MmdConfig, canonicalized: bool) -> Result<LayerwiseMmdReport> {
        let layers = self
            .banks
            .iter()
            .map(|(l, count, bank)| {
                Ok(LayerMmd {
                    layer: *l,
                    param_count: *count,
                    mmd: bank.aggregate(xi, yi, cfg.estimator)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LayerwiseMmdReport {
            total_params: layers.iter().map(|l| l.param_count).sum(),
            weighted_median: weighted(&layers, |m| m.median),
            weighted_mean: weighted(&layers, |m| m.mean),
            weighted_max: weighted(&layers, |m| m.max),
            layers,
            canonicalized,
            estimator: cfg.estimator,
            multipliers: cfg.multipliers.clone(),
            families: cfg.families.clone(),
        })
    }

    fn split_indices(&self) -> (Vec<usize>, Vec<usize>) {
        ((0..self.m).collect(), (self.m..self.m + self.n).collect())
    }
}

/// Layer-wise aggregated MMD between two posterior samples, optionally after
/// canonicalizing every checkpoint.
pub fn layerwise_posterior_mmd(
    a: &[Network],
    b: &[Network],
    cfg: &MmdConfig,
    canonical: Option<&CanonicalizeConfig>,
) -> Result<LayerwiseMmdReport> {
    let banks = LayerBanks::new(a, b, cfg, canonical)?;
    let (xi, yi) = banks.split_indices();
    banks.report(&xi, &yi, cfg, canonical.is_some())
}

/// Observed layer-wise report plus the weighted-median statistic under
/// `n_perm` random relabellings of the pooled checkpoints.
pub fn layerwise_permutation_test(
    a: &[Network],
    b: &[Network],
    cfg: &MmdConfig,
    canonical: Option<&CanonicalizeConfig>,
    n_perm: usize,
    seed: u64,
) -> Result<(LayerwiseMmdReport, Vec<f64>)> {
    let banks = LayerBanks::new(a, b, cfg, canonical)?;
    let (xi, yi) = banks.split_indices();
    let observed = banks.report(&xi, &yi, cfg, canonical.is_some())?;
    let splits = random_splits(banks.m, banks.n, n_perm, seed);
    let per_layer = banks
        .banks
        .iter()
        .map(|(_, _, bank)| bank.aggregate_splits(&splits, cfg.estimator))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = banks.banks.iter().map(|(_, c, _)| c).sum();
    let null = (0..splits.len())
        .map(|s| {
            banks.banks.iter().zip(&per_layer).map(|((_, c, _), aggs)| *c as f64 * aggs[s].median).sum::<f64>() / total as f64
        })
        .collect();
    Ok((observed, null))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    fn normal(n: usize, mu: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| vec![mu + Distribution::<f64>::sample(&StandardNormal, rng)]).collect()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_heuristic(&pts(&[0.0]), &pts(&[1.0]), 0).unwrap(), 1.0);
        assert_eq!(median_heuristic(&pts(&[0.0, 2.0]), &[], 0).unwrap(), 2.0);
        assert_eq!(median_heuristic(&pts(&[0.0, 1.0]), &pts(&[3.0]), 0).unwrap(), 2.0);
        assert!(matches!(median_heuristic(&pts(&[1.0, 1.0]), &pts(&[1.0]), 0), Err(Error::ZeroMedianDistance)));
    }

    #[test]
    fn median_subsamples_large_pools() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = normal(2100, 0.0, &mut rng);
        let m = median_heuristic(&x, &[], 3).unwrap();
        assert_eq!(m, median_heuristic(&x, &[], 3).unwrap());
        // Median |Z1 − Z2| for independent standard normals is √2 · 0.6745.
        assert!((m - 2f64.sqrt() * 0.6745).abs() < 0.05, "{m}");
    }

    #[test]
    fn two_point_gaussian() {
        let v = mmd2(&pts(&[0.0]), &pts(&[1.0]), &KernelSpec::gaussian(1.0), Estimator::Biased).unwrap();
        assert!((v - (2.0 - 2.0 * (-0.5f64).exp())).abs() < 1e-15);
        assert!((v - 0.786939).abs() < 1e-6);
    }

    #[test]
    fn identical_samples_vanish() {
        let x = pts(&[0.3, -1.0, 2.5, 0.0]);
        let v = mmd2(&x, &x, &KernelSpec::laplace(0.7), Estimator::Biased).unwrap();
        assert!(v.abs() <= 1e-12);
        let agg = aggregated_mmd(&x, &x, &MmdConfig::default()).unwrap();
        assert!(agg.median.abs() <= 1e-12 && agg.mean.abs() <= 1e-12 && agg.max.abs() <= 1e-12);
        assert_eq!(agg.per_kernel.len(), 20);
    }

    #[test]
    fn single_kernel_bank() {
        let cfg = MmdConfig {
            multipliers: vec![1.0],
            families: vec![KernelFamily::Gaussian],
            ..MmdConfig::default()
        };
        let a = aggregated_mmd(&pts(&[0.0, 1.0]), &pts(&[3.0, 4.0]), &cfg).unwrap();
        assert_eq!(a.median, a.mean);
        assert_eq!(a.mean, a.max);
    }

    #[test]
    fn estimator_preconditions() {
        let k = KernelSpec::gaussian(1.0);
        assert!(mmd2(&pts(&[0.0]), &pts(&[1.0, 2.0]), &k, Estimator::Unbiased).is_err());
        assert!(mmd2(&[], &pts(&[1.0]), &k, Estimator::Biased).is_err());
        assert!(mmd2(&pts(&[0.0]), &pts(&[1.0]), &KernelSpec::gaussian(0.0), Estimator::Biased).is_err());
    }

    #[test]
    fn kernel_bounds() {
        let x = [0.5, -2.0];
        let y = [1.5, 3.0];
        for k in [KernelSpec::gaussian(0.8), KernelSpec::laplace(2.0)] {
            assert_eq!(k.eval(&x, &x), 1.0);
            let v = k.eval(&x, &y);
            assert!(v > 0.0 && v <= 1.0);
        }
        // Laplace uses the L1 distance: |1| + |5| = 6.
        assert!((KernelSpec::laplace(2.0).eval(&x, &y) - (-3.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn swap_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = normal(37, 0.0, &mut rng);
        let y = normal(23, 0.4, &mut rng);
        for est in [Estimator::Biased, Estimator::Unbiased] {
            for k in [KernelSpec::gaussian(0.9), KernelSpec::laplace(1.3)] {
                assert_eq!(mmd2(&x, &y, &k, est).unwrap().to_bits(), mmd2(&y, &x, &k, est).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn unbiased_null_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = normal(500, 0.0, &mut rng);
        let y = normal(500, 0.0, &mut rng);
        let cfg = MmdConfig {
            multipliers: vec![1.0],
            families: vec![KernelFamily::Gaussian],
            estimator: Estimator::Unbiased,
            seed: 0,
        };
        let t = permutation_test(&x, &y, &cfg, 100, 1).unwrap();
        let null: Vec<f64> = t.null.iter().map(|a| a.median).collect();
        let mean = null.iter().sum::<f64>() / null.len() as f64;
        let sd = (null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (null.len() - 1) as f64).sqrt();
        assert!(t.observed.median.abs() <= 3.0 * sd, "{} vs sd {sd}", t.observed.median);
    }

    #[test]
    fn shifted_gaussian_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = normal(500, 0.0, &mut rng);
        let y = normal(500, 1.0, &mut rng);
        let t = permutation_test(&x, &y, &MmdConfig::default(), 100, 2).unwrap();
        let null: Vec<f64> = t.null.iter().map(|a| a.max).collect();
        assert!(t.observed.max > quantile(&null, 0.95));
    }

    #[test]
    fn sensitivity_grows_with_shift() {
        let cfg = MmdConfig::default();
        let mut means = Vec::new();
        for mu in [0.0, 0.5, 1.0, 2.0] {
            let mut total = 0.0;
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
                let x = normal(500, 0.0, &mut rng);
                let y = normal(500, mu, &mut rng);
                total += aggregated_mmd(&x, &y, &cfg).unwrap().mean;
            }
            means.push(total / 20.0);
        }
        assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    }

    #[test]
    fn quantile_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.95), 19.0);
        assert_eq!(quantile(&v, 1.0), 20.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
    }

    #[test]
    fn layerwise_self_comparison_is_zero() {
        use crate::netcore::{build_network, ArchitectureSpec, OutputActivation};
        let spec = ArchitectureSpec::mlp(&[2, 3, 2], OutputActivation::Softmax);
        let nets: Vec<Network> = (0..6).map(|s| build_network(&spec, s).unwrap()).collect();
        let r = layerwise_posterior_mmd(&nets, &nets, &MmdConfig::default(), None).unwrap();
        assert_eq!(r.total_params, 9 + 8);
        assert!(r.layers.iter().all(|l| l.mmd.max.abs() <= 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let shifted: Vec<Network> = nets
            .iter()
            .map(|n| n.map_layers(|ls| ls.iter_mut().for_each(|lp| lp.trainable_mut().into_iter().flatten().for_each(|v| *v += 1.0 + rng.random::<f64>() * 1e-3))).unwrap())
            .collect();
        let r = layerwise_posterior_mmd(&nets, &shifted, &MmdConfig::default(), None).unwrap();
        assert!(r.weighted_median > 0.1);
        let other = build_network(&ArchitectureSpec::mlp(&[2, 4, 2], OutputActivation::Softmax), 0).unwrap();
        assert!(layerwise_posterior_mmd(&nets, &[other.clone(), other], &MmdConfig::default(), None).is_err());
    }
}
