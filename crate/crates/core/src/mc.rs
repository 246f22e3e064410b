//! Monte Carlo check of ω by routing Poisson points through a bordered
//! polymorphism.
//!
//! One sample: draw `φ_i ~ Poisson(μ_i)`; send every point at `i` to target
//! `j` with probability `mass(p_ij)/μ_i` or to the border with probability
//! `mass(p_i∞)/μ_i`, multiplying the weight by a draw from the normalized
//! block; add `Poisson(mass(p_∞j))` immigrants at each target `j` and
//! `Poisson(mass(p_∞∞))` pure weight factors; finally multiply by `h`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bordered::VPolymorphism;
use crate::error::{domain, structural, Result};
use crate::measure::AtomicMeasure;
use crate::poisson::{configs_up_to, poisson_mass, Configuration, OmegaEvaluator};
use crate::policy::TruncationPolicy;

/// Reproducible random stream indexed by `(seed, stream)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSample {
    pub source_config: Configuration,
    pub target_config: Configuration,
    pub weight: f64,
}

/// Normalized atom table for inverse-CDF draws.
#[derive(Debug, Clone)]
struct AtomTable {
    positions: Vec<f64>,
    cumulative: Vec<f64>,
}

impl AtomTable {
    fn new(m: &AtomicMeasure) -> Self {
        let total = m.total_mass();
        let mut acc = 0.0;
        let mut positions = Vec::with_capacity(m.len());
        let mut cumulative = Vec::with_capacity(m.len());
        for a in m.atoms() {
            acc += a.mass;
            positions.push(a.position);
            cumulative.push(acc / total);
        }
        AtomTable { positions, cumulative }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let k = self.cumulative.partition_point(|&c| c <= u);
        self.positions[k.min(self.positions.len() - 1)]
    }
}

fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, dist: &Option<Poisson<f64>>) -> u32 {
    dist.as_ref().map_or(0, |d| d.sample(rng) as u32)
}

fn poisson_dist(lambda: f64) -> Result<Option<Poisson<f64>>> {
    if lambda <= 0.0 {
        return Ok(None);
    }
    Poisson::new(lambda)
        .map(Some)
        .map_err(|e| crate::Error::Domain(format!("Poisson intensity {lambda}: {e}")))
}

struct Route {
    /// Cumulative routing probabilities over targets then the border.
    cumulative: Vec<f64>,
    tables: Vec<Option<AtomTable>>,
}

/// Precomputed routing law of a bordered polymorphism.
pub struct RoutingSampler {
    sources: Vec<Option<Poisson<f64>>>,
    routes: Vec<Route>,
    immigrants: Vec<(Option<Poisson<f64>>, Option<AtomTable>)>,
    corner: (Option<Poisson<f64>>, Option<AtomTable>),
    h: f64,
    targets: usize,
}

impl RoutingSampler {
    pub fn new(p: &VPolymorphism) -> Result<Self> {
        let t = p.target().len();
        let sources = p
            .source()
            .masses()
            .iter()
            .map(|&mu| poisson_dist(mu))
            .collect::<Result<Vec<_>>>()?;
        let mut routes = Vec::new();
        for (i, row) in p.fin_fin().iter().enumerate() {
            let blocks: Vec<&AtomicMeasure> = row.iter().chain(std::iter::once(&p.fin_inf()[i])).collect();
            let total: f64 = blocks.iter().map(|b| b.total_mass()).sum();
            if total <= 0.0 {
                return structural(format!("source point {i} routes no mass"));
            }
            let mut acc = 0.0;
            let cumulative = blocks
                .iter()
                .map(|b| {
                    acc += b.total_mass();
                    acc / total
                })
                .collect();
            let tables = blocks
                .iter()
                .map(|b| (!b.is_zero()).then(|| AtomTable::new(b)))
                .collect();
            routes.push(Route { cumulative, tables });
        }
        let immigrants = p
            .inf_fin()
            .iter()
            .map(|m| Ok((poisson_dist(m.total_mass())?, (!m.is_zero()).then(|| AtomTable::new(m)))))
            .collect::<Result<Vec<_>>>()?;
        let c = p.inf_inf();
        let corner = (poisson_dist(c.total_mass())?, (!c.is_zero()).then(|| AtomTable::new(c)));
        let drift: f64 = p.blocks().map(AtomicMeasure::signed_dev_mass).sum();
        Ok(RoutingSampler {
            sources,
            routes,
            immigrants,
            corner,
            h: (-drift).exp(),
            targets: t,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RoutingSample {
        let mut phi = Vec::with_capacity(self.sources.len());
        let mut psi = vec![0u32; self.targets];
        let mut weight = self.h;
        for (dist, route) in self.sources.iter().zip(&self.routes) {
            let n = poisson_draw(rng, dist);
            phi.push(n);
            for _ in 0..n {
                let u: f64 = rng.random();
                let k = route.cumulative.partition_point(|&c| c <= u).min(self.targets);
                let k = first_live(&route.tables, k);
                if k < self.targets {
                    psi[k] += 1;
                }
                weight *= route.tables[k].as_ref().expect("live block").draw(rng);
            }
        }
        for (j, (dist, table)) in self.immigrants.iter().enumerate() {
            let n = poisson_draw(rng, dist);
            psi[j] += n;
            for _ in 0..n {
                weight *= table.as_ref().expect("positive intensity").draw(rng);
            }
        }
        let k = poisson_draw(rng, &self.corner.0);
        for _ in 0..k {
            weight *= self.corner.1.as_ref().expect("positive intensity").draw(rng);
        }
        RoutingSample {
            source_config: Configuration(phi),
            target_config: Configuration(psi),
            weight,
        }
    }
}

/// Guards against rounding in the cumulative table landing on a zero block.
fn first_live(tables: &[Option<AtomTable>], k: usize) -> usize {
    if tables[k].is_some() {
        return k;
    }
    (k..tables.len())
        .chain((0..k).rev())
        .find(|&m| tables[m].is_some())
        .expect("row has mass")
}

/// One sample from a fresh generator on `stream`.
pub fn sample_routing(p: &VPolymorphism, stream: RngStream) -> Result<RoutingSample> {
    Ok(RoutingSampler::new(p)?.sample(&mut stream.rng()))
}

fn stream_counts(n: usize, streams: usize) -> Vec<usize> {
    (0..streams)
        .map(|k| n / streams + usize::from(k < n % streams))
        .collect()
}

/// `n` samples split across `streams` independent streams of `seed`,
/// concatenated in stream order.
pub fn sample_many(p: &VPolymorphism, seed: u64, n: usize, streams: usize) -> Result<Vec<RoutingSample>> {
    let sampler = RoutingSampler::new(p)?;
    let streams = streams.max(1);
    let chunks: Vec<Vec<RoutingSample>> = stream_counts(n, streams)
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = RngStream::new(seed, k as u64).rng();
            (0..count).map(|_| sampler.sample(&mut rng)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

/// Log-spaced weight bins. Weights below the first edge or at or above the
/// last fall outside every bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogBins {
    pub edges: Vec<f64>,
}

impl LogBins {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && count > 0) {
            return domain(format!("bad bin spec lo={lo} hi={hi} count={count}"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let edges = (0..=count)
            .map(|k| (a + (b - a) * k as f64 / count as f64).exp())
            .collect();
        Ok(LogBins { edges })
    }

    /// `count` bins covering every atom of the given measures, with edges
    /// shifted off the atoms.
    pub fn covering<'a>(measures: impl IntoIterator<Item = &'a AtomicMeasure>, count: usize) -> Result<Self> {
        let positions: Vec<f64> = measures
            .into_iter()
            .flat_map(|m| m.atoms().iter().map(|a| a.position))
            .collect();
        let (lo, hi) = positions
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        if positions.is_empty() {
            return LogBins::new(0.5, 2.0, count);
        }
        let mut shift = 1.37;
        loop {
            let bins = LogBins::new(lo / shift, hi * shift, count)?;
            let clear = positions
                .iter()
                .all(|&x| bins.edges.iter().all(|&e| (x / e).ln().abs() > 1e-6));
            if clear || shift > 3.0 {
                return Ok(bins);
            }
            shift += 0.0731;
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if x < self.edges[0] || x >= *self.edges.last()? {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }

    /// Mass of `m` in each bin.
    pub fn masses(&self, m: &AtomicMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for a in m.atoms() {
            if let Some(k) = self.bin_of(a.position) {
                out[k] += a.mass;
            }
        }
        out
    }
}

/// Histogram of one `(φ, ψ)` cell normalized by the total sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEntry {
    pub bins: LogBins,
    pub mass: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

pub fn empirical_entry(
    samples: &[RoutingSample],
    phi: &Configuration,
    psi: &Configuration,
    bins: &LogBins,
) -> Result<EmpiricalEntry> {
    if bins.is_empty() {
        return domain("empty bin specification");
    }
    if samples.is_empty() {
        return domain("no samples");
    }
    let mut counts = vec![0u64; bins.len()];
    for s in samples {
        if &s.source_config == phi && &s.target_config == psi {
            if let Some(k) = bins.bin_of(s.weight) {
                counts[k] += 1;
            }
        }
    }
    let n = samples.len() as f64;
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let std_err = mass.iter().map(|&p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(EmpiricalEntry {
        bins: bins.clone(),
        mass,
        std_err,
        samples: samples.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub phi: Configuration,
    pub psi: Configuration,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub sigma: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub config: Configuration,
    pub analytic: f64,
    pub empirical: f64,
    pub sigma: f64,
    pub z: f64,
}

/// Settings of a Monte Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
    pub streams: usize,
    /// Largest multiplicity of the compared cells.
    pub max_multiplicity: u32,
    /// Cells and marginals with smaller analytic mass are not tested.
    pub min_mass: f64,
    pub z_max: f64,
    pub bins: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings {
            samples: 1_000_000,
            seed: 1,
            streams: 64,
            max_multiplicity: 3,
            min_mass: 1e-4,
            z_max: 4.0,
            bins: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub settings: McSettings,
    pub cells: Vec<CellCheck>,
    pub source_marginals: Vec<MarginalCheck>,
    pub target_marginals: Vec<MarginalCheck>,
    pub max_abs_z: f64,
    pub passed: bool,
}

#[derive(Default)]
struct Tally {
    cells: HashMap<(Configuration, Configuration), Vec<u64>>,
    source: HashMap<Configuration, u64>,
    // Σ weight and Σ weight² per target configuration
    target: HashMap<Configuration, (f64, f64)>,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (k, v) in other.cells {
            let e = self.cells.entry(k).or_insert_with(|| vec![0; v.len()]);
            e.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        for (k, v) in other.source {
            *self.source.entry(k).or_default() += v;
        }
        for (k, (a, b)) in other.target {
            let e = self.target.entry(k).or_default();
            e.0 += a;
            e.1 += b;
        }
        self
    }
}

fn z_score(diff: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        diff / sigma
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Compares sampled `(φ, ψ, weight)` frequencies with the analytic ω
/// entries, and the source and weighted target marginals with the Poisson
/// masses.
pub fn mc_verify(p: &VPolymorphism, policy: &TruncationPolicy, settings: &McSettings) -> Result<McReport> {
    if settings.samples == 0 {
        return domain("no samples requested");
    }
    let cap = settings.max_multiplicity;
    let src_configs = configs_up_to(p.source().len(), cap);
    let tgt_configs = configs_up_to(p.target().len(), cap);
    let eval = OmegaEvaluator::new(p, policy, cap)?;
    let analytic: Vec<((Configuration, Configuration), AtomicMeasure)> = src_configs
        .par_iter()
        .flat_map(|phi| tgt_configs.par_iter().map(move |psi| (phi.clone(), psi.clone())))
        .map(|(phi, psi)| {
            let e = eval.entry(&phi, &psi)?;
            Ok(((phi, psi), e))
        })
        .collect::<Result<Vec<_>>>()?;
    let bins = LogBins::covering(analytic.iter().map(|(_, m)| m), settings.bins)?;

    let sampler = RoutingSampler::new(p)?;
    let nbins = bins.len();
    let tally = stream_counts(settings.samples, settings.streams.max(1))
        .into_par_iter()
        .enumerate()
        .map(|(k, count)| {
            let mut rng = RngStream::new(settings.seed, k as u64).rng();
            let mut t = Tally::default();
            for _ in 0..count {
                let s = sampler.sample(&mut rng);
                *t.source.entry(s.source_config.clone()).or_default() += 1;
                let e = t.target.entry(s.target_config.clone()).or_default();
                e.0 += s.weight;
                e.1 += s.weight * s.weight;
                if let Some(b) = bins.bin_of(s.weight) {
                    t.cells
                        .entry((s.source_config, s.target_config))
                        .or_insert_with(|| vec![0; nbins])[b] += 1;
                }
            }
            t
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::default(), Tally::merge);

    let n = settings.samples as f64;
    let mut cells = Vec::new();
    for (key, m) in &analytic {
        let expected = bins.masses(m);
        let observed = tally.cells.get(key);
        for (b, &a) in expected.iter().enumerate() {
            if a < settings.min_mass {
                continue;
            }
            let emp = observed.map_or(0.0, |v| v[b] as f64 / n);
            let sigma = (a * (1.0 - a) / n).sqrt();
            cells.push(CellCheck {
                phi: key.0.clone(),
                psi: key.1.clone(),
                bin_lo: bins.edges[b],
                bin_hi: bins.edges[b + 1],
                analytic: a,
                empirical: emp,
                sigma,
                z: z_score(emp - a, sigma),
            });
        }
    }

    let mut source_marginals = Vec::new();
    for phi in &src_configs {
        let a = poisson_mass(p.source(), phi)?;
        if a < settings.min_mass {
            continue;
        }
        let emp = tally.source.get(phi).copied().unwrap_or(0) as f64 / n;
        let sigma = (a * (1.0 - a) / n).sqrt();
        source_marginals.push(MarginalCheck {
            config: phi.clone(),
            analytic: a,
            empirical: emp,
            sigma,
            z: z_score(emp - a, sigma),
        });
    }

    let mut target_marginals = Vec::new();
    for psi in &tgt_configs {
        let a = poisson_mass(p.target(), psi)?;
        if a < settings.min_mass {
            continue;
        }
        let (sw, sw2) = tally.target.get(psi).copied().unwrap_or((0.0, 0.0));
        let mean = sw / n;
        let var = (sw2 / n - mean * mean).max(0.0);
        let sigma = (var / n).sqrt();
        target_marginals.push(MarginalCheck {
            config: psi.clone(),
            analytic: a,
            empirical: mean,
            sigma,
            z: z_score(mean - a, sigma),
        });
    }

    let max_abs_z = cells
        .iter()
        .map(|c| c.z)
        .chain(source_marginals.iter().map(|m| m.z))
        .chain(target_marginals.iter().map(|m| m.z))
        .fold(0.0f64, |acc, z| acc.max(z.abs()));
    Ok(McReport {
        settings: *settings,
        passed: max_abs_z <= settings.z_max,
        cells,
        source_marginals,
        target_marginals,
        max_abs_z,
    })
}
